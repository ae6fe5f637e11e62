//! Adversarial objectives. Loss values clamp probabilities into
//! `[1e-7, 1 - 1e-7]` before taking logs; gradients use the algebraically
//! reduced logit form (`d(-log sigma(z))/dz = sigma(z) - 1`, etc.), which is
//! exact and stays finite even when the sigmoid saturates.

use ndarray::{s, Array3};

use crate::error::Result;
use crate::gan::discriminator::Discriminator;
use crate::model::loss::mse;
use crate::scalar::Scalar;

/// Weight of the adversarial term in the combined generator objective.
pub const GAMMA_ADV: f64 = 0.01;
/// Weight of the perceptual term in the combined generator objective.
pub const GAMMA_PERC: f64 = 0.01;
/// Probability clamp bound for loss evaluation.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob<S: Scalar>(p: S) -> S {
    let lo = S::cast(PROB_CLAMP);
    let hi = S::one() - lo;
    p.max(lo).min(hi)
}

/// Discriminator objective `-log D(y, x) - log(1 - D(y_hat, x))`: push real
/// pairs toward 1 and generated ones toward 0.
pub fn disc_loss<S: Scalar>(p_real: S, p_fake: S) -> S {
    -(clamp_prob(p_real).ln() + (S::one() - clamp_prob(p_fake)).ln())
}

/// Logit gradients of `disc_loss`: `(p_real - 1, p_fake)`.
pub fn disc_logit_grads<S: Scalar>(p_real: S, p_fake: S) -> (S, S) {
    (p_real - S::one(), p_fake)
}

/// Non-saturating generator objective `-log D(y_hat, x)`.
pub fn gen_adv_loss<S: Scalar>(p_fake: S) -> S {
    -clamp_prob(p_fake).ln()
}

/// Logit gradient of `gen_adv_loss`: `p_fake - 1`.
pub fn gen_adv_logit_grad<S: Scalar>(p_fake: S) -> S {
    p_fake - S::one()
}

/// Perceptual loss: MSE between discriminator features of the real and
/// generated pair. The feature extractor is the discriminator itself, held
/// fixed (no gradient reaches its parameters through this term's target).
pub fn perceptual_loss<S: Scalar>(f_real: &Array3<S>, f_fake: &Array3<S>) -> Result<S> {
    mse(f_real, f_fake)
}

/// Gradient of `perceptual_loss` with respect to the generated features.
pub fn perceptual_feature_grad<S: Scalar>(
    f_real: &Array3<S>,
    f_fake: &Array3<S>,
) -> Result<Array3<S>> {
    let _ = mse(f_real, f_fake)?; // shape check
    let n = S::cast(f_fake.len() as f64);
    Ok((f_fake - f_real) * (S::cast(2.0) / n))
}

/// Adversarial contribution to one generator step: the two loss values and
/// the gradient they induce on the generated image.
#[derive(Debug, Clone)]
pub struct AdvTerms<S> {
    /// `-log D(y_hat, x)`, unweighted.
    pub adv_loss: S,
    /// Feature-space MSE, unweighted.
    pub perc_loss: S,
    /// `gamma_adv * d(adv)/d(y_hat) + gamma_perc * d(perc)/d(y_hat)`,
    /// ready to add to the reconstruction gradient.
    pub d_y_hat: Array3<S>,
}

/// Evaluate the adversarial and perceptual terms for a generated image and
/// backpropagate them through the discriminator to the image itself.
///
/// Runs the discriminator twice (real pair for the feature target, then the
/// generated pair) and once backward. The backward pass accumulates into the
/// discriminator's parameter gradients as a side effect; a discriminator
/// update must clear its gradients first.
pub fn generator_adversarial_terms<S: Scalar>(
    disc: &mut Discriminator<S>,
    y_hat: &Array3<S>,
    y: &Array3<S>,
    cond: &Array3<S>,
    gamma_adv: S,
    gamma_perc: S,
) -> Result<AdvTerms<S>> {
    let real = disc.forward(&crate::gan::discriminator::concat_condition(y, cond)?)?;
    let fake = disc.forward(&crate::gan::discriminator::concat_condition(y_hat, cond)?)?;

    let adv_loss = gen_adv_loss(fake.prob);
    let perc_loss = perceptual_loss(&real.features, &fake.features)?;

    let d_logit = gamma_adv * gen_adv_logit_grad(fake.prob);
    let d_features = perceptual_feature_grad(&real.features, &fake.features)? * gamma_perc;
    let d_input = disc.backward(d_logit, Some(&d_features))?;
    let d_y_hat = d_input.slice(s![..3, .., ..]).to_owned();
    Ok(AdvTerms { adv_loss, perc_loss, d_y_hat })
}

/// One discriminator update's losses and probabilities.
#[derive(Debug, Clone, Copy)]
pub struct DiscStep<S> {
    pub loss: S,
    pub p_real: S,
    pub p_fake: S,
}

/// Accumulate discriminator gradients for one real/generated pair. The
/// generated image is treated as a constant (its gradient is discarded), so
/// this touches only the discriminator. Callers zero gradients beforehand
/// and apply their optimizer afterwards.
pub fn discriminator_step_grads<S: Scalar>(
    disc: &mut Discriminator<S>,
    y: &Array3<S>,
    y_hat: &Array3<S>,
    cond: &Array3<S>,
    scale: S,
) -> Result<DiscStep<S>> {
    let real = disc.forward(&crate::gan::discriminator::concat_condition(y, cond)?)?;
    let (d_real, _) = disc_logit_grads(real.prob, real.prob);
    let _ = disc.backward(d_real * scale, None)?;

    let fake = disc.forward(&crate::gan::discriminator::concat_condition(y_hat, cond)?)?;
    let (_, d_fake) = disc_logit_grads(fake.prob, fake.prob);
    let _ = disc.backward(d_fake * scale, None)?;

    Ok(DiscStep { loss: disc_loss(real.prob, fake.prob), p_real: real.prob, p_fake: fake.prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HasParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn even_odds_cost_two_log_two() {
        // An undecided discriminator pays -log(1/2) twice: ~1.3863.
        let loss: f64 = disc_loss(0.5, 0.5);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
        let g: f64 = gen_adv_loss(0.5);
        assert!((g - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clamping_keeps_extreme_probabilities_finite() {
        let l: f64 = disc_loss(0.0, 1.0);
        assert!(l.is_finite());
        assert!((l + 2.0 * PROB_CLAMP.ln()).abs() < 1e-9);
        assert!(gen_adv_loss(0.0f64).is_finite());
    }

    #[test]
    fn logit_gradients_match_finite_differences_through_the_sigmoid() {
        let sigma = |z: f64| 1.0 / (1.0 + (-z).exp());
        let eps = 1e-6;
        for z in [-2.0, -0.3, 0.0, 1.7] {
            let p = sigma(z);
            let (d_real, d_fake) = disc_logit_grads(p, p);
            let num_real =
                (-(sigma(z + eps)).ln() + (sigma(z - eps)).ln()) / (2.0 * eps);
            let num_fake = (-(1.0 - sigma(z + eps)).ln() + (1.0 - sigma(z - eps)).ln())
                / (2.0 * eps);
            assert!((d_real - num_real).abs() < 1e-8);
            assert!((d_fake - num_fake).abs() < 1e-8);
            assert!((gen_adv_logit_grad(p) - num_real).abs() < 1e-8);
        }
    }

    #[test]
    fn perceptual_loss_is_zero_on_identical_features() {
        let f = Array3::<f64>::from_elem((2, 3, 3), 0.4);
        assert_eq!(perceptual_loss(&f, &f).unwrap(), 0.0);
        assert!(perceptual_feature_grad(&f, &f)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let mut disc = Discriminator::<f64>::new(16, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y = Array3::from_shape_simple_fn((3, 16, 16), || rng.random_range(0.0..1.0));
        let y_hat = Array3::from_shape_simple_fn((3, 16, 16), || rng.random_range(0.0..1.0));
        let cond = Array3::from_shape_simple_fn((3, 16, 16), || rng.random_range(0.0..1.0));
        let (ga, gp) = (0.01, 0.01);

        let terms = generator_adversarial_terms(&mut disc, &y_hat, &y, &cond, ga, gp).unwrap();

        // With the discriminator frozen, the weighted objective must agree
        // with the assembled image gradient.
        let objective = |disc: &mut Discriminator<f64>, y_hat: &Array3<f64>| -> f64 {
            let real = disc
                .forward(&concat_condition(&y, &cond).unwrap())
                .unwrap();
            let fake = disc
                .forward(&concat_condition(y_hat, &cond).unwrap())
                .unwrap();
            ga * gen_adv_loss(fake.prob)
                + gp * perceptual_loss(&real.features, &fake.features).unwrap()
        };
        use crate::gan::discriminator::concat_condition;

        let eps = 1e-5;
        for _ in 0..16 {
            let idx = (
                rng.random_range(0..3),
                rng.random_range(0..16),
                rng.random_range(0..16),
            );
            let mut p = y_hat.clone();
            p[idx] += eps;
            let mut m = y_hat.clone();
            m[idx] -= eps;
            let numeric = (objective(&mut disc, &p) - objective(&mut disc, &m)) / (2.0 * eps);
            assert!(
                (terms.d_y_hat[idx] - numeric).abs() < 1e-7,
                "coord {idx:?}: {} vs {numeric}",
                terms.d_y_hat[idx]
            );
        }
    }

    #[test]
    fn discriminator_step_fills_gradients_and_reports_probs() {
        let mut disc = Discriminator::<f64>::new(16, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = Array3::from_shape_simple_fn((3, 16, 16), || rng.random_range(0.0..1.0));
        let y_hat = Array3::from_shape_simple_fn((3, 16, 16), || rng.random_range(0.0..1.0));
        let cond = Array3::from_shape_simple_fn((3, 16, 16), || rng.random_range(0.0..1.0));
        disc.zero_grads();
        let step = discriminator_step_grads(&mut disc, &y, &y_hat, &cond, 1.0).unwrap();
        assert!(step.loss.is_finite() && step.loss > 0.0);
        assert!(step.p_real > 0.0 && step.p_real < 1.0);
        assert!(disc
            .params()
            .iter()
            .all(|p| p.grad.iter().any(|&g| g != 0.0)));
    }
}
