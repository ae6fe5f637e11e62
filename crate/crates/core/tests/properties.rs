//! Property tests for the contracts that hold on *all* inputs: masking
//! scale-invariance and annihilation, reparameterization and KL edge cases,
//! capsule assembly round-trips, metric symmetry, degradation determinism,
//! and the schedule/RNG plumbing.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use facn_core::image::{degrade, psnr, ssim, DegradationSpec, Image};
use facn_core::model::{
    activate_semantic, assemble_fac, kl_divergence, reparameterize, split_fac, squash,
};
use facn_core::train::{lr_schedule, sample_seed, shuffle_indices, Draw};

fn unit_image(h: usize, w: usize) -> impl Strategy<Value = Image<f64>> {
    prop::collection::vec(0.0f64..=1.0, h * w * 3)
        .prop_map(move |data| Image::from_fn(h, w, 3, |y, x, c| data[(y * w + x) * 3 + c]))
}

fn capsule_grid() -> impl Strategy<Value = (Array2<f64>, Array1<f64>)> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(k, d)| {
        (
            prop::collection::vec(-2.0f64..=2.0, k * d),
            prop::collection::vec(0.0f64..=1.0, k),
        )
            .prop_map(move |(c, a)| {
                (
                    Array2::from_shape_vec((k, d), c).unwrap(),
                    Array1::from_vec(a),
                )
            })
    })
}

proptest! {
    // Eq.6: the semantic capsule direction comes from normalization, so any
    // positive rescale of the input capsule leaves the output unchanged.
    #[test]
    fn mask_is_scale_invariant((c_pr, a) in capsule_grid(), scale in 0.01f64..=100.0) {
        prop_assume!(c_pr.rows().into_iter().all(|r| {
            r.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-2
        }));
        let base = activate_semantic(&c_pr, &a).unwrap();
        let scaled = activate_semantic(&(&c_pr * scale), &a).unwrap();
        let diff = (&base - &scaled).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(diff < 1e-6, "max diff {diff}");
    }

    // A zero attribute activation wipes its capsule out exactly.
    #[test]
    fn mask_annihilates_zeroed_attributes((c_pr, mut a) in capsule_grid(), which in any::<prop::sample::Index>()) {
        let i = which.index(a.len());
        a[i] = 0.0;
        let out = activate_semantic(&c_pr, &a).unwrap();
        prop_assert!(out.row(i).iter().all(|&v| v == 0.0));
    }

    // With zero noise the reparameterized sample is the shifted mean, bit
    // for bit: evaluation must not perturb it.
    #[test]
    fn reparameterize_with_zero_noise_is_identity(
        (mu, lv) in (1usize..8).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..=5.0, n),
            prop::collection::vec(-6.0f64..=6.0, n),
        )),
    ) {
        let mu = Array1::from_vec(mu);
        let lv = Array1::from_vec(lv);
        let eps = Array1::zeros(mu.len());
        let out = reparameterize(&mu, &lv, &eps).unwrap();
        prop_assert_eq!(out, mu);
    }

    // KL to the standard normal is nonnegative, zero exactly at (0, 1), and
    // strictly positive once any coordinate deviates meaningfully.
    #[test]
    fn kl_is_nonnegative_and_vanishes_only_at_standard(
        (mu, lv) in (1usize..8).prop_flat_map(|n| (
            prop::collection::vec(-3.0f64..=3.0, n),
            prop::collection::vec(-3.0f64..=3.0, n),
        )),
    ) {
        let deviates = mu.iter().chain(lv.iter()).any(|v| v.abs() > 1e-2);
        let mu = Array1::from_vec(mu);
        let lv = Array1::from_vec(lv);
        let kl = kl_divergence(&mu, &lv).unwrap();
        prop_assert!(kl > -1e-12, "kl {kl}");
        if deviates {
            prop_assert!(kl > 1e-6, "kl {kl} for a deviating distribution");
        }
        let zero = Array1::<f64>::zeros(mu.len());
        prop_assert_eq!(kl_divergence(&zero, &zero).unwrap(), 0.0);
    }

    // The squash nonlinearity maps every vector strictly inside the unit
    // ball and preserves direction.
    #[test]
    fn squash_stays_inside_unit_ball(v in prop::collection::vec(-100.0f64..=100.0, 1..8)) {
        let s = Array1::from_vec(v);
        let q = squash(s.view());
        let n: f64 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n < 1.0, "norm {n}");
        let dot: f64 = s.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
        prop_assert!(dot >= 0.0);
    }

    // FAC assembly is capsule-major [SC_i | C_p[i]] and loses nothing.
    #[test]
    fn fac_assembly_round_trips((c_s, c_p) in capsule_grid()) {
        let (k, d) = c_s.dim();
        let fac = assemble_fac(&c_s, &c_p).unwrap();
        prop_assert_eq!(fac.len(), k * (d + 1));
        let (c_s2, c_p2) = split_fac(&fac, k, d).unwrap();
        prop_assert_eq!(c_s, c_s2);
        prop_assert_eq!(c_p, c_p2);
    }

    // The degradation pipeline is a pure function of (image, spec).
    #[test]
    fn degradation_is_deterministic(
        kind in 0usize..3,
        m in 4usize..=6,
        scale in prop::sample::select(vec![2usize, 4]),
        seed in any::<u64>(),
    ) {
        let hr = m * scale * 2;
        let img = Image::<f32>::synthetic_rgb(hr, hr, seed ^ 0x5a5a);
        let spec = match kind {
            0 => DegradationSpec::bic(scale),
            1 => DegradationSpec::bic_n(scale, seed),
            _ => DegradationSpec::b_bic_n(scale, seed),
        };
        let a = degrade(&img, &spec).unwrap();
        let b = degrade(&img, &spec).unwrap();
        prop_assert_eq!(a, b);
    }

    // Learning rate halves every 20 epochs, in exact powers of two.
    #[test]
    fn learning_rate_halves_every_twenty_epochs(base in 1e-6f64..=1.0, epoch in 0usize..500) {
        let now = lr_schedule(base, epoch);
        let later = lr_schedule(base, epoch + 20);
        prop_assert!((later - now / 2.0).abs() <= 1e-15 * now.abs());
        // Within one window the rate is flat.
        let same = lr_schedule(base, epoch - epoch % 20);
        prop_assert_eq!(now, same);
    }

    // Shuffling yields a permutation and depends only on (n, seed, epoch).
    #[test]
    fn shuffle_is_a_deterministic_permutation(n in 1usize..200, seed in any::<u64>(), epoch in 0u64..100) {
        let a = shuffle_indices(n, seed, epoch);
        let b = shuffle_indices(n, seed, epoch);
        prop_assert_eq!(&a, &b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    // Draw purposes never alias: noise for degradation, reparameterization,
    // and evaluation are independent streams.
    #[test]
    fn sample_seeds_separate_draw_purposes(
        master in any::<u64>(),
        epoch in any::<u64>(),
        step in any::<u64>(),
        sample in any::<u64>(),
    ) {
        let a = sample_seed(master, epoch, step, sample, Draw::Degrade);
        let b = sample_seed(master, epoch, step, sample, Draw::Reparam);
        let c = sample_seed(master, epoch, step, sample, Draw::EvalDegrade);
        prop_assert_ne!(a, b);
        prop_assert_ne!(b, c);
        prop_assert_ne!(a, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Both metrics are symmetric in their arguments, and SSIM of an image
    // with itself is exactly one.
    #[test]
    fn metrics_are_symmetric(seed in any::<u64>(), h in 12usize..=20, w in 12usize..=20) {
        let a = Image::<f64>::synthetic_rgb(h, w, seed);
        let b = Image::<f64>::synthetic_sharp(h, w, seed.wrapping_add(1));
        let p1 = psnr(&a, &b).unwrap();
        let p2 = psnr(&b, &a).unwrap();
        prop_assert!((p1 - p2).abs() < 1e-12);
        let s1 = ssim(&a, &b).unwrap();
        let s2 = ssim(&b, &a).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    // PSNR strictly drops when pixel error grows uniformly.
    #[test]
    fn psnr_decreases_with_error(err1 in 0.01f64..0.4, growth in 1.1f64..2.0, base in unit_image(12, 12)) {
        let shift = |img: &Image<f64>, e: f64| {
            Image::from_fn(12, 12, 3, |y, x, c| (img.get(y, x, c) + e).min(1.5))
        };
        let near = shift(&base, err1);
        let far = shift(&base, err1 * growth);
        prop_assert!(psnr(&base, &near).unwrap() > psnr(&base, &far).unwrap());
    }
}
