//! Capsule-math for the generation block: semantic activation, attribute
//! mean-shift, Gaussian reparameterization, KL divergence, and assembly of
//! facial attribute capsules. These are stateless functions with explicit
//! backward companions; the network caches whatever each backward needs.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clamp range for PIN's predicted log-variance. Keeps `exp` in a sane range
/// so sampling and KL stay finite; the clamp zeroes gradients outside it.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Norm floor in the semantic activation, guarding division by zero for
/// all-zero prototype rows.
pub const NORM_FLOOR: f64 = 1e-8;

/// Split PIN's raw `2k` output into mean and clamped log-variance halves.
pub fn split_gaussian<S: Scalar>(raw: &Array1<S>, k: usize) -> Result<(Array1<S>, Array1<S>)> {
    if raw.len() != 2 * k {
        return Err(Error::invalid(format!(
            "gaussian head output length {} is not 2k = {}",
            raw.len(),
            2 * k
        )));
    }
    let mu = raw.slice(ndarray::s![..k]).to_owned();
    let lo = S::cast(LOG_VAR_MIN);
    let hi = S::cast(LOG_VAR_MAX);
    let log_var = raw.slice(ndarray::s![k..]).mapv(|v| v.min(hi).max(lo));
    Ok((mu, log_var))
}

/// Gradient of `split_gaussian`: concatenates the mean gradient with the
/// log-variance gradient masked to zero wherever the clamp was active.
pub fn split_gaussian_backward<S: Scalar>(
    d_mu: &Array1<S>,
    d_log_var: &Array1<S>,
    raw: &Array1<S>,
) -> Array1<S> {
    let k = d_mu.len();
    debug_assert_eq!(raw.len(), 2 * k);
    let lo = S::cast(LOG_VAR_MIN);
    let hi = S::cast(LOG_VAR_MAX);
    let mut d_raw = Array1::zeros(2 * k);
    for i in 0..k {
        d_raw[i] = d_mu[i];
        let r = raw[k + i];
        if r >= lo && r <= hi {
            d_raw[k + i] = d_log_var[i];
        }
    }
    d_raw
}

/// Semantic activation: scale each prototype capsule to unit norm, then by
/// its attribute activation, `C_s,i = a_i * C_pr,i / max(||C_pr,i||, 1e-8)`.
/// Invariant to positive rescaling of the prototype rows.
pub fn activate_semantic<S: Scalar>(c_pr: &Array2<S>, a: &Array1<S>) -> Result<Array2<S>> {
    let (k, d) = c_pr.dim();
    if a.len() != k {
        return Err(Error::invalid(format!(
            "activation length {} does not match {} capsules",
            a.len(),
            k
        )));
    }
    let floor = S::cast(NORM_FLOOR);
    let mut c_s = Array2::zeros((k, d));
    for i in 0..k {
        let row = c_pr.row(i);
        let norm = row.iter().map(|&v| v * v).sum::<S>().sqrt().max(floor);
        let scale = a[i] / norm;
        c_s.row_mut(i).assign(&row.mapv(|v| v * scale));
    }
    Ok(c_s)
}

/// Gradients of `activate_semantic` with respect to prototypes and
/// activations. Where the norm floor was active the denominator is constant,
/// so only the direct term survives.
pub fn activate_semantic_backward<S: Scalar>(
    c_pr: &Array2<S>,
    a: &Array1<S>,
    d_c_s: &Array2<S>,
) -> (Array2<S>, Array1<S>) {
    let (k, d) = c_pr.dim();
    debug_assert_eq!(d_c_s.dim(), (k, d));
    let floor = S::cast(NORM_FLOOR);
    let mut d_c_pr = Array2::zeros((k, d));
    let mut d_a = Array1::zeros(k);
    for i in 0..k {
        let u = c_pr.row(i);
        let g = d_c_s.row(i);
        let raw_norm = u.iter().map(|&v| v * v).sum::<S>().sqrt();
        let norm = raw_norm.max(floor);
        let dot_gu = u.iter().zip(g.iter()).map(|(&ui, &gi)| ui * gi).sum::<S>();
        d_a[i] = dot_gu / norm;
        let s = a[i] / norm;
        if raw_norm > floor {
            // d/du of u/||u|| = I/||u|| - u u^T / ||u||^3
            let coeff = dot_gu / (norm * norm);
            for j in 0..d {
                d_c_pr[[i, j]] = s * (g[j] - u[j] * coeff);
            }
        } else {
            for j in 0..d {
                d_c_pr[[i, j]] = s * g[j];
            }
        }
    }
    (d_c_pr, d_a)
}

/// Attribute-aware mean shift: `mu_hat = mu + a`.
pub fn shift_mean<S: Scalar>(mu: &Array1<S>, a: &Array1<S>) -> Result<Array1<S>> {
    if mu.len() != a.len() {
        return Err(Error::invalid(format!(
            "mean length {} does not match activation length {}",
            mu.len(),
            a.len()
        )));
    }
    Ok(mu + a)
}

/// Draw the probabilistic capsules `C_p = mu_hat + eps * exp(log_var / 2)`.
/// `eps` is supplied by the caller so sampling stays reproducible (and can
/// be zeroed for deterministic evaluation).
pub fn reparameterize<S: Scalar>(
    mu_hat: &Array1<S>,
    log_var: &Array1<S>,
    eps: &Array1<S>,
) -> Result<Array1<S>> {
    if mu_hat.len() != log_var.len() || mu_hat.len() != eps.len() {
        return Err(Error::invalid(format!(
            "reparameterize length mismatch: mu {}, log_var {}, eps {}",
            mu_hat.len(),
            log_var.len(),
            eps.len()
        )));
    }
    let half = S::cast(0.5);
    let mut c_p = Array1::zeros(mu_hat.len());
    for i in 0..mu_hat.len() {
        c_p[i] = mu_hat[i] + eps[i] * (log_var[i] * half).exp();
    }
    Ok(c_p)
}

/// Gradients of `reparameterize`: `(d_mu_hat, d_log_var)`.
pub fn reparameterize_backward<S: Scalar>(
    log_var: &Array1<S>,
    eps: &Array1<S>,
    d_c_p: &Array1<S>,
) -> (Array1<S>, Array1<S>) {
    let half = S::cast(0.5);
    let d_mu_hat = d_c_p.clone();
    let mut d_log_var = Array1::zeros(log_var.len());
    for i in 0..log_var.len() {
        d_log_var[i] = d_c_p[i] * eps[i] * half * (log_var[i] * half).exp();
    }
    (d_mu_hat, d_log_var)
}

/// KL divergence of `N(mu, diag(exp(log_var)))` from the standard normal,
/// summed over dimensions: `-1/2 * sum(1 + log_var - mu^2 - exp(log_var))`.
/// Always non-negative; zero exactly at the standard normal. Computed on the
/// unshifted mean.
pub fn kl_divergence<S: Scalar>(mu: &Array1<S>, log_var: &Array1<S>) -> Result<S> {
    if mu.len() != log_var.len() {
        return Err(Error::invalid(format!(
            "KL length mismatch: mu {}, log_var {}",
            mu.len(),
            log_var.len()
        )));
    }
    let one = S::one();
    let half = S::cast(0.5);
    let mut acc = S::zero();
    for i in 0..mu.len() {
        if !mu[i].is_finite() || !log_var[i].is_finite() {
            return Err(Error::NonFinite(format!(
                "KL divergence input at index {i}: mu = {}, log_var = {}",
                mu[i], log_var[i]
            )));
        }
        acc += one + log_var[i] - mu[i] * mu[i] - log_var[i].exp();
    }
    Ok(-half * acc)
}

/// Gradients of the KL divergence scaled by `upstream`:
/// `d_mu_i = mu_i`, `d_log_var_i = (exp(log_var_i) - 1) / 2`.
pub fn kl_divergence_backward<S: Scalar>(
    mu: &Array1<S>,
    log_var: &Array1<S>,
    upstream: S,
) -> (Array1<S>, Array1<S>) {
    let half = S::cast(0.5);
    let d_mu = mu.mapv(|m| upstream * m);
    let d_log_var = log_var.mapv(|l| upstream * half * (l.exp() - S::one()));
    (d_mu, d_log_var)
}

/// Concatenate each semantic capsule with its probabilistic coordinate,
/// capsule-major: `FAC = [SC_0 | C_p[0] | SC_1 | C_p[1] | ...]`, length
/// `k * (d + 1)`.
pub fn assemble_fac<S: Scalar>(c_s: &Array2<S>, c_p: &Array1<S>) -> Result<Array1<S>> {
    let (k, d) = c_s.dim();
    if c_p.len() != k {
        return Err(Error::invalid(format!(
            "probabilistic capsule count {} does not match {} semantic capsules",
            c_p.len(),
            k
        )));
    }
    let mut fac = Array1::zeros(k * (d + 1));
    for i in 0..k {
        for j in 0..d {
            fac[i * (d + 1) + j] = c_s[[i, j]];
        }
        fac[i * (d + 1) + d] = c_p[i];
    }
    Ok(fac)
}

/// Inverse of `assemble_fac` on gradients: split a `k*(d+1)` vector back
/// into the semantic `(k, d)` and probabilistic `(k,)` parts.
pub fn split_fac<S: Scalar>(fac: &Array1<S>, k: usize, d: usize) -> Result<(Array2<S>, Array1<S>)> {
    if fac.len() != k * (d + 1) {
        return Err(Error::invalid(format!(
            "capsule vector length {} is not k*(d+1) = {}",
            fac.len(),
            k * (d + 1)
        )));
    }
    let mut c_s = Array2::zeros((k, d));
    let mut c_p = Array1::zeros(k);
    for i in 0..k {
        for j in 0..d {
            c_s[[i, j]] = fac[i * (d + 1) + j];
        }
        c_p[i] = fac[i * (d + 1) + d];
    }
    Ok((c_s, c_p))
}
