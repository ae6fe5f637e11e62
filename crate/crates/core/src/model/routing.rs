//! Classic capsules with dynamic routing-by-agreement, used by the v3
//! ablation in place of the attribute-guided generation block. The encoder
//! output is reshaped into primary capsules, squashed, linearly transformed
//! into per-output predictions, and routed for a fixed number of iterations.
//! The backward pass unrolls the routing loop exactly.

use ndarray::{Array1, Array2, Array3, ArrayView1, Ix4};

use crate::error::{Error, Result};
use crate::model::config::V3_PRIMARY_DIM;
use crate::nn::{HasParams, Parameter};
use crate::scalar::Scalar;

/// Routing iterations; three is the conventional choice and routing is not
/// trained, so this is fixed rather than configured.
pub const ROUTING_ITERATIONS: usize = 3;

/// Norm below which squash gradients are zeroed to avoid dividing by a
/// vanishing norm; the forward output there is ~0 and locally quadratic.
const SQUASH_FLOOR: f64 = 1e-12;

/// Squash nonlinearity `v = s * ||s|| / (1 + ||s||^2)`; shrinks every vector
/// to norm `||s||^2 / (1 + ||s||^2) < 1` while preserving direction.
pub fn squash<S: Scalar>(s: ArrayView1<S>) -> Array1<S> {
    let n = s.iter().map(|&v| v * v).sum::<S>().sqrt();
    let scale = n / (S::one() + n * n);
    s.mapv(|v| v * scale)
}

/// Vector-Jacobian product of `squash`: with `q(n) = n / (1 + n^2)`,
/// `J = q(n) I + (q'(n)/n) s s^T` where `q'(n) = (1 - n^2) / (1 + n^2)^2`.
pub fn squash_backward<S: Scalar>(s: ArrayView1<S>, d_v: ArrayView1<S>) -> Array1<S> {
    let n2 = s.iter().map(|&v| v * v).sum::<S>();
    let n = n2.sqrt();
    if n.as_f64() < SQUASH_FLOOR {
        return Array1::zeros(s.len());
    }
    let one = S::one();
    let denom = one + n2;
    let q = n / denom;
    let dq = (one - n2) / (denom * denom);
    let dot = s.iter().zip(d_v.iter()).map(|(&a, &b)| a * b).sum::<S>();
    let coeff = dq / n * dot;
    let mut d_s = Array1::zeros(s.len());
    for i in 0..s.len() {
        d_s[i] = q * d_v[i] + coeff * s[i];
    }
    d_s
}

#[derive(Debug)]
struct IterCache<S> {
    c: Array2<S>, // (n_primary, k) coupling coefficients
    s: Array2<S>, // (k, d) weighted prediction sums
    v: Array2<S>, // (k, d) squashed outputs
}

#[derive(Debug)]
struct RoutingCache<S> {
    raw: Array2<S>,   // (n_primary, prim_d) pre-squash primaries
    u: Array2<S>,     // squashed primaries
    u_hat: Array3<S>, // (n_primary, k, d) predictions
    iters: Vec<IterCache<S>>,
}

/// Capsule layer mapping the flattened encoder output to `k` capsules of
/// dimension `d` via routing-by-agreement.
#[derive(Debug)]
pub struct RoutingBlock<S> {
    /// Prediction weights, `(n_primary, k, d, PRIM_D)`; prediction for pair
    /// `(i, j)` is `W[i, j] . u_i`.
    w: Parameter<S>,
    n_primary: usize,
    k: usize,
    d: usize,
    iterations: usize,
    cache: Option<RoutingCache<S>>,
}

impl<S: Scalar> RoutingBlock<S> {
    pub fn new(name: &str, in_features: usize, k: usize, d: usize, master_seed: u64) -> Self {
        assert!(
            in_features % V3_PRIMARY_DIM == 0,
            "input length {in_features} must split into {V3_PRIMARY_DIM}-dim primaries"
        );
        let n_primary = in_features / V3_PRIMARY_DIM;
        let w = Parameter::he(
            format!("{name}.w"),
            &[n_primary, k, d, V3_PRIMARY_DIM],
            V3_PRIMARY_DIM,
            master_seed,
        );
        RoutingBlock { w, n_primary, k, d, iterations: ROUTING_ITERATIONS, cache: None }
    }

    #[cfg(test)]
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        assert!(iterations >= 1);
        self.iterations = iterations;
        self
    }

    #[cfg(test)]
    pub fn weights_mut(&mut self) -> &mut Parameter<S> {
        &mut self.w
    }

    pub fn n_primary(&self) -> usize {
        self.n_primary
    }

    /// Route the flattened encoder output into `(k, d)` output capsules.
    pub fn forward(&mut self, flat: &Array1<S>) -> Result<Array2<S>> {
        if flat.len() != self.n_primary * V3_PRIMARY_DIM {
            return Err(Error::invalid(format!(
                "{}: expected input length {}, got {}",
                self.w.name,
                self.n_primary * V3_PRIMARY_DIM,
                flat.len()
            )));
        }
        let raw = flat
            .view()
            .into_shape_with_order((self.n_primary, V3_PRIMARY_DIM))
            .expect("flat input is contiguous")
            .to_owned();
        let mut u = Array2::zeros((self.n_primary, V3_PRIMARY_DIM));
        for i in 0..self.n_primary {
            u.row_mut(i).assign(&squash(raw.row(i)));
        }

        let wv = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("weights are 4-d");
        let mut u_hat = Array3::zeros((self.n_primary, self.k, self.d));
        for i in 0..self.n_primary {
            for j in 0..self.k {
                for a in 0..self.d {
                    let mut acc = S::zero();
                    for b in 0..V3_PRIMARY_DIM {
                        acc += wv[[i, j, a, b]] * u[[i, b]];
                    }
                    u_hat[[i, j, a]] = acc;
                }
            }
        }

        let mut b = Array2::<S>::zeros((self.n_primary, self.k));
        let mut iters = Vec::with_capacity(self.iterations);
        for t in 1..=self.iterations {
            let c = softmax_rows(&b);
            let mut s = Array2::zeros((self.k, self.d));
            for i in 0..self.n_primary {
                for j in 0..self.k {
                    let cij = c[[i, j]];
                    for a in 0..self.d {
                        s[[j, a]] += cij * u_hat[[i, j, a]];
                    }
                }
            }
            let mut v = Array2::zeros((self.k, self.d));
            for j in 0..self.k {
                v.row_mut(j).assign(&squash(s.row(j)));
            }
            if t < self.iterations {
                for i in 0..self.n_primary {
                    for j in 0..self.k {
                        let mut agree = S::zero();
                        for a in 0..self.d {
                            agree += u_hat[[i, j, a]] * v[[j, a]];
                        }
                        b[[i, j]] += agree;
                    }
                }
            }
            iters.push(IterCache { c, s, v });
        }

        let out = iters.last().expect("at least one iteration").v.clone();
        self.cache = Some(RoutingCache { raw, u, u_hat, iters });
        Ok(out)
    }

    /// Backpropagate through the unrolled routing loop; accumulates the
    /// weight gradient and returns the gradient of the flattened input.
    pub fn backward(&mut self, d_out: &Array2<S>) -> Result<Array1<S>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid(format!("{}: backward before forward", self.w.name)))?;
        if d_out.dim() != (self.k, self.d) {
            return Err(Error::invalid(format!(
                "{}: output gradient shape {:?} does not match ({}, {})",
                self.w.name,
                d_out.dim(),
                self.k,
                self.d
            )));
        }

        let mut g_u_hat = Array3::<S>::zeros((self.n_primary, self.k, self.d));
        let mut g_b = Array2::<S>::zeros((self.n_primary, self.k));
        for t in (0..self.iterations).rev() {
            let it = &cache.iters[t];
            // Gradient reaching v_t: the loss for the last iteration, plus
            // the agreement update b_t = b_{t-1} + u_hat . v_t for earlier
            // ones (whose b-gradient is the accumulated g_b).
            let mut g_v = Array2::<S>::zeros((self.k, self.d));
            if t == self.iterations - 1 {
                g_v.assign(d_out);
            } else {
                for i in 0..self.n_primary {
                    for j in 0..self.k {
                        let gb = g_b[[i, j]];
                        for a in 0..self.d {
                            g_u_hat[[i, j, a]] += gb * it.v[[j, a]];
                            g_v[[j, a]] += gb * cache.u_hat[[i, j, a]];
                        }
                    }
                }
            }
            let mut g_s = Array2::<S>::zeros((self.k, self.d));
            for j in 0..self.k {
                g_s.row_mut(j)
                    .assign(&squash_backward(it.s.row(j), g_v.row(j)));
            }
            let mut g_c = Array2::<S>::zeros((self.n_primary, self.k));
            for i in 0..self.n_primary {
                for j in 0..self.k {
                    let mut acc = S::zero();
                    for a in 0..self.d {
                        acc += cache.u_hat[[i, j, a]] * g_s[[j, a]];
                        g_u_hat[[i, j, a]] += it.c[[i, j]] * g_s[[j, a]];
                    }
                    g_c[[i, j]] = acc;
                }
            }
            // Through the row-wise softmax into the logits b_{t-1}.
            for i in 0..self.n_primary {
                let mut dot = S::zero();
                for j in 0..self.k {
                    dot += it.c[[i, j]] * g_c[[i, j]];
                }
                for j in 0..self.k {
                    g_b[[i, j]] += it.c[[i, j]] * (g_c[[i, j]] - dot);
                }
            }
        }
        // b_0 is the zero constant; its gradient is discarded.

        let wv = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("weights are 4-d");
        let mut wg = self
            .w
            .grad
            .view_mut()
            .into_dimensionality::<Ix4>()
            .expect("gradients are 4-d");
        let mut g_u = Array2::<S>::zeros((self.n_primary, V3_PRIMARY_DIM));
        for i in 0..self.n_primary {
            for j in 0..self.k {
                for a in 0..self.d {
                    let g = g_u_hat[[i, j, a]];
                    for b in 0..V3_PRIMARY_DIM {
                        g_u[[i, b]] += wv[[i, j, a, b]] * g;
                        wg[[i, j, a, b]] += g * cache.u[[i, b]];
                    }
                }
            }
        }

        let mut d_flat = Array1::zeros(self.n_primary * V3_PRIMARY_DIM);
        for i in 0..self.n_primary {
            let d_raw = squash_backward(cache.raw.row(i), g_u.row(i));
            for b in 0..V3_PRIMARY_DIM {
                d_flat[i * V3_PRIMARY_DIM + b] = d_raw[b];
            }
        }
        Ok(d_flat)
    }
}

fn softmax_rows<S: Scalar>(b: &Array2<S>) -> Array2<S> {
    let (n, k) = b.dim();
    let mut c = Array2::zeros((n, k));
    for i in 0..n {
        let row = b.row(i);
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for j in 0..k {
            let e = (row[j] - max).exp();
            c[[i, j]] = e;
            sum += e;
        }
        for j in 0..k {
            c[[i, j]] /= sum;
        }
    }
    c
}

impl<S: Scalar> HasParams<S> for RoutingBlock<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        vec![&self.w]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        vec![&mut self.w]
    }
}
