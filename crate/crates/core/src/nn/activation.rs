use ndarray::{Array, Dimension};

use crate::scalar::Scalar;

/// Negative slope shared by every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.2;

/// LeakyReLU with slope 0.2, caching the forward input for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct LeakyRelu<S, D: Dimension> {
    cache: Option<Array<S, D>>,
}

impl<S: Scalar, D: Dimension> LeakyRelu<S, D> {
    pub fn new() -> Self {
        LeakyRelu { cache: None }
    }

    pub fn forward(&mut self, x: &Array<S, D>) -> Array<S, D> {
        self.cache = Some(x.clone());
        x.mapv(leaky)
    }

    pub fn backward(&mut self, dy: &Array<S, D>) -> Array<S, D> {
        let x = self.cache.take().expect("backward before forward");
        let slope = S::cast(LEAKY_SLOPE);
        let mut dx = dy.clone();
        dx.zip_mut_with(&x, |d, &xi| {
            if xi <= S::zero() {
                *d *= slope;
            }
        });
        dx
    }
}

/// Elementwise LeakyReLU(0.2) without caching, for inference-style paths.
pub fn leaky<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x
    } else {
        x * S::cast(LEAKY_SLOPE)
    }
}

/// Logistic sigmoid, caching the forward output (its derivative is y(1-y)).
#[derive(Debug, Clone, Default)]
pub struct Sigmoid<S, D: Dimension> {
    cache: Option<Array<S, D>>,
}

impl<S: Scalar, D: Dimension> Sigmoid<S, D> {
    pub fn new() -> Self {
        Sigmoid { cache: None }
    }

    pub fn forward(&mut self, x: &Array<S, D>) -> Array<S, D> {
        let y = x.mapv(sigmoid);
        self.cache = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array<S, D>) -> Array<S, D> {
        let y = self.cache.take().expect("backward before forward");
        let mut dx = dy.clone();
        dx.zip_mut_with(&y, |d, &yi| {
            *d *= yi * (S::one() - yi);
        });
        dx
    }
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}
