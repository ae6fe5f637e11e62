use ndarray::Array1;

use crate::error::{Error, Result};
use crate::nn::param::{HasParams, Parameter};
use crate::scalar::Scalar;

/// Fully connected layer `y = W x + b` on flat vectors.
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub w: Parameter<S>,
    pub b: Parameter<S>,
    in_features: usize,
    out_features: usize,
    cache: Option<Array1<S>>,
}

impl<S: Scalar> Linear<S> {
    /// He-initialized weights (fan-in `in_features`), zero biases.
    pub fn new(name: &str, in_features: usize, out_features: usize, master_seed: u64) -> Self {
        let w = Parameter::he(
            format!("{name}.w"),
            &[out_features, in_features],
            in_features,
            master_seed,
        );
        let b = Parameter::zeros(format!("{name}.b"), &[out_features]);
        Linear { w, b, in_features, out_features, cache: None }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward(&mut self, x: &Array1<S>) -> Result<Array1<S>> {
        if x.len() != self.in_features {
            return Err(Error::invalid(format!(
                "{}: expected input length {}, got {}",
                self.w.name,
                self.in_features,
                x.len()
            )));
        }
        let wmat = self
            .w
            .value
            .view()
            .into_shape_with_order((self.out_features, self.in_features))
            .expect("weights are standard layout");
        let bias = self
            .b
            .value
            .view()
            .into_shape_with_order(self.out_features)
            .expect("bias is standard layout");
        let y = wmat.dot(x) + bias;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array1<S>) -> Result<Array1<S>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid(format!("{}: backward before forward", self.w.name)))?;
        if dy.len() != self.out_features {
            return Err(Error::invalid(format!(
                "{}: output gradient length {} does not match",
                self.w.name,
                dy.len()
            )));
        }
        let mut wgrad = self
            .w
            .grad
            .view_mut()
            .into_shape_with_order((self.out_features, self.in_features))
            .expect("gradients are standard layout");
        for (o, &d) in dy.iter().enumerate() {
            let mut row = wgrad.row_mut(o);
            row.zip_mut_with(&x, |g, &xi| *g += d * xi);
            self.b.grad[o] += d;
        }
        let wmat = self
            .w
            .value
            .view()
            .into_shape_with_order((self.out_features, self.in_features))
            .expect("weights are standard layout");
        Ok(wmat.t().dot(dy))
    }
}

impl<S: Scalar> HasParams<S> for Linear<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        vec![&mut self.w, &mut self.b]
    }
}
