use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::image::Image;
use crate::scalar::Scalar;

/// Adds i.i.d. Gaussian noise with standard deviation `level / 255` to every
/// sample, then clamps back into `[0, 1]`. A level of zero returns the input
/// unchanged. The noise stream is fully determined by `seed`.
pub fn add_gaussian_noise<S: Scalar>(img: &Image<S>, level: f64, seed: u64) -> Result<Image<S>> {
    if level < 0.0 {
        return Err(crate::error::Error::invalid(format!(
            "noise level must be non-negative, got {level}"
        )));
    }
    if level == 0.0 {
        return Ok(img.clone());
    }
    let std = level / 255.0;
    let normal = Normal::new(0.0f64, std).expect("std is positive and finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for v in out.data_mut().iter_mut() {
        let noisy = v.as_f64() + normal.sample(&mut rng);
        *v = S::cast(noisy.clamp(0.0, 1.0));
    }
    Ok(out)
}
