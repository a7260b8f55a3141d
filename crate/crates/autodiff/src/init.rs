use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Normal(`mean`, `stddev`) samples, redrawn until within two standard
/// deviations of the mean.
pub fn init_truncated_normal<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    mean: f64,
    stddev: f64,
    rng: &mut R,
) -> Tensor<T> {
    let normal = Normal::new(mean, stddev).expect("stddev must be finite and non-negative");
    Tensor::from_fn(shape, |_| loop {
        let v: f64 = normal.sample(rng);
        if (v - mean).abs() <= 2.0 * stddev {
            break T::of(v);
        }
    })
}
