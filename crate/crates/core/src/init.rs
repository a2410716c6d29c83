use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::gradcore::{Real, Tensor};

/// Standard deviation of the Gaussian used for every weight matrix.
pub const INIT_STD: f64 = 0.02;

/// Zero-mean Gaussian matrix. Values are drawn in f64 and rounded, so the
/// same seed gives the same f32 and f64 parameters up to rounding.
pub fn gaussian<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    std: f64,
) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("finite positive std");
    Tensor::from_fn(rows, cols, |_, _| T::from_f64(normal.sample(rng)))
}
