use rand::Rng;

use crate::error::NumError;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// Weight matrix [rows, cols] drawn uniformly from
/// +-sqrt(6 / (fan_in + fan_out)), with fan_in = cols and
/// fan_out = rows. Draws happen in row-major element order, so a fixed
/// generator state yields identical matrices everywhere.
pub fn xavier_uniform<T: Scalar, R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> Result<Tensor<T>, NumError> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<T> = (0..rows * cols)
        .map(|_| lit::<T>(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::param(vec![rows, cols], data)
}

/// Vector parameter with the same fan convention: fan_in = len,
/// fan_out = 1.
pub fn xavier_uniform_vec<T: Scalar, R: Rng>(
    rng: &mut R,
    len: usize,
) -> Result<Tensor<T>, NumError> {
    let bound = (6.0 / (len + 1) as f64).sqrt();
    let data: Vec<T> = (0..len).map(|_| lit::<T>(rng.gen_range(-bound..bound))).collect();
    Tensor::param(vec![len], data)
}

/// Zero-filled bias parameter.
pub fn zeros_param<T: Scalar>(shape: Vec<usize>) -> Tensor<T> {
    Tensor::zeros(shape, true)
}

/// Constant-filled parameter, for biases that should start away from
/// zero (forget gates, multiplicative-fusion gates).
pub fn full_param<T: Scalar>(shape: Vec<usize>, value: f64) -> Result<Tensor<T>, NumError> {
    let n: usize = shape.iter().product();
    Tensor::param(shape, vec![lit::<T>(value); n])
}
