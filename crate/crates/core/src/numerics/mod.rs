//! Dense linear algebra, activations, seeded randomness, Fourier transforms and
//! moving-average smoothing. Everything is `f64`.

mod fourier;
mod matrix;
mod rng;

pub use fourier::{dft_direct, fft, idft_direct, ifft};
pub use matrix::{activate, dot, matvec, relu, sigmoid, Activation, Matrix};
pub use num_complex::Complex64;
pub use rng::{glorot_init, Rng};

use crate::error::{Error, Result};

/// Centered moving average with replicate padding of `(k - 1) / 2` samples on
/// each side. Output has the input's length.
pub fn moving_average(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "moving-average window must be odd and positive, got {k}"
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("moving average of an empty series".into()));
    }
    let n = x.len() as isize;
    let half = (k / 2) as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    let k = k as f64;
    // Averaging offsets from the center sample keeps constant runs bit-exact.
    Ok((0..n)
        .map(|i| {
            let center = at(i);
            center + (i - half..=i + half).map(|j| at(j) - center).sum::<f64>() / k
        })
        .collect())
}
