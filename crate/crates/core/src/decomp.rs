//! Input-conditioning splits: moving-average trend/seasonal decomposition and a
//! Fourier low/high band split. Both are fixed linear maps with no parameters.

use crate::error::{Error, Result};
use crate::numerics::{fft, ifft, moving_average, Complex64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMethod {
    MovingAverage { kernel: usize },
    Fourier { cutoff: f64 },
}

/// A series split into a slow (trend / low-pass) and a fast (seasonal /
/// high-pass) component of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPair {
    pub slow: Vec<f64>,
    pub fast: Vec<f64>,
    pub method: SplitMethod,
}

impl BandPair {
    pub fn len(&self) -> usize {
        self.slow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slow.is_empty()
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        self.slow.iter().zip(&self.fast).map(|(s, f)| s + f).collect()
    }
}

pub fn check_kernel(kernel: usize, len: usize) -> Result<()> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "decomposition kernel must be odd and >= 1, got {kernel}"
        )));
    }
    if len > 0 && kernel > 2 * len - 1 {
        return Err(Error::InvalidArgument(format!(
            "decomposition kernel {kernel} exceeds 2*len-1 = {} for a series of length {len}",
            2 * len - 1
        )));
    }
    Ok(())
}

pub fn check_cutoff(cutoff: f64) -> Result<()> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Fourier cutoff must lie strictly inside (0, 1), got {cutoff}"
        )));
    }
    Ok(())
}

/// Trend = centered moving average, seasonal = residual.
///
/// Where the pair of floats allows it the trend is nudged by at most one ulp
/// so that `slow + fast` reproduces `x` bit for bit.
pub fn decompose_ma(x: &[f64], kernel: usize) -> Result<BandPair> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("cannot decompose an empty series".into()));
    }
    check_kernel(kernel, x.len())?;
    let trend = moving_average(x, kernel)?;
    let mut slow = Vec::with_capacity(x.len());
    let mut fast = Vec::with_capacity(x.len());
    for (&xi, &si) in x.iter().zip(&trend) {
        let (si, fi) = exact_pair(xi, si);
        slow.push(si);
        fast.push(fi);
    }
    Ok(BandPair {
        slow,
        fast,
        method: SplitMethod::MovingAverage { kernel },
    })
}

/// Picks `(s', x - s')` with `s'` within an ulp or so of `s` such that the
/// pair sums back to `x`, when one exists. With `|x| >= |s|` Fast2Sum makes
/// the first candidate exact; otherwise it is a best effort, since a small `x`
/// may carry bits below the grid of a large `s`.
fn exact_pair(x: f64, s: f64) -> (f64, f64) {
    let f = x - s;
    let s1 = x - f;
    let f1 = x - s1;
    if s1 + f1 == x {
        return (s1, f1);
    }
    let s2 = x - f1;
    let f2 = x - s2;
    if s2 + f2 == x {
        return (s2, f2);
    }
    (s, f)
}

/// Highest frequency index kept by the low-pass half of [`split_fourier`].
pub fn cutoff_bin(len: usize, cutoff: f64) -> usize {
    (cutoff * (len / 2) as f64).floor() as usize
}

/// Low-pass keeps bins with frequency index `<= floor(c * len / 2)`, DC and
/// conjugate mirrors included; the high-pass gets the complement.
pub fn split_fourier(x: &[f64], cutoff: f64) -> Result<BandPair> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fourier split needs at least 2 samples, got {}",
            x.len()
        )));
    }
    check_cutoff(cutoff)?;
    let n = x.len();
    let keep = cutoff_bin(n, cutoff);
    let spectrum = fft(x);
    let zero = Complex64::new(0.0, 0.0);
    let (low, high): (Vec<_>, Vec<_>) = spectrum
        .iter()
        .enumerate()
        .map(|(bin, &value)| {
            let freq = bin.min(n - bin);
            if freq <= keep {
                (value, zero)
            } else {
                (zero, value)
            }
        })
        .unzip();
    let slow = ifft(&low).into_iter().map(|c| c.re).collect();
    let fast = ifft(&high).into_iter().map(|c| c.re).collect();
    Ok(BandPair {
        slow,
        fast,
        method: SplitMethod::Fourier { cutoff },
    })
}

pub fn split(x: &[f64], method: SplitMethod) -> Result<BandPair> {
    match method {
        SplitMethod::MovingAverage { kernel } => decompose_ma(x, kernel),
        SplitMethod::Fourier { cutoff } => split_fourier(x, cutoff),
    }
}
