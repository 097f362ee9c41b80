use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// Textbook O(n²) DFT, `X[k] = Σ x[j] e^{-2πi jk/n}`. Kept as the reference
/// the fast path is tested against.
pub fn dft_direct(x: &[f64]) -> Vec<Complex64> {
    let input: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_complex(&input, -1.0)
}

/// Inverse of [`dft_direct`], including the 1/n factor.
pub fn idft_direct(spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = spectrum.len() as f64;
    dft_complex(spectrum, 1.0)
        .into_iter()
        .map(|c| c / n)
        .collect()
}

fn dft_complex(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    // Reduce jk mod n first so the angle stays small and exact.
                    let angle = sign * TAU * ((j * k) % n) as f64 / n as f64;
                    v * Complex64::from_polar(1.0, angle)
                })
                .sum()
        })
        .collect()
}

/// Forward transform of a real series, any length.
pub fn fft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse transform (with 1/n scaling) matching [`fft`].
pub fn ifft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
    buf
}
