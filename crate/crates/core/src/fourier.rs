//! Thin wrappers over `rustfft` for the unnormalized n-point DFT used
//! throughout: `y[i] = sum_j x[j] exp(-2 pi sqrt(-1) i j / n)`.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub fn dft(input: &[Complex64]) -> Vec<Complex64> {
    let mut buf = input.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse DFT including the `1/n` factor.
pub fn idft(input: &[Complex64]) -> Vec<Complex64> {
    let mut buf = input.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let n = buf.len() as f64;
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf.iter_mut().for_each(|v| *v /= n);
    buf
}

pub fn dft_real(input: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft(&buf)
}

/// Inverse DFT keeping only the real part.
pub fn idft_real(input: &[Complex64]) -> Vec<f64> {
    idft(input).into_iter().map(|v| v.re).collect()
}

/// Forward DFT of a real sequence whose transform is known to be real
/// (e.g. a symmetric autocorrelation); imaginary round-off is dropped.
pub fn dft_real_to_real(input: &[f64]) -> Vec<f64> {
    dft_real(input).into_iter().map(|v| v.re).collect()
}
