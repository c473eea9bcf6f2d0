//! Real sparse signals and their measurement domain: circular
//! autocorrelation, power spectral density and the trivial-ambiguity
//! equivalence (time shift, reversal, global sign).

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::rng::{derive_seed, rng_from_seed};

/// Relative l2 distance under which two signals count as the same
/// up to the trivial ambiguities.
pub const EQUIVALENCE_TOL: f64 = 1e-3;

/// Entries of an autocorrelation below this magnitude count as zero.
pub const ZERO_LAG_THRESHOLD: f64 = 1e-12;

/// A real length-`n` signal with an explicit support set.
///
/// Serializes as `{"n": .., "support": [..], "values": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRepr", into = "SignalRepr")]
pub struct SparseSignal {
    values: Vec<f64>,
    support: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SignalRepr {
    n: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<SignalRepr> for SparseSignal {
    type Error = Error;

    fn try_from(repr: SignalRepr) -> Result<Self> {
        if repr.values.len() != repr.n {
            return Err(Error::LengthMismatch {
                expected: repr.n,
                actual: repr.values.len(),
            });
        }
        SparseSignal::with_support(repr.values, repr.support)
    }
}

impl From<SparseSignal> for SignalRepr {
    fn from(s: SparseSignal) -> Self {
        SignalRepr {
            n: s.values.len(),
            support: s.support,
            values: s.values,
        }
    }
}

impl SparseSignal {
    /// Builds a signal whose support is the set of nonzero entries.
    pub fn from_values(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        SparseSignal { values, support }
    }

    /// Builds a signal with an explicit support. Every entry outside the
    /// support must be exactly zero.
    pub fn with_support(values: Vec<f64>, mut support: Vec<usize>) -> Result<Self> {
        let n = values.len();
        support.sort_unstable();
        support.dedup();
        if let Some(&bad) = support.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "support index {bad} out of range for n={n}"
            )));
        }
        let mut in_support = vec![false; n];
        for &i in &support {
            in_support[i] = true;
        }
        if let Some(i) = (0..n).find(|&i| !in_support[i] && values[i] != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "entry {i} is nonzero but outside the support"
            )));
        }
        Ok(SparseSignal { values, support })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Sparsity, the size of the support.
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }
}

/// Circular autocorrelation `a[i] = sum_j x[j] x[(j+i) mod n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub a: Vec<f64>,
}

impl Autocorrelation {
    pub fn new(a: Vec<f64>) -> Self {
        Autocorrelation { a }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Checks circular symmetry, `a[0] >= |a[i]|`, and a nonnegative
    /// spectrum, all to `tol` (scaled by `a[0]` where meaningful).
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidArgument("empty autocorrelation".into()));
        }
        let a0 = self.a[0];
        let scale = a0.abs().max(1.0);
        if a0 < -tol {
            return Err(Error::InvalidArgument(format!("a[0] = {a0} is negative")));
        }
        for i in 1..n {
            if (self.a[i] - self.a[(n - i) % n]).abs() > tol * scale {
                return Err(Error::InvalidArgument(format!("a is not symmetric at lag {i}")));
            }
            if self.a[i].abs() > a0 + tol * scale {
                return Err(Error::InvalidArgument(format!("|a[{i}]| exceeds a[0]")));
            }
        }
        if let Some(v) = fourier::dft_real_to_real(&self.a)
            .into_iter()
            .find(|&v| v < -tol * scale)
        {
            return Err(Error::InvalidArgument(format!(
                "spectrum of a has negative entry {v:.3e}"
            )));
        }
        Ok(())
    }

    /// The matching power spectral density, `DFT(a)`.
    pub fn to_psd(&self) -> PowerSpectralDensity {
        PowerSpectralDensity::new(fourier::dft_real_to_real(&self.a))
    }
}

/// Squared DFT magnitudes `p[i] = |(Fx)_i|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectralDensity {
    pub p: Vec<f64>,
}

impl PowerSpectralDensity {
    pub fn new(p: Vec<f64>) -> Self {
        PowerSpectralDensity { p }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidArgument("empty power spectral density".into()));
        }
        let scale = self.p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            if self.p[i] < -tol * scale {
                return Err(Error::InvalidArgument(format!("p[{i}] is negative")));
            }
            if (self.p[i] - self.p[(n - i) % n]).abs() > tol * scale {
                return Err(Error::InvalidArgument(format!("p is not symmetric at {i}")));
            }
        }
        Ok(())
    }

    /// The matching autocorrelation, `inverseDFT(p)`.
    pub fn to_autocorrelation(&self) -> Autocorrelation {
        let spectrum: Vec<Complex64> = self.p.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Autocorrelation::new(fourier::idft_real(&spectrum))
    }
}

/// Outcome of an equivalence search over the 4n trivial transforms.
///
/// The transform maps `xhat` onto `x`: `x[j] ~ sign * r[(j + shift) mod n]`
/// where `r` is `xhat`, reversed first if `flipped`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub matched: bool,
    pub shift: usize,
    pub flipped: bool,
    pub sign: i8,
    pub residual: f64,
}

pub fn autocorrelation(x: &SparseSignal) -> Autocorrelation {
    autocorrelation_of(x.values())
}

/// FFT route: `a = inverseDFT(|DFT(x)|^2)`.
pub fn autocorrelation_of(x: &[f64]) -> Autocorrelation {
    let spectrum: Vec<Complex64> = fourier::dft_real(x)
        .into_iter()
        .map(|y| Complex64::new(y.norm_sqr(), 0.0))
        .collect();
    Autocorrelation::new(fourier::idft_real(&spectrum))
}

pub fn psd(x: &SparseSignal) -> PowerSpectralDensity {
    psd_of(x.values())
}

pub fn psd_of(x: &[f64]) -> PowerSpectralDensity {
    PowerSpectralDensity::new(fourier::dft_real(x).into_iter().map(|y| y.norm_sqr()).collect())
}

/// Searches all time shifts, reversals and sign flips of `xhat` for the
/// one closest to `x`. The distance is normalized by the larger of the
/// two norms so the relation is symmetric.
pub fn equivalent(x: &SparseSignal, xhat: &[f64], tol: f64) -> Result<EquivalenceReport> {
    equivalent_values(x.values(), xhat, tol)
}

pub fn equivalent_values(x: &[f64], xhat: &[f64], tol: f64) -> Result<EquivalenceReport> {
    let n = x.len();
    if xhat.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: xhat.len(),
        });
    }
    let norm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();
    let scale = norm(x).max(norm(xhat));
    let mut best = EquivalenceReport {
        matched: false,
        shift: 0,
        flipped: false,
        sign: 1,
        residual: f64::INFINITY,
    };
    if n == 0 {
        best.matched = true;
        best.residual = 0.0;
        return Ok(best);
    }
    let reversed: Vec<f64> = xhat.iter().rev().copied().collect();
    for (flipped, r) in [(false, xhat), (true, reversed.as_slice())] {
        for shift in 0..n {
            // distances for both signs from one pass
            let (mut plus, mut minus) = (0.0, 0.0);
            for j in 0..n {
                let t = r[(j + shift) % n];
                plus += (x[j] - t) * (x[j] - t);
                minus += (x[j] + t) * (x[j] + t);
            }
            for (sign, d) in [(1i8, plus), (-1i8, minus)] {
                let d = d.sqrt();
                if d < best.residual {
                    best = EquivalenceReport {
                        matched: false,
                        shift,
                        flipped,
                        sign,
                        residual: d,
                    };
                }
            }
        }
    }
    if scale > 0.0 {
        best.residual /= scale;
    }
    best.matched = best.residual <= tol;
    Ok(best)
}

/// Uniform random k-subset support with i.i.d. values uniform on (0, 1].
pub fn random_sparse_signal(n: usize, k: usize, seed: u64) -> Result<SparseSignal> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "sparsity k={k} must satisfy 1 <= k <= n={n}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut support = index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let mut values = vec![0.0; n];
    for &i in &support {
        // gen() is on [0,1); reflect to (0,1] so support entries are nonzero
        values[i] = 1.0 - rng.gen::<f64>();
    }
    Ok(SparseSignal { values, support })
}

/// Fraction of random k-sparse instances whose autocorrelation has no
/// (numerically) zero lag.
pub fn autocorrelation_support_density(n: usize, k: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let full = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let x = random_sparse_signal(n, k, derive_seed(&[&seed, &"support-density", &t]))?;
            Ok(autocorrelation(&x).a.iter().all(|v| v.abs() > ZERO_LAG_THRESHOLD))
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(full as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_autocorrelation(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| x[j] * x[(j + i) % n]).sum())
            .collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol)
    }

    #[test]
    fn autocorrelation_examples() {
        let a = autocorrelation_of(&[1.0, 0.0, 2.0]);
        assert!(close(&a.a, &[5.0, 2.0, 2.0], 1e-12));
        assert_eq!(brute_autocorrelation(&[1.0, 0.0, 2.0]), vec![5.0, 2.0, 2.0]);

        let mut spike = vec![0.0; 7];
        spike[0] = 1.0;
        let a = autocorrelation_of(&spike);
        assert!(close(&a.a, &spike, 1e-12));

        let a = autocorrelation_of(&[0.0, 1.0, 0.0, 2.0]);
        assert!(close(&a.a, &[5.0, 0.0, 4.0, 0.0], 1e-12));
        let b = autocorrelation_of(&[1.0, 0.0, 2.0, 0.0]);
        assert!(close(&a.a, &b.a, 1e-12));
    }

    #[test]
    fn psd_examples() {
        assert!(close(&psd_of(&[1.0, 1.0]).p, &[4.0, 0.0], 1e-12));
        assert!(close(&psd_of(&[1.0, 0.0]).p, &[1.0, 1.0], 1e-12));
        let c = -1.7;
        let mut x = vec![0.0; 5];
        x[0] = c;
        assert!(close(&psd_of(&x).p, &[c * c; 5], 1e-12));
    }

    #[test]
    fn equivalence_examples() {
        let x = SparseSignal::from_values(vec![1.0, 0.0, 2.0]);
        let r = equivalent(&x, &[2.0, 0.0, 1.0], EQUIVALENCE_TOL).unwrap();
        assert!(r.matched && r.residual < 1e-15);
        let r = equivalent(&x, &[-2.0, -1.0, 0.0], EQUIVALENCE_TOL).unwrap();
        assert!(r.matched && r.sign == -1);
        // for n = 3 every two-point support is a flipped shift of every other
        let r = equivalent(&x, &[1.0, 2.0, 0.0], EQUIVALENCE_TOL).unwrap();
        assert!(r.matched);
        // spacing 2 versus spacing 1
        let y = SparseSignal::from_values(vec![1.0, 0.0, 2.0, 0.0]);
        let r = equivalent(&y, &[1.0, 2.0, 0.0, 0.0], EQUIVALENCE_TOL).unwrap();
        assert!(!r.matched);
    }

    #[test]
    fn equivalence_rejects_length_mismatch() {
        let x = SparseSignal::from_values(vec![1.0, 0.0, 2.0]);
        assert!(matches!(
            equivalent(&x, &[1.0, 2.0], 1e-3),
            Err(Error::LengthMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn equivalence_report_transform_maps_xhat_onto_x() {
        let x = [0.3, 0.0, 0.9, 0.1, 0.0];
        let xhat = [-0.1, -0.9, 0.0, -0.3, 0.0];
        let r = equivalent_values(&x, &xhat, 1e-9).unwrap();
        assert!(r.matched);
        let n = x.len();
        let src: Vec<f64> = if r.flipped {
            xhat.iter().rev().copied().collect()
        } else {
            xhat.to_vec()
        };
        for j in 0..n {
            assert!((x[j] - r.sign as f64 * src[(j + r.shift) % n]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_signal_is_deterministic_and_valid() {
        let a = random_sparse_signal(32, 4, 7).unwrap();
        let b = random_sparse_signal(32, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.k(), 4);
        for &i in a.support() {
            assert!(a.values()[i] > 0.0 && a.values()[i] <= 1.0);
        }
        let full = random_sparse_signal(32, 32, 3).unwrap();
        assert_eq!(full.support(), (0..32).collect::<Vec<_>>().as_slice());
        assert!(random_sparse_signal(4, 5, 0).is_err());
    }

    #[test]
    fn support_locations_are_uniform() {
        let (n, k, draws) = (32usize, 4usize, 10_000usize);
        let mut counts = vec![0usize; n];
        for t in 0..draws {
            for &i in random_sparse_signal(n, k, 1000 + t as u64).unwrap().support() {
                counts[i] += 1;
            }
        }
        let p = k as f64 / n as f64;
        let mean = draws as f64 * p;
        // chi-square with n - 1 degrees of freedom; 70 sits far in the tail
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2) / (mean * (1.0 - p)))
            .sum();
        assert!(chi2 <= 70.0, "chi2 {chi2}");
    }

    #[test]
    fn support_density_edge_cases() {
        assert_eq!(autocorrelation_support_density(16, 1, 20, 1).unwrap(), 0.0);
        assert_eq!(autocorrelation_support_density(2, 2, 20, 1).unwrap(), 1.0);
        assert!(autocorrelation_support_density(8, 2, 0, 1).is_err());
    }

    #[test]
    fn json_shape() {
        let x = SparseSignal::from_values(vec![0.0, 0.5, 0.0]);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"n":3,"support":[1],"values":[0.0,0.5,0.0]}"#);
        let back: SparseSignal = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<SparseSignal>(r#"{"n":2,"support":[],"values":[1.0,0.0]}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_autocorrelation() {
        assert!(autocorrelation_of(&[0.2, 0.0, 0.7, 0.4]).validate(1e-9).is_ok());
        assert!(Autocorrelation::new(vec![1.0, 10.0, 0.0, 10.0]).validate(1e-9).is_err());
        assert!(Autocorrelation::new(vec![1.0, 0.5, 0.0, 0.1]).validate(1e-9).is_err());
    }
}
