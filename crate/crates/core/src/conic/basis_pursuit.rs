//! Minimum-l1 real vector matching a subset of its DFT coefficients.

use num_complex::Complex64;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::projections::shrink;
use super::sdp::SolveStatus;
use super::SolverSettings;
use crate::error::{Error, Result};
use crate::fourier;
use crate::rng::Rng;

/// Rows `omega` of the n-point DFT matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialFourierOperator {
    n: usize,
    omega: Vec<usize>,
}

impl PartialFourierOperator {
    pub fn new(n: usize, mut omega: Vec<usize>) -> Result<Self> {
        omega.sort_unstable();
        let before = omega.len();
        omega.dedup();
        if omega.len() != before {
            return Err(Error::InvalidArgument("frequency indices must be distinct".into()));
        }
        if let Some(&bad) = omega.iter().find(|&&w| w >= n) {
            return Err(Error::InvalidArgument(format!("frequency {bad} out of range for n={n}")));
        }
        Ok(PartialFourierOperator { n, omega })
    }

    /// All `n` frequencies.
    pub fn full(n: usize) -> Self {
        PartialFourierOperator {
            n,
            omega: (0..n).collect(),
        }
    }

    /// `m` distinct frequencies drawn uniformly without replacement.
    pub fn random(n: usize, m: usize, rng: &mut Rng) -> Result<Self> {
        if m > n {
            return Err(Error::InvalidArgument(format!("m={m} exceeds n={n}")));
        }
        let mut omega = index::sample(rng, n, m).into_vec();
        omega.sort_unstable();
        Ok(PartialFourierOperator { n, omega })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    /// `DFT(v)` restricted to `omega`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        if v.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: v.len(),
            });
        }
        let y = fourier::dft_real(v);
        Ok(self.omega.iter().map(|&w| y[w]).collect())
    }

    /// Expands observations on `omega` to the conjugate-closed frequency
    /// set a real vector must also satisfy. Returns the target spectrum
    /// and the mask of constrained frequencies.
    fn conjugate_closure(&self, s: &[Complex64]) -> Result<(Vec<Complex64>, Vec<bool>)> {
        let n = self.n;
        let scale = s.iter().fold(1.0f64, |m, v| m.max(v.norm()));
        let tol = 1e-9 * scale;
        let mut target = vec![Complex64::new(0.0, 0.0); n];
        let mut mask = vec![false; n];
        for (&w, &val) in self.omega.iter().zip(s) {
            let mirror = (n - w) % n;
            for (idx, v) in [(w, val), (mirror, val.conj())] {
                if mask[idx] && (target[idx] - v).norm() > tol {
                    return Err(Error::InconsistentMeasurements(format!(
                        "frequency {idx} is not conjugate-consistent"
                    )));
                }
                target[idx] = v;
                mask[idx] = true;
            }
        }
        Ok((target, mask))
    }
}

#[derive(Debug, Clone)]
pub struct BasisPursuitSolution {
    pub v: Vec<f64>,
    pub status: SolveStatus,
    /// `||DFT_omega(v) - s||_2`.
    pub residual: f64,
    pub iterations: usize,
}

/// Minimizes `||v||_1` over real `v` with `DFT(v)[omega] = s`.
///
/// Two-block splitting: one copy is projected onto the affine set (a
/// correction applied in the frequency domain), the other is
/// soft-thresholded. The returned vector is the affine copy.
pub fn solve_basis_pursuit(
    op: &PartialFourierOperator,
    s: &[Complex64],
    settings: &SolverSettings,
) -> Result<BasisPursuitSolution> {
    settings.validate()?;
    let n = op.n;
    if s.len() != op.m() {
        return Err(Error::LengthMismatch {
            expected: op.m(),
            actual: s.len(),
        });
    }
    if s.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (target, mask) = op.conjugate_closure(s)?;
    let project = |w: &[f64]| -> Vec<f64> {
        let mut y = fourier::dft_real(w);
        for i in 0..n {
            y[i] = if mask[i] {
                target[i] - y[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let corr = fourier::idft_real(&y);
        w.iter().zip(corr).map(|(a, b)| a + b).collect()
    };

    let rho = settings.rho;
    let scale = target.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1.0) / (n as f64).sqrt();
    let mut z = project(&vec![0.0; n]);
    let mut u = vec![0.0; n];
    let mut v = z.clone();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    for iter in 1..=settings.max_iters {
        iterations = iter;
        let shifted: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
        v = project(&shifted);
        let z_new: Vec<f64> = v.iter().zip(&u).map(|(a, b)| shrink(a + b, 1.0 / rho)).collect();
        let mut primal = 0.0;
        let mut dual = 0.0;
        for i in 0..n {
            let d = v[i] - z_new[i];
            u[i] += d;
            primal += d * d;
            dual += (z_new[i] - z[i]).powi(2);
        }
        z = z_new;
        if primal.sqrt() / scale <= settings.primal_tol && rho * dual.sqrt() / scale <= settings.dual_tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    let residual = op
        .apply(&v)?
        .iter()
        .zip(s)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(BasisPursuitSolution {
        v,
        status,
        residual,
        iterations,
    })
}
