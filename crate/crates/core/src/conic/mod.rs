//! First-order splitting solvers for the lifted programs.
//!
//! The lifted unknown `X` stands in for `x x^T`. Its feasible set is the
//! intersection of the PSD cone with the affine set of matrices whose
//! circular diagonals sum to the autocorrelation; the objective is either
//! an entrywise weighted l1 norm `sum V_ij |X_ij|` or a linear trace term
//! `trace(W X)` (the log-det linearization).

mod basis_pursuit;
mod projections;
mod sdp;

pub use basis_pursuit::{solve_basis_pursuit, BasisPursuitSolution, PartialFourierOperator};
pub use projections::{
    logdet_reweight, min_eigenvalue, project_diagonal_sums, project_psd, project_psd_with_spectrum,
    soft_threshold, symmetrize,
};
pub use sdp::{
    solve_lifted, solve_lifted_from, solve_lifted_monitored, solve_trace_weighted_sdp, solve_weighted_l1_sdp, Objective, SdpSolution,
    SolveStatus, TraceRow, WarmStart,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning knobs for the splitting solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// ADMM penalty.
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Regularizer of the log-det rank surrogate `log det(X + eps I)`.
    pub logdet_epsilon: f64,
    /// Record one trace row per iteration.
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rho: 1.0,
            max_iters: 20_000,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            logdet_epsilon: 1e-2,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("primal_tol", self.primal_tol),
            ("dual_tol", self.dual_tol),
            ("logdet_epsilon", self.logdet_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetric, entrywise nonnegative weights `V` of the objective
/// `trace(V |X|) = sum_ij V_ij |X_ij|`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::InvalidArgument("weight matrix must be square".into()));
        }
        let n = v.nrows();
        for i in 0..n {
            for j in 0..n {
                let w = v[(i, j)];
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidArgument(format!("weight ({i},{j}) = {w} is not >= 0")));
                }
                if w != v[(j, i)] {
                    return Err(Error::InvalidArgument("weight matrix must be symmetric".into()));
                }
            }
        }
        Ok(WeightMatrix(v))
    }

    pub fn zeros(n: usize) -> Self {
        WeightMatrix(DMatrix::zeros(n, n))
    }

    pub fn uniform(n: usize, w: f64) -> Self {
        WeightMatrix(DMatrix::from_element(n, n, w))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `trace(V |X|)`.
    pub fn objective(&self, x: &DMatrix<f64>) -> f64 {
        self.0.iter().zip(x.iter()).map(|(v, m)| v * m.abs()).sum()
    }
}

/// A symmetric candidate for `x x^T` together with `lambda_2 / lambda_1`
/// of its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix {
    pub x: DMatrix<f64>,
    pub eigen_ratio: f64,
}

impl LiftedMatrix {
    /// Wraps a matrix, computing the eigenvalue ratio from its spectrum.
    pub fn from_matrix(x: DMatrix<f64>) -> Result<Self> {
        let (_, eigen_ratio) = project_psd_with_spectrum(&x)?;
        Ok(LiftedMatrix { x, eigen_ratio })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}
