//! Two-block ADMM for
//!
//! ```text
//! minimize  f(X)   subject to  sum_j X[j,(j+i) mod n] = a[i],  X PSD
//! ```
//!
//! The first block takes the proximal map of `f` restricted to the affine
//! diagonal-sum set. The circular diagonals are disjoint, so that map
//! splits into one small problem per diagonal: a soft-threshold (or a
//! shift, for a linear objective) followed by a scalar multiplier that
//! restores the diagonal's sum. The second block projects onto the PSD
//! cone. The penalty adapts to keep primal and dual residuals balanced.

use std::io::Write;

use nalgebra::DMatrix;

use super::projections::{
    diagonal_sums, project_diagonal_sums_in_place, project_psd_with_spectrum, shrink,
    symmetrize_in_place,
};
use super::{LiftedMatrix, SolverSettings, WeightMatrix};
use crate::error::{Error, Result};
use crate::signal::Autocorrelation;

/// Window (iterations) and minimum relative decrease used to flag a
/// stalled primal residual as infeasibility. A stall only counts once the
/// iterates have also stopped moving (dual residual well below primal).
const STALL_WINDOW: usize = 2000;
const STALL_DECREASE: f64 = 0.01;
const STALL_FLOOR: f64 = 1e-3;
const STALL_DUAL_FRACTION: f64 = 1e-2;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// `sum_ij V_ij |X_ij|`.
    WeightedL1(&'a WeightMatrix),
    /// `trace(W X)` for symmetric `W`.
    Trace(&'a DMatrix<f64>),
}

impl Objective<'_> {
    fn n(&self) -> usize {
        match self {
            Objective::WeightedL1(v) => v.n(),
            Objective::Trace(w) => w.nrows(),
        }
    }

    pub fn value(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            Objective::WeightedL1(v) => v.objective(x),
            Objective::Trace(w) => w.component_mul(x).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
    /// Halted early by a caller-supplied monitor.
    Stopped,
}

/// One row of a solve trace: `iter,primal,dual,ratio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// The PSD block's copy: exactly PSD, constraints met to the
    /// primal tolerance on convergence.
    pub x: LiftedMatrix,
    pub status: SolveStatus,
    /// Consensus disagreement, relative to `max(a[0], 1)`.
    pub primal_residual: f64,
    /// Consensus movement times `rho`, relative to `max(a[0], 1)`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    pub trace: Vec<TraceRow>,
    /// Final splitting state, reusable as a warm start for a nearby
    /// problem with the same constraints.
    pub state: WarmStart,
}

/// Internal ADMM state: PSD iterate, scaled dual variable and penalty.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub psd: DMatrix<f64>,
    pub dual: DMatrix<f64>,
    pub rho: f64,
}

impl SdpSolution {
    /// Maps non-converged outcomes to errors.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            SolveStatus::Converged | SolveStatus::Stopped => Ok(self),
            SolveStatus::MaxIters => Err(Error::MaxIters {
                iterations: self.iterations,
            }),
            SolveStatus::Infeasible => Err(Error::Infeasible {
                residual: self.primal_residual,
            }),
        }
    }

    /// Largest violation of the diagonal-sum constraints by `x`.
    pub fn constraint_violation(&self, a: &Autocorrelation) -> f64 {
        diagonal_sums(&self.x.x)
            .iter()
            .zip(&a.a)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,primal,dual,ratio")?;
        for r in &self.trace {
            writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.primal, r.dual, r.ratio)?;
        }
        Ok(())
    }
}

/// Weighted-l1 lifted program: minimize `trace(V |X|)`.
pub fn solve_weighted_l1_sdp(
    a: &Autocorrelation,
    v: &WeightMatrix,
    settings: &SolverSettings,
) -> Result<SdpSolution> {
    solve_lifted(a, Objective::WeightedL1(v), settings)
}

/// Linear-objective lifted program: minimize `trace(W X)`.
pub fn solve_trace_weighted_sdp(
    a: &Autocorrelation,
    w: &DMatrix<f64>,
    settings: &SolverSettings,
) -> Result<SdpSolution> {
    solve_lifted(a, Objective::Trace(w), settings)
}

/// Over-relaxation factor.
const RELAXATION: f64 = 1.6;
/// Residual ratio that triggers a penalty update, and the update factor.
const RHO_BALANCE: f64 = 10.0;
const RHO_FACTOR: f64 = 2.0;
const RHO_UPDATE_EVERY: usize = 50;
const ANDERSON_MEMORY: usize = 8;
const ANDERSON_SAFEGUARD: f64 = 0.999;

pub fn solve_lifted(
    a: &Autocorrelation,
    objective: Objective<'_>,
    settings: &SolverSettings,
) -> Result<SdpSolution> {
    solve_lifted_from(a, objective, settings, None)
}

/// [`solve_lifted`] starting from a previous solve's state.
pub fn solve_lifted_from(
    a: &Autocorrelation,
    objective: Objective<'_>,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<SdpSolution> {
    solve_lifted_monitored(a, objective, settings, warm, 0, &mut |_, _| false)
}

/// [`solve_lifted_from`] that hands the PSD iterate and its eigenvalue
/// ratio to `monitor` every `every` iterations (never when `every == 0`);
/// returning `true` stops the solve with [`SolveStatus::Stopped`].
pub fn solve_lifted_monitored(
    a: &Autocorrelation,
    objective: Objective<'_>,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
    every: usize,
    monitor: &mut dyn FnMut(&DMatrix<f64>, f64) -> bool,
) -> Result<SdpSolution> {
    settings.validate()?;
    let n = a.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty autocorrelation".into()));
    }
    if objective.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: objective.n(),
        });
    }
    if a.a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = a.a[0].max(1.0);
    let mut prox = AffineProx::new(n);

    let (mut psd, mut dual_var, mut rho) = match warm {
        Some(w) if w.psd.nrows() == n && w.dual.nrows() == n => (w.psd.clone(), w.dual.clone(), w.rho),
        _ => {
            let mut psd = DMatrix::<f64>::zeros(n, n);
            project_diagonal_sums_in_place(&mut psd, &a.a);
            (psd, DMatrix::<f64>::zeros(n, n), settings.rho)
        }
    };
    let mut history: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut ratio = 0.0;
    let mut status = SolveStatus::MaxIters;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut accel = Anderson::new(ANDERSON_MEMORY);
    // last plain ADMM image T(w) and its fixed-point residual, kept to
    // fall back on when an accelerated point turns out worse
    let mut fallback: Option<(DMatrix<f64>, DMatrix<f64>, f64)> = None;
    let mut on_accelerated = false;
    let mut accelerate = true;
    let mut stall_start = 0;
    let mut output = psd.clone();

    for iter in 1..=settings.max_iters {
        iterations = iter;

        let mut affine = &psd - &dual_var;
        prox.apply(&mut affine, &objective, &a.a, rho);

        let relaxed = &affine * RELAXATION + &psd * (1.0 - RELAXATION);
        let (psd_new, r) = project_psd_with_spectrum(&(&relaxed + &dual_var))?;
        ratio = r;
        let mut dual_new = &dual_var + &relaxed - &psd_new;
        symmetrize_in_place(&mut dual_new);

        primal = (&affine - &psd_new).norm() / scale;
        dual = rho * (&psd_new - &psd).norm() / scale;
        output = psd_new.clone();

        if settings.record_trace {
            trace.push(TraceRow {
                iter,
                primal,
                dual,
                ratio,
            });
        }
        if primal <= settings.primal_tol && dual <= settings.dual_tol {
            status = SolveStatus::Converged;
            break;
        }
        if every > 0 && iter % every == 0 && monitor(&psd_new, ratio) {
            status = SolveStatus::Stopped;
            break;
        }
        history.push(primal);
        if iter > stall_start + STALL_WINDOW && primal > STALL_FLOOR {
            let earlier = history[iter - 1 - STALL_WINDOW];
            if primal > (1.0 - STALL_DECREASE) * earlier && dual < STALL_DUAL_FRACTION * primal {
                if !accelerate {
                    status = SolveStatus::Infeasible;
                    break;
                }
                // extrapolation can pin the iterate on a slow drift; only
                // plain iterations may certify infeasibility
                accelerate = false;
                stall_start = iter;
            }
        }

        let residual = ((&psd_new - &psd).norm_squared() + (&dual_new - &dual_var).norm_squared()).sqrt();
        let mut stepped = false;
        if dual == 0.0 || !accelerate {
            // acceleration is off, or the PSD block is frozen and only the
            // dual drifts, which extrapolation would cancel: plain step
            accel.reset();
            fallback = None;
            on_accelerated = false;
            psd = psd_new.clone();
            dual_var = dual_new.clone();
            stepped = true;
        } else if on_accelerated {
            if let Some((fp, fd, fres)) = fallback.take() {
                if residual > ANDERSON_SAFEGUARD * fres {
                    // reject an extrapolated point that does not clearly
                    // improve on the plain image and resume from the latter;
                    // on near-translations all residuals match and mixing
                    // only drags the iterate back
                    accel.reset();
                    psd = fp;
                    dual_var = fd;
                    on_accelerated = false;
                    stepped = true;
                }
            }
        }
        if !stepped {
            accel.push(&psd, &dual_var, &psd_new, &dual_new);
            fallback = Some((psd_new.clone(), dual_new.clone(), residual));
            match accel.propose() {
                Some((p, d)) => {
                    psd = p;
                    dual_var = d;
                    on_accelerated = true;
                }
                None => {
                    psd = psd_new;
                    dual_var = dual_new;
                    on_accelerated = false;
                }
            }
        }

        if iter % RHO_UPDATE_EVERY == 0 {
            // scaled dual variable must be rescaled with the penalty
            let factor = if primal > RHO_BALANCE * dual && rho * RHO_FACTOR <= RHO_MAX {
                RHO_FACTOR
            } else if dual > RHO_BALANCE * primal && rho / RHO_FACTOR >= RHO_MIN {
                1.0 / RHO_FACTOR
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                dual_var /= factor;
                accel.reset();
                fallback = None;
                on_accelerated = false;
            }
        }
    }
    let psd = output;

    let value = objective.value(&psd);
    Ok(SdpSolution {
        state: WarmStart {
            psd: psd.clone(),
            dual: dual_var,
            rho,
        },
        x: LiftedMatrix {
            x: psd,
            eigen_ratio: ratio,
        },
        status,
        primal_residual: primal,
        dual_residual: dual,
        iterations,
        objective: value,
        trace,
    })
}

/// Type-II Anderson acceleration over the ADMM state `(Y, U)`.
struct Anderson {
    memory: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    d_image: std::collections::VecDeque<Vec<f64>>,
    d_residual: std::collections::VecDeque<Vec<f64>>,
    last_image: Vec<f64>,
    last_residual: Vec<f64>,
    shape: (usize, usize),
}

impl Anderson {
    fn new(memory: usize) -> Self {
        Anderson {
            memory,
            prev: None,
            d_image: Default::default(),
            d_residual: Default::default(),
            last_image: Vec::new(),
            last_residual: Vec::new(),
            shape: (0, 0),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.d_image.clear();
        self.d_residual.clear();
    }

    fn flatten(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
        a.iter().chain(b.iter()).copied().collect()
    }

    fn push(&mut self, y: &DMatrix<f64>, u: &DMatrix<f64>, ty: &DMatrix<f64>, tu: &DMatrix<f64>) {
        self.shape = y.shape();
        let w = Self::flatten(y, u);
        let image = Self::flatten(ty, tu);
        let residual: Vec<f64> = image.iter().zip(&w).map(|(t, w)| t - w).collect();
        if let Some((prev_image, prev_residual)) = self.prev.take() {
            self.d_image.push_back(image.iter().zip(&prev_image).map(|(a, b)| a - b).collect());
            self.d_residual
                .push_back(residual.iter().zip(&prev_residual).map(|(a, b)| a - b).collect());
            if self.d_image.len() > self.memory {
                self.d_image.pop_front();
                self.d_residual.pop_front();
            }
        }
        self.last_image = image.clone();
        self.last_residual = residual.clone();
        self.prev = Some((image, residual));
    }

    fn propose(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let m = self.d_residual.len();
        if m == 0 {
            return None;
        }
        // regularized normal equations for min || f - dF gamma ||
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut rhs = nalgebra::DVector::<f64>::zeros(m);
        for i in 0..m {
            for j in i..m {
                let v: f64 = self.d_residual[i].iter().zip(&self.d_residual[j]).map(|(a, b)| a * b).sum();
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            rhs[i] = self.d_residual[i].iter().zip(&self.last_residual).map(|(a, b)| a * b).sum();
        }
        let reg = 1e-10 * gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b)).max(1e-300);
        for i in 0..m {
            gram[(i, i)] += reg;
        }
        let gamma = gram.cholesky()?.solve(&rhs);
        if gamma.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let mut w = self.last_image.clone();
        for (g, d) in gamma.iter().zip(&self.d_image) {
            for (wi, di) in w.iter_mut().zip(d) {
                *wi -= g * di;
            }
        }
        let (r, c) = self.shape;
        let half = r * c;
        let mut y = DMatrix::from_column_slice(r, c, &w[..half]);
        let mut u = DMatrix::from_column_slice(r, c, &w[half..]);
        symmetrize_in_place(&mut y);
        symmetrize_in_place(&mut u);
        Some((y, u))
    }
}

/// Proximal map of `f + indicator(diagonal sums = a)`, solved diagonal by
/// diagonal. Holds scratch buffers reused across iterations.
struct AffineProx {
    n: usize,
    entries: Vec<f64>,
    weights: Vec<f64>,
    breakpoints: Vec<f64>,
}

impl AffineProx {
    fn new(n: usize) -> Self {
        AffineProx {
            n,
            entries: vec![0.0; n],
            weights: vec![0.0; n],
            breakpoints: Vec::with_capacity(2 * n),
        }
    }

    fn apply(&mut self, m: &mut DMatrix<f64>, objective: &Objective<'_>, a: &[f64], rho: f64) {
        let n = self.n;
        match objective {
            Objective::Trace(w) => {
                for (e, w) in m.iter_mut().zip(w.iter()) {
                    *e -= w / rho;
                }
                project_diagonal_sums_in_place(m, a);
            }
            Objective::WeightedL1(v) => {
                let v = v.matrix();
                for (i, &target) in a.iter().enumerate() {
                    for j in 0..n {
                        let c = (j + i) % n;
                        self.entries[j] = m[(j, c)];
                        self.weights[j] = v[(j, c)] / rho;
                    }
                    let t = self.multiplier(target);
                    for j in 0..n {
                        let c = (j + i) % n;
                        m[(j, c)] = shrink(self.entries[j] + t, self.weights[j]);
                    }
                }
            }
        }
    }

    /// Solves `sum_j shrink(entries[j] + t, weights[j]) = target` for `t`.
    /// The left side is continuous, nondecreasing and piecewise linear with
    /// breakpoints at `-entries[j] +- weights[j]`.
    fn multiplier(&mut self, target: f64) -> f64 {
        let (e, w) = (&self.entries, &self.weights);
        let sum_at = |t: f64| -> f64 { e.iter().zip(w).map(|(&e, &w)| shrink(e + t, w)).sum() };
        self.breakpoints.clear();
        for (&e, &w) in e.iter().zip(w) {
            self.breakpoints.push(-e - w);
            self.breakpoints.push(-e + w);
        }
        self.breakpoints.sort_unstable_by(|p, q| p.total_cmp(q));
        let bp = &self.breakpoints;
        // first breakpoint whose value reaches the target
        let (mut lo, mut hi) = (0usize, bp.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if sum_at(bp[mid]) >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let n = e.len() as f64;
        if lo == 0 {
            // below every breakpoint all entries are on the negative branch (slope n)
            let t0 = bp[0];
            return t0 - (sum_at(t0) - target) / n;
        }
        if lo == bp.len() {
            let t1 = bp[bp.len() - 1];
            return t1 + (target - sum_at(t1)) / n;
        }
        let (t0, t1) = (bp[lo - 1], bp[lo]);
        let (f0, f1) = (sum_at(t0), sum_at(t1));
        if f1 - f0 <= 0.0 {
            return t1;
        }
        t0 + (target - f0) * (t1 - t0) / (f1 - f0)
    }
}
