//! End-to-end recovery from (full or partial) power spectral density:
//! reweighted lifted weighted-l1, the log-det heuristic, alternating
//! projections, and the partial-spectrum pipeline.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conic::{
    logdet_reweight, solve_basis_pursuit, solve_lifted_from, solve_lifted_monitored, Objective, PartialFourierOperator,
    SolveStatus, SolverSettings, WarmStart, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::fourier;
use crate::rng::{rng_from_seed, Rng};
use crate::signal::{
    equivalent_values, psd_of, Autocorrelation, PowerSpectralDensity, SparseSignal,
    EQUIVALENCE_TOL,
};

/// Relative PSD mismatch under which a rank-one factor is accepted.
pub const PSD_MATCH_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub max_outer_iters: usize,
    /// Entries with `|x_i| > tau * max |x|` count as likely support.
    pub support_threshold_ratio: f64,
    /// Weights are drawn uniformly from `[lo, hi]`.
    pub weight_range: (f64, f64),
    pub seed: u64,
    /// `lambda_2 / lambda_1` at or below which `X` is treated as rank one.
    pub rank1_ratio_tol: f64,
    /// Refine rank-one factors by a least-squares autocorrelation fit on
    /// their estimated support.
    pub polish: bool,
    /// Inspect the solver iterate every this many iterations and stop the
    /// solve once a polished factor reproduces the data; 0 disables.
    pub monitor_every: usize,
    /// Draw entirely fresh weights (and solve cold) when an outer iteration
    /// reproduces the previous support estimate without success.
    pub restart_on_repeat: bool,
    pub solver: SolverSettings,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            max_outer_iters: 20,
            support_threshold_ratio: 0.2,
            weight_range: (0.0, 1.0),
            seed: 0,
            rank1_ratio_tol: 1e-3,
            polish: true,
            monitor_every: 50,
            restart_on_repeat: true,
            // polishing supplies the final digits, so the inner solves only
            // need to be accurate enough to expose the support
            solver: SolverSettings {
                primal_tol: 1e-4,
                dual_tol: 1e-4,
                max_iters: 4000,
                ..SolverSettings::default()
            },
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        let tau = self.support_threshold_ratio;
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "support threshold ratio must lie in (0,1), got {tau}"
            )));
        }
        let (lo, hi) = self.weight_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidArgument(format!("weight range [{lo},{hi}] not within [0,1]")));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("max_outer_iters must be positive".into()));
        }
        if !(self.rank1_ratio_tol > 0.0) {
            return Err(Error::InvalidArgument("rank1_ratio_tol must be positive".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub estimate: Vec<f64>,
    /// Equivalence to the ground truth when one was supplied, otherwise
    /// PSD self-consistency.
    pub success: bool,
    pub outer_iterations: usize,
    pub final_eigen_ratio: f64,
    /// `||psd(estimate) - p|| / ||p||`.
    pub psd_residual: f64,
    /// Relative equivalence distance to the ground truth, if supplied.
    pub truth_residual: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Best rank-one factor `sqrt(lambda_1) v_1`, oriented so its first
/// nonzero entry is positive.
pub fn rank1_extract(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    if n == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(crate::conic::symmetrize(x));
    let (top, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best });
    let lambda = lambda.max(0.0);
    if lambda == 0.0 {
        return vec![0.0; n];
    }
    let v = eig.eigenvectors.column(top);
    let peak = v.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let sign = v
        .iter()
        .find(|e| e.abs() > 1e-12 * peak)
        .map_or(1.0, |e| e.signum());
    v.iter().map(|e| sign * e * lambda.sqrt()).collect()
}

pub(crate) fn relative_psd_residual(estimate: &[f64], p: &[f64]) -> f64 {
    let q = psd_of(estimate).p;
    let num: f64 = q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = p.iter().map(|b| b * b).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn judge(estimate: &[f64], psd_residual: f64, truth: Option<&SparseSignal>) -> Result<(bool, Option<f64>)> {
    match truth {
        Some(x) => {
            let r = equivalent_values(x.values(), estimate, EQUIVALENCE_TOL)?;
            Ok((r.matched, Some(r.residual)))
        }
        None => Ok((psd_residual <= PSD_MATCH_TOL, None)),
    }
}

fn random_weights(n: usize, range: (f64, f64), rng: &mut Rng) -> DMatrix<f64> {
    let (lo, hi) = range;
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let w = lo + (hi - lo) * rng.gen::<f64>();
            v[(i, j)] = w;
            v[(j, i)] = w;
        }
    }
    v
}

fn likely_support(estimate: &[f64], tau: f64) -> Vec<bool> {
    let peak = estimate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    estimate.iter().map(|v| v.abs() > tau * peak).collect()
}

/// Support-guided weight update: zero on pairs of likely-support indices,
/// fresh uniform draws elsewhere.
pub fn reweight(estimate: &[f64], cfg: &RetrievalConfig, rng: &mut Rng) -> WeightMatrix {
    let n = estimate.len();
    let likely = likely_support(estimate, cfg.support_threshold_ratio);
    let mut v = random_weights(n, cfg.weight_range, rng);
    for i in 0..n {
        for j in 0..n {
            if likely[i] && likely[j] {
                v[(i, j)] = 0.0;
            }
        }
    }
    WeightMatrix::new(v).expect("weights are symmetric and in range")
}

/// Relative autocorrelation mismatch below which a polished factor is
/// taken to reproduce the data exactly.
pub const POLISH_ACCEPT_TOL: f64 = 1e-9;
/// Relative magnitude above which an entry joins the polishing support,
/// tried in addition to the configured support threshold.
const POLISH_SUPPORT_FLOOR: f64 = 0.01;
/// Accuracy a loose inner solve is finished to before its factor is
/// accepted by the rank-one test.
const REFINE_TOL: f64 = 1e-7;
const REFINE_MAX_ITERS: usize = 20_000;
/// Eigenvalue ratio under which the monitor polishes in-flight iterates.
const MONITOR_RATIO: f64 = 0.1;
/// Fresh restarts spent looking for a sparser exact fit once one is found
/// with more entries than the lag count allows.
const SPARSER_FIT_RESTARTS: usize = 4;

fn autocorrelation_residual(x: &[f64], a: &[f64]) -> Vec<f64> {
    let ax = crate::signal::autocorrelation_of(x);
    ax.a.iter().zip(a).map(|(u, v)| u - v).collect()
}

fn relative_autocorrelation_residual(x: &[f64], a: &[f64]) -> f64 {
    let r = autocorrelation_residual(x, a);
    let num = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Levenberg-Marquardt fit of `autocorrelation(x) = a` over the entries
/// in `support`, starting from `x`. Entries outside the support are zero.
pub fn polish_on_support(x: &[f64], support: &[usize], a: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut cur = vec![0.0; n];
    for &s in support {
        cur[s] = x[s];
    }
    let m = support.len();
    if m == 0 {
        return cur;
    }
    let mut r = autocorrelation_residual(&cur, a);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let floor = 1e-30 * a.iter().map(|v| v * v).sum::<f64>();
    let mut mu = 1e-3;
    for _ in 0..100 {
        if cost <= floor {
            break;
        }
        // d a_i / d x_s = x[s+i] + x[s-i]
        let jac = DMatrix::from_fn(n, m, |i, c| {
            let s = support[c];
            cur[(s + i) % n] + cur[(s + n - i) % n]
        });
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * nalgebra::DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..10 {
            let mut lhs = jtj.clone();
            for d in 0..m {
                lhs[(d, d)] += mu * (jtj[(d, d)] + 1e-12);
            }
            let Some(chol) = lhs.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let step = chol.solve(&grad);
            let mut trial = cur.clone();
            for (c, &s) in support.iter().enumerate() {
                trial[s] -= step[c];
            }
            let tr = autocorrelation_residual(&trial, a);
            let tc: f64 = tr.iter().map(|v| v * v).sum();
            if tc < cost {
                cur = trial;
                r = tr;
                cost = tc;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    cur
}

/// Smallest `k` whose `k(k-1)+1` possible lags cover the nonzero lags of
/// `a`. Exact fits with more entries than this carry colliding offsets,
/// and a sparser fit may exist.
fn sparsity_bound(a: &[f64]) -> usize {
    let floor = 1e-9 * a[0].abs().max(f64::MIN_POSITIVE);
    let lags = a.iter().filter(|v| v.abs() > floor).count();
    (1..).find(|&k| k * (k - 1) + 1 >= lags).expect("lag count is finite")
}

/// Whether every pairwise offset of the support of `x` is a nonzero lag
/// of `a`. Generic sparse signals have no cancelling products; exact fits
/// on too wide a support usually do.
fn no_cancellation(x: &[f64], a: &[f64]) -> bool {
    let n = x.len();
    let support: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
    let floor = 1e-9 * a[0].abs().max(f64::MIN_POSITIVE);
    support
        .iter()
        .all(|&i| support.iter().all(|&j| a[(j + n - i) % n].abs() > floor))
}

/// Polishes `x` on nested supports of its largest entries, from the
/// thresholded support up to the entries above the floor (capped below
/// n/2, where exact fits stop being informative). Stops at the first exact
/// fit and otherwise keeps the best one, or `x` itself.
fn polish(x: &[f64], a: &[f64], tau: f64) -> (Vec<f64>, f64) {
    let mut best = (x.to_vec(), relative_autocorrelation_residual(x, a));
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return best;
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let above = |r: f64| order.iter().filter(|&&i| x[i].abs() > r * peak).count();
    let lo = above(tau).max(1);
    let hi = above(POLISH_SUPPORT_FLOOR).min((n / 2).saturating_sub(1)).max(lo);
    for r in lo..=hi {
        let mut support = order[..r].to_vec();
        support.sort_unstable();
        let fit = polish_on_support(x, &support, a);
        let res = relative_autocorrelation_residual(&fit, a);
        if res < best.1 {
            best = (fit, res);
        }
        if res <= POLISH_ACCEPT_TOL {
            break;
        }
    }
    best
}

fn autocorrelation_from_psd(p: &PowerSpectralDensity) -> Autocorrelation {
    let mut a = p.to_autocorrelation();
    let n = a.n();
    let raw = a.a.clone();
    for i in 0..n {
        a.a[i] = 0.5 * (raw[i] + raw[(n - i) % n]);
    }
    a
}

/// Reweighted weighted-l1 recovery.
///
/// Solves the lifted program with random weights, stops once the solution
/// is numerically rank one and its factor reproduces `p`, and otherwise
/// zeroes the weights on the estimated support and solves again. Returns
/// the rank-one factor with the smallest PSD mismatch seen.
pub fn algorithm1(
    p: &PowerSpectralDensity,
    cfg: &RetrievalConfig,
    truth: Option<&SparseSignal>,
) -> Result<RecoveryResult> {
    let start = Instant::now();
    cfg.validate()?;
    p.validate(1e-9)?;
    let n = p.n();
    let a = autocorrelation_from_psd(p);
    let mut rng = rng_from_seed(cfg.seed);
    let mut weights = WeightMatrix::new(random_weights(n, cfg.weight_range, &mut rng))?;

    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut warm: Option<WarmStart> = None;
    let mut previous: Option<Vec<bool>> = None;
    let bound = sparsity_bound(&a.a);
    // sparsest exact fit so far, with its entry count
    let mut sparsest: Option<((Vec<f64>, f64, f64), usize)> = None;
    let mut restarts_left = SPARSER_FIT_RESTARTS;
    let mut outer = 0;
    for iter in 1..=cfg.max_outer_iters {
        outer = iter;
        let mut found: Option<(Vec<f64>, f64)> = None;
        let every = if cfg.polish { cfg.monitor_every } else { 0 };
        let mut monitor = |x: &DMatrix<f64>, ratio: f64| {
            if ratio > MONITOR_RATIO {
                return false;
            }
            let (fit, res) = polish(&rank1_extract(x), &a.a, cfg.support_threshold_ratio);
            if res <= POLISH_ACCEPT_TOL && no_cancellation(&fit, &a.a) {
                found = Some((fit, ratio));
                return true;
            }
            false
        };
        let sol = solve_lifted_monitored(
            &a,
            Objective::WeightedL1(&weights),
            &cfg.solver,
            warm.as_ref(),
            every,
            &mut monitor,
        )?;
        if sol.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible {
                residual: sol.primal_residual,
            });
        }
        let mut exact = None;
        if let Some((estimate, ratio)) = found {
            let residual = relative_psd_residual(&estimate, &p.p);
            exact = Some((estimate, residual, ratio));
        }
        let assess = |x: &DMatrix<f64>| {
            let raw = rank1_extract(x);
            let (estimate, fit) = if cfg.polish {
                polish(&raw, &a.a, cfg.support_threshold_ratio)
            } else {
                (raw.clone(), f64::INFINITY)
            };
            let residual = relative_psd_residual(&estimate, &p.p);
            (raw, estimate, fit, residual)
        };
        let mut sol = sol;
        let mut raw = Vec::new();
        if exact.is_none() {
            let mut ratio = sol.x.eigen_ratio;
            let (mut estimate, mut fit, mut residual);
            (raw, estimate, fit, residual) = assess(&sol.x.x);
            let refine = SolverSettings {
                primal_tol: REFINE_TOL,
                dual_tol: REFINE_TOL,
                max_iters: REFINE_MAX_ITERS,
                ..cfg.solver
            };
            let loose = cfg.solver.primal_tol > REFINE_TOL || cfg.solver.dual_tol > REFINE_TOL;
            if loose && ratio <= cfg.rank1_ratio_tol && residual <= PSD_MATCH_TOL && fit > POLISH_ACCEPT_TOL {
                // passes the rank-one test only to the accuracy of a loose
                // solve; finish this solve before trusting the factor
                sol = solve_lifted_from(&a, Objective::WeightedL1(&weights), &refine, Some(&sol.state))?;
                ratio = sol.x.eigen_ratio;
                (raw, estimate, fit, residual) = assess(&sol.x.x);
            }
            if best.as_ref().map_or(true, |b| residual < b.1) {
                best = Some((estimate.clone(), residual, ratio));
            }
            if fit <= POLISH_ACCEPT_TOL && no_cancellation(&estimate, &a.a) {
                exact = Some((estimate, residual, ratio));
            } else if ratio <= cfg.rank1_ratio_tol && residual <= PSD_MATCH_TOL {
                break;
            }
        }
        if let Some(fit) = exact {
            let entries = fit.0.iter().filter(|&&v| v != 0.0).count();
            if sparsest.as_ref().map_or(true, |s| entries < s.1) {
                sparsest = Some((fit, entries));
            }
            if entries <= bound || restarts_left == 0 {
                break;
            }
            // denser than the lags allow: look again from fresh weights
            restarts_left -= 1;
            weights = WeightMatrix::new(random_weights(n, cfg.weight_range, &mut rng))?;
            warm = None;
            previous = None;
            continue;
        }
        if iter < cfg.max_outer_iters {
            let support = likely_support(&raw, cfg.support_threshold_ratio);
            if cfg.restart_on_repeat && previous.as_ref() == Some(&support) {
                weights = WeightMatrix::new(random_weights(n, cfg.weight_range, &mut rng))?;
                warm = None;
                previous = None;
            } else {
                weights = reweight(&raw, cfg, &mut rng);
                warm = Some(sol.state);
                previous = Some(support);
            }
        }
    }
    let (estimate, psd_residual, final_eigen_ratio) = sparsest
        .map(|(fit, _)| fit)
        .or(best)
        .expect("at least one outer iteration");
    let (success, truth_residual) = judge(&estimate, psd_residual, truth)?;
    Ok(RecoveryResult {
        estimate,
        success,
        outer_iterations: outer,
        final_eigen_ratio,
        psd_residual,
        truth_residual,
        wall_time: start.elapsed(),
    })
}

/// Log-det rank surrogate: minimize `trace(W X)` with `W = (X_prev + eps I)^-1`,
/// starting from `W = I`. Factors are polished as in [`algorithm1`].
pub fn logdet_recovery(
    p: &PowerSpectralDensity,
    cfg: &RetrievalConfig,
    truth: Option<&SparseSignal>,
) -> Result<RecoveryResult> {
    let start = Instant::now();
    cfg.validate()?;
    p.validate(1e-9)?;
    let n = p.n();
    let a = autocorrelation_from_psd(p);
    let mut w = DMatrix::<f64>::identity(n, n);
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut warm: Option<WarmStart> = None;
    let mut outer = 0;
    for iter in 1..=cfg.max_outer_iters {
        outer = iter;
        let sol = solve_lifted_from(&a, Objective::Trace(&w), &cfg.solver, warm.as_ref())?;
        if sol.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible {
                residual: sol.primal_residual,
            });
        }
        let raw = rank1_extract(&sol.x.x);
        let (estimate, fit) = if cfg.polish {
            polish(&raw, &a.a, cfg.support_threshold_ratio)
        } else {
            (raw, f64::INFINITY)
        };
        let residual = relative_psd_residual(&estimate, &p.p);
        let ratio = sol.x.eigen_ratio;
        if best.as_ref().map_or(true, |b| residual < b.1) {
            best = Some((estimate.clone(), residual, ratio));
        }
        let exact_fit = fit <= POLISH_ACCEPT_TOL && no_cancellation(&estimate, &a.a);
        if (ratio <= cfg.rank1_ratio_tol && residual <= PSD_MATCH_TOL) || exact_fit {
            best = Some((estimate, residual, ratio));
            break;
        }
        w = logdet_reweight(&sol.x.x, cfg.solver.logdet_epsilon)?;
        warm = Some(sol.state);
    }
    let (estimate, psd_residual, final_eigen_ratio) = best.expect("at least one outer iteration");
    let (success, truth_residual) = judge(&estimate, psd_residual, truth)?;
    Ok(RecoveryResult {
        estimate,
        success,
        outer_iterations: outer,
        final_eigen_ratio,
        psd_residual,
        truth_residual,
        wall_time: start.elapsed(),
    })
}

/// Settings of the alternating-projection baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsConfig {
    pub iters: usize,
    pub restarts: usize,
}

impl Default for GsConfig {
    fn default() -> Self {
        GsConfig {
            iters: 1000,
            restarts: 10,
        }
    }
}

/// Keeps the `k` largest entries after clamping negatives to zero.
fn project_sparse_nonnegative(v: &mut [f64], k: usize) {
    for e in v.iter_mut() {
        *e = e.max(0.0);
    }
    if k >= v.len() {
        return;
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    for &i in &order[k..] {
        v[i] = 0.0;
    }
}

/// Error-reduction alternating projections: impose the Fourier magnitudes,
/// then project onto nonnegative k-sparse vectors. The restart with the
/// smallest PSD mismatch wins.
pub fn gerchberg_saxton(
    p: &PowerSpectralDensity,
    k: usize,
    gs: &GsConfig,
    seed: u64,
    truth: Option<&SparseSignal>,
) -> Result<RecoveryResult> {
    let start = Instant::now();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = p.n();
    let magnitude: Vec<f64> = p.p.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut rng = rng_from_seed(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..gs.restarts.max(1) {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        project_sparse_nonnegative(&mut x, k);
        for _ in 0..gs.iters {
            let mut y = fourier::dft_real(&x);
            for (yi, &m) in y.iter_mut().zip(&magnitude) {
                let r = yi.norm();
                *yi = if r > 0.0 {
                    *yi * (m / r)
                } else {
                    Complex64::new(m, 0.0)
                };
            }
            x = fourier::idft_real(&y);
            project_sparse_nonnegative(&mut x, k);
        }
        let residual = relative_psd_residual(&x, &p.p);
        if best.as_ref().map_or(true, |b| residual < b.1) {
            best = Some((x, residual));
        }
    }
    let (estimate, psd_residual) = best.expect("at least one restart");
    let (success, truth_residual) = judge(&estimate, psd_residual, truth)?;
    Ok(RecoveryResult {
        estimate,
        success,
        outer_iterations: gs.restarts.max(1),
        final_eigen_ratio: f64::NAN,
        psd_residual,
        truth_residual,
        wall_time: start.elapsed(),
    })
}

/// Basis-pursuit settings for recovering the autocorrelation from partial
/// spectrum samples: the recovered lags feed the next stage directly, so
/// the solve runs far tighter than the lifted inner solves.
pub fn stage1_settings() -> SolverSettings {
    SolverSettings {
        primal_tol: 1e-10,
        dual_tol: 1e-10,
        max_iters: 50_000,
        ..SolverSettings::default()
    }
}

/// Autocorrelation recovered from partial spectrum samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1 {
    /// Symmetrized, sparsified and spectrally clamped lags.
    pub autocorrelation: Vec<f64>,
    /// `||DFT_omega(v) - s||` of the raw basis-pursuit output.
    pub residual: f64,
    pub converged: bool,
}

impl Stage1 {
    /// Converged with a residual small against the samples.
    pub fn ok(&self, samples: &[f64]) -> bool {
        let s_norm = samples.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.converged && self.residual <= 1e-6 * s_norm.max(1.0)
    }
}

/// Stage diagnostics of [`partial_psd_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub stage1: Stage1,
    pub recovery: RecoveryResult,
}

/// Basis pursuit for the (at most `k(k-1)+1`-sparse) autocorrelation
/// whose spectrum matches `samples` on `omega`, cleaned into a valid
/// autocorrelation: symmetrized, cut to its `k(k-1)+1` largest lags, and
/// with negative spectral values clamped to zero.
pub fn recover_autocorrelation(
    op: &PartialFourierOperator,
    samples: &[f64],
    k: usize,
    settings: &SolverSettings,
) -> Result<Stage1> {
    if k == 0 || op.m() == 0 {
        return Err(Error::InvalidArgument("need k >= 1 and at least one sample".into()));
    }
    let n = op.n();
    let s: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let bp = solve_basis_pursuit(op, &s, settings)?;
    let mut a: Vec<f64> = (0..n).map(|i| 0.5 * (bp.v[i] + bp.v[(n - i) % n])).collect();
    let keep = k.saturating_mul(k - 1).saturating_add(1);
    if keep < n {
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by(|&i, &j| a[j].abs().total_cmp(&a[i].abs()).then(i.cmp(&j)));
        for &i in &order[(keep - 1)..] {
            a[i] = 0.0;
        }
    }
    let spectrum: Vec<f64> = fourier::dft_real_to_real(&a).into_iter().map(|v| v.max(0.0)).collect();
    Ok(Stage1 {
        autocorrelation: PowerSpectralDensity::new(spectrum).to_autocorrelation().a,
        residual: bp.residual,
        converged: bp.status == SolveStatus::Converged,
    })
}

/// Partial-spectrum recovery: [`recover_autocorrelation`], then
/// [`algorithm1`] on the spectrum of the recovered lags. A failed first
/// stage is reported as an unsuccessful recovery, not an error.
pub fn partial_psd_pipeline(
    op: &PartialFourierOperator,
    samples: &[f64],
    k: usize,
    stage1_solver: &SolverSettings,
    cfg: &RetrievalConfig,
    truth: Option<&SparseSignal>,
) -> Result<PipelineResult> {
    let start = Instant::now();
    let stage1 = recover_autocorrelation(op, samples, k, stage1_solver)?;
    let p_hat = Autocorrelation::new(stage1.autocorrelation.clone()).to_psd();
    let p_hat = PowerSpectralDensity::new(p_hat.p.iter().map(|v| v.max(0.0)).collect());
    let mut recovery = if stage1.ok(samples) {
        algorithm1(&p_hat, cfg, truth)?
    } else {
        let estimate = vec![0.0; op.n()];
        RecoveryResult {
            psd_residual: relative_psd_residual(&estimate, &p_hat.p),
            estimate,
            success: false,
            outer_iterations: 0,
            final_eigen_ratio: f64::NAN,
            truth_residual: None,
            wall_time: Duration::ZERO,
        }
    };
    recovery.wall_time = start.elapsed();
    Ok(PipelineResult { stage1, recovery })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_bound_counts_lags() {
        let mut a = vec![0.0; 32];
        a[0] = 1.0;
        assert_eq!(sparsity_bound(&a), 1);
        // {0, 1, 3}: six distinct offsets plus lag 0
        let mut x = vec![0.0; 32];
        x[0] = 0.5;
        x[1] = 0.7;
        x[3] = 0.9;
        assert_eq!(sparsity_bound(&crate::signal::autocorrelation_of(&x).a), 3);
        // 32 nonzero lags need 7 entries (6 give only 31)
        assert_eq!(sparsity_bound(&[1.0; 32]), 7);
    }
}
