//! Seeded Monte Carlo sweeps over `(n, k, algorithm)` cells: trial
//! execution, success-rate aggregation and CSV / gnuplot output.

pub mod acceptance;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorial::{self, ComplexSparseSignal};
use crate::conic::{PartialFourierOperator, SolverSettings};
use crate::error::{Error, Result};
use crate::retrieval::{self, GsConfig, RecoveryResult, RetrievalConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::{psd, random_sparse_signal, SparseSignal};

pub const TRIAL_HEADER: &str = "n,k,algorithm,trial,seed,success,residual,outer_iters,wall_ms";
pub const SUMMARY_HEADER: &str = "n,k,algorithm,trials,success_rate,mean_wall_ms";
/// Global-phase residual under which a combinatorial decode counts as exact.
pub const COMBINATORIAL_SUCCESS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Algorithm1,
    Gs,
    OneShotSdp,
    Logdet,
    PartialPsd,
    Combinatorial,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Algorithm1,
        Algorithm::Gs,
        Algorithm::OneShotSdp,
        Algorithm::Logdet,
        Algorithm::PartialPsd,
        Algorithm::Combinatorial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Algorithm1 => "algorithm1",
            Algorithm::Gs => "gs",
            Algorithm::OneShotSdp => "one_shot_sdp",
            Algorithm::Logdet => "logdet",
            Algorithm::PartialPsd => "partial_psd",
            Algorithm::Combinatorial => "combinatorial",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

/// Parameters of one algorithm; every field falls back to its default
/// when omitted from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    pub retrieval: RetrievalConfig,
    pub gs: GsConfig,
    /// Basis-pursuit settings of the partial-spectrum pipeline.
    pub stage1: SolverSettings,
    /// Measurement count factor `c`: the partial-spectrum pipeline samples
    /// `ceil(c k^2 ln n)` frequencies, the combinatorial decoder uses
    /// `ceil(c k ln n)` masks. `None` picks 1 and 8 respectively.
    pub measurement_factor: Option<f64>,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        AlgorithmParams {
            retrieval: RetrievalConfig::default(),
            gs: GsConfig::default(),
            stage1: retrieval::stage1_settings(),
            measurement_factor: None,
        }
    }
}

/// `ceil(c k^2 ln n)` PSD samples, capped at `n`.
pub fn partial_psd_samples(n: usize, k: usize, factor: f64) -> usize {
    ((factor * (k * k) as f64 * (n as f64).ln()).ceil() as usize).clamp(1, n)
}

/// `ceil(c k ln n)` masked measurements.
pub fn combinatorial_measurements(n: usize, k: usize, factor: f64) -> usize {
    ((factor * k as f64 * (n as f64).ln()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub overrides: BTreeMap<Algorithm, AlgorithmParams>,
    /// Output directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.n.is_empty() || self.k.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("n, k and algorithms must be nonempty".into()));
        }
        for &n in &self.n {
            for &k in &self.k {
                if k == 0 || k > n {
                    return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got n={n} k={k}")));
                }
            }
        }
        for params in self.overrides.values() {
            params.retrieval.validate()?;
            params.stage1.validate()?;
            if let Some(c) = params.measurement_factor {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidArgument(format!("measurement factor {c} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self, algorithm: Algorithm) -> AlgorithmParams {
        self.overrides.get(&algorithm).copied().unwrap_or_default()
    }

    /// Cells in `(n, k, algorithm)` order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &n in &self.n {
            for &k in &self.k {
                for &algorithm in &self.algorithms {
                    cells.push(Cell { n, k, algorithm });
                }
            }
        }
        cells.sort();
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
}

/// Seed of the algorithm's own randomness for one trial.
pub fn trial_seed(base_seed: u64, cell: Cell, trial: usize) -> u64 {
    derive_seed(&[&base_seed, &cell.n, &cell.k, &cell.algorithm.name(), &trial])
}

/// Seed of the test signal (and measurement design) for one trial. It
/// leaves out the algorithm so every algorithm sees the same instance.
pub fn instance_seed(base_seed: u64, n: usize, k: usize, trial: usize) -> u64 {
    derive_seed(&[&base_seed, &"instance", &n, &k, &trial])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    /// Distance to the truth (equivalence residual, or global-phase
    /// residual for the combinatorial decoder); NaN when the run errored.
    pub residual: f64,
    pub outer_iters: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e},{},{:.3}",
            self.n,
            self.k,
            self.algorithm,
            self.trial,
            self.seed,
            self.success as u8,
            self.residual,
            self.outer_iters,
            self.wall_ms
        )
    }
}

/// Instance and estimate of one trial, for `--dump-signals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrialSignals {
    Real {
        truth: SparseSignal,
        estimate: Option<Vec<f64>>,
    },
    Complex {
        truth: ComplexSparseSignal,
        estimate: Option<ComplexSparseSignal>,
        ensemble: combinatorial::MaskedMeasurementEnsemble,
    },
}

fn finish(cell: Cell, trial: usize, seed: u64, start: Instant, outcome: Result<(bool, f64, usize)>) -> TrialRecord {
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let (success, residual, outer_iters, error) = match outcome {
        Ok((s, r, o)) => (s, r, o, None),
        Err(e) => (false, f64::NAN, 0, Some(e.to_string())),
    };
    TrialRecord {
        n: cell.n,
        k: cell.k,
        algorithm: cell.algorithm,
        trial,
        seed,
        success,
        residual,
        outer_iters,
        wall_ms,
        error,
    }
}

fn from_recovery(r: &RecoveryResult) -> (bool, f64, usize) {
    (r.success, r.truth_residual.unwrap_or(f64::NAN), r.outer_iterations)
}

/// Runs one trial. Algorithm errors become `success = false` records with
/// the error message attached; they never abort a sweep.
pub fn run_trial(cell: Cell, trial: usize, base_seed: u64, params: &AlgorithmParams) -> TrialRecord {
    run_trial_with_signals(cell, trial, base_seed, params).0
}

pub fn run_trial_with_signals(
    cell: Cell,
    trial: usize,
    base_seed: u64,
    params: &AlgorithmParams,
) -> (TrialRecord, Option<TrialSignals>) {
    let seed = trial_seed(base_seed, cell, trial);
    let instance = instance_seed(base_seed, cell.n, cell.k, trial);
    let start = Instant::now();
    let Cell { n, k, algorithm } = cell;

    if algorithm == Algorithm::Combinatorial {
        let truth = match ComplexSparseSignal::random(n, k, instance) {
            Ok(x) => x,
            Err(e) => return (finish(cell, trial, seed, start, Err(e)), None),
        };
        let m = combinatorial_measurements(n, k, params.measurement_factor.unwrap_or(8.0));
        let ensemble = match combinatorial::design_measurements(n, k, m, derive_seed(&[&instance, &"design"])) {
            Ok(e) => e,
            Err(e) => return (finish(cell, trial, seed, start, Err(e)), None),
        };
        let decoded = combinatorial::measure(&truth, &ensemble).and_then(|obs| combinatorial::recover(&obs, &ensemble));
        let outcome = decoded.as_ref().map(|xhat| {
            let r = combinatorial::global_phase_residual(truth.values(), xhat.values());
            (r <= COMBINATORIAL_SUCCESS_TOL, r, 1)
        });
        let record = finish(cell, trial, seed, start, outcome.map_err(|e| e.clone()));
        let signals = TrialSignals::Complex {
            truth,
            estimate: decoded.ok(),
            ensemble,
        };
        return (record, Some(signals));
    }

    let truth = match random_sparse_signal(n, k, instance) {
        Ok(x) => x,
        Err(e) => return (finish(cell, trial, seed, start, Err(e)), None),
    };
    let p = psd(&truth);
    let mut cfg = params.retrieval;
    cfg.seed = seed;
    let result: Result<RecoveryResult> = match algorithm {
        Algorithm::Algorithm1 => retrieval::algorithm1(&p, &cfg, Some(&truth)),
        Algorithm::OneShotSdp => {
            cfg.max_outer_iters = 1;
            retrieval::algorithm1(&p, &cfg, Some(&truth))
        }
        Algorithm::Logdet => retrieval::logdet_recovery(&p, &cfg, Some(&truth)),
        Algorithm::Gs => retrieval::gerchberg_saxton(&p, k, &params.gs, seed, Some(&truth)),
        Algorithm::PartialPsd => {
            let m = partial_psd_samples(n, k, params.measurement_factor.unwrap_or(1.0));
            let mut rng = rng_from_seed(derive_seed(&[&instance, &"frequencies"]));
            PartialFourierOperator::random(n, m, &mut rng).and_then(|op| {
                let samples: Vec<f64> = op.omega().iter().map(|&w| p.p[w]).collect();
                retrieval::partial_psd_pipeline(&op, &samples, k, &params.stage1, &cfg, Some(&truth))
                    .map(|r| r.recovery)
            })
        }
        Algorithm::Combinatorial => unreachable!("handled above"),
    };
    let estimate = result.as_ref().ok().map(|r| r.estimate.clone());
    let record = finish(cell, trial, seed, start, result.as_ref().map(from_recovery).map_err(|e| e.clone()));
    (record, Some(TrialSignals::Real { truth, estimate }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_wall_ms: f64,
}

impl SummaryRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.n, self.k, self.algorithm, self.trials, self.success_rate, self.mean_wall_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

impl SweepSummary {
    pub fn get(&self, n: usize, k: usize, algorithm: Algorithm) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.n == n && r.k == k && r.algorithm == algorithm)
    }
}

/// Per-cell success rate and mean wall time, ordered by `(n, k, algorithm)`.
pub fn summarize(records: &[TrialRecord]) -> Result<SweepSummary> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no trial records to summarize".into()));
    }
    let mut cells: BTreeMap<Cell, (usize, usize, f64)> = BTreeMap::new();
    for r in records {
        let entry = cells
            .entry(Cell {
                n: r.n,
                k: r.k,
                algorithm: r.algorithm,
            })
            .or_default();
        entry.0 += 1;
        entry.1 += r.success as usize;
        entry.2 += r.wall_ms;
    }
    let rows = cells
        .into_iter()
        .map(|(c, (trials, successes, wall))| SummaryRow {
            n: c.n,
            k: c.k,
            algorithm: c.algorithm,
            trials,
            successes,
            success_rate: successes as f64 / trials as f64,
            mean_wall_ms: wall / trials as f64,
        })
        .collect();
    Ok(SweepSummary { rows })
}

/// Errors that bubble out of a sweep: configuration problems versus
/// filesystem problems, which the CLI maps to distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("configuration error: {0}")]
    Config(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub dump_signals: bool,
}

/// Output of [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub summary: SweepSummary,
}

/// Runs every trial of every cell on a worker pool and writes
/// `trials.csv` (flushed after each cell), `summary.csv`, `plot.dat`,
/// `plot.gp`, `errors.csv` when any trial errored, and with
/// `dump_signals` one JSON file per trial under `signals/`.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path, opts: &SweepOptions) -> std::result::Result<SweepOutput, SweepError> {
    cfg.validate()?;
    let cells = cfg.cells();
    check_seed_collisions(cfg)?;
    fs::create_dir_all(out)?;
    if opts.dump_signals {
        fs::create_dir_all(out.join("signals"))?;
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = opts.threads {
            b = b.num_threads(t.max(1));
        }
        b.build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
    };

    let mut trials_csv = BufWriter::new(File::create(out.join("trials.csv"))?);
    writeln!(trials_csv, "{TRIAL_HEADER}")?;
    trials_csv.flush()?;
    let mut records = Vec::with_capacity(cells.len() * cfg.trials);
    for cell in cells {
        let params = cfg.params(cell.algorithm);
        let mut batch: Vec<(TrialRecord, Option<TrialSignals>)> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial_with_signals(cell, t, cfg.base_seed, &params))
                .collect()
        });
        batch.sort_by_key(|(r, _)| r.trial);
        for (record, signals) in batch {
            writeln!(trials_csv, "{}", record.csv_row())?;
            if opts.dump_signals {
                if let Some(s) = signals {
                    let name = format!("n{}_k{}_{}_t{}.json", cell.n, cell.k, cell.algorithm, record.trial);
                    let file = BufWriter::new(File::create(out.join("signals").join(name))?);
                    serde_json::to_writer_pretty(file, &s).map_err(io::Error::from)?;
                }
            }
            records.push(record);
        }
        trials_csv.flush()?;
    }

    let summary = summarize(&records)?;
    write_summary(&summary, &out.join("summary.csv"))?;
    write_plot(&summary, out)?;
    let errored: Vec<&TrialRecord> = records.iter().filter(|r| r.error.is_some()).collect();
    if !errored.is_empty() {
        let mut f = BufWriter::new(File::create(out.join("errors.csv"))?);
        writeln!(f, "n,k,algorithm,trial,error")?;
        for r in errored {
            let msg = r.error.as_deref().unwrap_or_default().replace([',', '\n'], ";");
            writeln!(f, "{},{},{},{},{}", r.n, r.k, r.algorithm, r.trial, msg)?;
        }
        f.flush()?;
    }
    Ok(SweepOutput { records, summary })
}

/// Runs every trial in memory without touching the filesystem.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for cell in cfg.cells() {
        let params = cfg.params(cell.algorithm);
        let mut batch: Vec<TrialRecord> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cell, t, cfg.base_seed, &params))
            .collect();
        batch.sort_by_key(|r| r.trial);
        records.extend(batch);
    }
    Ok(records)
}

pub fn write_summary(summary: &SweepSummary, path: &Path) -> io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{SUMMARY_HEADER}")?;
    for row in &summary.rows {
        writeln!(f, "{}", row.csv_row())?;
    }
    f.flush()
}

/// `plot.dat` holds one gnuplot data block per `(n, algorithm)` with
/// columns `k success_rate`; `plot.gp` draws one panel per `n`.
pub fn write_plot(summary: &SweepSummary, out: &Path) -> io::Result<()> {
    let mut blocks: BTreeMap<(usize, Algorithm), Vec<(usize, f64)>> = BTreeMap::new();
    for r in &summary.rows {
        blocks.entry((r.n, r.algorithm)).or_default().push((r.k, r.success_rate));
    }
    let mut dat = BufWriter::new(File::create(out.join("plot.dat"))?);
    let mut script = String::from(
        "# gnuplot -e \"n=32\" plot.gp  (writes success_n<N>.png)\n\
         if (!exists(\"n\")) n = 0\n\
         set terminal pngcairo size 800,500\n\
         set xlabel \"sparsity k\"\n\
         set ylabel \"success rate\"\n\
         set yrange [0:1.05]\n\
         set key bottom left\n\
         set grid\n",
    );
    let mut per_n: BTreeMap<usize, Vec<(usize, Algorithm)>> = BTreeMap::new();
    for (index, ((n, alg), points)) in blocks.iter().enumerate() {
        writeln!(dat, "# n={n} algorithm={alg}")?;
        writeln!(dat, "# k success_rate")?;
        for (k, rate) in points {
            writeln!(dat, "{k} {rate}")?;
        }
        writeln!(dat)?;
        writeln!(dat)?;
        per_n.entry(*n).or_default().push((index, *alg));
    }
    dat.flush()?;
    for (n, series) in &per_n {
        let plots: Vec<String> = series
            .iter()
            .map(|(i, alg)| format!("'plot.dat' index {i} using 1:2 with linespoints title '{alg}'"))
            .collect();
        script.push_str(&format!(
            "if (n == 0 || n == {n}) {{\n    set output 'success_n{n}.png'\n    set title 'n = {n}'\n    plot {}\n}}\n",
            plots.join(", \\\n         ")
        ));
    }
    fs::write(out.join("plot.gp"), script)
}

/// Fails if two trials of the config would share a trial seed or two
/// `(n, k, trial)` instances would share an instance seed.
pub fn check_seed_collisions(cfg: &ExperimentConfig) -> Result<()> {
    let mut trial_seeds = std::collections::HashSet::new();
    let mut instance_seeds = std::collections::HashMap::new();
    for cell in cfg.cells() {
        for t in 0..cfg.trials {
            if !trial_seeds.insert(trial_seed(cfg.base_seed, cell, t)) {
                return Err(Error::InvalidArgument(format!("trial seed collision at {cell:?} trial {t}")));
            }
            let key = (cell.n, cell.k, t);
            let s = instance_seed(cfg.base_seed, cell.n, cell.k, t);
            if let Some(prev) = instance_seeds.insert(s, key) {
                if prev != key {
                    return Err(Error::InvalidArgument(format!("instance seed collision at {key:?}")));
                }
            }
        }
    }
    Ok(())
}

/// Trial CSV with the timing column dropped, for determinism checks.
pub fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(i) => &line[..i],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
