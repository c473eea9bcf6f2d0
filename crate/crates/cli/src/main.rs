use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparse_pr::conic::{solve_weighted_l1_sdp, SolverSettings, WeightMatrix};
use sparse_pr::harness::acceptance::{run_suite, SUITES};
use sparse_pr::harness::{
    instance_seed, run_sweep, run_trial_with_signals, Algorithm, AlgorithmParams, Cell, ExperimentConfig, SweepError,
    SweepOptions,
};
use sparse_pr::{autocorrelation, random_sparse_signal};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "sparse-pr", version, about = "Sparse phase retrieval experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (n, k, algorithm) cell of a JSON experiment config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Write truth and estimate of every trial under <out>/signals/.
        #[arg(long)]
        dump_signals: bool,
    },
    /// Run a single trial and print its record as JSON.
    Trial {
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Include the instance and the estimate in the output.
        #[arg(long)]
        dump_signals: bool,
        /// Write the iteration trace of the unweighted lifted program on
        /// this instance (`iter,primal,dual,ratio`).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run an acceptance suite, one line per criterion.
    Acceptance {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Sweep {
            config,
            out,
            threads,
            dump_signals,
        } => sweep(config, out, threads, dump_signals),
        Command::Trial {
            algorithm,
            n,
            k,
            seed,
            dump_signals,
            trace,
        } => trial(&algorithm, n, k, seed, dump_signals, trace),
        Command::Acceptance { suite, seed } => acceptance(&suite, seed),
    }
}

fn sweep(config: PathBuf, out: PathBuf, threads: Option<usize>, dump_signals: bool) -> ExitCode {
    let text = match fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    let opts = SweepOptions { threads, dump_signals };
    match run_sweep(&cfg, &out, &opts) {
        Ok(result) => {
            println!("n,k,algorithm,trials,success_rate,mean_wall_ms");
            for row in &result.summary.rows {
                println!("{}", row.csv_row());
            }
            ExitCode::SUCCESS
        }
        Err(SweepError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(SweepError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn trial(name: &str, n: usize, k: usize, seed: u64, dump_signals: bool, trace: Option<PathBuf>) -> ExitCode {
    let algorithm: Algorithm = match name.parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if n == 0 || k == 0 || k > n {
        eprintln!("error: need 1 <= k <= n (got n={n}, k={k})");
        return ExitCode::from(EXIT_CONFIG);
    }
    let cell = Cell { n, k, algorithm };
    let (record, signals) = run_trial_with_signals(cell, 0, seed, &AlgorithmParams::default());
    let mut json = serde_json::to_value(&record).expect("trial records serialize");
    if dump_signals {
        json["signals"] = serde_json::to_value(&signals).expect("signals serialize");
    }
    println!("{}", serde_json::to_string_pretty(&json).expect("json values serialize"));

    if let Some(path) = trace {
        if let Err(code) = write_trace(n, k, seed, &path) {
            return code;
        }
    }
    ExitCode::SUCCESS
}

fn write_trace(n: usize, k: usize, seed: u64, path: &PathBuf) -> Result<(), ExitCode> {
    let truth = random_sparse_signal(n, k, instance_seed(seed, n, k, 0)).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let settings = SolverSettings {
        record_trace: true,
        ..SolverSettings::default()
    };
    let solution = solve_weighted_l1_sdp(&autocorrelation(&truth), &WeightMatrix::uniform(n, 1.0), &settings)
        .map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        })?;
    let io_err = |e: io::Error| {
        eprintln!("error: cannot write {}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    solution.write_trace_csv(&mut w).and_then(|_| w.flush()).map_err(io_err)
}

fn acceptance(suite: &str, seed: u64) -> ExitCode {
    if !SUITES.contains(&suite) && suite.parse::<u8>().map_or(true, |id| !(1..=9).contains(&id)) {
        eprintln!("error: unknown suite {suite:?}; expected one of {} or 1..9", SUITES.join(", "));
        return ExitCode::from(EXIT_CONFIG);
    }
    let outcomes = match run_suite(suite, seed, |o| println!("{}", o.line())) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    };
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}
