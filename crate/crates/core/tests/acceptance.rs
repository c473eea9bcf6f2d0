//! Acceptance criteria, one line each. `ACCEPTANCE_SUITE` picks a subset
//! (see `sparse_pr::harness::acceptance::SUITES`); the default runs all.

use std::process::ExitCode;

use sparse_pr::harness::acceptance::run_suite;

fn main() -> ExitCode {
    // libtest flags such as --nocapture or a name filter are ignored
    let suite = std::env::var("ACCEPTANCE_SUITE").unwrap_or_else(|_| "all".to_string());
    let seed = std::env::var("ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let outcomes = match run_suite(&suite, seed, |o| println!("{}", o.line())) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("acceptance suite {suite:?} could not run: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
