use std::fs;

use sparse_pr::harness::*;

fn record(k: usize, trial: usize, success: bool, wall_ms: f64) -> TrialRecord {
    TrialRecord {
        n: 8,
        k,
        algorithm: Algorithm::Gs,
        trial,
        seed: trial as u64,
        success,
        residual: 0.0,
        outer_iters: 1,
        wall_ms,
        error: None,
    }
}

fn config(json: &str) -> sparse_pr::Result<ExperimentConfig> {
    ExperimentConfig::from_json(json)
}

#[test]
fn summary_counts_successes() {
    let records = vec![
        record(2, 0, true, 1.0),
        record(2, 1, false, 2.0),
        record(2, 2, true, 3.0),
        record(2, 3, true, 6.0),
        record(1, 0, false, 5.0),
    ];
    let s = summarize(&records).unwrap();
    assert_eq!(s.rows.len(), 2);
    assert_eq!(s.rows[0].k, 1);
    let row = s.get(8, 2, Algorithm::Gs).unwrap();
    assert_eq!((row.trials, row.successes), (4, 3));
    assert_eq!(row.success_rate, 0.75);
    assert_eq!(row.mean_wall_ms, 3.0);
    assert_eq!(row.csv_row(), "8,2,gs,4,0.75,3.000");
    assert!(summarize(&[]).is_err());
}

#[test]
fn algorithm_names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
    }
    assert!("algorithm2".parse::<Algorithm>().is_err());
}

#[test]
fn measurement_counts() {
    assert_eq!(partial_psd_samples(32, 4, 1.0), 32);
    assert_eq!(partial_psd_samples(1024, 2, 1.0), 28);
    assert_eq!(combinatorial_measurements(256, 8, 8.0), 355);
    assert_eq!(combinatorial_measurements(2, 1, 0.1), 1);
}

#[test]
fn config_errors() {
    let ok = r#"{"n":[16],"k":[2],"algorithms":["gs"],"trials":1}"#;
    assert!(config(ok).is_ok());
    for bad in [
        r#"{"n":[16],"k":[17],"algorithms":["gs"],"trials":1}"#,
        r#"{"n":[16],"k":[0],"algorithms":["gs"],"trials":1}"#,
        r#"{"n":[16],"k":[2],"algorithms":["gs"],"trials":0}"#,
        r#"{"n":[],"k":[2],"algorithms":["gs"],"trials":1}"#,
        r#"{"n":[16],"k":[2],"algorithms":["magic"],"trials":1}"#,
        r#"{"n":[16],"k":[2],"algorithms":["gs"],"trials":1,"colour":"red"}"#,
        r#"{"n":[16],"k":[2],"algorithms":["gs"],"trials":1,"overrides":{"gs":{"measurement_factor":-1}}}"#,
        r#"{"n":[16],"k":[2],"algorithms":["gs"],"trials":1,"overrides":{"algorithm1":{"retrieval":{"support_threshold_ratio":2}}}}"#,
        "[1, 2]",
    ] {
        assert!(config(bad).is_err(), "{bad}");
    }
}

#[test]
fn overrides_reach_their_algorithm_only() {
    let cfg = config(
        r#"{"n":[16],"k":[2],"algorithms":["gs","algorithm1"],"trials":1,
            "overrides":{"algorithm1":{"retrieval":{"max_outer_iters":3}}}}"#,
    )
    .unwrap();
    assert_eq!(cfg.params(Algorithm::Algorithm1).retrieval.max_outer_iters, 3);
    assert_eq!(cfg.params(Algorithm::Gs), AlgorithmParams::default());
}

#[test]
fn seeds_pair_instances_across_algorithms() {
    let a = Cell {
        n: 32,
        k: 4,
        algorithm: Algorithm::Algorithm1,
    };
    let b = Cell {
        algorithm: Algorithm::Gs,
        ..a
    };
    assert_ne!(trial_seed(0, a, 0), trial_seed(0, b, 0));
    assert_ne!(trial_seed(0, a, 0), trial_seed(0, a, 1));
    assert_ne!(trial_seed(0, a, 0), trial_seed(1, a, 0));
    assert_ne!(instance_seed(0, 32, 4, 0), instance_seed(0, 32, 4, 1));
    let cfg = config(r#"{"n":[16,32],"k":[1,2,3],"algorithms":["gs","algorithm1","combinatorial"],"trials":50}"#).unwrap();
    check_seed_collisions(&cfg).unwrap();
}

#[test]
fn sweep_files_agree_with_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"n":[16],"k":[1,3],"algorithms":["gs","combinatorial"],"trials":4,"base_seed":11}"#).unwrap();
    let out = run_sweep(
        &cfg,
        dir.path(),
        &SweepOptions {
            threads: Some(2),
            dump_signals: true,
        },
    )
    .unwrap();
    assert_eq!(out.records.len(), 16);

    let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let mut lines = trials.lines();
    assert_eq!(lines.next(), Some(TRIAL_HEADER));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 16);
    // recount the summary from the CSV alone
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some(SUMMARY_HEADER));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let cell: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == f[0] && r[1] == f[1] && r[2] == f[2]).collect();
        assert_eq!(cell.len().to_string(), f[3]);
        let wins = cell.iter().filter(|r| r[5] == "1").count();
        let rate: f64 = f[4].parse().unwrap();
        assert_eq!(rate, wins as f64 / cell.len() as f64);
    }

    let plot = fs::read_to_string(dir.path().join("plot.dat")).unwrap();
    assert_eq!(plot.matches("# n=16 algorithm=").count(), 2);
    assert!(fs::read_to_string(dir.path().join("plot.gp")).unwrap().contains("plot.dat"));

    let signal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("signals/n16_k3_gs_t0.json")).unwrap()).unwrap();
    assert_eq!(signal["truth"]["n"], 16);
    assert_eq!(signal["truth"]["support"].as_array().unwrap().len(), 3);
    let ens: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("signals/n16_k3_combinatorial_t0.json")).unwrap())
            .unwrap();
    assert!(ens["ensemble"]["masks"].is_array());
}

#[test]
fn sweep_is_identical_across_thread_counts() {
    let cfg = config(r#"{"n":[12],"k":[2],"algorithms":["algorithm1","gs"],"trials":3,"base_seed":2}"#).unwrap();
    let csv = |threads| {
        let dir = tempfile::tempdir().unwrap();
        run_sweep(
            &cfg,
            dir.path(),
            &SweepOptions {
                threads: Some(threads),
                dump_signals: false,
            },
        )
        .unwrap();
        strip_timing(&fs::read_to_string(dir.path().join("trials.csv")).unwrap())
    };
    assert_eq!(csv(1), csv(3));
}

#[test]
fn strip_timing_drops_last_column() {
    assert_eq!(strip_timing("a,b,c\n1,2,3.5\n"), "a,b\n1,2");
}
