use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use sparse_pr::combinatorial::*;
use sparse_pr::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Direct evaluation of `|sum_j conj(p_j z_j) x_j|^2` from angle arrays.
fn observe_by_hand(x: &[Complex64], mask: &[(usize, f64)], angles: &[f64]) -> f64 {
    let mut acc = c(0.0, 0.0);
    for &(j, z) in mask {
        acc += Complex64::from_polar(z, -angles[j]) * x[j];
    }
    acc.norm_sqr()
}

fn m_for(n: usize, k: usize) -> usize {
    (8.0 * k as f64 * (n as f64).ln()).ceil() as usize
}

#[test]
fn measure_matches_hand_evaluation() {
    let x = ComplexSparseSignal::random(16, 3, 5).unwrap();
    let e = design_measurements(16, 3, 20, 9).unwrap();
    let obs = measure(&x, &e).unwrap();
    for i in 0..e.m() {
        let alpha = observe_by_hand(x.values(), &e.masks[i], &e.phases_a[i]);
        let beta = observe_by_hand(x.values(), &e.masks[i], &e.phases_b[i]);
        assert!((obs.alpha[i] - alpha).abs() <= 1e-12 * (1.0 + alpha));
        assert!((obs.beta[i] - beta).abs() <= 1e-12 * (1.0 + beta));
    }
}

#[test]
fn crafted_support_instance() {
    // x supported on {1, 3}; masks {0,2} and {2} see nothing
    let x = ComplexSparseSignal::from_values(vec![c(0.0, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(-2.0, 0.0)]);
    let zeros = vec![0.0; 4];
    let e = MaskedMeasurementEnsemble::from_parts(
        4,
        2,
        vec![vec![(0, 1.0), (2, -0.5)], vec![(2, 2.0)], vec![(1, 1.0), (3, 1.0)]],
        vec![zeros.clone(); 3],
        vec![zeros.clone(); 3],
    )
    .unwrap();
    let obs = measure(&x, &e).unwrap();
    assert_eq!(obs.alpha[0], 0.0);
    assert_eq!(obs.alpha[1], 0.0);
    assert_eq!(recover_support(&obs, &e).unwrap(), vec![1, 3]);
}

#[test]
fn singleton_gives_modulus() {
    let x = ComplexSparseSignal::from_values(vec![c(0.0, 0.0), c(3.0, 4.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let e = MaskedMeasurementEnsemble::from_parts(
        4,
        1,
        vec![vec![(0, 0.7), (1, 1.0)], vec![(2, 1.0), (3, 1.0)]],
        vec![vec![0.3, 1.1, 0.0, 2.0], vec![0.0; 4]],
        vec![vec![0.0; 4]; 2],
    )
    .unwrap();
    let obs = measure(&x, &e).unwrap();
    let support = recover_support(&obs, &e).unwrap();
    assert_eq!(support, vec![0, 1]);
    let mags = recover_magnitudes(&obs, &e, &[1]).unwrap();
    assert!((mags[0] - 5.0).abs() <= 1e-12);
}

#[test]
fn two_point_relative_phase() {
    // x = (1, i): x_1 leads x_0 by a quarter turn
    let x = ComplexSparseSignal::from_values(vec![c(1.0, 0.0), c(0.0, 1.0)]);
    let e = MaskedMeasurementEnsemble::from_parts(
        2,
        2,
        vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0), (1, 1.0)]],
        vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, PI / 2.0]],
    )
    .unwrap();
    let obs = measure(&x, &e).unwrap();
    // |1 + i|^2 = 2 and |1 + (-i)(i)|^2 = 4 by hand
    assert!((obs.alpha[2] - 2.0).abs() < 1e-12);
    assert!((obs.beta[2] - 4.0).abs() < 1e-12);
    let xhat = recover(&obs, &e).unwrap();
    let v = xhat.values();
    let diff = (v[1] * v[0].conj()).arg();
    assert!((diff - PI / 2.0).abs() <= 1e-9, "{diff}");
    assert!(global_phase_residual(x.values(), v) <= 1e-12);
}

#[test]
fn equal_modulations_are_degenerate() {
    let x = ComplexSparseSignal::from_values(vec![c(1.0, 0.0), c(0.0, 1.0)]);
    let same = vec![vec![0.0, 0.4]; 3];
    let e = MaskedMeasurementEnsemble::from_parts(
        2,
        2,
        vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0), (1, 1.0)]],
        same.clone(),
        same,
    )
    .unwrap();
    let obs = measure(&x, &e).unwrap();
    assert!(matches!(recover(&obs, &e), Err(Error::DegenerateSystem(0, 1))));
}

#[test]
fn missing_pair_disconnects_graph() {
    let x = ComplexSparseSignal::from_values(vec![c(1.0, 0.0), c(2.0, 0.0)]);
    let e = MaskedMeasurementEnsemble::from_parts(
        2,
        2,
        vec![vec![(0, 1.0)], vec![(1, 1.0)]],
        vec![vec![0.0; 2]; 2],
        vec![vec![0.0; 2]; 2],
    )
    .unwrap();
    let obs = measure(&x, &e).unwrap();
    assert!(matches!(recover(&obs, &e), Err(Error::GraphDisconnected)));
}

#[test]
fn missing_singleton_is_reported() {
    let x = ComplexSparseSignal::from_values(vec![c(1.0, 0.0), c(2.0, 0.0)]);
    let e = MaskedMeasurementEnsemble::from_parts(
        2,
        2,
        vec![vec![(0, 1.0), (1, 1.0)]],
        vec![vec![0.0; 2]],
        vec![vec![0.0; 2]],
    )
    .unwrap();
    let obs = measure(&x, &e).unwrap();
    assert!(matches!(recover(&obs, &e), Err(Error::MissingSingleton(0))));
}

#[test]
fn mask_density_and_unit_modulus() {
    let (n, k) = (256, 8);
    let m = m_for(n, k);
    assert_eq!(m, 355);
    let e = design_measurements(n, k, m, 3).unwrap();
    assert_eq!(e.m(), m);
    let cells = (n * m) as f64;
    let hits: usize = e.masks.iter().map(Vec::len).sum();
    let q = 1.0 / k as f64;
    let sd = (cells * q * (1.0 - q)).sqrt();
    assert!((hits as f64 - cells * q).abs() <= 3.0 * sd, "{hits}");
    for i in 0..m {
        for j in 0..n {
            assert!((e.phase_a(i, j).norm() - 1.0).abs() <= 1e-15);
            assert!((e.phase_b(i, j).norm() - 1.0).abs() <= 1e-15);
        }
    }
}

#[test]
fn design_is_deterministic() {
    let a = design_measurements(32, 4, 40, 11).unwrap();
    let b = design_measurements(32, 4, 40, 11).unwrap();
    let c = design_measurements(32, 4, 40, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn ensemble_json_shape() {
    let e = design_measurements(8, 2, 3, 1).unwrap();
    let v: serde_json::Value = serde_json::to_value(&e).unwrap();
    let mask0 = v["masks"][0].as_array().unwrap();
    for pair in mask0 {
        assert_eq!(pair.as_array().unwrap().len(), 2);
    }
    assert_eq!(v["phases_a"][0].as_array().unwrap().len(), 8);
    let back: MaskedMeasurementEnsemble = serde_json::from_value(v).unwrap();
    assert_eq!(back, e);
}

#[test]
fn unknown_k_levels_double() {
    let levels = design_measurements_unknown_k(100, 10, 4).unwrap();
    let ks: Vec<usize> = levels.iter().map(|e| e.k_design).collect();
    assert_eq!(ks, vec![2, 4, 8, 16, 32, 64, 128]);
    assert_eq!(design_measurements_unknown_k(128, 10, 4).unwrap().len(), 7);
    assert_eq!(design_measurements_unknown_k(2, 10, 4).unwrap().len(), 1);
}

#[test]
fn unknown_k_decodes_at_sufficient_level() {
    let n = 128;
    let x = ComplexSparseSignal::random(n, 5, 21).unwrap();
    let designs = design_measurements_unknown_k(n, m_for(n, 8), 2).unwrap();
    let levels: Vec<_> = designs
        .into_iter()
        .map(|e| {
            let obs = measure(&x, &e).unwrap();
            (e, obs)
        })
        .collect();
    let (_, xhat) = recover_unknown_k(&levels).unwrap();
    assert!(global_phase_residual(x.values(), xhat.values()) <= 1e-8);
}

#[test]
fn true_support_gives_exact_magnitudes() {
    let (n, k) = (128, 4);
    for seed in 0..20 {
        let x = ComplexSparseSignal::random(n, k, seed).unwrap();
        let e = design_measurements(n, k, m_for(n, k), seed + 100).unwrap();
        let obs = measure(&x, &e).unwrap();
        let mags = recover_magnitudes(&obs, &e, x.support()).unwrap();
        for (&j, m) in x.support().iter().zip(mags) {
            assert!((m - x.values()[j].norm()).abs() <= 1e-9 * (1.0 + m));
        }
    }
}

#[test]
fn end_to_end_recovers_up_to_global_phase() {
    let (n, k) = (128, 4);
    let mut ok = 0;
    for seed in 0..20 {
        let x = ComplexSparseSignal::random(n, k, seed).unwrap();
        let e = design_measurements(n, k, m_for(n, k), seed + 500).unwrap();
        let obs = measure(&x, &e).unwrap();
        if let Ok(xhat) = recover(&obs, &e) {
            ok += (global_phase_residual(x.values(), xhat.values()) <= 1e-8) as usize;
        }
    }
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn spanning_tree_reaches_all_nodes_parent_first() {
    let g = PhaseGraph {
        nodes: vec![2, 5, 7, 9],
        edges: vec![(5, 9, 0), (2, 7, 1), (7, 9, 2), (2, 5, 3)],
    };
    let tree = spanning_tree(&g).unwrap();
    assert_eq!(tree.len(), 3);
    let mut reached = vec![2];
    for edge in &tree {
        assert!(reached.contains(&edge.parent));
        assert!(!reached.contains(&edge.child));
        reached.push(edge.child);
    }
    reached.sort_unstable();
    assert_eq!(reached, g.nodes);
}

#[test]
fn global_phase_residual_by_hand() {
    let x = [c(1.0, 0.0), c(0.0, 1.0)];
    let rotated = [c(0.0, 1.0), c(-1.0, 0.0)];
    assert!(global_phase_residual(&x, &rotated) < 1e-15);
    let other = [c(1.0, 0.0), c(0.0, -1.0)];
    // best phase leaves |1 - e^{i phi}|^2 + |1 + e^{i phi}|^2 = 4 at any phi
    assert!((global_phase_residual(&x, &other) - 2f64.sqrt()).abs() < 1e-12);
}

fn outer_product_gap(x: &[Complex64], y: &[Complex64]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (i, xi) in x.iter().enumerate() {
        for (j, xj) in x.iter().enumerate() {
            let a = xi * xj.conj();
            let b = y[i] * y[j].conj();
            diff += (a - b).norm_sqr();
            norm += a.norm_sqr();
        }
    }
    (diff / norm).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn observations_ignore_global_phase(seed in 0u64..10_000, k in 1usize..6, phi in 0.0..(2.0 * PI)) {
        let x = ComplexSparseSignal::random(64, k, seed).unwrap();
        let e = design_measurements(64, k, 30, seed ^ 0x55).unwrap();
        let a = measure(&x, &e).unwrap();
        let b = measure(&x.rotated(phi), &e).unwrap();
        for (u, v) in a.alpha.iter().zip(&b.alpha).chain(a.beta.iter().zip(&b.beta)) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn successful_decodes_match_outer_product(seed in 0u64..10_000, k in 1usize..6) {
        let n = 64;
        let x = ComplexSparseSignal::random(n, k, seed).unwrap();
        let e = design_measurements(n, k, m_for(n, k), seed + 1).unwrap();
        let obs = measure(&x, &e).unwrap();
        if let Ok(xhat) = recover(&obs, &e) {
            if global_phase_residual(x.values(), xhat.values()) <= 1e-8 {
                prop_assert!(outer_product_gap(x.values(), xhat.values()) <= 1e-7);
            }
        }
    }

    #[test]
    fn support_estimate_contains_truth(seed in 0u64..10_000, k in 1usize..8) {
        let x = ComplexSparseSignal::random(48, k, seed).unwrap();
        let e = design_measurements(48, k, 40, seed + 7).unwrap();
        let obs = measure(&x, &e).unwrap();
        let s = recover_support(&obs, &e).unwrap();
        for j in x.support() {
            prop_assert!(s.contains(j));
        }
    }
}

#[test]
fn global_phase_residual_is_accurate_near_zero() {
    let x = ComplexSparseSignal::random(256, 8, 3).unwrap();
    let rotated = x.rotated(1.234);
    assert!(global_phase_residual(x.values(), rotated.values()) <= 1e-14);
    let mut nudged = rotated.values().to_vec();
    let j = x.support()[0];
    nudged[j] += 1e-11;
    let r = global_phase_residual(x.values(), &nudged);
    let nx = x.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!((r - 1e-11 / nx).abs() <= 1e-13, "{r:e}");
}

#[test]
fn single_spike_decodes() {
    for seed in 0..10 {
        let x = ComplexSparseSignal::random(16, 1, seed).unwrap();
        let e = design_measurements(16, 1, m_for(16, 1), seed + 7).unwrap();
        assert!(e.masks.iter().all(|m| m.len() == 16));
        let xhat = recover(&measure(&x, &e).unwrap(), &e).unwrap();
        assert!(global_phase_residual(x.values(), xhat.values()) <= 1e-12);
    }
}

#[test]
fn tiny_mask_value_does_not_exclude_a_support_index() {
    // a Gaussian mask value of about 1.5e-7 lands on a support index here
    let x = ComplexSparseSignal::random(48, 2, 3387).unwrap();
    let e = design_measurements(48, 2, 40, 3394).unwrap();
    let s = recover_support(&measure(&x, &e).unwrap(), &e).unwrap();
    for j in x.support() {
        assert!(s.contains(j));
    }
}

#[test]
fn spike_design_rejects_two_spikes() {
    let x = ComplexSparseSignal::random(16, 2, 1).unwrap();
    let e = design_measurements(16, 1, 40, 2).unwrap();
    assert!(matches!(
        recover(&measure(&x, &e).unwrap(), &e),
        Err(sparse_pr::Error::InconsistentMeasurements(_))
    ));
}
