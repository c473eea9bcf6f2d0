//! Designed phaseless measurements and their combinatorial decoder.
//!
//! Measurement `i` uses a sparse Gaussian mask `z_i` (each entry nonzero
//! with probability `1/k`) modulated by two unit-modulus phase vectors
//! `a_i`, `b_i`, and observes `|<a_i . z_i, x>|^2` and `|<b_i . z_i, x>|^2`.
//! Decoding runs in three passes over the measurements:
//!
//! 1. support: every index covered by a mask with a zero observation is
//!    outside the support;
//! 2. magnitudes: a mask meeting the support in one index `j` gives `|x_j|`;
//! 3. phases: masks meeting the support in two indices give edges of a
//!    graph on the support; along a spanning tree, each edge's two
//!    observations pin down the relative phase of its endpoints.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Determinant below which an edge's 2x2 phase system is rejected.
pub const DEGENERATE_DET: f64 = 1e-10;
/// Relative threshold (against the largest observation) for a zero
/// observation. Empty intersections measure exactly zero, while a single
/// hit scales with the square of its Gaussian mask value, which can be
/// small; keep this well below 1e-12.
pub const ZERO_OBSERVATION_RATIO: f64 = 1e-20;
/// Relative tolerance for accepting a sparsity level in unknown-k decoding.
pub const LEVEL_ACCEPT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSparseSignal {
    values: Vec<Complex64>,
    support: Vec<usize>,
}

impl ComplexSparseSignal {
    pub fn from_values(values: Vec<Complex64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|(i, _)| i)
            .collect();
        ComplexSparseSignal { values, support }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::from_values(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Random k-sparse signal with standard complex Gaussian entries.
    pub fn random(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("need 1 <= k={k} <= n={n}")));
        }
        let mut rng = rng_from_seed(seed);
        let mut support = rand::seq::index::sample(&mut rng, n, k).into_vec();
        support.sort_unstable();
        let mut values = vec![Complex64::new(0.0, 0.0); n];
        for &j in &support {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            values[j] = Complex64::new(re, im);
        }
        Ok(ComplexSparseSignal { values, support })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Multiplies every entry by `exp(i phi)`.
    pub fn rotated(&self, phi: f64) -> Self {
        let w = Complex64::from_polar(1.0, phi);
        ComplexSparseSignal {
            values: self.values.iter().map(|v| v * w).collect(),
            support: self.support.clone(),
        }
    }
}

/// A masked measurement design. Masks are stored sparsely as
/// `(index, value)` pairs; phase vectors as angle arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedMeasurementEnsemble {
    pub n: usize,
    pub k_design: usize,
    pub seed: u64,
    pub masks: Vec<Vec<(usize, f64)>>,
    pub phases_a: Vec<Vec<f64>>,
    pub phases_b: Vec<Vec<f64>>,
}

impl MaskedMeasurementEnsemble {
    /// Assembles an ensemble from explicit parts; masks must list distinct
    /// in-range indices with nonzero values.
    pub fn from_parts(
        n: usize,
        k_design: usize,
        masks: Vec<Vec<(usize, f64)>>,
        phases_a: Vec<Vec<f64>>,
        phases_b: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if phases_a.len() != masks.len() || phases_b.len() != masks.len() {
            return Err(Error::LengthMismatch {
                expected: masks.len(),
                actual: phases_a.len().min(phases_b.len()),
            });
        }
        for (mask, (pa, pb)) in masks.iter().zip(phases_a.iter().zip(&phases_b)) {
            if pa.len() != n || pb.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: pa.len().min(pb.len()),
                });
            }
            let mut seen = vec![false; n];
            for &(j, z) in mask {
                if j >= n || seen[j] || z == 0.0 {
                    return Err(Error::InvalidArgument(format!("bad mask entry ({j}, {z})")));
                }
                seen[j] = true;
            }
        }
        Ok(MaskedMeasurementEnsemble {
            n,
            k_design,
            seed: 0,
            masks,
            phases_a,
            phases_b,
        })
    }

    pub fn m(&self) -> usize {
        self.masks.len()
    }

    /// Support `S_i` of mask `i`.
    pub fn mask_support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.masks[i].iter().map(|&(j, _)| j)
    }

    pub fn phase_a(&self, i: usize, j: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phases_a[i][j])
    }

    pub fn phase_b(&self, i: usize, j: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phases_b[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaselessObservations {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Graph on the support; each edge carries the first measurement whose
/// mask meets the support in exactly its two endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGraph {
    pub nodes: Vec<usize>,
    /// `(j, l, i)` with `j < l` and measurement label `i`.
    pub edges: Vec<(usize, usize, usize)>,
}

/// One hop of a spanning tree: `child` is reached from `parent` via the
/// edge labelled `label`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub label: usize,
}

pub fn design_measurements(n: usize, k: usize, m: usize, seed: u64) -> Result<MaskedMeasurementEnsemble> {
    if n == 0 || k == 0 || m == 0 {
        return Err(Error::InvalidArgument("n, k and m must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let keep = 1.0 / k as f64;
    let mut masks = Vec::with_capacity(m);
    let mut phases_a = Vec::with_capacity(m);
    let mut phases_b = Vec::with_capacity(m);
    for _ in 0..m {
        let mut mask = Vec::new();
        for j in 0..n {
            if rng.gen::<f64>() < keep {
                let z: f64 = rng.sample(StandardNormal);
                if z != 0.0 {
                    mask.push((j, z));
                }
            }
        }
        masks.push(mask);
        phases_a.push((0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect());
        phases_b.push((0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect());
    }
    Ok(MaskedMeasurementEnsemble {
        n,
        k_design: k,
        seed,
        masks,
        phases_a,
        phases_b,
    })
}

/// One ensemble per sparsity level `k_i = 2^i`, `i = 1..=ceil(log2 n)`.
pub fn design_measurements_unknown_k(
    n: usize,
    m_per_level: usize,
    seed: u64,
) -> Result<Vec<MaskedMeasurementEnsemble>> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let levels = usize::BITS - (n - 1).leading_zeros();
    (1..=levels)
        .map(|i| design_measurements(n, 1usize << i, m_per_level, derive_seed(&[&seed, &"level", &(i as u64)])))
        .collect()
}

/// `|<c, x>|^2` with `<c, x> = sum_j conj(c_j) x_j`, for `c = a_i . z_i`
/// and `c = b_i . z_i`.
pub fn measure(x: &ComplexSparseSignal, e: &MaskedMeasurementEnsemble) -> Result<PhaselessObservations> {
    if x.n() != e.n {
        return Err(Error::LengthMismatch {
            expected: e.n,
            actual: x.n(),
        });
    }
    let xv = x.values();
    let mut alpha = Vec::with_capacity(e.m());
    let mut beta = Vec::with_capacity(e.m());
    for (i, mask) in e.masks.iter().enumerate() {
        let (mut ia, mut ib) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for &(j, z) in mask {
            if xv[j] == Complex64::new(0.0, 0.0) {
                continue;
            }
            ia += (e.phase_a(i, j) * z).conj() * xv[j];
            ib += (e.phase_b(i, j) * z).conj() * xv[j];
        }
        alpha.push(ia.norm_sqr());
        beta.push(ib.norm_sqr());
    }
    Ok(PhaselessObservations { alpha, beta })
}

fn check_lengths(obs: &PhaselessObservations, e: &MaskedMeasurementEnsemble) -> Result<()> {
    if obs.alpha.len() != e.m() || obs.beta.len() != e.m() {
        return Err(Error::LengthMismatch {
            expected: e.m(),
            actual: obs.alpha.len().min(obs.beta.len()),
        });
    }
    Ok(())
}

/// Complement of the union of mask supports whose observation is zero.
/// May return a superset of the true support when too few masks miss it.
pub fn recover_support(obs: &PhaselessObservations, e: &MaskedMeasurementEnsemble) -> Result<Vec<usize>> {
    check_lengths(obs, e)?;
    let peak = obs.alpha.iter().copied().fold(0.0f64, f64::max);
    let eta = ZERO_OBSERVATION_RATIO * (peak + 1e-300);
    let mut excluded = vec![false; e.n];
    for (i, &alpha) in obs.alpha.iter().enumerate() {
        if alpha <= eta {
            for j in e.mask_support(i) {
                excluded[j] = true;
            }
        }
    }
    Ok((0..e.n).filter(|&j| !excluded[j]).collect())
}

/// How a mask meets the support. Only singletons and pairs are used.
#[derive(Debug, Clone, Copy)]
enum Hit {
    Empty,
    One(usize, f64),
    Two((usize, f64), (usize, f64)),
    Many,
}

/// For each measurement, the members of `support` its mask touches, as
/// `(index, mask value)`.
fn intersections(e: &MaskedMeasurementEnsemble, support: &[usize]) -> Vec<Hit> {
    let mut member = vec![false; e.n];
    for &j in support {
        member[j] = true;
    }
    e.masks
        .iter()
        .map(|mask| {
            let mut hit = Hit::Empty;
            for &(j, z) in mask {
                if member[j] {
                    hit = match hit {
                        Hit::Empty => Hit::One(j, z),
                        Hit::One(j0, z0) => Hit::Two((j0, z0), (j, z)),
                        _ => Hit::Many,
                    };
                    if let Hit::Many = hit {
                        break;
                    }
                }
            }
            hit
        })
        .collect()
}

/// `|x_j| = sqrt(alpha_i) / |z_ij|` from the first measurement whose mask
/// meets `support` only at `j`. Output follows the order of `support`.
pub fn recover_magnitudes(
    obs: &PhaselessObservations,
    e: &MaskedMeasurementEnsemble,
    support: &[usize],
) -> Result<Vec<f64>> {
    check_lengths(obs, e)?;
    magnitudes_from(obs, &intersections(e, support), support, e.n)
}

fn magnitudes_from(
    obs: &PhaselessObservations,
    hits: &[Hit],
    support: &[usize],
    n: usize,
) -> Result<Vec<f64>> {
    let mut found: Vec<Option<f64>> = vec![None; n];
    for (i, hit) in hits.iter().enumerate() {
        if let Hit::One(j, z) = *hit {
            if found[j].is_none() {
                found[j] = Some(obs.alpha[i].sqrt() / z.abs());
            }
        }
    }
    support
        .iter()
        .map(|&j| found[j].ok_or(Error::MissingSingleton(j)))
        .collect()
}

pub fn build_phase_graph(
    obs: &PhaselessObservations,
    e: &MaskedMeasurementEnsemble,
    support: &[usize],
) -> Result<PhaseGraph> {
    check_lengths(obs, e)?;
    Ok(graph_from(&intersections(e, support), support))
}

fn graph_from(hits: &[Hit], support: &[usize]) -> PhaseGraph {
    let mut nodes = support.to_vec();
    nodes.sort_unstable();
    let pos = node_positions(&nodes);
    let mut seen = vec![false; nodes.len() * nodes.len()];
    let mut edges = Vec::new();
    for (i, hit) in hits.iter().enumerate() {
        if let Hit::Two((j, _), (l, _)) = *hit {
            let (j, l) = (j.min(l), j.max(l));
            let key = pos[j] * nodes.len() + pos[l];
            if !seen[key] {
                seen[key] = true;
                edges.push((j, l, i));
            }
        }
    }
    PhaseGraph { nodes, edges }
}

/// Position of each node in `nodes`, indexed by node; `usize::MAX` marks
/// indices that are not nodes.
fn node_positions(nodes: &[usize]) -> Vec<usize> {
    let mut pos = vec![usize::MAX; nodes.iter().max().map_or(0, |&j| j + 1)];
    for (p, &j) in nodes.iter().enumerate() {
        pos[j] = p;
    }
    pos
}

/// Depth-first spanning tree rooted at the lowest node. Tree edges come
/// out in discovery order, so every parent precedes its children.
pub fn spanning_tree(g: &PhaseGraph) -> Result<Vec<TreeEdge>> {
    let Some(&root) = g.nodes.first() else {
        return Ok(Vec::new());
    };
    let pos = node_positions(&g.nodes);
    let at = |j: usize| pos.get(j).copied().filter(|&p| p != usize::MAX);
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.nodes.len()];
    for &(j, l, i) in &g.edges {
        let (Some(pj), Some(pl)) = (at(j), at(l)) else {
            continue;
        };
        adjacency[pj].push((l, i));
        adjacency[pl].push((j, i));
    }
    let mut visited = vec![false; g.nodes.len()];
    let mut tree = Vec::with_capacity(g.nodes.len().saturating_sub(1));
    let mut stack = vec![root];
    visited[pos[root]] = true;
    // iterative DFS; a node is expanded one neighbour at a time
    let mut cursor = vec![0usize; g.nodes.len()];
    while let Some(&u) = stack.last() {
        let pu = pos[u];
        if cursor[pu] < adjacency[pu].len() {
            let (w, label) = adjacency[pu][cursor[pu]];
            cursor[pu] += 1;
            let pw = pos[w];
            if !visited[pw] {
                visited[pw] = true;
                tree.push(TreeEdge {
                    parent: u,
                    child: w,
                    label,
                });
                stack.push(w);
            }
        } else {
            stack.pop();
        }
    }
    if visited.iter().all(|&v| v) {
        Ok(tree)
    } else {
        Err(Error::GraphDisconnected)
    }
}

/// Phase of `x_j conj(x_l)` from the two observations of a measurement
/// whose mask meets the support exactly in `{j, l}`.
fn edge_phase(
    obs: &PhaselessObservations,
    e: &MaskedMeasurementEnsemble,
    i: usize,
    (j, zj, mj): (usize, f64, f64),
    (l, zl, ml): (usize, f64, f64),
) -> Result<f64> {
    let base = zj * zj * mj * mj + zl * zl * ml * ml;
    let cross = 2.0 * zj * zl * mj * ml;
    // Re(A w) / |w| for A = conj(a_j) a_l, w = x_j conj(x_l)
    let ra = (obs.alpha[i] - base) / cross;
    let rb = (obs.beta[i] - base) / cross;
    let t1 = (e.phase_a(i, j).conj() * e.phase_a(i, l)).arg();
    let t2 = (e.phase_b(i, j).conj() * e.phase_b(i, l)).arg();
    // [cos t1, -sin t1; cos t2, -sin t2] [cos th; sin th] = [ra; rb]
    let det = t1.sin() * t2.cos() - t1.cos() * t2.sin();
    if det.abs() < DEGENERATE_DET {
        return Err(Error::DegenerateSystem(j, l));
    }
    let cos_th = (-ra * t2.sin() + rb * t1.sin()) / det;
    let sin_th = (rb * t1.cos() - ra * t2.cos()) / det;
    Ok(sin_th.atan2(cos_th))
}

/// Propagates relative phases along a spanning tree of `g` from the
/// lowest node (phase 0). Output follows the order of `support`.
pub fn recover_phases(
    obs: &PhaselessObservations,
    e: &MaskedMeasurementEnsemble,
    support: &[usize],
    magnitudes: &[f64],
    g: &PhaseGraph,
) -> Result<Vec<Complex64>> {
    check_lengths(obs, e)?;
    if magnitudes.len() != support.len() {
        return Err(Error::LengthMismatch {
            expected: support.len(),
            actual: magnitudes.len(),
        });
    }
    let tree = spanning_tree(g)?;
    let mut magnitude = vec![0.0; e.n];
    for (&j, &mag) in support.iter().zip(magnitudes) {
        magnitude[j] = mag;
    }
    let mask_value = |i: usize, j: usize| e.masks[i].iter().find(|&&(t, _)| t == j).map_or(0.0, |&(_, z)| z);
    let mut phase = vec![0.0; e.n];
    for edge in &tree {
        let i = edge.label;
        let (j, l) = (edge.parent.min(edge.child), edge.parent.max(edge.child));
        let theta = edge_phase(
            obs,
            e,
            i,
            (j, mask_value(i, j), magnitude[j]),
            (l, mask_value(i, l), magnitude[l]),
        )?;
        // theta = phase_j - phase_l
        if edge.parent == j {
            phase[l] = phase[j] - theta;
        } else {
            phase[j] = phase[l] + theta;
        }
    }
    Ok(support
        .iter()
        .map(|&j| Complex64::from_polar(magnitude[j], phase[j]))
        .collect())
}

/// Full decoder: support, magnitudes, phase graph, spanning tree, phases.
/// Recovers `x` up to a global phase.
pub fn recover(obs: &PhaselessObservations, e: &MaskedMeasurementEnsemble) -> Result<ComplexSparseSignal> {
    if e.k_design == 1 {
        return recover_spike(obs, e);
    }
    let support = recover_support(obs, e)?;
    let mut values = vec![Complex64::new(0.0, 0.0); e.n];
    if support.is_empty() {
        return Ok(ComplexSparseSignal { values, support });
    }
    let hits = intersections(e, &support);
    let magnitudes = magnitudes_from(obs, &hits, &support, e.n)?;
    if support.len() == 1 {
        values[support[0]] = Complex64::new(magnitudes[0], 0.0);
        return Ok(ComplexSparseSignal { values, support });
    }
    let graph = graph_from(&hits, &support);
    let entries = recover_phases(obs, e, &support, &magnitudes, &graph)?;
    for (&j, v) in support.iter().zip(entries) {
        values[j] = v;
    }
    Ok(ComplexSparseSignal { values, support })
}

/// k = 1 designs have dense masks, so no observation is zero and the
/// support cannot be found by exclusion. A spike at `j` instead makes
/// `alpha_i / z_ij^2` the same for every mask; pick the most consistent
/// index and return its magnitude with phase 0.
fn recover_spike(obs: &PhaselessObservations, e: &MaskedMeasurementEnsemble) -> Result<ComplexSparseSignal> {
    check_lengths(obs, e)?;
    let mut values = vec![Complex64::new(0.0, 0.0); e.n];
    if obs.alpha.iter().all(|&a| a == 0.0) {
        return Ok(ComplexSparseSignal { values, support: Vec::new() });
    }
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); e.n];
    for (mask, &alpha) in e.masks.iter().zip(&obs.alpha) {
        for &(j, z) in mask {
            ratios[j].push(alpha / (z * z));
        }
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, r) in ratios.iter().enumerate() {
        if r.is_empty() {
            continue;
        }
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let spread = r.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean.abs().max(f64::MIN_POSITIVE);
        if best.map_or(true, |b| spread < b.2) {
            best = Some((j, mean, spread));
        }
    }
    match best {
        Some((j, mean, spread)) if spread <= LEVEL_ACCEPT_TOL => {
            values[j] = Complex64::new(mean.max(0.0).sqrt(), 0.0);
            Ok(ComplexSparseSignal { values, support: vec![j] })
        }
        _ => Err(Error::InconsistentMeasurements(
            "observations are not those of a single spike".into(),
        )),
    }
}

/// `min_phi ||xhat - exp(i phi) x|| / ||x||` (absolute when `x = 0`).
pub fn global_phase_residual(x: &[Complex64], xhat: &[Complex64]) -> f64 {
    let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let inner: Complex64 = x.iter().zip(xhat).map(|(a, b)| a.conj() * b).sum();
    // the optimal rotation aligns x with xhat; summing the differences
    // directly avoids the cancellation in |x|^2 + |xhat|^2 - 2|<x, xhat>|
    let u = if inner.norm() > 0.0 {
        inner / inner.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let d2: f64 = x.iter().zip(xhat).map(|(a, b)| (b - u * a).norm_sqr()).sum();
    if nx > 0.0 {
        (d2 / nx).sqrt()
    } else {
        d2.sqrt()
    }
}

/// Relative mismatch between two observation sets.
pub fn observation_mismatch(lhs: &PhaselessObservations, rhs: &PhaselessObservations) -> f64 {
    let diff: f64 = lhs
        .alpha
        .iter()
        .chain(&lhs.beta)
        .zip(rhs.alpha.iter().chain(&rhs.beta))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let norm: f64 = rhs.alpha.iter().chain(&rhs.beta).map(|b| b * b).sum();
    if norm > 0.0 {
        (diff / norm).sqrt()
    } else {
        diff.sqrt()
    }
}

/// Decodes with multi-level designs: returns the index of the first level
/// whose output reproduces that level's observations, with the signal.
pub fn recover_unknown_k(
    levels: &[(MaskedMeasurementEnsemble, PhaselessObservations)],
) -> Result<(usize, ComplexSparseSignal)> {
    let mut last_err = Error::InvalidArgument("no measurement levels".into());
    for (idx, (e, obs)) in levels.iter().enumerate() {
        match recover(obs, e) {
            Ok(x) => {
                let again = measure(&x, e)?;
                if observation_mismatch(&again, obs) <= LEVEL_ACCEPT_TOL {
                    return Ok((idx, x));
                }
            }
            Err(err) => last_err = err,
        }
    }
    Err(last_err)
}
