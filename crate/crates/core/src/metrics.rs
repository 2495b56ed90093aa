//! Graph extraction and evaluation against ground truth.

use std::collections::{BTreeMap, BTreeSet};

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CcslError, Result};
use crate::graph::Adjacency;
use crate::model::{ClusterGraph, FitConfig, FitResult, GroupModel};
use crate::synthgen::GroundTruth;

/// Thresholds the coefficient means: edge `j -> i` is present when
/// `|mu_b[i, j]| > tau_b` (self-loops never) and a lag-`p` edge when
/// `|nu_a[p][i, j]| > tau_a`.
pub fn extract_graph(group: &GroupModel, tau_b: f64, tau_a: f64) -> ClusterGraph {
    let m = group.n_vars();
    let mut instantaneous = Adjacency::empty(m);
    for i in 0..m {
        for j in 0..m {
            if i != j && group.mu_b[(i, j)].abs() > tau_b {
                instantaneous.set_edge(i, j, true);
            }
        }
    }
    let lagged = group
        .nu_a
        .iter()
        .map(|nu| {
            let mut adj = Adjacency::empty(m);
            for i in 0..m {
                for j in 0..m {
                    if nu[(i, j)].abs() > tau_a {
                        adj.set_edge(i, j, true);
                    }
                }
            }
            adj
        })
        .collect();
    ClusterGraph {
        instantaneous,
        lagged,
    }
}

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Adjusted Rand index of two labelings of the same items.
///
/// Identical partitions score exactly 1.0, including the degenerate cases
/// where the expected and maximal indices coincide.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(CcslError::LengthMismatch {
            left: labels_a.len(),
            right: labels_b.len(),
        });
    }
    let n = labels_a.len();
    if n < 2 {
        return Err(CcslError::TooFewItems {
            required: 2,
            found: n,
        });
    }
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        *cells.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: u64 = cells.values().map(|&c| pairs(c)).sum();
    let sum_a: u64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: u64 = cols.values().map(|&c| pairs(c)).sum();
    Ok(adjusted_index(index, sum_a, sum_b, pairs(n as u64)))
}

/// `(index - expected) / (max - expected)` from integer pair counts.
pub(crate) fn adjusted_index(index: u64, sum_a: u64, sum_b: u64, total: u64) -> f64 {
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max = 0.5 * (sum_a as f64 + sum_b as f64);
    if max == expected {
        return 1.0;
    }
    (index as f64 - expected) / (max - expected)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(CcslError::LengthMismatch {
            left: scores.len(),
            right: truth.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(CcslError::InvalidParams("auc scores contain NaN".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CcslError::DegenerateTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks (1-based) summed over the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| truth[i]).count();
        rank_sum += midrank * positives as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Estimated-to-true cluster correspondence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMatch {
    /// Every estimated label mapped to a true label.
    pub map: BTreeMap<usize, usize>,
    /// Estimated labels left over by the one-to-one assignment, mapped by
    /// plain maximal overlap instead.
    pub unmatched: BTreeSet<usize>,
}

/// One-to-one matching maximizing total overlap; among optimal matchings,
/// lower true labels are preferred. Surplus estimated clusters map to the
/// true group they overlap most (lowest label on ties) and are flagged.
pub fn match_clusters(est_labels: &[usize], true_labels: &[usize]) -> Result<ClusterMatch> {
    if est_labels.len() != true_labels.len() {
        return Err(CcslError::LengthMismatch {
            left: est_labels.len(),
            right: true_labels.len(),
        });
    }
    let est: Vec<usize> = est_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tru: Vec<usize> = true_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if est.is_empty() {
        return Ok(ClusterMatch::default());
    }
    let mut overlap = vec![vec![0i64; tru.len()]; est.len()];
    for (e, t) in est_labels.iter().zip(true_labels) {
        let ei = est.binary_search(e).unwrap_or_default();
        let ti = tru.binary_search(t).unwrap_or_default();
        overlap[ei][ti] += 1;
    }
    // Overlap dominates; the tie term favours low true indices.
    let scale = (tru.len() * est.len().max(tru.len()) + 1) as i64;
    let weight = |ei: usize, ti: usize| overlap[ei][ti] * scale + (tru.len() - ti) as i64;

    let mut result = ClusterMatch::default();
    if est.len() <= tru.len() {
        let rows: Vec<Vec<i64>> = (0..est.len())
            .map(|ei| (0..tru.len()).map(|ti| weight(ei, ti)).collect())
            .collect();
        let (_, assign) = kuhn_munkres(&Matrix::from_rows(rows).expect("rectangular"));
        for (ei, ti) in assign.into_iter().enumerate() {
            result.map.insert(est[ei], tru[ti]);
        }
    } else {
        let rows: Vec<Vec<i64>> = (0..tru.len())
            .map(|ti| (0..est.len()).map(|ei| weight(ei, ti)).collect())
            .collect();
        let (_, assign) = kuhn_munkres(&Matrix::from_rows(rows).expect("rectangular"));
        for (ti, ei) in assign.into_iter().enumerate() {
            result.map.insert(est[ei], tru[ti]);
        }
        for (ei, &e) in est.iter().enumerate() {
            if result.map.contains_key(&e) {
                continue;
            }
            let best = (0..tru.len())
                .max_by(|&a, &b| overlap[ei][a].cmp(&overlap[ei][b]).then(b.cmp(&a)))
                .unwrap_or(0);
            result.map.insert(e, tru[best]);
            result.unmatched.insert(e);
        }
    }
    Ok(result)
}

/// Structure scores of one cluster against one true group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureAuc {
    pub instantaneous: Option<f64>,
    pub lagged: Option<f64>,
    pub combined: Option<f64>,
}

/// Edge scores with their truth flags.
pub type ScoredEdges = (Vec<f64>, Vec<bool>);

/// Score/truth vectors: off-diagonal `|mu_b|` against the DAG, then every
/// `|nu_a|` entry against the lag support. Lags present on only one side
/// count as zero scores or absent edges.
pub fn structure_scores(
    group: &GroupModel,
    instantaneous: &Adjacency,
    lagged: &[Adjacency],
) -> (ScoredEdges, ScoredEdges) {
    let m = group.n_vars();
    let mut inst = (Vec::new(), Vec::new());
    for i in 0..m {
        for j in 0..m {
            if i != j {
                inst.0.push(group.mu_b[(i, j)].abs());
                inst.1.push(instantaneous.has_edge(i, j));
            }
        }
    }
    let mut lag = (Vec::new(), Vec::new());
    for p in 0..group.lags().max(lagged.len()) {
        for i in 0..m {
            for j in 0..m {
                lag.0
                    .push(group.nu_a.get(p).map_or(0.0, |nu| nu[(i, j)].abs()));
                lag.1.push(lagged.get(p).is_some_and(|a| a.has_edge(i, j)));
            }
        }
    }
    (inst, lag)
}

pub fn structure_auc(
    group: &GroupModel,
    instantaneous: &Adjacency,
    lagged: &[Adjacency],
) -> StructureAuc {
    let ((si, ti), (sl, tl)) = structure_scores(group, instantaneous, lagged);
    let both_s: Vec<f64> = si.iter().chain(&sl).copied().collect();
    let both_t: Vec<bool> = ti.iter().chain(&tl).copied().collect();
    StructureAuc {
        instantaneous: auc(&si, &ti).ok(),
        lagged: auc(&sl, &tl).ok(),
        combined: auc(&both_s, &both_t).ok(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ari: f64,
    /// Keyed by estimated cluster; clusters whose truth is degenerate for a
    /// view are absent from that view.
    pub auc_instantaneous: BTreeMap<usize, f64>,
    pub auc_lagged: BTreeMap<usize, f64>,
    pub auc_combined: BTreeMap<usize, f64>,
    pub cluster_match: BTreeMap<usize, usize>,
    /// Estimated clusters without a one-to-one partner; they get no AUC.
    pub unmatched: BTreeSet<usize>,
    pub q_estimated: usize,
    pub q_true: usize,
}

fn mean(values: &BTreeMap<usize, f64>) -> Option<f64> {
    (!values.is_empty()).then(|| values.values().sum::<f64>() / values.len() as f64)
}

impl EvalReport {
    pub fn mean_auc_instantaneous(&self) -> Option<f64> {
        mean(&self.auc_instantaneous)
    }

    pub fn mean_auc_lagged(&self) -> Option<f64> {
        mean(&self.auc_lagged)
    }

    pub fn mean_auc_combined(&self) -> Option<f64> {
        mean(&self.auc_combined)
    }
}

/// Scores a fit against the ground truth it was generated from.
pub fn evaluate(fit: &FitResult, truth: &GroundTruth, _config: &FitConfig) -> Result<EvalReport> {
    let est = fit
        .state
        .labels()
        .ok_or_else(|| CcslError::InvalidState("fit leaves subjects unassigned".into()))?;
    let ari = ari(&est, &truth.labels)?;
    let matching = match_clusters(&est, &truth.labels)?;
    let mut report = EvalReport {
        ari,
        auc_instantaneous: BTreeMap::new(),
        auc_lagged: BTreeMap::new(),
        auc_combined: BTreeMap::new(),
        cluster_match: matching.map.clone(),
        unmatched: matching.unmatched.clone(),
        q_estimated: fit.state.n_clusters(),
        q_true: truth.group_count(),
    };
    for (&k, group) in &fit.state.clusters {
        if matching.unmatched.contains(&k) {
            continue;
        }
        let Some(true_group) = matching.map.get(&k).and_then(|&t| truth.groups.get(t)) else {
            continue;
        };
        let support = &true_group.support;
        let scores = structure_auc(group, &support.instantaneous, &support.lagged);
        if let Some(v) = scores.instantaneous {
            report.auc_instantaneous.insert(k, v);
        }
        if let Some(v) = scores.lagged {
            report.auc_lagged.insert(k, v);
        }
        if let Some(v) = scores.combined {
            report.auc_combined.insert(k, v);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClusterState, FitResult};
    use crate::synthgen::{gen_dataset, GenSettings};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pair-counting ARI over all item pairs.
    fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b) = (0u64, 0u64, 0u64);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += u64::from(sa && sb);
                in_a += u64::from(sa);
                in_b += u64::from(sb);
            }
        }
        adjusted_index(both, in_a, in_b, (n * (n - 1) / 2) as u64)
    }

    fn brute_auc(scores: &[f64], truth: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in truth.iter().enumerate() {
            for (j, &nj) in truth.iter().enumerate() {
                if pi && !nj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn extract_graph_thresholds() {
        let mut g = GroupModel::base_prior(2, 1, 1);
        assert_eq!(extract_graph(&g, 0.1, 0.1).instantaneous.edge_count(), 0);
        assert_eq!(extract_graph(&g, 0.1, 0.1).lagged[0].edge_count(), 0);
        g.mu_b[(1, 0)] = 0.3;
        g.nu_a[0][(0, 0)] = -0.2;
        g.nu_a[0][(0, 1)] = 0.05;
        let graph = extract_graph(&g, 0.1, 0.1);
        assert!(graph.instantaneous.has_edge(1, 0));
        assert_eq!(graph.instantaneous.edge_count(), 1);
        assert!(graph.lagged[0].has_edge(0, 0));
        assert!(!graph.lagged[0].has_edge(0, 1));
        g.mu_b[(1, 0)] = 0.05;
        assert_eq!(extract_graph(&g, 0.1, 0.1).instantaneous.edge_count(), 0);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[1, 1, 2, 2], &[7, 7, 9, 9]).unwrap(), 1.0);
        assert_eq!(ari(&[1, 1, 2, 2], &[1, 1, 1, 2]).unwrap(), 0.0);
        assert_relative_eq!(
            ari(&[1, 2, 1, 2], &[1, 1, 2, 2]).unwrap(),
            -0.5,
            epsilon = 1e-15
        );
        assert_eq!(ari(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 1, 2], &[5, 4, 3]).unwrap(), 1.0);
    }

    #[test]
    fn ari_errors() {
        assert!(matches!(
            ari(&[1, 2], &[1]),
            Err(CcslError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ari(&[1], &[1]),
            Err(CcslError::TooFewItems { .. })
        ));
    }

    #[test]
    fn auc_examples() {
        let truth = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &truth).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.7, 0.8, 0.1], &truth).unwrap(), 0.75);
        assert_eq!(
            auc(&[1.0, 2.0], &[true, true]),
            Err(CcslError::DegenerateTruth)
        );
    }

    #[test]
    fn metrics_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.random_range(2..=12);
            let ka = rng.random_range(1..=4);
            let kb = rng.random_range(1..=4);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
            assert_eq!(ari(&a, &b).unwrap(), brute_ari(&a, &b));

            let mut truth: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            truth[0] = true;
            truth[1] = false;
            let scores: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.random_range(0..5u8)) / 4.0)
                .collect();
            assert_eq!(auc(&scores, &truth).unwrap(), brute_auc(&scores, &truth));
        }
    }

    #[test]
    fn match_examples() {
        let m = match_clusters(&[1, 1, 2, 2], &[2, 2, 1, 1]).unwrap();
        assert_eq!(m.map, BTreeMap::from([(1, 2), (2, 1)]));
        assert!(m.unmatched.is_empty());
        let m = match_clusters(&[1, 1, 1, 1], &[1, 1, 2, 2]).unwrap();
        assert_eq!(m.map, BTreeMap::from([(1, 1)]));
    }

    #[test]
    fn match_flags_surplus_clusters() {
        let m = match_clusters(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(m.map.len(), 3);
        assert_eq!(m.unmatched.len(), 1);
        let surplus = *m.unmatched.iter().next().unwrap();
        assert_eq!(m.map[&surplus], 1);
        let matched: BTreeSet<usize> = m
            .map
            .iter()
            .filter(|(e, _)| !m.unmatched.contains(e))
            .map(|(_, t)| *t)
            .collect();
        assert_eq!(matched.len(), 2);
    }

    #[test]
    fn match_is_optimal_on_random_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = 12;
            let est: Vec<usize> = (0..n)
                .map(|i| if i < 3 { i } else { rng.random_range(0..3) })
                .collect();
            let tru: Vec<usize> = (0..n)
                .map(|i| if i < 3 { i } else { rng.random_range(0..3) })
                .collect();
            let overlap = |e: usize, t: usize| {
                est.iter()
                    .zip(&tru)
                    .filter(|(a, b)| **a == e && **b == t)
                    .count()
            };
            let best = permutations(3)
                .iter()
                .map(|p| (0..3).map(|e| overlap(e, p[e])).sum::<usize>())
                .max()
                .unwrap();
            let m = match_clusters(&est, &tru).unwrap();
            let got: usize = m.map.iter().map(|(&e, &t)| overlap(e, t)).sum();
            assert_eq!(got, best);
        }
    }

    fn oracle_fit(truth: &GroundTruth) -> FitResult {
        let mut state = ClusterState::empty(truth.labels.len(), 1.0);
        let ids: Vec<usize> = truth
            .groups
            .iter()
            .map(|g| state.open(g.model.clone()))
            .collect();
        for (s, &l) in truth.labels.iter().enumerate() {
            state.attach(s, ids[l]);
        }
        FitResult {
            state,
            graphs: BTreeMap::new(),
            elbo_trace: vec![],
            sweeps_run: 0,
            converged: true,
        }
    }

    #[test]
    fn evaluate_oracle_is_perfect() {
        let settings = GenSettings {
            subjects: 6,
            ..GenSettings::default()
        };
        let (_, truth) = gen_dataset(&settings, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let report = evaluate(&oracle_fit(&truth), &truth, &FitConfig::default()).unwrap();
        assert_eq!(report.ari, 1.0);
        assert_eq!((report.q_estimated, report.q_true), (2, 2));
        assert!(report.unmatched.is_empty());
        for v in report
            .auc_instantaneous
            .values()
            .chain(report.auc_lagged.values())
        {
            assert_eq!(*v, 1.0);
        }
        assert_eq!(report.mean_auc_combined(), Some(1.0));
    }

    #[test]
    fn evaluate_flags_extra_cluster() {
        let settings = GenSettings {
            subjects: 6,
            ..GenSettings::default()
        };
        let (_, truth) = gen_dataset(&settings, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut fit = oracle_fit(&truth);
        let extra = fit.state.open(truth.groups[0].model.clone());
        fit.state.detach(0);
        fit.state.attach(0, extra);
        let report = evaluate(&fit, &truth, &FitConfig::default()).unwrap();
        assert_eq!(report.q_estimated, 3);
        assert_eq!(report.unmatched.len(), 1);
        assert!(report.ari < 1.0);
        assert!(!report.auc_combined.contains_key(&extra));
    }

    #[test]
    fn random_assignments_have_null_ari() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<usize> = (0..30).map(|s| s % 2).collect();
        let mut total = 0.0;
        for _ in 0..100 {
            let mut est = truth.clone();
            est.shuffle(&mut rng);
            total += ari(&est, &truth).unwrap();
        }
        assert!((total / 100.0).abs() < 0.15);
    }

    #[test]
    fn structure_scores_skip_self_loops() {
        let g = GroupModel::base_prior(3, 1, 1);
        let ((si, _), (sl, _)) = structure_scores(&g, &Adjacency::empty(3), &[Adjacency::empty(3)]);
        assert_eq!(si.len(), 6);
        assert_eq!(sl.len(), 9);
        let mut g2 = g.clone();
        g2.nu_a.clear();
        g2.omega_a.clear();
        let (_, (sl, tl)) = structure_scores(&g2, &Adjacency::empty(3), &[Adjacency::empty(3)]);
        assert_eq!((sl, tl), (vec![0.0; 9], vec![false; 9]));
        let _ = DMatrix::<f64>::zeros(1, 1);
    }

    fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..4, n)
    }

    proptest! {
        #[test]
        fn ari_is_symmetric((a, b) in (2usize..15).prop_flat_map(|n| (labels(n), labels(n)))) {
            prop_assert_eq!(ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
        }

        #[test]
        fn ari_ignores_label_names(
            (a, b) in (2usize..15).prop_flat_map(|n| (labels(n), labels(n))),
            perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let renamed: Vec<usize> = a.iter().map(|&l| perm[l] + 10).collect();
            prop_assert_eq!(ari(&a, &b).unwrap(), ari(&renamed, &b).unwrap());
        }

        #[test]
        fn auc_is_rank_based(
            scores in prop::collection::vec(-5.0f64..5.0, 4..20),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut truth: Vec<bool> = scores.iter().map(|_| rng.random()).collect();
            truth[0] = true;
            truth[1] = false;
            let base = auc(&scores, &truth).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&mapped, &truth).unwrap(), base);
            let distinct = scores.iter().collect::<Vec<_>>().windows(2).len() + 1 == scores.len()
                && {
                    let mut s = scores.clone();
                    s.sort_by(f64::total_cmp);
                    s.windows(2).all(|w| w[0] < w[1])
                };
            if distinct {
                let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
                prop_assert!((auc(&negated, &truth).unwrap() + base - 1.0).abs() < 1e-12);
            }
        }
    }
}
