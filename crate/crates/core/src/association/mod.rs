//! Data association between the four range sets and trilateration.
//!
//! A candidate association picks, for each target, one entry from every
//! range set. Every target sees the IRS through both BSs, so the two IRS
//! ranges implied by a correct pairing must agree; candidates that violate
//! this by more than `τ_k` are pruned before any Gauss-Newton solve.
//!
//! Target labels are arbitrary, so target `k` always takes the `k`-th
//! entry of `D_1^AT`; the remaining three assignments are free.

pub mod gauss_newton;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::{Anchors, Point2D};
use crate::sparse_recovery::RangeSets;
use gauss_newton::{localize_target, GaussNewtonOptions, TargetFit, TargetObservation, TargetVariances};

/// Rank indices (0-based, into the ascending range sets) per BS and target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Association {
    pub lambda: [Vec<usize>; 2],
    pub mu: [Vec<usize>; 2],
}

impl Association {
    pub fn n_targets(&self) -> usize {
        self.lambda[0].len()
    }

    /// Each of the four index lists is a permutation of `0..K`.
    pub fn is_permutation_feasible(&self) -> bool {
        let k = self.n_targets();
        self.lambda.iter().chain(&self.mu).all(|v| {
            let mut seen = vec![false; k];
            v.len() == k && v.iter().all(|&i| i < k && !std::mem::replace(&mut seen[i], true))
        })
    }
}

/// Error variances per BS and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub var_at: [Vec<f64>; 2],
    pub var_it: [Vec<f64>; 2],
}

impl NoiseModel {
    pub fn uniform(k: usize, var_at: f64, var_it: f64) -> Self {
        Self {
            var_at: [vec![var_at; k], vec![var_at; k]],
            var_it: [vec![var_it; k], vec![var_it; k]],
        }
    }

    /// Variances of uniform quantization over one tap: `w²/12` for a BS
    /// range; for an IRS range the composed-path and BS-range terms add
    /// (the BS-IRS distance is exact).
    pub fn quantization(config: &SystemConfig, k: usize) -> Self {
        let at = config.range_bin_width().powi(2) / 12.0;
        let aita = config.path_bin_width().powi(2) / 12.0;
        Self::uniform(k, at, aita + at)
    }

    fn target(&self, k: usize) -> Result<TargetVariances> {
        let get = |v: &[f64]| {
            v.get(k)
                .copied()
                .filter(|x| *x > 0.0)
                .ok_or_else(|| Error::InvalidArgument(format!("noise model has no positive variance for target {k}")))
        };
        Ok(TargetVariances {
            at: [get(&self.var_at[0])?, get(&self.var_at[1])?],
            it: [get(&self.var_it[0])?, get(&self.var_it[1])?],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Search only associations whose two IRS ranges agree within τ.
    Pruned,
    /// Search every permutation-feasible association.
    Exhaustive,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Pruned => "pruned",
            SearchMode::Exhaustive => "exhaustive",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pruned" => Ok(SearchMode::Pruned),
            "exhaustive" => Ok(SearchMode::Exhaustive),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?} (pruned|exhaustive)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Pruning threshold τ_k (m), shared by all targets.
    pub tau: f64,
    pub mode: SearchMode,
    /// Overrides for the quantization-derived variances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_it: Option<f64>,
    pub gauss_newton: GaussNewtonOptions,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            tau: 1.5,
            mode: SearchMode::Pruned,
            var_at: None,
            var_it: None,
            gauss_newton: GaussNewtonOptions::default(),
        }
    }
}

impl AssociationConfig {
    pub fn noise_model(&self, config: &SystemConfig, k: usize) -> NoiseModel {
        let q = NoiseModel::quantization(config, k);
        NoiseModel::uniform(
            k,
            self.var_at.unwrap_or(q.var_at[0].first().copied().unwrap_or(1.0)),
            self.var_it.unwrap_or(q.var_it[0].first().copied().unwrap_or(1.0)),
        )
    }
}

/// IRS-target distance implied by BS `m` under the association:
/// `D_m^AITA(μ) - D_m^AT(λ) - d_m^AI`.
pub fn irs_range(sets: &RangeSets, assoc: &Association, m: usize, k: usize, d_ai: [f64; 2]) -> f64 {
    sets.d_aita[m][assoc.mu[m][k]] - sets.d_at[m][assoc.lambda[m][k]] - d_ai[m]
}

/// One target's free choice `(λ_2, μ_1, μ_2)`.
type Triple = [usize; 3];

fn triple_ranges(sets: &RangeSets, k: usize, t: &Triple, d_ai: [f64; 2]) -> TargetObservation {
    let at1 = sets.d_at[0][k];
    let at2 = sets.d_at[1][t[0]];
    TargetObservation {
        d_at: [at1, at2],
        d_it: [sets.d_aita[0][t[1]] - at1 - d_ai[0], sets.d_aita[1][t[2]] - at2 - d_ai[1]],
    }
}

/// Per-target candidate triples in lexicographic order, filtered by the IRS
/// consistency test when thresholds are given.
fn target_triples(sets: &RangeSets, k_total: usize, d_ai: [f64; 2], tau: Option<&[f64]>) -> Vec<Vec<Triple>> {
    (0..k_total)
        .map(|k| {
            let mut out = Vec::new();
            for a in 0..k_total {
                for b in 0..k_total {
                    for c in 0..k_total {
                        let t = [a, b, c];
                        let keep = match tau {
                            None => true,
                            Some(tau) => {
                                let obs = triple_ranges(sets, k, &t, d_ai);
                                (obs.d_it[0] - obs.d_it[1]).abs() <= tau[k]
                            }
                        };
                        if keep {
                            out.push(t);
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Depth-first walk over all assignments of one triple per target with no
/// index reused within a coordinate. `visit` receives the triple index
/// chosen for every target.
fn walk(triples: &[Vec<Triple>], visit: &mut impl FnMut(&[usize])) {
    let k = triples.len();
    // position of each (a, b, c) in the target's list, if present
    let lookup: Vec<Vec<Option<usize>>> = triples
        .iter()
        .map(|list| {
            let mut table = vec![None; k * k * k];
            for (i, t) in list.iter().enumerate() {
                table[(t[0] * k + t[1]) * k + t[2]] = Some(i);
            }
            table
        })
        .collect();

    fn rec(
        lookup: &[Vec<Option<usize>>],
        k: usize,
        depth: usize,
        used: [u64; 3],
        chosen: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if depth == lookup.len() {
            visit(chosen);
            return;
        }
        let free = |c: usize| (0..k).filter(move |&v| used[c] >> v & 1 == 0);
        for a in free(0) {
            for b in free(1) {
                for c in free(2) {
                    let Some(i) = lookup[depth][(a * k + b) * k + c] else {
                        continue;
                    };
                    chosen.push(i);
                    let next = [used[0] | 1 << a, used[1] | 1 << b, used[2] | 1 << c];
                    rec(lookup, k, depth + 1, next, chosen, visit);
                    chosen.pop();
                }
            }
        }
    }
    rec(&lookup, k, 0, [0; 3], &mut Vec::with_capacity(k), visit);
}

fn build_association(triples: &[Vec<Triple>], chosen: &[usize]) -> Association {
    let k = chosen.len();
    let mut a = Association {
        lambda: [(0..k).collect(), vec![0; k]],
        mu: [vec![0; k], vec![0; k]],
    };
    for (target, &i) in chosen.iter().enumerate() {
        let t = triples[target][i];
        a.lambda[1][target] = t[0];
        a.mu[0][target] = t[1];
        a.mu[1][target] = t[2];
    }
    a
}

fn check_sets(sets: &RangeSets, tau: Option<&[f64]>) -> Result<usize> {
    let k = sets.n_targets()?;
    if k > 20 {
        return Err(Error::InvalidArgument(format!("K = {k} is beyond the enumerable range")));
    }
    if let Some(tau) = tau {
        if tau.len() != k {
            return Err(Error::InvalidArgument(format!("{} thresholds for {k} targets", tau.len())));
        }
    }
    Ok(k)
}

/// All associations satisfying the permutation constraints and the IRS
/// consistency test `|d̄^IT,1_k - d̄^IT,2_k| ≤ τ_k`, in lexicographic order.
pub fn enumerate_feasible(sets: &RangeSets, d_ai: [f64; 2], tau: &[f64]) -> Result<Vec<Association>> {
    let k = check_sets(sets, Some(tau))?;
    let triples = target_triples(sets, k, d_ai, Some(tau));
    let mut out = Vec::new();
    walk(&triples, &mut |chosen| out.push(build_association(&triples, chosen)));
    if out.is_empty() {
        return Err(Error::NoConsistentAssociation(format!(
            "no association passes the IRS-range test for τ = {tau:?}"
        )));
    }
    Ok(out)
}

/// Number of permutation-feasible associations after fixing `λ_1`.
pub fn exhaustive_count(k: usize) -> u128 {
    let f: u128 = (1..=k as u128).product();
    f * f * f
}

/// ML positions of every target under a fixed association.
pub fn localize(
    assoc: &Association,
    sets: &RangeSets,
    d_ai: [f64; 2],
    anchors: &Anchors,
    noise: &NoiseModel,
    opts: &GaussNewtonOptions,
) -> Result<(Vec<Point2D>, Vec<f64>, f64)> {
    if !assoc.is_permutation_feasible() || assoc.n_targets() != sets.n_targets()? {
        return Err(Error::InvalidArgument("association is not permutation-feasible".into()));
    }
    let mut positions = Vec::with_capacity(assoc.n_targets());
    let mut costs = Vec::with_capacity(assoc.n_targets());
    for k in 0..assoc.n_targets() {
        let at = [sets.d_at[0][assoc.lambda[0][k]], sets.d_at[1][assoc.lambda[1][k]]];
        let obs = TargetObservation {
            d_at: at,
            d_it: [irs_range(sets, assoc, 0, k, d_ai), irs_range(sets, assoc, 1, k, d_ai)],
        };
        let fit = localize_target(&obs, anchors, &noise.target(k)?, opts)?;
        positions.push(fit.position);
        costs.push(fit.cost);
    }
    let total = costs.iter().sum();
    Ok((positions, costs, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub positions: Vec<Point2D>,
    pub association: Association,
    pub cost: f64,
    pub per_target_cost: Vec<f64>,
    /// Associations whose objective was evaluated.
    pub candidates: u64,
}

/// Joint association and localization: minimizes the summed ML cost over
/// the pruned candidate set or over every permutation-feasible association.
/// Ties keep the earliest candidate in lexicographic order.
pub fn solve(
    sets: &RangeSets,
    anchors: &Anchors,
    noise: &NoiseModel,
    tau: &[f64],
    mode: SearchMode,
    opts: &GaussNewtonOptions,
) -> Result<LocalizationResult> {
    let k = check_sets(sets, Some(tau))?;
    if k == 0 {
        return Err(Error::NoConsistentAssociation("range sets are empty".into()));
    }
    let d_ai = anchors.bs_irs_distances();
    let triples = match mode {
        SearchMode::Pruned => target_triples(sets, k, d_ai, Some(tau)),
        SearchMode::Exhaustive => target_triples(sets, k, d_ai, None),
    };
    let variances: Vec<TargetVariances> = (0..k).map(|t| noise.target(t)).collect::<Result<_>>()?;

    // per-target fits depend only on the target's own triple
    let mut fits: Vec<Vec<Option<Option<TargetFit>>>> = triples.iter().map(|v| vec![None; v.len()]).collect();
    let mut fit_cost = |target: usize, i: usize| -> Option<TargetFit> {
        *fits[target][i].get_or_insert_with(|| {
            let obs = triple_ranges(sets, target, &triples[target][i], d_ai);
            localize_target(&obs, anchors, &variances[target], opts).ok()
        })
    };
    let mut per_target: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (target, list) in triples.iter().enumerate() {
        per_target.push((0..list.len()).map(|i| fit_cost(target, i).map_or(f64::INFINITY, |f| f.cost)).collect());
    }

    let mut candidates = 0u64;
    let mut best: Option<(f64, Vec<usize>)> = None;
    walk(&triples, &mut |chosen| {
        candidates += 1;
        let mut total = 0.0;
        for (target, &i) in chosen.iter().enumerate() {
            total += per_target[target][i];
        }
        if total.is_finite() && best.as_ref().is_none_or(|(c, _)| total < *c) {
            best = Some((total, chosen.to_vec()));
        }
    });

    let (cost, chosen) = best.ok_or_else(|| {
        Error::NoConsistentAssociation(format!(
            "{} candidates evaluated, none with a finite objective (τ = {tau:?})",
            candidates
        ))
    })?;
    let association = build_association(&triples, &chosen);
    let mut positions = Vec::with_capacity(k);
    let mut per_target_cost = Vec::with_capacity(k);
    for (target, &i) in chosen.iter().enumerate() {
        let fit = fit_cost(target, i).expect("finite cost implies a fit");
        positions.push(fit.position);
        per_target_cost.push(fit.cost);
    }
    Ok(LocalizationResult {
        positions,
        association,
        cost,
        per_target_cost,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{distances, sample_scenario, Placement, Scenario};

    fn anchors() -> Anchors {
        Anchors {
            bs: [Point2D::new(-100.0, 0.0), Point2D::new(100.0, 0.0)],
            irs: Point2D::new(0.0, 40.0),
        }
    }

    #[test]
    fn irs_range_arithmetic() {
        let sets = RangeSets::new([vec![29.8125], vec![29.8125]], [vec![258.375], vec![258.375]]);
        let a = Association {
            lambda: [vec![0], vec![0]],
            mu: [vec![0], vec![0]],
        };
        let d_ai = anchors().bs_irs_distances();
        let v = irs_range(&sets, &a, 0, 0, d_ai);
        assert!((v - (258.375 - 29.8125 - 11600f64.sqrt())).abs() < 1e-12);
        assert!((v - 120.8592).abs() < 1e-4);
    }

    #[test]
    fn irs_range_within_quantization_of_truth() {
        let cfg = SystemConfig::default();
        let s = Scenario::new(anchors().bs, anchors().irs, vec![Point2D::new(12.0, 31.0)]).unwrap();
        let sets = RangeSets::from_truth(&s, &cfg).unwrap();
        let t = distances(&s);
        let a = Association {
            lambda: [vec![0], vec![0]],
            mu: [vec![0], vec![0]],
        };
        for m in 0..2 {
            assert!((irs_range(&sets, &a, m, 0, t.d_ai) - t.d_it[0]).abs() <= 0.5625 + 1e-12);
        }
    }

    #[test]
    fn consistency_identity_on_fabricated_sets() {
        let d_ai = anchors().bs_irs_distances();
        let sets = RangeSets::new([vec![50.0], vec![70.0]], [vec![50.0 + 10.0 + d_ai[0]], vec![70.0 + 10.0 + d_ai[1]]]);
        let a = Association {
            lambda: [vec![0], vec![0]],
            mu: [vec![0], vec![0]],
        };
        assert_eq!(irs_range(&sets, &a, 0, 0, d_ai), 10.0);
        assert_eq!(irs_range(&sets, &a, 1, 0, d_ai), 10.0);
    }

    fn fabricated(d_at: [[f64; 2]; 2], d_it: [f64; 2]) -> RangeSets {
        let d_ai = anchors().bs_irs_distances();
        let aita = |m: usize| (0..2).map(|k| d_ai[m] + d_it[k] + d_at[k][m]).collect::<Vec<_>>();
        RangeSets::new([vec![d_at[0][0], d_at[1][0]], vec![d_at[0][1], d_at[1][1]]], [aita(0), aita(1)])
    }

    #[test]
    fn pruning_matches_brute_force_for_two_targets() {
        let d_ai = anchors().bs_irs_distances();
        let sets = fabricated([[60.0, 140.0], [130.0, 75.0]], [10.0, 40.0]);
        let tau = [1.5, 1.5];
        let feasible = enumerate_feasible(&sets, d_ai, &tau).unwrap();

        // brute force over the 8 quotiented associations
        let perms = [[0usize, 1], [1, 0]];
        let mut brute = Vec::new();
        for l2 in perms {
            for m1 in perms {
                for m2 in perms {
                    let a = Association {
                        lambda: [vec![0, 1], l2.to_vec()],
                        mu: [m1.to_vec(), m2.to_vec()],
                    };
                    let ok = (0..2).all(|k| (irs_range(&sets, &a, 0, k, d_ai) - irs_range(&sets, &a, 1, k, d_ai)).abs() <= 1.5);
                    if ok {
                        brute.push(a);
                    }
                }
            }
        }
        assert_eq!(feasible, brute);
        assert_eq!(feasible.len(), 1);
        let truth = &feasible[0];
        // target 0 (60 m to BS1) pairs with the 140 m entry at BS2
        assert_eq!(truth.lambda[1], vec![1, 0]);
    }

    #[test]
    fn single_target_always_feasible() {
        let d_ai = anchors().bs_irs_distances();
        let sets = fabricated([[60.0, 140.0], [130.0, 75.0]], [10.0, 40.0]);
        let one = RangeSets::new([vec![sets.d_at[0][0]], vec![140.0]], [vec![d_ai[0] + 70.0], vec![d_ai[1] + 150.0]]);
        assert_eq!(enumerate_feasible(&one, d_ai, &[1.5]).unwrap().len(), 1);
    }

    #[test]
    fn unbounded_tau_enumerates_everything() {
        let cfg = SystemConfig::default();
        let s = sample_scenario(8, 3, &Placement::default(), &cfg).unwrap();
        let sets = RangeSets::from_truth(&s, &cfg).unwrap();
        let all = enumerate_feasible(&sets, s.anchors().bs_irs_distances(), &[f64::INFINITY; 3]).unwrap();
        assert_eq!(all.len(), 216);
        assert_eq!(exhaustive_count(3), 216);
        assert!(all.iter().all(Association::is_permutation_feasible));
        let unique: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 216);
    }

    #[test]
    fn empty_candidate_set_is_an_error() {
        let d_ai = anchors().bs_irs_distances();
        let sets = RangeSets::new([vec![50.0], vec![70.0]], [vec![50.0 + 10.0 + d_ai[0]], vec![70.0 + 30.0 + d_ai[1]]]);
        assert!(matches!(
            enumerate_feasible(&sets, d_ai, &[1.5]),
            Err(Error::NoConsistentAssociation(_))
        ));
    }

    #[test]
    fn modes_agree_for_single_target() {
        let cfg = SystemConfig::default();
        let s = sample_scenario(2, 1, &Placement::default(), &cfg).unwrap();
        let sets = RangeSets::from_truth(&s, &cfg).unwrap();
        let noise = NoiseModel::quantization(&cfg, 1);
        let opts = GaussNewtonOptions::default();
        let a = solve(&sets, &s.anchors(), &noise, &[1.5], SearchMode::Pruned, &opts).unwrap();
        let b = solve(&sets, &s.anchors(), &noise, &[1.5], SearchMode::Exhaustive, &opts).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.cost, b.cost);
        assert!(a.positions[0].distance(&s.targets[0]) < 1.0);
    }

    #[test]
    fn noise_free_three_targets_pruned_equals_exhaustive_equals_truth() {
        let cfg = SystemConfig::default();
        let opts = GaussNewtonOptions::default();
        for seed in 0..5 {
            let s = sample_scenario(100 + seed, 3, &Placement::default(), &cfg).unwrap();
            let sets = RangeSets::from_truth(&s, &cfg).unwrap();
            let noise = NoiseModel::quantization(&cfg, 3);
            let tau = [1.5; 3];
            let p = solve(&sets, &s.anchors(), &noise, &tau, SearchMode::Pruned, &opts).unwrap();
            let e = solve(&sets, &s.anchors(), &noise, &tau, SearchMode::Exhaustive, &opts).unwrap();
            assert_eq!(p.association, e.association);
            assert_eq!(p.cost, e.cost);
            assert_eq!(e.candidates, 216);
            assert!(p.candidates < 216);
            // every truth target has an estimate within a meter
            for t in &s.targets {
                assert!(p.positions.iter().any(|q| q.distance(t) < 1.0), "seed {seed}");
            }
            let (pos, costs, total) = localize(&p.association, &sets, s.anchors().bs_irs_distances(), &s.anchors(), &noise, &opts).unwrap();
            assert_eq!(pos, p.positions);
            assert_eq!(costs, p.per_target_cost);
            assert!((total - p.cost).abs() <= 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn relabeling_targets_leaves_solution_invariant() {
        let cfg = SystemConfig::default();
        let mut s = sample_scenario(31, 3, &Placement::default(), &cfg).unwrap();
        let noise = NoiseModel::quantization(&cfg, 3);
        let opts = GaussNewtonOptions::default();
        let a = solve(&RangeSets::from_truth(&s, &cfg).unwrap(), &s.anchors(), &noise, &[1.5; 3], SearchMode::Pruned, &opts).unwrap();
        s.targets.reverse();
        let b = solve(&RangeSets::from_truth(&s, &cfg).unwrap(), &s.anchors(), &noise, &[1.5; 3], SearchMode::Pruned, &opts).unwrap();
        let key = |r: &LocalizationResult| {
            let mut v: Vec<(i64, i64, i64)> = r
                .positions
                .iter()
                .zip(&r.per_target_cost)
                .map(|(p, c)| ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64, (c * 1e6).round() as i64))
                .collect();
            v.sort();
            v
        };
        assert_eq!(key(&a), key(&b));
        assert_eq!(a.cost, b.cost);
    }
}
