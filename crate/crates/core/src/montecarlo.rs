//! Monte-Carlo trials: scene → channel → range recovery → association →
//! per-target error against the truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{exhaustive_count, irs_range, solve, Association, AssociationConfig, SearchMode};
use crate::channel::{simulate_rx, synth_taps, IrsProfile, ReceivedSignal, TapBundle};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::{distances, sample_scenario, Placement, Point2D, Scenario};
use crate::sparse_recovery::{recover_supports, GroupLassoConfig, LassoConfig, RangeSets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeSource {
    /// Full pipeline: simulate the resource block and run both LASSO stages.
    Estimated,
    /// Skip the channel: true distances quantized to their tap midpoints.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub system: SystemConfig,
    pub placement: Placement,
    /// Number of targets K.
    pub k: usize,
    pub lasso: LassoConfig,
    pub group_lasso: GroupLassoConfig,
    pub association: AssociationConfig,
    pub range_source: RangeSource,
    /// A target is in error when its estimate is farther than this (m).
    pub error_radius_m: f64,
    /// Record Phase-II wall-clock time. Off by default so that outputs are
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            placement: Placement::default(),
            k: 3,
            lasso: LassoConfig::default(),
            group_lasso: GroupLassoConfig::default(),
            association: AssociationConfig::default(),
            range_source: RangeSource::Estimated,
            error_radius_m: 1.0,
            record_timing: false,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidConfig("k: at least one target is required".into()));
        }
        if !(self.placement.radius > 0.0) {
            return Err(Error::InvalidConfig("placement.radius must be positive".into()));
        }
        if !(self.association.tau > 0.0) {
            return Err(Error::InvalidConfig("association.tau must be positive".into()));
        }
        if !(self.error_radius_m > 0.0) {
            return Err(Error::InvalidConfig("error_radius_m must be positive".into()));
        }
        Scenario::new(
            [self.placement.bs1, self.placement.bs2],
            self.placement.irs,
            vec![self.placement.irs],
        )
        .map_err(|e| Error::InvalidConfig(format!("placement: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub power_dbm: f64,
    pub mode: SearchMode,
    pub targets: Vec<Point2D>,
    pub estimates: Vec<Point2D>,
    pub association: Option<Association>,
    /// Distance from each true target to its matched estimate.
    pub errors_m: Vec<Option<f64>>,
    pub error_flags: Vec<bool>,
    pub detected: Option<usize>,
    pub cost: Option<f64>,
    pub candidates: Option<u64>,
    pub solve_time_s: Option<f64>,
    pub failure: Option<String>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of trial `index` under `base_seed`.
pub fn trial_seed(base_seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(base_seed) ^ index as u64)
}

/// Independent sub-seeds for scene, gains, IRS profile and noise.
fn stage_seeds(seed: u64) -> [u64; 4] {
    [1u64, 2, 3, 4].map(|s| splitmix64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ s))
}

/// Minimum-total-distance matching of truths to estimates (`estimates.len()
/// ≥ truths.len()`). Returns the estimate index for every truth.
pub fn match_estimates(truths: &[Point2D], estimates: &[Point2D]) -> Option<Vec<usize>> {
    let (n, m) = (truths.len(), estimates.len());
    if n > m || m > 20 {
        return None;
    }
    let states = 1usize << m;
    let mut best = vec![f64::INFINITY; states];
    let mut from: Vec<Option<(usize, usize)>> = vec![None; states];
    best[0] = 0.0;
    for mask in 0..states {
        let i = mask.count_ones() as usize;
        if i >= n || !best[mask].is_finite() {
            continue;
        }
        for j in 0..m {
            if mask >> j & 1 == 1 {
                continue;
            }
            let next = mask | 1 << j;
            let c = best[mask] + truths[i].distance(&estimates[j]);
            if c < best[next] {
                best[next] = c;
                from[next] = Some((mask, j));
            }
        }
    }
    let end = (0..states)
        .filter(|s| s.count_ones() as usize == n)
        .min_by(|a, b| best[*a].total_cmp(&best[*b]))?;
    let mut assignment = vec![0; n];
    let mut mask = end;
    while let Some((prev, j)) = from[mask] {
        assignment[prev.count_ones() as usize] = j;
        mask = prev;
    }
    Some(assignment)
}

/// Per-target errors and flags after optimal matching.
pub fn evaluate_estimates(truths: &[Point2D], estimates: &[Point2D], radius: f64) -> (Vec<Option<f64>>, Vec<bool>) {
    match match_estimates(truths, estimates) {
        Some(assign) => {
            let errors: Vec<Option<f64>> = truths.iter().zip(&assign).map(|(t, &j)| Some(t.distance(&estimates[j]))).collect();
            let flags = errors.iter().map(|e| e.is_none_or(|e| e > radius)).collect();
            (errors, flags)
        }
        None => (vec![None; truths.len()], vec![true; truths.len()]),
    }
}

/// Intermediate products of one trial.
#[derive(Debug, Clone)]
pub struct TrialArtifacts {
    pub scenario: Scenario,
    pub taps: Option<TapBundle>,
    pub received: Option<ReceivedSignal>,
    pub ranges: Option<RangeSets>,
}

pub fn run_trial(seed: u64, config: &TrialConfig) -> TrialResult {
    run_trial_detailed(0, seed, config).0
}

/// Runs one trial; pipeline errors end up in `failure` with every target
/// counted as an error.
pub fn run_trial_detailed(trial: usize, seed: u64, config: &TrialConfig) -> (TrialResult, Option<TrialArtifacts>) {
    let mut result = TrialResult {
        trial,
        seed,
        k: config.k,
        power_dbm: config.system.tx_power_dbm[0],
        mode: config.association.mode,
        targets: Vec::new(),
        estimates: Vec::new(),
        association: None,
        errors_m: vec![None; config.k],
        error_flags: vec![true; config.k],
        detected: None,
        cost: None,
        candidates: None,
        solve_time_s: None,
        failure: None,
    };
    let [s_scene, s_gain, s_irs, s_noise] = stage_seeds(seed);

    let scenario = match sample_scenario(s_scene, config.k, &config.placement, &config.system) {
        Ok(s) => s,
        Err(e) => {
            result.failure = Some(e.to_string());
            return (result, None);
        }
    };
    result.targets = scenario.targets.clone();
    let mut artifacts = TrialArtifacts {
        scenario: scenario.clone(),
        taps: None,
        received: None,
        ranges: None,
    };

    let ranges = match config.range_source {
        RangeSource::Oracle => RangeSets::from_truth(&scenario, &config.system),
        RangeSource::Estimated => (|| {
            let taps = synth_taps(&scenario, &config.system, s_gain)?;
            let irs = IrsProfile::random(config.system.n_irs_elements, config.system.n_symbols, s_irs);
            let rx = simulate_rx(&taps, &irs, &config.system, s_noise)?;
            let recovery = recover_supports(&rx, &scenario.anchors(), &config.system, &config.lasso, &config.group_lasso);
            artifacts.taps = Some(taps);
            artifacts.received = Some(rx);
            recovery?.ranges(&config.system)
        })(),
    };
    let ranges = match ranges {
        Ok(r) => r,
        Err(e) => {
            result.failure = Some(e.to_string());
            return (result, Some(artifacts));
        }
    };
    artifacts.ranges = Some(ranges.clone());
    let detected = ranges.d_at[0].len();
    result.detected = Some(detected);
    if detected < config.k {
        result.failure = Some(format!("fewer than K detections: {detected} < {}", config.k));
        return (result, Some(artifacts));
    }

    let noise = config.association.noise_model(&config.system, detected);
    let tau = vec![config.association.tau; detected];
    let start = Instant::now();
    let solved = solve(
        &ranges,
        &scenario.anchors(),
        &noise,
        &tau,
        config.association.mode,
        &config.association.gauss_newton,
    );
    let elapsed = start.elapsed().as_secs_f64();
    if config.record_timing {
        result.solve_time_s = Some(elapsed);
    }
    match solved {
        Ok(loc) => {
            let (errors, flags) = evaluate_estimates(&scenario.targets, &loc.positions, config.error_radius_m);
            result.errors_m = errors;
            result.error_flags = flags;
            result.estimates = loc.positions;
            result.cost = Some(loc.cost);
            result.candidates = Some(loc.candidates);
            result.association = Some(loc.association);
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    (result, Some(artifacts))
}

/// Fraction of per-target error flags that are set.
pub fn error_probability(results: &[TrialResult]) -> Result<f64> {
    let total: usize = results.iter().map(|r| r.error_flags.len()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("error probability of an empty result list".into()));
    }
    let errors = results.iter().flat_map(|r| &r.error_flags).filter(|f| **f).count();
    Ok(errors as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub k: Vec<usize>,
    pub power_dbm: Vec<f64>,
    pub modes: Vec<SearchMode>,
    pub n_trials: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            k: vec![3],
            power_dbm: vec![39.0],
            modes: vec![SearchMode::Pruned],
            n_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub base: TrialConfig,
    pub grid: SweepGrid,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointSummary {
    pub k: usize,
    pub power_dbm: f64,
    pub mode: SearchMode,
    pub n_trials: usize,
    pub n_failed: usize,
    pub error_prob: f64,
    pub mean_err_m: Option<f64>,
    pub p95_err_m: Option<f64>,
    pub mean_solve_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: Option<serde_json::Value>,
    pub n_trials: usize,
    pub error_probability: f64,
    pub mean_err_m: Option<f64>,
    pub p95_err_m: Option<f64>,
    pub mean_solve_s_by_mode: BTreeMap<String, f64>,
    pub grid: Vec<GridPointSummary>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Nearest-rank 95th percentile.
fn p95(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    Some(s[rank - 1])
}

fn finite_errors<'a>(records: impl IntoIterator<Item = &'a TrialResult>) -> Vec<f64> {
    records.into_iter().flat_map(|r| r.errors_m.iter().flatten().copied()).collect()
}

/// Aggregates trial records. The result does not depend on record order.
pub fn summarize(records: &[TrialResult]) -> Result<ExperimentSummary> {
    let mut sorted: Vec<&TrialResult> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.k.cmp(&b.k)
            .then(a.power_dbm.total_cmp(&b.power_dbm))
            .then(a.mode.as_str().cmp(b.mode.as_str()))
            .then(a.trial.cmp(&b.trial))
    });
    let owned: Vec<TrialResult> = sorted.iter().map(|r| (*r).clone()).collect();

    let mut grid = Vec::new();
    for chunk in owned.chunk_by(|a, b| a.k == b.k && a.power_dbm == b.power_dbm && a.mode == b.mode) {
        let errs = finite_errors(chunk);
        let times: Vec<f64> = chunk.iter().filter_map(|r| r.solve_time_s).collect();
        grid.push(GridPointSummary {
            k: chunk[0].k,
            power_dbm: chunk[0].power_dbm,
            mode: chunk[0].mode,
            n_trials: chunk.len(),
            n_failed: chunk.iter().filter(|r| r.failure.is_some()).count(),
            error_prob: error_probability(chunk)?,
            mean_err_m: mean(&errs),
            p95_err_m: p95(&errs),
            mean_solve_s: mean(&times),
        });
    }
    let mut by_mode: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &owned {
        if let Some(t) = r.solve_time_s {
            by_mode.entry(r.mode.as_str().to_string()).or_default().push(t);
        }
    }
    let errs = finite_errors(&owned);
    Ok(ExperimentSummary {
        config: None,
        n_trials: owned.len(),
        error_probability: error_probability(&owned)?,
        mean_err_m: mean(&errs),
        p95_err_m: p95(&errs),
        mean_solve_s_by_mode: by_mode.into_iter().map(|(k, v)| (k, mean(&v).unwrap_or(0.0))).collect(),
        grid,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// Flat table, one row per grid point.
pub fn summary_table(summary: &ExperimentSummary) -> String {
    let mut out = String::from("K,power_dBm,mode,n_trials,error_prob,mean_err_m,p95_err_m,mean_solve_s\n");
    for g in &summary.grid {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g.k,
            g.power_dbm,
            g.mode.as_str(),
            g.n_trials,
            g.error_prob,
            fmt_opt(g.mean_err_m),
            fmt_opt(g.p95_err_m),
            fmt_opt(g.mean_solve_s)
        );
    }
    out
}

pub fn read_records(path: &Path) -> Result<Vec<TrialResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CHANNELS_FILE: &str = "channels.csv";

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn dump_channels(out: &mut String, grid_index: usize, trial: usize, art: &TrialArtifacts) {
    if let Some(taps) = &art.taps {
        let families = [("ata", vec![&taps.ata[0]], vec![&taps.ata[1]]), ("aia", taps.aia[0].iter().collect(), taps.aia[1].iter().collect()), ("aita", taps.aita[0].iter().collect(), taps.aita[1].iter().collect())];
        for (name, bs1, bs2) in families {
            for (m, list) in [bs1, bs2].into_iter().enumerate() {
                for (i, tv) in list.into_iter().enumerate() {
                    for l in tv.support() {
                        let v = tv.tap(l);
                        let _ = writeln!(out, "{grid_index},{trial},{},{name},{i},{l},{:e},{:e}", m + 1, v.re, v.im);
                    }
                }
            }
        }
    }
    if let Some(rx) = &art.received {
        for m in 0..2 {
            for (q, ys) in rx.y[m].iter().enumerate() {
                for (row, v) in ys.iter().enumerate() {
                    let _ = writeln!(out, "{grid_index},{trial},{},rx,{},{},{:e},{:e}", m + 1, q + 1, rx.subcarriers[m][row], v.re, v.im);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub records: Vec<TrialResult>,
}

/// Runs every grid point. Trials run in parallel; each trial's seed depends
/// only on `(base_seed, trial index)`, so grid points share scenes.
pub fn run_experiment(exp: &Experiment, out_dir: Option<&Path>, dump: bool) -> Result<ExperimentOutput> {
    exp.base.validate()?;
    if exp.grid.n_trials == 0 || exp.grid.k.is_empty() || exp.grid.power_dbm.is_empty() || exp.grid.modes.is_empty() {
        return Err(Error::InvalidConfig("sweep grid must have trials, K values, powers and modes".into()));
    }
    let mut records = Vec::new();
    let mut channels = String::new();
    let mut grid_index = 0;
    for &k in &exp.grid.k {
        for &power in &exp.grid.power_dbm {
            for &mode in &exp.grid.modes {
                let mut cfg = exp.base.clone();
                cfg.k = k;
                cfg.system.tx_power_dbm = [power, power];
                cfg.association.mode = mode;
                cfg.validate()?;
                let batch: Vec<(TrialResult, Option<TrialArtifacts>)> = (0..exp.grid.n_trials)
                    .into_par_iter()
                    .map(|i| {
                        let (r, a) = run_trial_detailed(i, trial_seed(exp.base_seed, i), &cfg);
                        (r, if dump { a } else { None })
                    })
                    .collect();
                for (r, a) in batch {
                    if let Some(a) = &a {
                        dump_channels(&mut channels, grid_index, r.trial, a);
                    }
                    records.push(r);
                }
                grid_index += 1;
            }
        }
    }
    let mut summary = summarize(&records)?;
    summary.config = Some(serde_json::to_value(exp).map_err(|e| Error::InvalidConfig(e.to_string()))?);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut lines = Vec::new();
        for r in &records {
            serde_json::to_writer(&mut lines, r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            lines.write_all(b"\n").map_err(|e| Error::io(dir.join(RECORDS_FILE), e))?;
        }
        write_file(&dir.join(RECORDS_FILE), &lines)?;
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        write_file(&dir.join(SUMMARY_JSON), json.as_bytes())?;
        write_file(&dir.join(SUMMARY_CSV), summary_table(&summary).as_bytes())?;
        if dump {
            let mut text = String::from("grid,trial,bs,kind,index,tap_or_subcarrier,re,im\n");
            text.push_str(&channels);
            write_file(&dir.join(CHANNELS_FILE), text.as_bytes())?;
        }
    }
    Ok(ExperimentOutput { summary, records })
}

/// Association linking every true target to its own ranges, labelled by the
/// rank of the target's BS 1 range like the solver's labels.
pub fn true_association(scenario: &Scenario) -> Association {
    let t = distances(scenario);
    let k = scenario.n_targets();
    let ranks = |v: &[f64]| {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
        let mut rank = vec![0; k];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        rank
    };
    let r_at = [ranks(&t.d_at[0]), ranks(&t.d_at[1])];
    let r_aita = [ranks(&t.d_aita[0]), ranks(&t.d_aita[1])];
    let mut by_label: Vec<usize> = (0..k).collect();
    by_label.sort_by_key(|&i| r_at[0][i]);
    Association {
        lambda: [by_label.iter().map(|&i| r_at[0][i]).collect(), by_label.iter().map(|&i| r_at[1][i]).collect()],
        mu: [by_label.iter().map(|&i| r_aita[0][i]).collect(), by_label.iter().map(|&i| r_aita[1][i]).collect()],
    }
}

/// Whether `assoc` passes the IRS consistency test on `sets` for every target.
pub fn satisfies_consistency(sets: &RangeSets, assoc: &Association, d_ai: [f64; 2], tau: f64) -> bool {
    (0..assoc.n_targets()).all(|k| (irs_range(sets, assoc, 0, k, d_ai) - irs_range(sets, assoc, 1, k, d_ai)).abs() <= tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckTrial {
    pub trial: usize,
    pub seed: u64,
    /// Ground-truth association passes the consistency test.
    pub eligible: bool,
    pub pruned_cost: Option<f64>,
    pub exhaustive_cost: Option<f64>,
    pub pruned_candidates: Option<u64>,
    pub exhaustive_candidates: Option<u64>,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub k: usize,
    pub trials: Vec<OracleCheckTrial>,
    pub eligible: usize,
    pub agreements: usize,
}

impl OracleCheckReport {
    /// Agreement rate over eligible trials.
    pub fn agreement_rate(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.agreements as f64 / self.eligible as f64)
    }
}

/// Largest K for which the exhaustive search is run.
pub const MAX_EXHAUSTIVE_K: usize = 5;

/// Runs the pruned and the exhaustive search on the same ranges and compares
/// their objective values (absolute tolerance `1e-6`).
pub fn oracle_check(config: &TrialConfig, base_seed: u64, n_trials: usize) -> Result<OracleCheckReport> {
    config.validate()?;
    if config.k > MAX_EXHAUSTIVE_K {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search at K = {} visits {} associations; K ≤ {MAX_EXHAUSTIVE_K} is supported",
            config.k,
            exhaustive_count(config.k)
        )));
    }
    let trials: Vec<OracleCheckTrial> = (0..n_trials)
        .into_par_iter()
        .map(|i| oracle_check_trial(i, trial_seed(base_seed, i), config))
        .collect();
    let eligible = trials.iter().filter(|t| t.eligible).count();
    let agreements = trials.iter().filter(|t| t.eligible && t.agree).count();
    Ok(OracleCheckReport {
        k: config.k,
        trials,
        eligible,
        agreements,
    })
}

fn oracle_check_trial(trial: usize, seed: u64, config: &TrialConfig) -> OracleCheckTrial {
    let mut out = OracleCheckTrial {
        trial,
        seed,
        eligible: false,
        pruned_cost: None,
        exhaustive_cost: None,
        pruned_candidates: None,
        exhaustive_candidates: None,
        agree: false,
    };
    let [s_scene, ..] = stage_seeds(seed);
    let Ok(scenario) = sample_scenario(s_scene, config.k, &config.placement, &config.system) else {
        return out;
    };
    let Ok(sets) = RangeSets::from_truth(&scenario, &config.system) else {
        return out;
    };
    let anchors = scenario.anchors();
    out.eligible = satisfies_consistency(&sets, &true_association(&scenario), anchors.bs_irs_distances(), config.association.tau);
    let noise = config.association.noise_model(&config.system, config.k);
    let tau = vec![config.association.tau; config.k];
    let run = |mode| solve(&sets, &anchors, &noise, &tau, mode, &config.association.gauss_newton).ok();
    let p = run(SearchMode::Pruned);
    let e = run(SearchMode::Exhaustive);
    out.pruned_cost = p.as_ref().map(|r| r.cost);
    out.exhaustive_cost = e.as_ref().map(|r| r.cost);
    out.pruned_candidates = p.as_ref().map(|r| r.candidates);
    out.exhaustive_candidates = e.as_ref().map(|r| r.candidates);
    out.agree = matches!((out.pruned_cost, out.exhaustive_cost), (Some(a), Some(b)) if (a - b).abs() <= 1e-6);
    out
}
