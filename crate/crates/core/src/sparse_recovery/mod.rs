//! Range estimation from the received resource block.
//!
//! The IRS-off symbol feeds a complex LASSO whose support gives the
//! BS-target ranges; the IRS-on symbols feed a group LASSO whose row support,
//! minus the BS-target taps and the known BS-IRS-BS tap, gives the lengths of
//! the BS-IRS-target-BS paths.

pub mod operator;
pub mod solver;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ReceivedSignal;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::{bin_midpoint, delay_bin, distances, PathKind, Scenario};
use operator::{LinearOperator, SteeringOperator};
pub use solver::{optimality_violation, solve_group_lasso, solve_lasso, SolverOptions, SparseSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    /// Absolute ρ; when unset, `rho_scale · σ √(2 ln L) · ‖column‖`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub rho_scale: f64,
    /// Absolute support threshold δ1; when unset, `delta_factor` times the
    /// coefficient noise floor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub delta_factor: f64,
    pub solver: SolverOptions,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            rho: None,
            rho_scale: 1.0,
            delta: None,
            delta_factor: 3.0,
            solver: SolverOptions::default(),
        }
    }
}

/// Same knobs for the IRS-on problem; the automatic β is `ρ √(Q-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupLassoConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub beta_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub delta_factor: f64,
    pub solver: SolverOptions,
}

impl Default for GroupLassoConfig {
    fn default() -> Self {
        Self {
            beta: None,
            beta_scale: 1.0,
            delta: None,
            delta_factor: 3.0,
            solver: SolverOptions::default(),
        }
    }
}

/// Detected taps (1-based, ascending) per BS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    pub phase1: [Vec<usize>; 2],
    pub phase2: [Vec<usize>; 2],
    /// Tap of the BS-IRS-BS link, from known geometry.
    pub l_aia: [usize; 2],
}

impl SupportSet {
    /// `Φ_m = Φ_m^I ∪ {l_m^AIA}`.
    pub fn known_taps(&self, m: usize) -> Vec<usize> {
        let mut v = self.phase1[m].clone();
        if !v.contains(&self.l_aia[m]) {
            v.push(self.l_aia[m]);
        }
        v.sort_unstable();
        v
    }

    /// `Ω_m^II \ Φ_m`: taps attributed to BS-IRS-target-BS paths.
    pub fn irs_target_taps(&self, m: usize) -> Vec<usize> {
        let known = self.known_taps(m);
        self.phase2[m].iter().copied().filter(|l| !known.contains(l)).collect()
    }
}

/// The four estimated range sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSets {
    pub d_at: [Vec<f64>; 2],
    pub d_aita: [Vec<f64>; 2],
}

impl RangeSets {
    pub fn new(mut d_at: [Vec<f64>; 2], mut d_aita: [Vec<f64>; 2]) -> Self {
        for v in d_at.iter_mut().chain(d_aita.iter_mut()) {
            v.sort_by(f64::total_cmp);
        }
        Self { d_at, d_aita }
    }

    /// Common size of the four sets.
    pub fn n_targets(&self) -> Result<usize> {
        let k = self.d_at[0].len();
        let counts = [self.d_at[0].len(), self.d_at[1].len(), self.d_aita[0].len(), self.d_aita[1].len()];
        if counts.iter().any(|&c| c != k) {
            return Err(Error::InconsistentDetections(format!(
                "|D1_AT|={}, |D2_AT|={}, |D1_AITA|={}, |D2_AITA|={}",
                counts[0], counts[1], counts[2], counts[3]
            )));
        }
        Ok(k)
    }

    /// Noise-free estimates: every true path quantized to its tap midpoint.
    pub fn from_truth(scenario: &Scenario, config: &SystemConfig) -> Result<Self> {
        let truth = distances(scenario);
        let mut d_at: [Vec<f64>; 2] = Default::default();
        let mut d_aita: [Vec<f64>; 2] = Default::default();
        for m in 0..2 {
            for k in 0..scenario.n_targets() {
                let l = delay_bin(truth.d_at[m][k], PathKind::BsTargetBs, config)?;
                d_at[m].push(bin_midpoint(l, config.range_bin_width()));
                let l = delay_bin(truth.d_aita[m][k], PathKind::BsIrsTargetBs, config)?;
                d_aita[m].push(bin_midpoint(l, config.path_bin_width()));
            }
        }
        Ok(Self::new(d_at, d_aita))
    }
}

/// Taps (1-based) whose coefficient row norm is at least `threshold`.
pub fn detect_support(row_norms: &[f64], threshold: f64) -> Vec<usize> {
    row_norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= threshold)
        .map(|(l, _)| l + 1)
        .collect()
}

/// Converts detected taps into range sets using tap midpoints.
pub fn extract_ranges(supports: &SupportSet, config: &SystemConfig) -> Result<RangeSets> {
    let range_w = config.range_bin_width();
    let path_w = config.path_bin_width();
    let d_at = [0, 1].map(|m| supports.phase1[m].iter().map(|&l| bin_midpoint(l, range_w)).collect::<Vec<_>>());
    let d_aita = [0, 1].map(|m| {
        supports
            .irs_target_taps(m)
            .into_iter()
            .map(|l| bin_midpoint(l, path_w))
            .collect::<Vec<_>>()
    });
    let sets = RangeSets::new(d_at, d_aita);
    sets.n_targets()?;
    Ok(sets)
}

/// Median row norm of the back-projection `AᴴY / ‖a‖²`, i.e. the noise level
/// of an unregularized per-tap estimate when the channel is sparse.
pub fn coefficient_noise_floor<A: LinearOperator>(op: &A, measurements: &Array2<Complex64>) -> f64 {
    let col_energy = op.column_norm(0).powi(2);
    if col_energy == 0.0 {
        return 0.0;
    }
    let mut norms: Vec<f64> = (0..measurements.ncols())
        .map(|g| op.adjoint(&measurements.column(g).to_vec()))
        .fold(vec![0.0; op.n_cols()], |mut acc, col| {
            acc.iter_mut().zip(col).for_each(|(a, c)| *a += c.norm_sqr());
            acc
        })
        .into_iter()
        .map(|e| e.sqrt() / col_energy)
        .collect();
    norms.sort_by(f64::total_cmp);
    let n = norms.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        norms[n / 2]
    } else {
        0.5 * (norms[n / 2 - 1] + norms[n / 2])
    }
}

fn support_threshold(absolute: Option<f64>, factor: f64, floor: f64, solution: &SparseSolution) -> f64 {
    if let Some(d) = absolute {
        return d;
    }
    let peak = solution.row_norms().into_iter().fold(0.0, f64::max);
    (factor * floor).max(1e-9 * peak).max(f64::MIN_POSITIVE)
}

/// Everything produced by the range-estimation stage for one resource block.
#[derive(Debug, Clone)]
pub struct RangeRecovery {
    pub supports: SupportSet,
    pub lasso: [SparseSolution; 2],
    pub group: [SparseSolution; 2],
    pub rho: [f64; 2],
    pub beta: [f64; 2],
    pub delta1: [f64; 2],
    pub delta2: [f64; 2],
}

impl RangeRecovery {
    pub fn ranges(&self, config: &SystemConfig) -> Result<RangeSets> {
        extract_ranges(&self.supports, config)
    }
}

/// IRS-off design `√p diag(s̃^(1)) E_m` and measurement.
pub fn phase1_problem(rx: &ReceivedSignal, config: &SystemConfig, m: usize) -> (SteeringOperator, Array2<Complex64>) {
    let op = SteeringOperator::new(config.n_subcarriers, &rx.subcarriers[m], config.n_taps)
        .with_scale(rx.power_mw[m].sqrt())
        .with_symbols(rx.symbols[m][0].clone());
    let y = Array2::from_shape_vec((rx.y[m][0].len(), 1), rx.y[m][0].clone()).expect("column shape");
    (op, y)
}

/// IRS-on design `√p E_m` and the symbol-normalized measurements `Ȳ_m`.
pub fn phase2_problem(rx: &ReceivedSignal, config: &SystemConfig, m: usize) -> (SteeringOperator, Array2<Complex64>) {
    let op = SteeringOperator::new(config.n_subcarriers, &rx.subcarriers[m], config.n_taps).with_scale(rx.power_mw[m].sqrt());
    let rows = rx.subcarriers[m].len();
    let groups = rx.n_symbols() - 1;
    let mut y = Array2::from_elem((rows, groups), Complex64::new(0.0, 0.0));
    for q in 1..rx.n_symbols() {
        for (row, v) in rx.normalized(m, q).into_iter().enumerate() {
            y[[row, q - 1]] = v;
        }
    }
    (op, y)
}

/// Runs both LASSO stages for both BSs and thresholds the solutions.
pub fn recover_supports(
    rx: &ReceivedSignal,
    scenario_anchors: &crate::scenario::Anchors,
    config: &SystemConfig,
    lasso: &LassoConfig,
    group: &GroupLassoConfig,
) -> Result<RangeRecovery> {
    let sigma = rx.noise_var.sqrt();
    let log_term = (2.0 * (config.n_taps as f64).ln()).sqrt();
    let d_ai = scenario_anchors.bs_irs_distances();

    let mut phase1: [Vec<usize>; 2] = Default::default();
    let mut phase2: [Vec<usize>; 2] = Default::default();
    let mut l_aia = [0; 2];
    let mut rho = [0.0; 2];
    let mut beta = [0.0; 2];
    let mut delta1 = [0.0; 2];
    let mut delta2 = [0.0; 2];
    let mut lasso_sols = Vec::with_capacity(2);
    let mut group_sols = Vec::with_capacity(2);

    for m in 0..2 {
        let (op1, y1) = phase1_problem(rx, config, m);
        let col = op1.column_norm(0);
        rho[m] = lasso.rho.unwrap_or(lasso.rho_scale * sigma * log_term * col);
        let sol1 = solve_group_lasso(&op1, &y1, rho[m], &lasso.solver)?;
        delta1[m] = support_threshold(lasso.delta, lasso.delta_factor, coefficient_noise_floor(&op1, &y1), &sol1);
        phase1[m] = detect_support(&sol1.row_norms(), delta1[m]);

        let (op2, y2) = phase2_problem(rx, config, m);
        let groups = y2.ncols() as f64;
        let rho_auto = lasso.rho_scale * sigma * log_term * op2.column_norm(0);
        beta[m] = group.beta.unwrap_or(group.beta_scale * rho_auto * groups.sqrt());
        let sol2 = solve_group_lasso(&op2, &y2, beta[m], &group.solver)?;
        delta2[m] = support_threshold(group.delta, group.delta_factor, coefficient_noise_floor(&op2, &y2), &sol2);
        phase2[m] = detect_support(&sol2.row_norms(), delta2[m]);

        l_aia[m] = delay_bin(d_ai[m], PathKind::BsIrsBs, config)?;
        lasso_sols.push(sol1);
        group_sols.push(sol2);
    }
    let [g0, g1]: [SparseSolution; 2] = group_sols.try_into().expect("two BSs");
    let [l0, l1]: [SparseSolution; 2] = lasso_sols.try_into().expect("two BSs");
    Ok(RangeRecovery {
        supports: SupportSet { phase1, phase2, l_aia },
        lasso: [l0, l1],
        group: [g0, g1],
        rho,
        beta,
        delta1,
        delta2,
    })
}
