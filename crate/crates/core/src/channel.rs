//! Ground-truth multipath synthesis and per-BS received signals for one
//! resource block (IRS off in the first symbol, on afterwards).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::Result;
use crate::scenario::{delay_bin, distances, PathKind, Scenario};
use crate::sparse_recovery::operator::{LinearOperator, SteeringOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapVector(pub Vec<Complex64>);

impl TapVector {
    pub fn zeros(n_taps: usize) -> Self {
        Self(vec![ZERO; n_taps])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based indices of the nonzero taps.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != ZERO)
            .map(|(l, _)| l + 1)
            .collect()
    }

    /// Tap `l`, 1-based.
    pub fn tap(&self, l: usize) -> Complex64 {
        self.0[l - 1]
    }

    fn deposit(&mut self, l: usize, gain: Complex64) {
        self.0[l - 1] += gain;
    }
}

/// Per-BS tap vectors of the three link families. IRS families are
/// indexed `[bs][element]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapBundle {
    pub ata: [TapVector; 2],
    pub aia: [Vec<TapVector>; 2],
    pub aita: [Vec<TapVector>; 2],
}

impl TapBundle {
    pub fn n_taps(&self) -> usize {
        self.ata[0].len()
    }

    pub fn n_elements(&self) -> usize {
        self.aia[0].len()
    }
}

/// Reflection coefficients `phi[element][symbol]`, symbol 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrsProfile {
    pub phi: Vec<Vec<Complex64>>,
}

impl IrsProfile {
    /// Off in symbol 0, i.i.d. uniform unit-modulus afterwards.
    pub fn random(n_elements: usize, n_symbols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = (0..n_elements)
            .map(|_| {
                (0..n_symbols)
                    .map(|q| {
                        if q == 0 {
                            ZERO
                        } else {
                            Complex64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>())
                        }
                    })
                    .collect()
            })
            .collect();
        Self { phi }
    }

    pub fn constant(n_elements: usize, n_symbols: usize, value: Complex64) -> Self {
        Self {
            phi: vec![vec![value; n_symbols]; n_elements],
        }
    }

    pub fn n_symbols(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }
}

fn path_gain(a0: f64, segments: &[f64], rng: &mut ChaCha8Rng) -> Complex64 {
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    let attenuation: f64 = segments.iter().map(|d| d.max(1.0)).product();
    Complex64::from_polar(a0 / attenuation, theta)
}

/// Deposits each path's gain `A0·e^{jθ}/Π(segment lengths)` into its tap.
/// Targets in a shared tap add coherently.
pub fn synth_taps(scenario: &Scenario, config: &SystemConfig, seed: u64) -> Result<TapBundle> {
    let a0 = config.gain_ref()?;
    let n_taps = config.n_taps;
    let n_el = config.n_irs_elements;
    let truth = distances(scenario);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ata = [TapVector::zeros(n_taps), TapVector::zeros(n_taps)];
    let mut aia = [vec![TapVector::zeros(n_taps); n_el], vec![TapVector::zeros(n_taps); n_el]];
    let mut aita = aia.clone();

    for m in 0..2 {
        for k in 0..scenario.n_targets() {
            let d = truth.d_at[m][k];
            let l = delay_bin(d, PathKind::BsTargetBs, config)?;
            ata[m].deposit(l, path_gain(a0, &[d, d], &mut rng));
        }
        let d_ai = truth.d_ai[m];
        let l_aia = delay_bin(d_ai, PathKind::BsIrsBs, config)?;
        for taps in aia[m].iter_mut() {
            taps.deposit(l_aia, path_gain(a0, &[d_ai, d_ai], &mut rng));
        }
        for taps in aita[m].iter_mut() {
            for k in 0..scenario.n_targets() {
                let l = delay_bin(truth.d_aita[m][k], PathKind::BsIrsTargetBs, config)?;
                let segments = [d_ai, truth.d_it[k], truth.d_at[m][k]];
                taps.deposit(l, path_gain(a0, &segments, &mut rng));
            }
        }
    }
    Ok(TapBundle { ata, aia, aita })
}

/// `h_m^(q) = h^ATA_m + Σ_i φ_i^(q) (h^AIA_{m,i} + h^AITA_{m,i})`; `m`, `q` 0-based.
pub fn compose_channel(taps: &TapBundle, irs: &IrsProfile, m: usize, q: usize) -> TapVector {
    let mut h = taps.ata[m].clone();
    for (i, (aia, aita)) in taps.aia[m].iter().zip(&taps.aita[m]).enumerate() {
        let phi = irs.phi[i][q];
        if phi == ZERO {
            continue;
        }
        for (out, (a, b)) in h.0.iter_mut().zip(aia.0.iter().zip(&aita.0)) {
            *out += phi * (a + b);
        }
    }
    h
}

/// Time-domain samples `Wᴴ √p s` with the unitary DFT matrix `W`.
pub fn ofdm_time_signal(symbols: &[Complex64], power_mw: f64) -> Vec<Complex64> {
    let n = symbols.len();
    if n == 0 {
        return Vec::new();
    }
    let scale = power_mw.sqrt() / (n as f64).sqrt();
    let mut buf: Vec<Complex64> = symbols.iter().map(|s| s * scale).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Received signals of one resource block. Indexing is `[bs][symbol][row]`
/// with rows following the BS's ascending sub-carrier list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedSignal {
    pub y: [Vec<Vec<Complex64>>; 2],
    pub symbols: [Vec<Vec<Complex64>>; 2],
    /// 1-based owned sub-carriers `𝒩_m`.
    pub subcarriers: [Vec<usize>; 2],
    pub noise_var: f64,
    /// Per-sub-carrier transmit power `p_m` (mW).
    pub power_mw: [f64; 2],
}

impl ReceivedSignal {
    /// Received signal divided by the transmitted symbols, sub-carrier-wise.
    pub fn normalized(&self, m: usize, q: usize) -> Vec<Complex64> {
        self.y[m][q].iter().zip(&self.symbols[m][q]).map(|(y, s)| y / s).collect()
    }

    pub fn n_symbols(&self) -> usize {
        self.y[0].len()
    }
}

fn qpsk(rng: &mut ChaCha8Rng) -> Complex64 {
    let k = rng.random_range(0..4u8) as f64;
    Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 + k * std::f64::consts::FRAC_PI_2)
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// `y = √p_m diag(s̃) E_m h_m^(q) + z` for both BSs and all Q symbols,
/// with unit-modulus QPSK symbols and `z ~ CN(0, σ² I)`.
pub fn simulate_rx(taps: &TapBundle, irs: &IrsProfile, config: &SystemConfig, seed: u64) -> Result<ReceivedSignal> {
    config.validate()?;
    let sets = config.subcarrier_sets()?;
    let noise_var = config.noise_variance_mw();
    let power_mw = [config.subcarrier_power_mw(0)?, config.subcarrier_power_mw(1)?];
    let n_symbols = irs.n_symbols().max(config.n_symbols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut y: [Vec<Vec<Complex64>>; 2] = Default::default();
    let mut symbols: [Vec<Vec<Complex64>>; 2] = Default::default();
    for m in 0..2 {
        let steering = SteeringOperator::new(config.n_subcarriers, &sets[m], config.n_taps);
        let amp = power_mw[m].sqrt();
        for q in 0..n_symbols {
            let s: Vec<Complex64> = (0..sets[m].len()).map(|_| qpsk(&mut rng)).collect();
            let h = compose_channel(taps, irs, m, q);
            let eh = steering.apply(&h.0);
            let rx = eh
                .iter()
                .zip(&s)
                .map(|(e, s)| amp * s * e + complex_gaussian(&mut rng, noise_var))
                .collect();
            y[m].push(rx);
            symbols[m].push(s);
        }
    }
    Ok(ReceivedSignal {
        y,
        symbols,
        subcarriers: sets,
        noise_var,
        power_mw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Placement, Point2D};
    use approx::assert_relative_eq;

    fn scene(targets: Vec<Point2D>) -> Scenario {
        let p = Placement::default();
        Scenario {
            bs: [p.bs1, p.bs2],
            irs: p.irs,
            targets,
        }
    }

    #[test]
    fn single_target_single_ata_tap() {
        // 30 m from BS 1 at (-100, 0)
        let cfg = SystemConfig::default();
        let taps = synth_taps(&scene(vec![Point2D::new(-70.0, 0.0)]), &cfg, 3).unwrap();
        assert_eq!(taps.ata[0].support(), vec![80]);
        let a0 = cfg.gain_ref().unwrap();
        assert_relative_eq!(taps.ata[0].tap(80).norm(), a0 / 900.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_targets_keep_irs_link() {
        let cfg = SystemConfig::default();
        let taps = synth_taps(&scene(vec![]), &cfg, 3).unwrap();
        let l_aia = delay_bin(11600f64.sqrt(), PathKind::BsIrsBs, &cfg).unwrap();
        for m in 0..2 {
            assert!(taps.ata[m].support().is_empty());
            assert!(taps.aita[m].iter().all(|t| t.support().is_empty()));
            assert!(taps.aia[m].iter().all(|t| t.support() == vec![l_aia]));
        }
    }

    #[test]
    fn two_targets_two_taps_with_model_gains() {
        let cfg = SystemConfig::default();
        let targets = vec![Point2D::new(0.0, 40.0), Point2D::new(20.0, 60.0)];
        let s = scene(targets.clone());
        let taps = synth_taps(&s, &cfg, 9).unwrap();
        let a0 = cfg.gain_ref().unwrap();
        for m in 0..2 {
            assert_eq!(taps.ata[m].support().len(), 2);
            for t in &targets {
                let d = t.distance(&s.bs[m]);
                let l = delay_bin(d, PathKind::BsTargetBs, &cfg).unwrap();
                assert_relative_eq!(taps.ata[m].tap(l).norm(), a0 / (d * d), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn compose_reduces_to_ata_when_off_and_sums_with_unit_phi() {
        let cfg = SystemConfig {
            n_irs_elements: 1,
            ..Default::default()
        };
        let taps = synth_taps(&scene(vec![Point2D::new(5.0, 45.0)]), &cfg, 1).unwrap();
        let off = IrsProfile::random(1, 7, 4);
        assert_eq!(compose_channel(&taps, &off, 0, 0), taps.ata[0]);
        let one = IrsProfile::constant(1, 7, Complex64::new(1.0, 0.0));
        let h = compose_channel(&taps, &one, 1, 3);
        for l in 0..cfg.n_taps {
            assert_eq!(h.0[l], taps.ata[1].0[l] + taps.aia[1][0].0[l] + taps.aita[1][0].0[l]);
        }
    }

    #[test]
    fn compose_is_linear_in_phi() {
        let cfg = SystemConfig {
            n_irs_elements: 3,
            ..Default::default()
        };
        let taps = synth_taps(&scene(vec![Point2D::new(5.0, 45.0), Point2D::new(-20.0, 30.0)]), &cfg, 1).unwrap();
        let irs = IrsProfile::random(3, 4, 8);
        let alpha = Complex64::new(0.3, -1.7);
        let scaled = IrsProfile {
            phi: irs.phi.iter().map(|r| r.iter().map(|p| p * alpha).collect()).collect(),
        };
        let zero = IrsProfile::constant(3, 4, ZERO);
        let base = compose_channel(&taps, &zero, 0, 2);
        let a = compose_channel(&taps, &irs, 0, 2);
        let b = compose_channel(&taps, &scaled, 0, 2);
        for l in 0..cfg.n_taps {
            let lhs = b.0[l] - base.0[l];
            let rhs = alpha * (a.0[l] - base.0[l]);
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn ofdm_all_ones_is_impulse() {
        let n = 64;
        let x = ofdm_time_signal(&vec![Complex64::new(1.0, 0.0); n], 1.0);
        assert_relative_eq!(x[0].re, (n as f64).sqrt(), max_relative = 1e-12);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-12));
        let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert_relative_eq!(energy, n as f64, max_relative = 1e-12);
        assert!(ofdm_time_signal(&vec![ZERO; 8], 3.0).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn ofdm_preserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<Complex64> = (0..128).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let p = 2.5;
        let x = ofdm_time_signal(&s, p);
        let es: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert_relative_eq!(ex, p * es, max_relative = 1e-10);
    }

    fn tiny_config(n: usize, n_taps: usize) -> SystemConfig {
        SystemConfig {
            n_subcarriers: n,
            n_taps,
            n_irs_elements: 1,
            n_symbols: 2,
            noise_psd_dbm_hz: -1000.0,
            ..Default::default()
        }
    }

    fn bundle_with_tap(n_taps: usize, l: usize, gain: Complex64) -> TapBundle {
        let mut ata = TapVector::zeros(n_taps);
        ata.deposit(l, gain);
        TapBundle {
            ata: [ata.clone(), ata],
            aia: [vec![TapVector::zeros(n_taps)], vec![TapVector::zeros(n_taps)]],
            aita: [vec![TapVector::zeros(n_taps)], vec![TapVector::zeros(n_taps)]],
        }
    }

    #[test]
    fn flat_noiseless_channel() {
        let cfg = tiny_config(16, 1);
        let taps = bundle_with_tap(1, 1, Complex64::new(1.0, 0.0));
        let irs = IrsProfile::random(1, 2, 0);
        let rx = simulate_rx(&taps, &irs, &cfg, 5).unwrap();
        for m in 0..2 {
            let amp = rx.power_mw[m].sqrt();
            for q in 0..2 {
                for v in rx.normalized(m, q) {
                    assert!((v - amp).norm() < 1e-9 * amp);
                }
            }
        }
    }

    #[test]
    fn single_tap_steering_phase() {
        let cfg = tiny_config(32, 8);
        let h = Complex64::new(0.4, -0.9);
        let l = 5;
        let taps = bundle_with_tap(8, l, h);
        let rx = simulate_rx(&taps, &IrsProfile::random(1, 2, 0), &cfg, 5).unwrap();
        for m in 0..2 {
            let amp = rx.power_mw[m].sqrt();
            for (row, v) in rx.normalized(m, 0).iter().enumerate() {
                let n = rx.subcarriers[m][row];
                let phase = -std::f64::consts::TAU * ((n - 1) * (l - 1)) as f64 / 32.0;
                let want = amp * h * Complex64::from_polar(1.0, phase);
                assert!((v - want).norm() < 1e-9 * amp);
            }
        }
    }

    #[test]
    fn normalized_noise_has_configured_variance() {
        let cfg = SystemConfig {
            n_symbols: 2,
            n_irs_elements: 1,
            ..Default::default()
        };
        let taps = bundle_with_tap(cfg.n_taps, 1, ZERO);
        let rx = simulate_rx(&taps, &IrsProfile::random(1, 2, 0), &cfg, 77).unwrap();
        let samples: Vec<Complex64> = (0..2).flat_map(|m| (0..2).map(move |q| (m, q))).flat_map(|(m, q)| rx.normalized(m, q)).collect();
        let var = samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / samples.len() as f64;
        assert_relative_eq!(var, cfg.noise_variance_mw(), max_relative = 0.05);
    }

    #[test]
    fn simulate_is_deterministic() {
        let cfg = SystemConfig::default();
        let s = scene(vec![Point2D::new(3.0, 20.0)]);
        let taps = synth_taps(&s, &cfg, 1).unwrap();
        let irs = IrsProfile::random(cfg.n_irs_elements, cfg.n_symbols, 2);
        let a = simulate_rx(&taps, &irs, &cfg, 3).unwrap();
        let b = simulate_rx(&taps, &irs, &cfg, 3).unwrap();
        let c = simulate_rx(&taps, &irs, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn irs_off_symbol_has_no_irs_contribution() {
        let cfg = SystemConfig {
            noise_psd_dbm_hz: -1000.0,
            ..Default::default()
        };
        let s = scene(vec![Point2D::new(3.0, 20.0)]);
        let taps = synth_taps(&s, &cfg, 1).unwrap();
        let irs = IrsProfile::random(cfg.n_irs_elements, cfg.n_symbols, 2);
        let rx = simulate_rx(&taps, &irs, &cfg, 3).unwrap();
        let sets = cfg.subcarrier_sets().unwrap();
        for m in 0..2 {
            let e = SteeringOperator::new(cfg.n_subcarriers, &sets[m], cfg.n_taps).with_scale(rx.power_mw[m].sqrt());
            let want = e.apply(&taps.ata[m].0);
            for (v, w) in rx.normalized(m, 0).iter().zip(&want) {
                assert!((v - w).norm() <= 1e-9 * w.norm().max(1e-30) + 1e-300);
            }
        }
    }
}
