//! OFDM, power, noise and IRS parameters shared by the channel simulator
//! and the range-recovery stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used for every delay-to-range conversion (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// How the N sub-carriers are split between the two base stations.
///
/// Sub-carrier indices are 1-based, as in the received-signal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Allocation {
    /// Odd sub-carriers to BS 1, even sub-carriers to BS 2.
    Interleaved,
    /// Lower half to BS 1, upper half to BS 2.
    Contiguous,
    Explicit { bs1: Vec<usize>, bs2: Vec<usize> },
}

/// Reference used to derive the path-gain constant `A0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainCalibration {
    /// Per-sub-carrier SNR of a BS-target-BS path at `ref_distance_m`.
    pub ref_snr_db: f64,
    /// Total BS transmit power at which `ref_snr_db` holds.
    pub ref_power_dbm: f64,
    pub ref_distance_m: f64,
    /// Explicit `A0`; overrides the calibration when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_ref: Option<f64>,
}

impl Default for GainCalibration {
    fn default() -> Self {
        Self {
            ref_snr_db: 25.0,
            ref_power_dbm: 39.0,
            ref_distance_m: 100.0,
            gain_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    /// OFDM symbols per resource block; symbol 1 has the IRS switched off.
    pub n_symbols: usize,
    /// Total transmit power of each BS, spread evenly over its sub-carriers.
    pub tx_power_dbm: [f64; 2],
    pub noise_psd_dbm_hz: f64,
    pub n_irs_elements: usize,
    pub n_taps: usize,
    pub carrier_freq_hz: f64,
    pub allocation: Allocation,
    pub gain: GainCalibration,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 2048,
            subcarrier_spacing_hz: 195_312.5,
            n_symbols: 7,
            tx_power_dbm: [39.0, 39.0],
            noise_psd_dbm_hz: -174.0,
            n_irs_elements: 16,
            n_taps: 512,
            carrier_freq_hz: 28.0e9,
            allocation: Allocation::Interleaved,
            gain: GainCalibration::default(),
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl SystemConfig {
    /// Overall bandwidth `B = N Δf` in Hz.
    pub fn bandwidth_hz(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Width of one tap in total propagation-path length (m).
    pub fn path_bin_width(&self) -> f64 {
        SPEED_OF_LIGHT / self.bandwidth_hz()
    }

    /// Width of one tap in one-way range for round-trip paths (m).
    pub fn range_bin_width(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz())
    }

    /// Per-sub-carrier noise variance σ² in mW.
    pub fn noise_variance_mw(&self) -> f64 {
        dbm_to_mw(self.noise_psd_dbm_hz) * self.subcarrier_spacing_hz
    }

    /// Per-sub-carrier transmit power `p_m` of BS `m` (0-based) in mW.
    pub fn subcarrier_power_mw(&self, m: usize) -> Result<f64> {
        let owned = self.subcarrier_sets()?[m].len();
        Ok(dbm_to_mw(self.tx_power_dbm[m]) / owned as f64)
    }

    /// The path-gain constant `A0` (amplitude at 1 m).
    pub fn gain_ref(&self) -> Result<f64> {
        if let Some(a0) = self.gain.gain_ref {
            return Ok(a0);
        }
        let sets = self.subcarrier_sets()?;
        let owned = sets[0].len().max(1) as f64;
        let p_ref = dbm_to_mw(self.gain.ref_power_dbm) / owned;
        let snr = 10f64.powf(self.gain.ref_snr_db / 10.0);
        let d2 = self.gain.ref_distance_m * self.gain.ref_distance_m;
        Ok(d2 * (snr * self.noise_variance_mw() / p_ref).sqrt())
    }

    /// Sub-carrier sets `[𝒩_1, 𝒩_2]`, 1-based and ascending.
    pub fn subcarrier_sets(&self) -> Result<[Vec<usize>; 2]> {
        let n = self.n_subcarriers;
        let sets = match &self.allocation {
            Allocation::Interleaved => [
                (1..=n).filter(|i| i % 2 == 1).collect(),
                (1..=n).filter(|i| i % 2 == 0).collect(),
            ],
            Allocation::Contiguous => [(1..=n / 2).collect(), (n / 2 + 1..=n).collect()],
            Allocation::Explicit { bs1, bs2 } => {
                let mut a = bs1.clone();
                let mut b = bs2.clone();
                a.sort_unstable();
                b.sort_unstable();
                [a, b]
            }
        };
        check_partition(&sets, n)?;
        Ok(sets)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers must be positive".into());
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !self.subcarrier_spacing_hz.is_finite() {
            return bad("bandwidth B = N·Δf must be positive (subcarrier_spacing_hz)".into());
        }
        if self.n_symbols < 2 {
            return bad(format!(
                "n_symbols = {} but Q ≥ 2 is required (one IRS-off symbol plus at least one IRS-on symbol)",
                self.n_symbols
            ));
        }
        if self.n_taps == 0 || self.n_taps > self.n_subcarriers {
            return bad(format!(
                "n_taps = {} must lie in 1..=n_subcarriers ({})",
                self.n_taps, self.n_subcarriers
            ));
        }
        if self.n_irs_elements == 0 {
            return bad("n_irs_elements must be at least 1".into());
        }
        if self.tx_power_dbm.iter().any(|p| !p.is_finite()) || !self.noise_psd_dbm_hz.is_finite() {
            return bad("tx_power_dbm and noise_psd_dbm_hz must be finite".into());
        }
        if let Some(a0) = self.gain.gain_ref {
            if !(a0 > 0.0) {
                return bad("gain.gain_ref must be positive".into());
            }
        }
        self.subcarrier_sets()?;
        Ok(())
    }
}

fn check_partition(sets: &[Vec<usize>; 2], n: usize) -> Result<()> {
    let mut owner = vec![0u8; n + 1];
    for (m, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "allocation: BS {} owns no sub-carriers",
                m + 1
            )));
        }
        for &sc in set {
            if sc == 0 || sc > n {
                return Err(Error::InvalidConfig(format!(
                    "allocation: sub-carrier {sc} outside 1..={n}"
                )));
            }
            if owner[sc] != 0 {
                return Err(Error::InvalidConfig(format!(
                    "allocation: N1 ∩ N2 must be empty (sub-carrier {sc} assigned twice)"
                )));
            }
            owner[sc] = m as u8 + 1;
        }
    }
    if let Some(sc) = (1..=n).find(|&sc| owner[sc] == 0) {
        return Err(Error::InvalidConfig(format!(
            "allocation: N1 ∪ N2 must cover 1..={n} (sub-carrier {sc} unassigned)"
        )));
    }
    Ok(())
}
