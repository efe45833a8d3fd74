//! Scene geometry: anchors, targets, ground-truth ranges and the mapping
//! from path length to channel-tap index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// The three anchors with known coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub bs: [Point2D; 2],
    pub irs: Point2D,
}

impl Anchors {
    /// BS-to-IRS distance `d_m^AI` for both base stations.
    pub fn bs_irs_distances(&self) -> [f64; 2] {
        [self.bs[0].distance(&self.irs), self.bs[1].distance(&self.irs)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bs: [Point2D; 2],
    pub irs: Point2D,
    pub targets: Vec<Point2D>,
}

impl Scenario {
    pub fn new(bs: [Point2D; 2], irs: Point2D, targets: Vec<Point2D>) -> Result<Self> {
        let s = Self { bs, irs, targets };
        s.validate()?;
        Ok(s)
    }

    pub fn anchors(&self) -> Anchors {
        Anchors {
            bs: self.bs,
            irs: self.irs,
        }
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidArgument("scenario needs at least one target".into()));
        }
        let all_finite = self.bs.iter().chain([&self.irs]).chain(&self.targets).all(Point2D::is_finite);
        if !all_finite {
            return Err(Error::InvalidArgument("scenario coordinates must be finite".into()));
        }
        if self.bs[0] == self.bs[1] {
            return Err(Error::InvalidArgument("the two BS positions coincide".into()));
        }
        if self.bs.contains(&self.irs) {
            return Err(Error::InvalidArgument("IRS is collocated with a BS".into()));
        }
        Ok(())
    }
}

/// Ground-truth distances. Indexing is `[bs][target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTruth {
    pub d_at: [Vec<f64>; 2],
    pub d_ai: [f64; 2],
    pub d_it: Vec<f64>,
    /// Length of the BS-IRS-target-BS path.
    pub d_aita: [Vec<f64>; 2],
}

pub fn distances(scenario: &Scenario) -> RangeTruth {
    let d_ai = scenario.anchors().bs_irs_distances();
    let d_it: Vec<f64> = scenario.targets.iter().map(|t| t.distance(&scenario.irs)).collect();
    let d_at = scenario.bs.map(|b| scenario.targets.iter().map(|t| t.distance(&b)).collect::<Vec<_>>());
    let d_aita = [0, 1].map(|m| {
        d_at[m]
            .iter()
            .zip(&d_it)
            .map(|(at, it)| d_ai[m] + it + at)
            .collect::<Vec<_>>()
    });
    RangeTruth {
        d_at,
        d_ai,
        d_it,
        d_aita,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathKind {
    /// BS → target → BS; `distance` is the one-way BS-target range.
    BsTargetBs,
    /// BS → IRS → BS; `distance` is the one-way BS-IRS range.
    BsIrsBs,
    /// BS → IRS → target → BS; `distance` is the full path length.
    BsIrsTargetBs,
}

impl PathKind {
    pub fn name(self) -> &'static str {
        match self {
            PathKind::BsTargetBs => "BS-target-BS",
            PathKind::BsIrsBs => "BS-IRS-BS",
            PathKind::BsIrsTargetBs => "BS-IRS-target-BS",
        }
    }

    /// Bin width in units of `distance` for this kind.
    pub fn bin_width(self, config: &SystemConfig) -> f64 {
        match self {
            PathKind::BsTargetBs | PathKind::BsIrsBs => config.range_bin_width(),
            PathKind::BsIrsTargetBs => config.path_bin_width(),
        }
    }
}

/// Smallest 1-based `l` with `(l-1)·w ≤ d ≤ l·w`; no upper bound check.
pub fn bin_index(distance: f64, width: f64) -> usize {
    let mut l = (distance / width).ceil().max(1.0) as usize;
    // guard against rounding in the division
    while l > 1 && distance <= (l - 1) as f64 * width {
        l -= 1;
    }
    while distance > l as f64 * width {
        l += 1;
    }
    l
}

/// Centre of bin `l` (1-based) of width `w`.
pub fn bin_midpoint(l: usize, width: f64) -> f64 {
    (l as f64 - 1.0) * width + width / 2.0
}

/// Tap index (1-based) of a path of the given kind.
pub fn delay_bin(distance: f64, kind: PathKind, config: &SystemConfig) -> Result<usize> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delay_bin needs a positive finite distance, got {distance}"
        )));
    }
    let bin = bin_index(distance, kind.bin_width(config));
    if bin > config.n_taps {
        return Err(Error::DelaySpreadExceeded {
            kind: kind.name(),
            distance,
            bin,
            n_taps: config.n_taps,
        });
    }
    Ok(bin)
}

/// Tap bins occupied by each target, per BS.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBins {
    pub ata: [Vec<usize>; 2],
    pub aita: [Vec<usize>; 2],
    pub aia: [usize; 2],
}

pub fn target_bins(scenario: &Scenario, config: &SystemConfig) -> Result<TargetBins> {
    let truth = distances(scenario);
    let mut ata: [Vec<usize>; 2] = Default::default();
    let mut aita: [Vec<usize>; 2] = Default::default();
    let mut aia = [0; 2];
    for m in 0..2 {
        aia[m] = delay_bin(truth.d_ai[m], PathKind::BsIrsBs, config)?;
        for k in 0..scenario.n_targets() {
            ata[m].push(delay_bin(truth.d_at[m][k], PathKind::BsTargetBs, config)?);
            aita[m].push(delay_bin(truth.d_aita[m][k], PathKind::BsIrsTargetBs, config)?);
        }
    }
    Ok(TargetBins { ata, aita, aia })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Placement {
    pub bs1: Point2D,
    pub bs2: Point2D,
    pub irs: Point2D,
    /// Targets are drawn uniformly over this disc around the IRS.
    pub radius: f64,
    /// Minimum tap distance between two targets within one range set.
    pub min_bin_separation: usize,
    /// Also reject target paths that share a tap with a path of another
    /// kind at the same BS (ATA vs AITA vs the BS-IRS-BS tap).
    pub reject_cross_path_collisions: bool,
    pub max_attempts: usize,
}

impl Default for Placement {
    fn default() -> Self {
        Self {
            bs1: Point2D::new(-100.0, 0.0),
            bs2: Point2D::new(100.0, 0.0),
            irs: Point2D::new(0.0, 40.0),
            radius: 50.0,
            min_bin_separation: 1,
            reject_cross_path_collisions: true,
            max_attempts: 100_000,
        }
    }
}

fn bins_of(point: &Point2D, placement: &Placement, config: &SystemConfig) -> ([usize; 2], [usize; 2]) {
    let d_it = point.distance(&placement.irs);
    let mut ata = [0; 2];
    let mut aita = [0; 2];
    for (m, bs) in [placement.bs1, placement.bs2].iter().enumerate() {
        let d_at = point.distance(bs);
        let d_ai = bs.distance(&placement.irs);
        ata[m] = bin_index(d_at, config.range_bin_width());
        aita[m] = bin_index(d_ai + d_it + d_at, config.path_bin_width());
    }
    (ata, aita)
}

/// Draws `k` targets uniformly over the placement disc, rejecting draws
/// that are not resolvable in tap space. Pure in `(seed, k, placement, config)`.
pub fn sample_scenario(seed: u64, k: usize, placement: &Placement, config: &SystemConfig) -> Result<Scenario> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if !(placement.radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "placement radius must be positive, got {}",
            placement.radius
        )));
    }
    let aia = [placement.bs1, placement.bs2].map(|b| bin_index(b.distance(&placement.irs), config.range_bin_width()));
    let sep = placement.min_bin_separation.max(1);
    let close = |a: usize, b: usize| a.abs_diff(b) < sep;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets: Vec<Point2D> = Vec::with_capacity(k);
    let mut bins: Vec<([usize; 2], [usize; 2])> = Vec::with_capacity(k);
    let mut attempts = 0;
    while targets.len() < k {
        if attempts >= placement.max_attempts {
            return Err(Error::CongestedScene { targets: k, attempts });
        }
        attempts += 1;
        let r = placement.radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let p = Point2D::new(placement.irs.x + r * theta.cos(), placement.irs.y + r * theta.sin());
        let (ata, aita) = bins_of(&p, placement, config);

        let mut ok = bins
            .iter()
            .all(|(a, b)| (0..2).all(|m| !close(a[m], ata[m]) && !close(b[m], aita[m])));
        if ok && placement.reject_cross_path_collisions {
            ok = (0..2).all(|m| {
                ata[m] != aita[m]
                    && ata[m] != aia[m]
                    && aita[m] != aia[m]
                    && bins.iter().all(|(a, b)| a[m] != aita[m] && b[m] != ata[m])
            });
        }
        if ok {
            targets.push(p);
            bins.push((ata, aita));
        }
    }
    Scenario::new([placement.bs1, placement.bs2], placement.irs, targets)
}
