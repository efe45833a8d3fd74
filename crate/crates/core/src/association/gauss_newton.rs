//! Per-target maximum-likelihood trilateration from two BS ranges and two
//! estimates of the IRS range, solved with damped Gauss-Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Anchors, Point2D};

/// Ranges attributed to one target by an association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetObservation {
    pub d_at: [f64; 2],
    /// IRS range inferred through BS 1 and through BS 2.
    pub d_it: [f64; 2],
}

/// Error variances for one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetVariances {
    pub at: [f64; 2],
    pub it: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussNewtonOptions {
    pub max_iters: usize,
    /// Stop once an accepted step is shorter than this (m).
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step_tol: 1e-8,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetFit {
    pub position: Point2D,
    pub cost: f64,
    pub iterations: usize,
    /// Which multi-start seed produced the fit.
    pub start: usize,
}

/// Whitened residual vector `[BS1, BS2, IRS via BS1, IRS via BS2]`.
pub fn residuals(p: Point2D, obs: &TargetObservation, anchors: &Anchors, var: &TargetVariances) -> [f64; 4] {
    let r_irs = p.distance(&anchors.irs);
    [
        (obs.d_at[0] - p.distance(&anchors.bs[0])) / var.at[0].sqrt(),
        (obs.d_at[1] - p.distance(&anchors.bs[1])) / var.at[1].sqrt(),
        (obs.d_it[0] - r_irs) / var.it[0].sqrt(),
        (obs.d_it[1] - r_irs) / var.it[1].sqrt(),
    ]
}

/// Analytic Jacobian of [`residuals`] with respect to `(x, y)`.
pub fn jacobian(p: Point2D, anchors: &Anchors, var: &TargetVariances) -> [[f64; 2]; 4] {
    let unit = |a: &Point2D| {
        let d = p.distance(a);
        if d == 0.0 {
            [0.0, 0.0]
        } else {
            [(p.x - a.x) / d, (p.y - a.y) / d]
        }
    };
    let scaled = |u: [f64; 2], v: f64| {
        let s = -1.0 / v.sqrt();
        [u[0] * s, u[1] * s]
    };
    let ui = unit(&anchors.irs);
    [
        scaled(unit(&anchors.bs[0]), var.at[0]),
        scaled(unit(&anchors.bs[1]), var.at[1]),
        scaled(ui, var.it[0]),
        scaled(ui, var.it[1]),
    ]
}

/// ML objective: sum of squared whitened residuals.
pub fn objective(p: Point2D, obs: &TargetObservation, anchors: &Anchors, var: &TargetVariances) -> f64 {
    residuals(p, obs, anchors, var).iter().map(|r| r * r).sum()
}

/// Damped Gauss-Newton from a single start. Steps are accepted only if they
/// lower the objective; damping ×10 on rejection, ÷10 on acceptance.
pub fn fit_from(
    start: Point2D,
    obs: &TargetObservation,
    anchors: &Anchors,
    var: &TargetVariances,
    opts: &GaussNewtonOptions,
) -> (Point2D, f64, usize) {
    let mut p = start;
    let mut cost = objective(p, obs, anchors, var);
    let mut damping = opts.initial_damping;
    let mut iters = 0;
    while iters < opts.max_iters && cost > 0.0 {
        iters += 1;
        let r = residuals(p, obs, anchors, var);
        let j = jacobian(p, anchors, var);
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for (row, res) in j.iter().zip(&r) {
            for u in 0..2 {
                g[u] += row[u] * res;
                for v in 0..2 {
                    a[u][v] += row[u] * row[v];
                }
            }
        }
        let scale = a[0][0].max(a[1][1]).max(1e-12);
        let mut accepted = false;
        while damping < 1e16 {
            let mu = damping * scale;
            let (a00, a11, a01) = (a[0][0] + mu, a[1][1] + mu, a[0][1]);
            let det = a00 * a11 - a01 * a01;
            let dx = -(a11 * g[0] - a01 * g[1]) / det;
            let dy = -(a00 * g[1] - a01 * g[0]) / det;
            let trial = Point2D::new(p.x + dx, p.y + dy);
            let trial_cost = objective(trial, obs, anchors, var);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step = dx.hypot(dy);
                p = trial;
                cost = trial_cost;
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
                if step < opts.step_tol {
                    return (p, cost, iters);
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    (p, cost, iters)
}

/// Intersection of the two BS range circles nearest the IRS, projected onto
/// the BS baseline geometry when the circles do not meet.
pub fn circle_intersection_start(obs: &TargetObservation, anchors: &Anchors) -> Point2D {
    let [b1, b2] = anchors.bs;
    let base = b1.distance(&b2);
    let u = [(b2.x - b1.x) / base, (b2.y - b1.y) / base];
    let v = [-u[1], u[0]];
    let (r1, r2) = (obs.d_at[0], obs.d_at[1]);
    let a = (r1 * r1 - r2 * r2 + base * base) / (2.0 * base);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let foot = Point2D::new(b1.x + a * u[0], b1.y + a * u[1]);
    let plus = Point2D::new(foot.x + h * v[0], foot.y + h * v[1]);
    let minus = Point2D::new(foot.x - h * v[0], foot.y - h * v[1]);
    if plus.distance(&anchors.irs) <= minus.distance(&anchors.irs) {
        plus
    } else {
        minus
    }
}

/// Reflection of `p` across the line through the two BSs.
pub fn mirror_across_baseline(p: Point2D, anchors: &Anchors) -> Point2D {
    let [b1, b2] = anchors.bs;
    let base = b1.distance(&b2);
    let u = [(b2.x - b1.x) / base, (b2.y - b1.y) / base];
    let w = [p.x - b1.x, p.y - b1.y];
    let along = w[0] * u[0] + w[1] * u[1];
    let proj = [b1.x + along * u[0], b1.y + along * u[1]];
    Point2D::new(2.0 * proj[0] - p.x, 2.0 * proj[1] - p.y)
}

/// Multi-start fit: circle intersection nearest the IRS, its mirror, and the
/// IRS itself. Returns the lowest-cost finite result.
pub fn localize_target(
    obs: &TargetObservation,
    anchors: &Anchors,
    var: &TargetVariances,
    opts: &GaussNewtonOptions,
) -> Result<TargetFit> {
    let a = circle_intersection_start(obs, anchors);
    let starts = [a, mirror_across_baseline(a, anchors), anchors.irs];
    let mut best: Option<TargetFit> = None;
    for (i, s) in starts.into_iter().enumerate() {
        let (position, cost, iterations) = fit_from(s, obs, anchors, var, opts);
        if !cost.is_finite() || !position.is_finite() {
            continue;
        }
        if best.is_none_or(|b| cost < b.cost) {
            best = Some(TargetFit {
                position,
                cost,
                iterations,
                start: i,
            });
        }
    }
    best.ok_or_else(|| {
        Error::LocalizationFailure(format!(
            "all starts diverged for d_at = {:?}, d_it = {:?}",
            obs.d_at, obs.d_it
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors() -> Anchors {
        Anchors {
            bs: [Point2D::new(-100.0, 0.0), Point2D::new(100.0, 0.0)],
            irs: Point2D::new(0.0, 40.0),
        }
    }

    fn unit_var() -> TargetVariances {
        TargetVariances {
            at: [0.375f64.powi(2) / 12.0; 2],
            it: [(0.75f64.powi(2) + 0.375f64.powi(2)) / 12.0; 2],
        }
    }

    fn exact(p: Point2D) -> TargetObservation {
        let a = anchors();
        let d_it = p.distance(&a.irs);
        TargetObservation {
            d_at: [p.distance(&a.bs[0]), p.distance(&a.bs[1])],
            d_it: [d_it, d_it],
        }
    }

    #[test]
    fn exact_ranges_recover_target() {
        let truth = Point2D::new(10.0, 50.0);
        let obs = exact(truth);
        assert!((obs.d_at[0] - 120.8305).abs() < 1e-4);
        assert!((obs.d_at[1] - 102.9563).abs() < 1e-4);
        assert!((obs.d_it[0] - 14.1421).abs() < 1e-4);
        let fit = localize_target(&obs, &anchors(), &unit_var(), &GaussNewtonOptions::default()).unwrap();
        assert!(fit.position.distance(&truth) < 1e-6, "{:?}", fit);
    }

    #[test]
    fn target_at_irs_is_recovered() {
        let truth = Point2D::new(0.0, 40.0);
        let fit = localize_target(&exact(truth), &anchors(), &unit_var(), &GaussNewtonOptions::default()).unwrap();
        assert!(fit.position.distance(&truth) < 1e-6, "{:?}", fit);
    }

    #[test]
    fn irs_term_resolves_mirror_ambiguity() {
        let a = anchors();
        let truth = Point2D::new(10.0, 50.0);
        let obs = exact(truth);
        let mirror = mirror_across_baseline(truth, &a);
        assert_eq!(mirror, Point2D::new(10.0, -50.0));
        let var = unit_var();
        assert!(objective(truth, &obs, &a, &var) < objective(mirror, &obs, &a, &var));
        let opts = GaussNewtonOptions::default();
        let (_, mirror_cost, _) = fit_from(mirror, &obs, &a, &var, &opts);
        let fit = localize_target(&obs, &a, &var, &opts).unwrap();
        assert!(fit.position.y > 0.0);
        assert!(fit.cost <= mirror_cost);
    }

    #[test]
    fn accepted_steps_never_increase_cost() {
        let a = anchors();
        let var = unit_var();
        let obs = TargetObservation {
            d_at: [118.0, 104.0],
            d_it: [13.0, 15.5],
        };
        let opts = GaussNewtonOptions::default();
        let mut prev = f64::INFINITY;
        for n in 0..30 {
            let limited = GaussNewtonOptions { max_iters: n, ..opts };
            let (_, cost, _) = fit_from(Point2D::new(-30.0, 80.0), &obs, &a, &var, &limited);
            assert!(cost <= prev + 1e-12);
            prev = cost;
        }
    }

    #[test]
    fn circle_start_lies_on_both_circles() {
        let truth = Point2D::new(-25.0, 70.0);
        let s = circle_intersection_start(&exact(truth), &anchors());
        assert!(s.distance(&truth) < 1e-9);
    }
}
