//! Reusable invariant checks and the small oracle scenarios they run on.

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use renewal::finite::FinitePoint;
use renewal::oracle::FinitePolicySystem;
use renewal::ratio::{
    bisect, pure_policy_ratio_opt, BisectionConfig, FractionalInstance, PurePoints,
};
use renewal::utility::{jensen_gap, UtilityFunction};

use crate::config::{Algorithm, PointConfig, RunConfig, ScenarioConfig, UtilitySpec};

/// Two policies `A = (y0 1, y1 1, T 1)` and `B = (4, 0, 2)` with `c1 = 0.5`.
pub fn ab_points() -> Vec<PointConfig> {
    vec![
        PointConfig {
            y: vec![1.0, 1.0],
            x: vec![],
            t: 1.0,
        },
        PointConfig {
            y: vec![4.0, 0.0],
            x: vec![],
            t: 2.0,
        },
    ]
}

pub const AB_TARGET: f64 = 0.5;

/// Two policies with one attribute: `A = (x 2, y1 1, T 1)`, `B = (x 1, y1 0, T 2)`.
pub fn attribute_points() -> Vec<PointConfig> {
    vec![
        PointConfig {
            y: vec![0.0, 1.0],
            x: vec![2.0],
            t: 1.0,
        },
        PointConfig {
            y: vec![0.0, 0.0],
            x: vec![1.0],
            t: 2.0,
        },
    ]
}

pub fn finite_config(
    points: Vec<PointConfig>,
    targets: Vec<f64>,
    algorithm: Algorithm,
    frames: u64,
    v: f64,
    seed: u64,
) -> RunConfig {
    RunConfig {
        scenario: ScenarioConfig::Finite {
            points,
            targets,
            noise: 0.0,
        },
        w: 1,
        ..RunConfig::task_network(algorithm, frames, v, 1, seed)
    }
}

pub fn ab_config(algorithm: Algorithm, frames: u64, v: f64, seed: u64) -> RunConfig {
    finite_config(ab_points(), vec![AB_TARGET], algorithm, frames, v, seed)
}

pub fn attribute_utility_config(util: UtilitySpec, frames: u64, v: f64, seed: u64) -> RunConfig {
    RunConfig {
        utility: Some(util),
        ..finite_config(
            attribute_points(),
            vec![AB_TARGET],
            Algorithm::Utility,
            frames,
            v,
            seed,
        )
    }
}

pub fn policy_system(points: &[PointConfig], targets: Vec<f64>) -> Result<FinitePolicySystem> {
    Ok(FinitePolicySystem::new(
        points.iter().map(FinitePoint::from).collect(),
        targets,
    )?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrawReport {
    pub draws: usize,
    pub violations: usize,
    pub worst: f64,
}

/// Random `(T, γ, φ)` draws with `φ` cycling through `-γ²`, `ln(1 + γ)` and a
/// two-dimensional weighted minimum. Every fourth draw repeats one `γ`, where
/// both sides must agree. Returns how many draws break the inequality (or the
/// equality) by more than `slack`.
pub fn jensen_draws(draws: usize, seed: u64, slack: f64) -> Result<DrawReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let neg_sq = UtilityFunction::general(|g| -g[0] * g[0], false);
    let log = UtilityFunction::general(|g| g[0].ln_1p(), true);
    let min_lin = UtilityFunction::min_linear(vec![1.0, 2.0]);
    let mut report = DrawReport {
        draws,
        ..Default::default()
    };
    for k in 0..draws {
        let (util, dim) = match k % 3 {
            0 => (&neg_sq, 1),
            1 => (&log, 1),
            _ => (&min_lin, 2),
        };
        let n = rng.random_range(1..=8);
        let constant = k % 4 == 3;
        let base: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut ts = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n);
        for _ in 0..n {
            ts.push(rng.random_range(0.1..10.0));
            gs.push(if constant {
                base.clone()
            } else {
                (0..dim).map(|_| rng.random_range(0.0..5.0)).collect()
            });
        }
        let (lhs, rhs) = jensen_gap(&ts, &gs, util)?;
        let excess = if constant {
            (lhs - rhs).abs()
        } else {
            lhs - rhs
        };
        report.worst = report.worst.max(excess);
        if excess > slack {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverReport {
    pub instances: usize,
    pub sign_violations: usize,
    pub monotonicity_violations: usize,
    pub reduction_violations: usize,
    pub iteration_violations: usize,
    pub max_reduction_error: f64,
}

impl SolverReport {
    pub fn clean(&self) -> bool {
        self.sign_violations
            + self.monotonicity_violations
            + self.reduction_violations
            + self.iteration_violations
            == 0
    }
}

/// Random pure-policy instances: `val(θ)` is strictly decreasing, positive
/// below the optimum and non-positive above it, bisection agrees with the
/// direct minimum within `1e-6`, and the iteration count stays within
/// `log2(range / tol) + 32`.
pub fn solver_draws(instances: usize, seed: u64) -> Result<SolverReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SolverReport {
        instances,
        ..Default::default()
    };
    let tol = 1e-7;
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(-10.0..10.0), rng.random_range(0.1..5.0)))
            .collect();
        let inst = PurePoints::new(pts.clone())?;
        let opt = pure_policy_ratio_opt(&pts)?;

        let probes: Vec<f64> = (0..16).map(|_| rng.random_range(-120.0..120.0)).collect();
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let vals: Vec<f64> = sorted
            .iter()
            .map(|t| inst.evaluate_inf(*t).map(|v| v.0))
            .collect::<renewal::Result<_>>()?;
        for (t, v) in sorted.iter().zip(&vals) {
            let wrong_sign = (*t < opt - 1e-9 && *v <= 0.0) || (*t > opt + 1e-9 && *v > 0.0);
            if wrong_sign {
                report.sign_violations += 1;
            }
        }
        if vals
            .windows(2)
            .zip(sorted.windows(2))
            .any(|(v, t)| t[1] > t[0] && v[1] >= v[0])
        {
            report.monotonicity_violations += 1;
        }

        // Deliberately narrow, possibly misplaced starting bracket.
        let lo = rng.random_range(-20.0..20.0);
        let hi = lo + rng.random_range(0.01..5.0);
        let cfg = BisectionConfig::new(lo, hi, tol)?;
        let res = bisect(&inst, &cfg)?;
        let err = (res.theta_star - opt).abs();
        report.max_reduction_error = report.max_reduction_error.max(err);
        if err > 1e-6 {
            report.reduction_violations += 1;
        }
        let limit = ((hi - lo) / tol).log2().max(0.0).ceil() as usize + 32;
        if res.iterations > limit {
            report.iteration_violations += 1;
        }
    }
    Ok(report)
}

pub fn check_at_most(name: &str, measured: f64, bound: f64) -> Result<String> {
    ensure!(measured <= bound, "{name}: {measured} exceeds {bound}");
    Ok(format!("{name}: {measured:.6} <= {bound:.6}"))
}

pub fn check_at_least(name: &str, measured: f64, bound: f64) -> Result<String> {
    ensure!(measured >= bound, "{name}: {measured} is below {bound}");
    Ok(format!("{name}: {measured:.6} >= {bound:.6}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_draws_are_clean() {
        let j = jensen_draws(300, 1, 1e-12).unwrap();
        assert_eq!(j.violations, 0, "{j:?}");
        let s = solver_draws(100, 2).unwrap();
        assert!(s.clean(), "{s:?}");
    }

    #[test]
    fn ab_system_matches_known_optimum() {
        let sys = policy_system(&ab_points(), vec![AB_TARGET]).unwrap();
        let r = renewal::oracle::oracle_ratio_opt(&sys, 100).unwrap();
        assert!((r - 1.5).abs() < 1e-9);
    }
}
