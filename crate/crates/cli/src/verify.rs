//! The reduced-scale invariant suite behind the `verify` subcommand.

use anyhow::{ensure, Result};
use serde::Serialize;

use renewal::dpp::{drift_constant, DiagnosticBounds};
use renewal::error::Error;
use renewal::oracle::{oracle_ratio_opt, oracle_util_opt, oracle_y0_opt};
use renewal::types::ConstraintTargets;
use renewal::utility::{utility_drift_constant, utility_lower_bound};

use crate::checks::{
    self, ab_config, ab_points, attribute_points, attribute_utility_config, AB_TARGET,
};
use crate::config::{Algorithm, BuiltScenario, RunConfig, ScenarioConfig, UtilitySpec};
use crate::run::{run, summary_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Quick,
    Full,
}

impl Scale {
    fn frames(self) -> u64 {
        match self {
            Self::Quick => 20_000,
            Self::Full => 100_000,
        }
    }

    fn draws(self) -> usize {
        match self {
            Self::Quick => 1_000,
            Self::Full => 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn record(name: &str, f: impl FnOnce() -> Result<String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult {
            name: name.into(),
            passed: true,
            detail,
        },
        Err(e) => CheckResult {
            name: name.into(),
            passed: false,
            detail: format!("{e:#}"),
        },
    }
}

fn ensure_clean(s: &crate::run::Summary) -> Result<()> {
    ensure!(s.passed(), "{}", s.failures.join("; "));
    Ok(())
}

fn finite_bounds(cfg: &RunConfig) -> Result<renewal::BoundsConfig> {
    match cfg.scenario.build()? {
        BuiltScenario::Finite(s) => Ok(s.realization_bounds()?),
        BuiltScenario::TaskNetwork(_) => anyhow::bail!("expected a finite scenario"),
    }
}

/// Runs every check; `user` adds the caller's configuration, capped at the
/// scale's frame budget.
pub fn verify(scale: Scale, user: Option<&RunConfig>) -> Vec<CheckResult> {
    let frames = scale.frames();
    let mut out = Vec::new();

    out.push(record("task network queue laws", || {
        let cfg = RunConfig::task_network(Algorithm::DppRatio, frames, 100.0, 10, 1);
        let s = run(&cfg, None)?.summary;
        ensure_clean(&s)?;
        for (l, r) in s.constraint_ratios.iter().enumerate() {
            // T_min = 1 on the task network.
            let slack = s.final_z[l] / s.frames as f64;
            checks::check_at_most(&format!("y{}/T", l + 1), *r, 0.25 + slack)?;
        }
        Ok(format!("utility {:.6}, T_bar {:.6}", s.utility, s.t_bar))
    }));

    out.push(record("deterministic queue bound (I^max = 11)", || {
        let mut cfg = RunConfig::task_network(Algorithm::DppRatio, frames, 100.0, 10, 2);
        cfg.scenario = ScenarioConfig::TaskNetwork {
            p_tran: 1.0,
            i_max: 11.0,
            constraint: 0.25,
        };
        let s = run(&cfg, None)?.summary;
        ensure_clean(&s)?;
        ensure!(
            s.deterministic_queue_bound == Some(1002.75),
            "bound not applied"
        );
        let peak = s.peak_z.iter().copied().fold(0.0, f64::max);
        checks::check_at_most("peak Z", peak, 1002.75)
    }));

    out.push(record("Jensen variation", || {
        let r = checks::jensen_draws(scale.draws(), 3, 1e-12)?;
        ensure!(
            r.violations == 0,
            "{} of {} draws violate (worst {:e})",
            r.violations,
            r.draws,
            r.worst
        );
        Ok(format!("{} draws, worst excess {:e}", r.draws, r.worst))
    }));

    out.push(record("bisection properties", || {
        let r = checks::solver_draws(scale.draws() / 10, 4)?;
        ensure!(r.clean(), "{r:?}");
        Ok(format!(
            "{} instances, max error {:e}",
            r.instances, r.max_reduction_error
        ))
    }));

    out.push(record("oracle equivalence: dpp-ratio", || {
        let sys = checks::policy_system(&ab_points(), vec![AB_TARGET])?;
        let opt = oracle_ratio_opt(&sys, 100)?;
        let cfg = ab_config(Algorithm::DppRatio, frames, 200.0, 5);
        let bounds = finite_bounds(&cfg)?;
        let b = drift_constant(&bounds, &ConstraintTargets::new(vec![AB_TARGET]));
        let s = run(&cfg, None)?.summary;
        ensure_clean(&s)?;
        checks::check_at_most("constraint", s.constraint_ratios[0], AB_TARGET + 0.01)?;
        checks::check_at_most(
            "objective",
            s.objective_ratio,
            opt + b / bounds.t_min / cfg.v + 0.02,
        )
    }));

    out.push(record("oracle equivalence: alt-form", || {
        let sys = checks::policy_system(&ab_points(), vec![AB_TARGET])?;
        let opt = oracle_y0_opt(&sys, 100)?;
        let cfg = ab_config(Algorithm::AltForm, frames, 200.0, 6);
        let bounds = finite_bounds(&cfg)?;
        let b = drift_constant(&bounds, &ConstraintTargets::new(vec![AB_TARGET]));
        let s = run(&cfg, None)?.summary;
        ensure_clean(&s)?;
        checks::check_at_most("y0 per frame", s.y0_bar, opt + b / cfg.v + 0.02)
    }));

    out.push(record("oracle equivalence: utility", || {
        let spec = UtilitySpec::Log1p { weights: vec![1.0] };
        let sys = checks::policy_system(&attribute_points(), vec![AB_TARGET])?;
        let opt = oracle_util_opt(&sys, &spec.build(), 10_000)?;
        let cfg = attribute_utility_config(spec, frames, 200.0, 7);
        let bounds = finite_bounds(&cfg)?;
        let d = utility_drift_constant(&bounds, &ConstraintTargets::new(vec![AB_TARGET]));
        let s = run(&cfg, None)?.summary;
        ensure_clean(&s)?;
        checks::check_at_most("constraint", s.constraint_ratios[0], AB_TARGET + 0.01)?;
        let lower = utility_lower_bound(opt, d, cfg.v, cfg.c_approx, bounds.t_min) - 0.02;
        checks::check_at_least("utility", s.utility, lower)
    }));

    out.push(record("infeasible oracle scenario", || {
        let sys = checks::policy_system(&ab_points(), vec![-0.1])?;
        match oracle_ratio_opt(&sys, 100) {
            Err(Error::Infeasible(msg)) => Ok(format!("reported: {msg}")),
            Ok(v) => anyhow::bail!("expected infeasibility, got {v}"),
            Err(e) => Err(e.into()),
        }
    }));

    out.push(record("envelope constants", || {
        let cfg = ab_config(Algorithm::DppRatio, 1, 200.0, 0);
        let bounds = finite_bounds(&cfg)?;
        let diag = DiagnosticBounds::from_bounds(
            &bounds,
            &ConstraintTargets::new(vec![AB_TARGET]),
            0.0,
            Some(1.5),
        );
        ensure!(diag.b_const == 0.5, "B = {}", diag.b_const);
        Ok(format!(
            "B {}, F1 {}, F2 {}",
            diag.b_const, diag.f1, diag.f2
        ))
    }));

    out.push(record("reproducibility", || {
        let cfg = RunConfig::task_network(Algorithm::AltTimeavg, frames / 10, 100.0, 1, 8);
        let a = summary_json(&run(&cfg, None)?.summary)?;
        let b = summary_json(&run(&cfg, None)?.summary)?;
        ensure!(a == b, "summaries differ");
        Ok("identical summaries".into())
    }));

    if let Some(user) = user {
        out.push(record("user configuration", || {
            let mut cfg = user.clone();
            cfg.frames = cfg.frames.min(frames);
            if let Some(cps) = cfg.checkpoints.as_mut() {
                cps.retain(|c| *c <= frames);
            }
            let s = run(&cfg, None)?.summary;
            ensure_clean(&s)?;
            Ok(format!("{} frames, utility {:.6}", s.frames, s.utility))
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_is_green() {
        let results = verify(Scale::Quick, None);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert!(results
            .iter()
            .any(|r| r.name == "infeasible oracle scenario"));
    }
}
