//! JSON run configuration.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use renewal::engine::SolverSettings;
use renewal::finite::{FinitePoint, FiniteScenario};
use renewal::task_network::{TaskNetConfig, TaskNetwork};
use renewal::utility::{ScalarConcave, UtilityFunction};

fn default_p_tran() -> f64 {
    1.0
}
fn default_i_max() -> f64 {
    5.0
}
fn default_constraint() -> f64 {
    0.25
}
fn default_w() -> usize {
    10
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    TaskNetwork {
        #[serde(default = "default_p_tran")]
        p_tran: f64,
        #[serde(default = "default_i_max")]
        i_max: f64,
        #[serde(default = "default_constraint")]
        constraint: f64,
    },
    Finite {
        points: Vec<PointConfig>,
        #[serde(default)]
        targets: Vec<f64>,
        #[serde(default)]
        noise: f64,
    },
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::TaskNetwork {
            p_tran: default_p_tran(),
            i_max: default_i_max(),
            constraint: default_constraint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    /// `E y0, E y1, .., E yL`.
    pub y: Vec<f64>,
    #[serde(default)]
    pub x: Vec<f64>,
    pub t: f64,
}

impl From<&PointConfig> for FinitePoint {
    fn from(p: &PointConfig) -> Self {
        FinitePoint {
            y: p.y.clone(),
            x: p.x.clone(),
            t: p.t,
        }
    }
}

/// A scenario built from its configuration.
#[derive(Debug, Clone)]
pub enum BuiltScenario {
    TaskNetwork(TaskNetwork),
    Finite(FiniteScenario),
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<BuiltScenario> {
        Ok(match self {
            Self::TaskNetwork {
                p_tran,
                i_max,
                constraint,
            } => BuiltScenario::TaskNetwork(TaskNetwork::new(TaskNetConfig {
                p_tran: *p_tran,
                i_max: *i_max,
                constraint: *constraint,
            })?),
            Self::Finite {
                points,
                targets,
                noise,
            } => BuiltScenario::Finite(FiniteScenario::new(
                points.iter().map(FinitePoint::from).collect(),
                targets.clone(),
                *noise,
            )?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DppRatio,
    AltForm,
    AltTimeavg,
    Utility,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::DppRatio => "dpp-ratio",
            Self::AltForm => "alt-form",
            Self::AltTimeavg => "alt-timeavg",
            Self::Utility => "utility",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            Self::DppRatio,
            Self::AltForm,
            Self::AltTimeavg,
            Self::Utility,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .with_context(|| format!("unknown algorithm {s:?}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectionOverrides {
    pub tolerance: Option<f64>,
    pub max_expansions: Option<u32>,
    pub max_iterations: Option<usize>,
}

impl BisectionOverrides {
    pub fn settings(&self) -> SolverSettings {
        let d = SolverSettings::default();
        SolverSettings {
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_expansions: self.max_expansions.unwrap_or(d.max_expansions),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verbosity {
    /// Summary and checkpoint reports only.
    #[default]
    Summary,
    /// Also the per-frame CSV.
    Frames,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub verbosity: Verbosity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UtilitySpec {
    /// `Σ w_m γ_m`
    Linear { weights: Vec<f64> },
    /// `Σ w_m ln(1 + γ_m)`
    Log1p { weights: Vec<f64> },
    /// `min_m w_m γ_m`
    MinLinear { weights: Vec<f64> },
}

impl UtilitySpec {
    pub fn build(&self) -> UtilityFunction {
        match self {
            Self::Linear { weights } => UtilityFunction::separable(
                weights.iter().map(|w| ScalarConcave::Linear(*w)).collect(),
            ),
            Self::Log1p { weights } => UtilityFunction::separable(
                weights.iter().map(|w| ScalarConcave::Log1p(*w)).collect(),
            ),
            Self::MinLinear { weights } => UtilityFunction::min_linear(weights.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { weights } | Self::Log1p { weights } | Self::MinLinear { weights } => {
                weights.len()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    pub algorithm: Algorithm,
    pub frames: u64,
    pub v: f64,
    /// Initial-information sample window.
    #[serde(default = "default_w")]
    pub w: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub bisection: BisectionOverrides,
    #[serde(default)]
    pub outputs: OutputConfig,
    /// Frames after which invariants are asserted; powers of ten by default.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default)]
    pub utility: Option<UtilitySpec>,
    /// Exponential forgetting factor for the time-averaged `θ`.
    #[serde(default)]
    pub theta_decay: Option<f64>,
    /// Additive approximation constant reported in bounds.
    #[serde(default)]
    pub c_approx: f64,
}

impl RunConfig {
    pub fn task_network(algorithm: Algorithm, frames: u64, v: f64, w: usize, seed: u64) -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            algorithm,
            frames,
            v,
            w,
            seed,
            bisection: BisectionOverrides::default(),
            outputs: OutputConfig::default(),
            checkpoints: None,
            utility: None,
            theta_decay: None,
            c_approx: 0.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.frames >= 1, "frames must be at least 1");
        ensure!(
            self.v >= 0.0 && self.v.is_finite(),
            "v must be a non-negative number, got {}",
            self.v
        );
        ensure!(self.w >= 1, "w must be at least 1");
        ensure!(
            self.c_approx >= 0.0 && self.c_approx.is_finite(),
            "c_approx must be non-negative"
        );
        if let Some(cps) = &self.checkpoints {
            for cp in cps {
                ensure!(
                    (1..=self.frames).contains(cp),
                    "checkpoint {cp} is outside 1..={}",
                    self.frames
                );
            }
        }
        let s = self.bisection.settings();
        ensure!(
            s.tolerance > 0.0 && s.tolerance.is_finite(),
            "bisection tolerance must be positive"
        );
        if self.algorithm == Algorithm::Utility && self.utility.is_none() {
            bail!("the utility algorithm needs a `utility` section");
        }
        if let Some(u) = &self.utility {
            if let ScenarioConfig::Finite { points, .. } = &self.scenario {
                let m = points.first().map_or(0, |p| p.x.len());
                ensure!(
                    u.dim() == m,
                    "utility has {} weights but the scenario has {m} attributes",
                    u.dim()
                );
            }
        }
        Ok(())
    }

    /// Checkpoints in increasing order, deduplicated.
    pub fn checkpoint_frames(&self) -> Vec<u64> {
        let mut cps = match &self.checkpoints {
            Some(c) => c.clone(),
            None => std::iter::successors(Some(1u64), |p| p.checked_mul(10))
                .take_while(|p| *p <= self.frames)
                .collect(),
        };
        cps.sort_unstable();
        cps.dedup();
        cps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg =
            RunConfig::from_json(r#"{"algorithm":"dpp-ratio","frames":1000,"v":100}"#).unwrap();
        assert_eq!(cfg.w, 10);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.scenario, ScenarioConfig::default());
        assert_eq!(cfg.checkpoint_frames(), vec![1, 10, 100, 1000]);
    }

    #[test]
    fn finite_scenario_parses() {
        let cfg = RunConfig::from_json(
            r#"{"scenario":{"name":"finite","points":[{"y":[1,1],"t":1},{"y":[4,0],"t":2}],"targets":[0.5]},
                "algorithm":"alt-timeavg","frames":10,"v":1,"checkpoints":[10,5,5]}"#,
        )
        .unwrap();
        assert_eq!(cfg.algorithm, Algorithm::AltTimeavg);
        assert_eq!(cfg.checkpoint_frames(), vec![5, 10]);
        assert!(matches!(
            cfg.scenario.build().unwrap(),
            BuiltScenario::Finite(_)
        ));
    }

    #[test]
    fn rejects_invalid() {
        for bad in [
            r#"{"algorithm":"dpp-ratio","frames":0,"v":1}"#,
            r#"{"algorithm":"dpp-ratio","frames":1,"v":-1}"#,
            r#"{"algorithm":"dpp-ratio","frames":1,"v":1,"w":0}"#,
            r#"{"algorithm":"dpp-ratio","frames":5,"v":1,"checkpoints":[6]}"#,
            r#"{"algorithm":"utility","frames":5,"v":1}"#,
            r#"{"algorithm":"bogus","frames":5,"v":1}"#,
            r#"{"algorithm":"dpp-ratio","frames":5,"v":1,"typo":1}"#,
        ] {
            assert!(RunConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [
            Algorithm::DppRatio,
            Algorithm::AltForm,
            Algorithm::AltTimeavg,
            Algorithm::Utility,
        ] {
            assert_eq!(Algorithm::parse(a.name()).unwrap(), a);
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                format!("\"{}\"", a.name())
            );
        }
    }
}
