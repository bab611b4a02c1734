//! Pluggable renewal systems.
//!
//! A scenario reveals initial information `η` at the start of each frame,
//! offers a set of actions conditioned on it, and realizes `(T, y, x)` for the
//! chosen action. Every engine reduces its per-frame decision to minimizing a
//! linear functional of the conditional expectations, described by
//! [`LinearWeights`].

use rand::RngCore;

use crate::error::Result;
use crate::types::{BoundsConfig, ConstraintTargets, PolicyOutcome};

/// Conditional expectations `E[T | η, a]`, `E[y | η, a]`, `E[x | η, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub t: f64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

/// Coefficients of the per-frame objective `Σ y_w·E[y] + Σ x_w·E[x] + t_w·E[T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub t: f64,
}

impl LinearWeights {
    pub fn apply(&self, e: &Expectation) -> f64 {
        let y: f64 = self.y.iter().zip(&e.y).map(|(w, v)| w * v).sum();
        let x: f64 = self.x.iter().zip(&e.x).map(|(w, v)| w * v).sum();
        y + x + self.t * e.t
    }

    /// Same weights with the frame-length coefficient replaced.
    pub fn with_t(&self, t: f64) -> Self {
        Self {
            y: self.y.clone(),
            x: self.x.clone(),
            t,
        }
    }

    /// Range of `Σ y_w·E[y] + Σ x_w·E[x]` (the frame-length term excluded)
    /// implied by the declared bounds.
    pub fn numerator_range(&self, bounds: &BoundsConfig) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        let terms = self
            .y
            .iter()
            .zip(bounds.y_min.iter().zip(&bounds.y_max))
            .chain(self.x.iter().zip(bounds.x_min.iter().zip(&bounds.x_max)));
        for (w, (a, b)) in terms {
            let (p, q) = (w * a, w * b);
            lo += p.min(q);
            hi += p.max(q);
        }
        (lo, hi)
    }
}

pub trait Scenario {
    type Info: Clone;
    type Action: Clone + std::fmt::Debug;

    fn targets(&self) -> &ConstraintTargets;

    fn bounds(&self) -> &BoundsConfig;

    fn num_constraints(&self) -> usize {
        self.targets().len()
    }

    fn num_attributes(&self) -> usize {
        self.bounds().num_attributes()
    }

    fn sample_info(&self, rng: &mut dyn RngCore) -> Self::Info;

    /// Actions the default optimizer enumerates for `info`.
    fn candidate_actions(&self, info: &Self::Info) -> Vec<Self::Action>;

    fn conditional_mean(&self, info: &Self::Info, action: &Self::Action) -> Expectation;

    fn realize(
        &self,
        info: &Self::Info,
        action: &Self::Action,
        rng: &mut dyn RngCore,
    ) -> Result<PolicyOutcome>;

    /// Minimum of `weights` over the actions available under `info`.
    /// Ties go to the lowest candidate index.
    fn best_response(&self, info: &Self::Info, weights: &LinearWeights) -> (f64, Self::Action) {
        enumerate_best(self, info, weights)
    }

    /// Initial bisection bracket for a ratio whose numerator is described by
    /// `weights`; `None` lets the engine derive one from the bounds.
    fn ratio_bracket(&self, _weights: &LinearWeights) -> Option<(f64, f64)> {
        None
    }

    /// Column names describing an action in per-frame logs.
    fn action_columns(&self) -> Vec<String> {
        vec!["action".into()]
    }

    fn describe_action(&self, action: &Self::Action) -> Vec<String> {
        vec![format!("{action:?}")]
    }
}

/// Exhaustive minimization over [`Scenario::candidate_actions`].
pub fn enumerate_best<S: Scenario + ?Sized>(
    scenario: &S,
    info: &S::Info,
    weights: &LinearWeights,
) -> (f64, S::Action) {
    let actions = scenario.candidate_actions(info);
    let mut best: Option<(f64, S::Action)> = None;
    for a in actions {
        let v = weights.apply(&scenario.conditional_mean(info, &a));
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, a));
        }
    }
    best.expect("scenario offered no candidate actions")
}

/// Default bracket for `min E[num] / E[T]` from declared bounds, padded by one
/// unit on each side.
pub fn default_bracket(weights: &LinearWeights, bounds: &BoundsConfig) -> (f64, f64) {
    let (a_lo, a_hi) = weights.numerator_range(bounds);
    let lo = (a_lo / bounds.t_min).min(a_lo / bounds.t_max);
    let hi = (a_hi / bounds.t_min).max(a_hi / bounds.t_max);
    (lo - 1.0, hi + 1.0)
}
