//! Plumbing shared by the frame-loop engines.

use std::cell::RefCell;
use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ledger::MetricsLedger;
use crate::queues::QueueBank;
use crate::ratio::{BisectionConfig, FractionalInstance};
use crate::scenario::{default_bracket, LinearWeights, Scenario};
use crate::types::PolicyOutcome;

/// Independent stream for replication `index` of an experiment seeded with `seed`.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One frame as seen by a per-frame log. Queue snapshots are taken after the
/// frame's update.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<A> {
    pub frame: u64,
    pub theta: Option<f64>,
    pub action: A,
    pub outcome: PolicyOutcome,
    pub z: Vec<f64>,
    pub g: Vec<f64>,
    pub gamma: Vec<f64>,
    pub solver_iterations: usize,
}

pub trait FrameEngine {
    type Action;

    fn step(&mut self) -> Result<FrameRecord<Self::Action>>;

    fn queues(&self) -> &QueueBank;

    fn ledger(&self) -> &MetricsLedger;

    /// Frames completed so far.
    fn frame(&self) -> u64;
}

/// Bisection settings applied on every frame; the bracket itself is derived
/// per frame from the queues.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_expansions: u32,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: BisectionConfig::DEFAULT_TOLERANCE,
            max_expansions: BisectionConfig::DEFAULT_MAX_EXPANSIONS,
            max_iterations: BisectionConfig::DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl SolverSettings {
    pub fn config(&self, lo: f64, hi: f64) -> Result<BisectionConfig> {
        let mut cfg = BisectionConfig::new(lo, hi, self.tolerance)?;
        cfg.max_expansions = self.max_expansions;
        cfg.max_iterations = self.max_iterations;
        Ok(cfg)
    }

    pub fn bracket_for<S: Scenario>(
        &self,
        scenario: &S,
        numerator: &LinearWeights,
    ) -> Result<BisectionConfig> {
        let (lo, hi) = scenario
            .ratio_bracket(numerator)
            .unwrap_or_else(|| default_bracket(numerator, scenario.bounds()));
        // A degenerate bracket (e.g. all queues empty) still needs lo < hi.
        let hi = if hi > lo {
            hi
        } else {
            lo + self.tolerance.max(1.0)
        };
        self.config(lo, hi)
    }
}

/// Ring of the last `capacity` observed initial-information values.
#[derive(Debug, Clone)]
pub struct SampleBuffer<E> {
    capacity: usize,
    past: VecDeque<E>,
}

impl<E: Clone> SampleBuffer<E> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("sample window must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            past: VecDeque::with_capacity(capacity),
        })
    }

    /// Samples for the current frame: the stored past values, topped up with
    /// the current observation while fewer than `capacity` frames have passed.
    pub fn samples(&self, current: &E) -> Vec<E> {
        let mut out: Vec<E> = self.past.iter().cloned().collect();
        if out.len() < self.capacity {
            out.push(current.clone());
        }
        out
    }

    pub fn push(&mut self, eta: E) {
        if self.past.len() == self.capacity {
            self.past.pop_front();
        }
        self.past.push_back(eta);
    }

    pub fn len(&self) -> usize {
        self.past.len()
    }

    pub fn is_empty(&self) -> bool {
        self.past.is_empty()
    }
}

/// `val(θ)` over a fixed set of samples for a numerator given by linear weights
/// and denominator `T`.
pub struct SampledRatio<'a, S: Scenario> {
    scenario: &'a S,
    samples: &'a [S::Info],
    weights: RefCell<LinearWeights>,
}

impl<'a, S: Scenario> SampledRatio<'a, S> {
    pub fn new(scenario: &'a S, samples: &'a [S::Info], numerator: LinearWeights) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        crate::error::check_len(
            "penalty weights",
            scenario.num_constraints() + 1,
            numerator.y.len(),
        )?;
        crate::error::check_len(
            "attribute weights",
            scenario.num_attributes(),
            numerator.x.len(),
        )?;
        Ok(Self {
            scenario,
            samples,
            weights: RefCell::new(numerator.with_t(0.0)),
        })
    }

    pub fn numerator(&self) -> LinearWeights {
        self.weights.borrow().with_t(0.0)
    }
}

impl<S: Scenario> FractionalInstance for SampledRatio<'_, S> {
    type Action = Vec<S::Action>;

    fn evaluate_inf(&self, theta: f64) -> Result<(f64, Vec<S::Action>)> {
        self.weights.borrow_mut().t = -theta;
        let weights = self.weights.borrow();
        crate::ratio::sampled_val(theta, self.samples, |eta, _| {
            self.scenario.best_response(eta, &weights)
        })
    }

    fn denominator_bounds(&self) -> (f64, f64) {
        let b = self.scenario.bounds();
        (b.t_min, b.t_max)
    }
}
