//! Drift-plus-penalty ratio engine.
//!
//! Every frame the engine observes the constraint queues `Z`, minimizes
//!
//! ```text
//! E[V y0 + Σ Z_l y_l | Z] / E[T | Z]
//! ```
//!
//! by bisection over a window of past initial-information samples, acts on the
//! realized `η`, and updates the queues.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    replication_rng, FrameEngine, FrameRecord, SampleBuffer, SampledRatio, SolverSettings,
};
use crate::error::{check_len, Error, Result};
use crate::ledger::MetricsLedger;
use crate::queues::QueueBank;
use crate::ratio::bisect;
use crate::scenario::{LinearWeights, Scenario};
use crate::types::{BoundsConfig, ConstraintTargets};

#[derive(Debug, Clone, PartialEq)]
pub struct DppConfig {
    pub v: f64,
    /// Additive approximation constant used for bound reporting only.
    pub c_approx: f64,
    pub frames: u64,
    pub seed: u64,
    pub sample_window: usize,
}

impl DppConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::Config(format!(
                "V must be non-negative, got {}",
                self.v
            )));
        }
        if !(self.c_approx >= 0.0) {
            return Err(Error::Config("C must be non-negative".into()));
        }
        if self.sample_window == 0 {
            return Err(Error::Config("sample window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Numerator weights `V y0 + Σ Z_l y_l` of the drift-plus-penalty ratio.
pub fn dpp_numerator(z: &[f64], v: f64, num_attributes: usize) -> LinearWeights {
    let mut y = Vec::with_capacity(z.len() + 1);
    y.push(v);
    y.extend_from_slice(z);
    LinearWeights {
        y,
        x: vec![0.0; num_attributes],
        t: 0.0,
    }
}

/// The fractional instance `min E[V y0 + Σ Z_l y_l] / E[T]` over `samples`.
pub fn dpp_ratio_objective<'a, S: Scenario>(
    scenario: &'a S,
    samples: &'a [S::Info],
    z: &[f64],
    v: f64,
) -> Result<SampledRatio<'a, S>> {
    check_len("queue vector", scenario.num_constraints(), z.len())?;
    SampledRatio::new(
        scenario,
        samples,
        dpp_numerator(z, v, scenario.num_attributes()),
    )
}

pub struct DppEngine<S: Scenario> {
    scenario: S,
    cfg: DppConfig,
    solver: SolverSettings,
    bank: QueueBank,
    ledger: MetricsLedger,
    buffer: SampleBuffer<S::Info>,
    frame: u64,
    rng: ChaCha8Rng,
}

impl<S: Scenario> DppEngine<S> {
    pub fn new(scenario: S, cfg: DppConfig, solver: SolverSettings) -> Result<Self> {
        Self::with_rng(scenario, cfg.clone(), solver, replication_rng(cfg.seed, 0))
    }

    pub fn with_rng(
        scenario: S,
        cfg: DppConfig,
        solver: SolverSettings,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let bank = QueueBank::new(scenario.targets().clone(), 0);
        let ledger = MetricsLedger::new(scenario.num_constraints(), scenario.num_attributes());
        let buffer = SampleBuffer::new(cfg.sample_window)?;
        Ok(Self {
            scenario,
            cfg,
            solver,
            bank,
            ledger,
            buffer,
            frame: 0,
            rng,
        })
    }

    pub fn scenario(&self) -> &S {
        &self.scenario
    }

    pub fn config(&self) -> &DppConfig {
        &self.cfg
    }

    pub fn run_frame(&mut self) -> Result<FrameRecord<S::Action>> {
        let rng: &mut dyn RngCore = &mut self.rng;
        let info = self.scenario.sample_info(rng);
        let samples = self.buffer.samples(&info);
        let instance = dpp_ratio_objective(&self.scenario, &samples, &self.bank.z, self.cfg.v)?;
        let numerator = instance.numerator();
        let bcfg = self.solver.bracket_for(&self.scenario, &numerator)?;
        let solved = bisect(&instance, &bcfg)?;
        let theta = solved.theta_star;

        let (_, action) = self
            .scenario
            .best_response(&info, &numerator.with_t(-theta));
        let outcome = self
            .scenario
            .realize(&info, &action, &mut self.rng)?
            .with_index(self.frame);
        self.bank.apply_z(&outcome)?;
        self.ledger.record(&outcome)?;
        self.buffer.push(info);
        let record = FrameRecord {
            frame: self.frame,
            theta: Some(theta),
            action,
            outcome,
            z: self.bank.z.clone(),
            g: Vec::new(),
            gamma: Vec::new(),
            solver_iterations: solved.iterations,
        };
        self.frame += 1;
        Ok(record)
    }
}

impl<S: Scenario> FrameEngine for DppEngine<S> {
    type Action = S::Action;

    fn step(&mut self) -> Result<FrameRecord<S::Action>> {
        self.run_frame()
    }

    fn queues(&self) -> &QueueBank {
        &self.bank
    }

    fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    fn frame(&self) -> u64 {
        self.frame
    }
}

/// Computable envelopes for the drift constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticBounds {
    pub b_const: f64,
    pub f1: f64,
    pub f2: f64,
    pub ratio_opt_hint: Option<f64>,
}

/// `½ Σ_l max (y_l - c_l T)²` over the corners of the declared bounds.
pub fn drift_constant(bounds: &BoundsConfig, targets: &ConstraintTargets) -> f64 {
    let mut total = 0.0;
    for (l, c) in targets.as_slice().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for y in [bounds.y_min[l + 1], bounds.y_max[l + 1]] {
            for t in [bounds.t_min, bounds.t_max] {
                worst = worst.max((y - c * t).powi(2));
            }
        }
        total += worst;
    }
    0.5 * total
}

impl DiagnosticBounds {
    pub fn from_bounds(
        bounds: &BoundsConfig,
        targets: &ConstraintTargets,
        c_approx: f64,
        ratio_opt_hint: Option<f64>,
    ) -> Self {
        let b_const = drift_constant(bounds, targets);
        let ratio_cap = ratio_opt_hint.unwrap_or_else(|| {
            (bounds.y0_max() / bounds.t_min).max(bounds.y0_max() / bounds.t_max)
        });
        Self {
            b_const,
            f1: 2.0 * (b_const + bounds.t_max * c_approx),
            f2: (2.0 * (bounds.t_max * ratio_cap - bounds.y0_min())).max(0.0),
            ratio_opt_hint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub frames: u64,
    pub t_bar: f64,
    pub objective_ratio: f64,
    /// `ratio_opt + (B/T̄ + C)/V + L(Z[0])/(V R T̄)`; needs a ratio hint.
    pub objective_bound: Option<f64>,
    pub objective_violated: Option<bool>,
    pub constraint_ratios: Vec<f64>,
    /// `c_l + (1/T_min) sqrt((F1 + V F2)/R + Σ Z_l[0]²/R²)`.
    pub constraint_bounds: Vec<f64>,
    /// `c_l + Z_l[R] / (R T_min)`, which always holds sample-path-wise.
    pub queue_bounds: Vec<f64>,
}

/// Right-hand sides of the performance bounds at the current frame count.
/// Queues are assumed to start empty.
pub fn performance_bounds(
    diag: &DiagnosticBounds,
    cfg: &DppConfig,
    bounds: &BoundsConfig,
    ledger: &MetricsLedger,
    bank: &QueueBank,
) -> Result<PerformanceReport> {
    let est = ledger.ratio_estimates()?;
    let r = ledger.frames() as f64;
    let t_bar = ledger.sum_t() / r;
    let initial_lyapunov = 0.0;
    let objective_bound = diag.ratio_opt_hint.map(|opt| {
        if cfg.v > 0.0 {
            opt + (diag.b_const / t_bar + cfg.c_approx) / cfg.v
                + initial_lyapunov / (cfg.v * r * t_bar)
        } else {
            f64::INFINITY
        }
    });
    let targets = bank.targets.as_slice();
    let spread = ((diag.f1 + cfg.v * diag.f2) / r).sqrt() / bounds.t_min;
    Ok(PerformanceReport {
        frames: ledger.frames(),
        t_bar,
        objective_ratio: est.objective,
        objective_violated: objective_bound.map(|b| est.objective > b),
        objective_bound,
        constraint_bounds: targets.iter().map(|c| c + spread).collect(),
        queue_bounds: targets
            .iter()
            .zip(&bank.z)
            .map(|(c, z)| c + z / (r * bounds.t_min))
            .collect(),
        constraint_ratios: est.constraints,
    })
}
