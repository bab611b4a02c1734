//! Two bisection-free variants of the frame loop.
//!
//! * [`AltFormEngine`] minimizes `E[V y0 + Σ Z_l (y_l - c_l T) | Z]` each frame.
//!   It drives the per-frame average `ȳ0` (not `ȳ0 / T̄`) toward its optimum.
//! * [`AltTimeAvgEngine`] minimizes `E[V (y0 - θ T) + Σ Z_l (y_l - c_l T)]`
//!   with `θ` the running ratio `Σ y0 / Σ T` of past frames.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::engine::{replication_rng, FrameEngine, FrameRecord};
use crate::error::{check_len, Error, Result};
use crate::ledger::{CompensatedSum, MetricsLedger};
use crate::queues::QueueBank;
use crate::scenario::{LinearWeights, Scenario};
use crate::types::PolicyOutcome;

/// Running `θ = Σ y0 / Σ T`, with `θ = 0` before the first frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThetaTracker {
    pub sum_y0: f64,
    pub sum_t: f64,
    pub theta: f64,
    pub frame: u64,
    /// Both sums are multiplied by this factor before each update; `None`
    /// keeps the full running average.
    pub decay: Option<f64>,
}

impl ThetaTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_decay(decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!(
                "decay factor must lie in (0, 1], got {decay}"
            )));
        }
        Ok(Self {
            decay: Some(decay),
            ..Self::default()
        })
    }
}

pub fn update_theta(tracker: &ThetaTracker, outcome: &PolicyOutcome) -> ThetaTracker {
    let keep = tracker.decay.unwrap_or(1.0);
    let sum_y0 = keep * tracker.sum_y0 + outcome.objective();
    let sum_t = keep * tracker.sum_t + outcome.frame_length;
    ThetaTracker {
        sum_y0,
        sum_t,
        theta: sum_y0 / sum_t,
        frame: tracker.frame + 1,
        decay: tracker.decay,
    }
}

fn coupling<S: Scenario>(scenario: &S, z: &[f64]) -> f64 {
    z.iter()
        .zip(scenario.targets().as_slice())
        .map(|(q, c)| q * c)
        .sum()
}

/// Weights `V y0 + Σ Z_l y_l - (V θ + Σ Z_l c_l) T`; `θ = 0` gives the
/// per-frame-average form.
pub fn alt_weights<S: Scenario>(
    scenario: &S,
    z: &[f64],
    v: f64,
    theta: f64,
) -> Result<LinearWeights> {
    check_len("queue vector", scenario.num_constraints(), z.len())?;
    let mut y = Vec::with_capacity(z.len() + 1);
    y.push(v);
    y.extend_from_slice(z);
    Ok(LinearWeights {
        y,
        x: vec![0.0; scenario.num_attributes()],
        t: -(v * theta + coupling(scenario, z)),
    })
}

pub fn alt_form_select<S: Scenario>(
    scenario: &S,
    z: &[f64],
    v: f64,
    info: &S::Info,
) -> Result<S::Action> {
    let w = alt_weights(scenario, z, v, 0.0)?;
    Ok(scenario.best_response(info, &w).1)
}

pub fn alt_timeavg_select<S: Scenario>(
    scenario: &S,
    z: &[f64],
    tracker: &ThetaTracker,
    v: f64,
    info: &S::Info,
) -> Result<S::Action> {
    let w = alt_weights(scenario, z, v, tracker.theta)?;
    Ok(scenario.best_response(info, &w).1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AltConfig {
    pub v: f64,
    pub seed: u64,
    /// Exponential forgetting for `θ`; only used by the time-averaging engine.
    pub theta_decay: Option<f64>,
}

impl AltConfig {
    fn validate(&self) -> Result<()> {
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::Config(format!(
                "V must be non-negative, got {}",
                self.v
            )));
        }
        Ok(())
    }
}

/// `max θ - min θ` over the last `fraction` of a trajectory.
pub fn trailing_oscillation(history: &[f64], fraction: f64) -> Option<f64> {
    if history.is_empty() {
        return None;
    }
    let take = ((history.len() as f64 * fraction).ceil() as usize).clamp(1, history.len());
    let tail = &history[history.len() - take..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(*t), hi.max(*t))
        });
    Some(hi - lo)
}

/// Oscillation level below which `θ` is reported as converged.
pub const THETA_CONVERGENCE_THRESHOLD: f64 = 1e-3;

struct Core<S: Scenario> {
    scenario: S,
    cfg: AltConfig,
    bank: QueueBank,
    ledger: MetricsLedger,
    frame: u64,
    rng: ChaCha8Rng,
}

impl<S: Scenario> Core<S> {
    fn new(scenario: S, cfg: AltConfig, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            bank: QueueBank::new(scenario.targets().clone(), 0),
            ledger: MetricsLedger::new(scenario.num_constraints(), scenario.num_attributes()),
            scenario,
            cfg,
            frame: 0,
            rng,
        })
    }

    fn run(&mut self, theta: Option<f64>) -> Result<FrameRecord<S::Action>> {
        let rng: &mut dyn RngCore = &mut self.rng;
        let info = self.scenario.sample_info(rng);
        let w = alt_weights(
            &self.scenario,
            &self.bank.z,
            self.cfg.v,
            theta.unwrap_or(0.0),
        )?;
        let (_, action) = self.scenario.best_response(&info, &w);
        let outcome = self
            .scenario
            .realize(&info, &action, &mut self.rng)?
            .with_index(self.frame);
        self.bank.apply_z(&outcome)?;
        self.ledger.record(&outcome)?;
        let record = FrameRecord {
            frame: self.frame,
            theta,
            action,
            outcome,
            z: self.bank.z.clone(),
            g: Vec::new(),
            gamma: Vec::new(),
            solver_iterations: 0,
        };
        self.frame += 1;
        Ok(record)
    }
}

pub struct AltFormEngine<S: Scenario> {
    core: Core<S>,
    sum_y0: CompensatedSum,
}

impl<S: Scenario> AltFormEngine<S> {
    pub fn new(scenario: S, cfg: AltConfig) -> Result<Self> {
        let rng = replication_rng(cfg.seed, 0);
        Self::with_rng(scenario, cfg, rng)
    }

    pub fn with_rng(scenario: S, cfg: AltConfig, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            core: Core::new(scenario, cfg, rng)?,
            sum_y0: CompensatedSum::default(),
        })
    }

    pub fn scenario(&self) -> &S {
        &self.core.scenario
    }

    /// Per-frame average `(1/R) Σ y0`.
    pub fn frame_average_y0(&self) -> Option<f64> {
        (self.core.frame > 0).then(|| self.sum_y0.value() / self.core.frame as f64)
    }
}

impl<S: Scenario> FrameEngine for AltFormEngine<S> {
    type Action = S::Action;

    fn step(&mut self) -> Result<FrameRecord<S::Action>> {
        let rec = self.core.run(None)?;
        self.sum_y0.add(rec.outcome.objective());
        Ok(rec)
    }

    fn queues(&self) -> &QueueBank {
        &self.core.bank
    }

    fn ledger(&self) -> &MetricsLedger {
        &self.core.ledger
    }

    fn frame(&self) -> u64 {
        self.core.frame
    }
}

pub struct AltTimeAvgEngine<S: Scenario> {
    core: Core<S>,
    tracker: ThetaTracker,
    history: Vec<f64>,
}

impl<S: Scenario> AltTimeAvgEngine<S> {
    pub fn new(scenario: S, cfg: AltConfig) -> Result<Self> {
        let rng = replication_rng(cfg.seed, 0);
        Self::with_rng(scenario, cfg, rng)
    }

    pub fn with_rng(scenario: S, cfg: AltConfig, rng: ChaCha8Rng) -> Result<Self> {
        let tracker = match cfg.theta_decay {
            Some(d) => ThetaTracker::with_decay(d)?,
            None => ThetaTracker::new(),
        };
        Ok(Self {
            core: Core::new(scenario, cfg, rng)?,
            tracker,
            history: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &S {
        &self.core.scenario
    }

    pub fn tracker(&self) -> &ThetaTracker {
        &self.tracker
    }

    /// `θ` used on each completed frame.
    pub fn theta_history(&self) -> &[f64] {
        &self.history
    }

    /// Oscillation of `θ` over the trailing 10% of frames.
    pub fn theta_oscillation(&self) -> Option<f64> {
        trailing_oscillation(&self.history, 0.1)
    }

    pub fn theta_converged(&self) -> bool {
        self.theta_oscillation()
            .is_some_and(|o| o < THETA_CONVERGENCE_THRESHOLD)
    }
}

impl<S: Scenario> FrameEngine for AltTimeAvgEngine<S> {
    type Action = S::Action;

    fn step(&mut self) -> Result<FrameRecord<S::Action>> {
        let theta = self.tracker.theta;
        let rec = self.core.run(Some(theta))?;
        self.tracker = update_theta(&self.tracker, &rec.outcome);
        self.history.push(theta);
        Ok(rec)
    }

    fn queues(&self) -> &QueueBank {
        &self.core.bank
    }

    fn ledger(&self) -> &MetricsLedger {
        &self.core.ledger
    }

    fn frame(&self) -> u64 {
        self.core.frame
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{FinitePoint, FiniteScenario};
    use crate::scenario::Expectation;

    fn two_actions() -> FiniteScenario {
        FiniteScenario::new(
            vec![
                FinitePoint {
                    y: vec![1.0, 0.0],
                    x: vec![],
                    t: 1.0,
                },
                FinitePoint {
                    y: vec![0.0, 2.0],
                    x: vec![],
                    t: 1.0,
                },
            ],
            vec![0.25],
            0.0,
        )
        .unwrap()
    }

    fn objective(s: &FiniteScenario, w: &LinearWeights, a: usize) -> f64 {
        let p = &s.points()[a];
        w.apply(&Expectation {
            t: p.t,
            y: p.y.clone(),
            x: p.x.clone(),
        })
    }

    #[test]
    fn alt_form_example() {
        let s = two_actions();
        let w = alt_weights(&s, &[1.0], 1.0, 0.0).unwrap();
        assert_eq!(objective(&s, &w, 0), 0.75);
        assert_eq!(objective(&s, &w, 1), 1.75);
        assert_eq!(alt_form_select(&s, &[1.0], 1.0, &()).unwrap(), 0);
    }

    #[test]
    fn alt_form_degenerate_cases() {
        let s = two_actions();
        // Every action ties: lowest index.
        assert_eq!(alt_form_select(&s, &[0.0], 0.0, &()).unwrap(), 0);
        // Queue terms vanish: pure y0 minimization.
        assert_eq!(alt_form_select(&s, &[0.0], 1.0, &()).unwrap(), 1);
        assert!(alt_form_select(&s, &[], 1.0, &()).is_err());
    }

    #[test]
    fn timeavg_at_zero_theta_matches_alt_form() {
        let s = FiniteScenario::new(
            vec![
                FinitePoint {
                    y: vec![1.0, 0.0],
                    x: vec![],
                    t: 1.0,
                },
                FinitePoint {
                    y: vec![0.0, 2.0],
                    x: vec![],
                    t: 3.0,
                },
            ],
            vec![0.25],
            0.0,
        )
        .unwrap();
        let tracker = ThetaTracker::new();
        for z in [0.0, 0.5, 1.0, 4.0] {
            let a = alt_form_select(&s, &[z], 1.0, &()).unwrap();
            let b = alt_timeavg_select(&s, &[z], &tracker, 1.0, &()).unwrap();
            assert_eq!(a, b);
            // Direct objective V y0 + z (y1 - c T).
            let direct: Vec<f64> = s
                .points()
                .iter()
                .map(|p| p.y[0] + z * (p.y[1] - 0.25 * p.t))
                .collect();
            let expect = if direct[0] <= direct[1] { 0 } else { 1 };
            assert_eq!(a, expect);
        }
    }

    #[test]
    fn tracker_arithmetic() {
        let t0 = ThetaTracker::new();
        assert_eq!(t0.theta, 0.0);
        let o1 = PolicyOutcome::new(2.0, vec![-2.0], vec![]).unwrap();
        let o2 = PolicyOutcome::new(2.0, vec![-4.0], vec![]).unwrap();
        let t1 = update_theta(&t0, &o1);
        assert_eq!(t1.theta, -1.0);
        let t2 = update_theta(&t1, &o2);
        assert_eq!(t2.theta, -1.5);
        assert_eq!(t2.frame, 2);
    }

    #[test]
    fn decayed_tracker_weights_recent_frames() {
        let t = ThetaTracker::with_decay(0.5).unwrap();
        let o1 = PolicyOutcome::new(1.0, vec![0.0], vec![]).unwrap();
        let o2 = PolicyOutcome::new(1.0, vec![3.0], vec![]).unwrap();
        let t = update_theta(&update_theta(&t, &o1), &o2);
        assert_eq!(t.theta, 2.0);
        assert!(ThetaTracker::with_decay(0.0).is_err());
        assert!(ThetaTracker::with_decay(1.5).is_err());
    }

    #[test]
    fn theta_tracks_ledger_ratio() {
        let s = FiniteScenario::new(
            vec![
                FinitePoint {
                    y: vec![1.0, 1.0],
                    x: vec![],
                    t: 1.0,
                },
                FinitePoint {
                    y: vec![4.0, 0.0],
                    x: vec![],
                    t: 2.0,
                },
            ],
            vec![0.5],
            0.2,
        )
        .unwrap();
        let cfg = AltConfig {
            v: 5.0,
            seed: 3,
            theta_decay: None,
        };
        let mut e = AltTimeAvgEngine::new(s, cfg).unwrap();
        for _ in 0..200 {
            let rec = e.step().unwrap();
            let est = e.ledger().ratio_estimates().unwrap();
            assert!((e.tracker().theta - est.objective).abs() < 1e-12);
            assert!(rec.theta.is_some());
        }
        assert_eq!(e.theta_history()[0], 0.0);
    }

    #[test]
    fn oscillation_window() {
        let h: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(trailing_oscillation(&h, 0.1), Some(9.0));
        assert_eq!(trailing_oscillation(&[], 0.1), None);
        assert_eq!(trailing_oscillation(&[2.0], 0.1), Some(0.0));
    }
}
