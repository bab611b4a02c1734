//! Task processing over five wireless devices.
//!
//! Each frame starts with a 0.5-unit control phase in which every device spends
//! 0.5 energy units. The controller then sees, for every device `l`, the quality
//! `qual_l ~ U[0, l]` it would deliver and its transmission time
//! `T_l^tran ~ U[0.5, 2.5]`, picks one device to transmit (spending
//! `P^tran · T_l^tran`), and appends an idle period in `[0, I^max]`.
//!
//! Penalties: `y0 = -qual_{l[r]}`, `y_l = 0.5 + P^tran T_l^tran 1{l = l[r]}`;
//! frame length `T = 0.5 + T^tran_{l[r]} + Idle`.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::scenario::{Expectation, LinearWeights, Scenario};
use crate::types::{BoundsConfig, ConstraintTargets, PolicyOutcome};

pub const DEVICES: usize = 5;
const CONTROL_TIME: f64 = 0.5;
const CONTROL_ENERGY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskInfo {
    pub qual: [f64; DEVICES],
    pub t_tran: [f64; DEVICES],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskAction {
    /// Device index in `1..=5`.
    pub device: usize,
    pub idle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskNetConfig {
    pub p_tran: f64,
    pub i_max: f64,
    /// Average power target shared by every device.
    pub constraint: f64,
}

impl Default for TaskNetConfig {
    fn default() -> Self {
        Self {
            p_tran: 1.0,
            i_max: 5.0,
            constraint: 0.25,
        }
    }
}

/// Draws `qual_1..qual_5` then `T^tran_1..T^tran_5`, in that order.
pub fn sample_task(rng: &mut dyn RngCore) -> TaskInfo {
    let mut qual = [0.0; DEVICES];
    let mut t_tran = [0.0; DEVICES];
    for (l, q) in qual.iter_mut().enumerate() {
        *q = (l + 1) as f64 * rng.random::<f64>();
    }
    for t in t_tran.iter_mut() {
        *t = 0.5 + 2.0 * rng.random::<f64>();
    }
    TaskInfo { qual, t_tran }
}

pub fn evaluate(info: &TaskInfo, action: &TaskAction, cfg: &TaskNetConfig) -> PolicyOutcome {
    let d = action.device - 1;
    let mut y = vec![CONTROL_ENERGY; DEVICES + 1];
    y[0] = -info.qual[d];
    y[d + 1] += cfg.p_tran * info.t_tran[d];
    PolicyOutcome {
        frame_length: CONTROL_TIME + info.t_tran[d] + action.idle,
        penalties: y,
        attributes: Vec::new(),
        frame_index: 0,
    }
}

/// Closed-form minimizer of `Σ w_y E[y] + w_t E[T]` given `info`.
///
/// The objective is linear in the idle time, so idle is `0` when `w_t >= 0`
/// and `I^max` otherwise. Device `d` then contributes
/// `-w_0 qual_d + (w_d P^tran + w_t) T_d^tran`; ties go to the lowest index.
fn closed_form(info: &TaskInfo, w: &LinearWeights, cfg: &TaskNetConfig) -> (f64, TaskAction) {
    let idle = if w.t >= 0.0 { 0.0 } else { cfg.i_max };
    let mut best_score = f64::INFINITY;
    let mut best = 0;
    for d in 0..DEVICES {
        let score = -w.y[0] * info.qual[d] + (w.y[d + 1] * cfg.p_tran + w.t) * info.t_tran[d];
        if score < best_score {
            best_score = score;
            best = d;
        }
    }
    let constant: f64 =
        w.y[1..].iter().map(|z| z * CONTROL_ENERGY).sum::<f64>() + w.t * (CONTROL_TIME + idle);
    (
        best_score + constant,
        TaskAction {
            device: best + 1,
            idle,
        },
    )
}

fn dpp_weights(z: &[f64], v: f64, theta: f64) -> LinearWeights {
    let mut y = vec![v];
    y.extend_from_slice(z);
    LinearWeights {
        y,
        x: vec![],
        t: -theta,
    }
}

/// Action minimizing `E[V y0 + Σ Z_l y_l - θ T | η]`: idle is `0` iff `θ <= 0`,
/// device minimizes `-V qual_l + (Z_l P^tran - θ) T_l^tran`.
pub fn best_action_dpp(
    info: &TaskInfo,
    z: &[f64],
    v: f64,
    theta: f64,
    cfg: &TaskNetConfig,
) -> TaskAction {
    closed_form(info, &dpp_weights(z, v, theta), cfg).1
}

/// Action minimizing `E[V(y0 - θ T) + Σ Z_l (y_l - c_l T) | η]`: idle is `0`
/// iff `V θ + Σ Z_l c_l <= 0`, device minimizes
/// `-V qual_l - T_l^tran [V θ - Z_l P^tran + Σ_k Z_k c_k]`.
pub fn best_action_alt_timeavg(
    info: &TaskInfo,
    z: &[f64],
    v: f64,
    theta: f64,
    cfg: &TaskNetConfig,
) -> TaskAction {
    let coupling: f64 = z.iter().map(|zl| zl * cfg.constraint).sum();
    let mut w = dpp_weights(z, v, 0.0);
    w.t = -(v * theta + coupling);
    closed_form(info, &w, cfg).1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicBound {
    /// Smallest `I^max` for which the bound is guaranteed: `1 + 10 P^tran`.
    pub threshold: f64,
    /// `d1 V + d2` with `d1 = 10`, `d2 = 0.25 + 2.5 P^tran`.
    pub bound: f64,
    pub enabled: bool,
}

/// Worst-case queue bound for the ratio engine when `I^max` is large enough.
pub fn deterministic_bound_check(cfg: &TaskNetConfig, v: f64) -> DeterministicBound {
    let threshold = 1.0 + 10.0 * cfg.p_tran;
    DeterministicBound {
        threshold,
        bound: 10.0 * v + 0.25 + 2.5 * cfg.p_tran,
        enabled: cfg.i_max >= threshold,
    }
}

#[derive(Debug, Clone)]
pub struct TaskNetwork {
    cfg: TaskNetConfig,
    targets: ConstraintTargets,
    bounds: BoundsConfig,
}

impl TaskNetwork {
    pub fn new(cfg: TaskNetConfig) -> Result<Self> {
        if !(cfg.p_tran > 0.0 && cfg.p_tran.is_finite()) {
            return Err(Error::Config(format!(
                "p_tran must be positive, got {}",
                cfg.p_tran
            )));
        }
        if !(cfg.i_max >= 0.0 && cfg.i_max.is_finite()) {
            return Err(Error::Config(format!(
                "i_max must be non-negative, got {}",
                cfg.i_max
            )));
        }
        if !cfg.constraint.is_finite() {
            return Err(Error::Config("power constraint must be finite".into()));
        }
        let y_max_tx = CONTROL_ENERGY + 2.5 * cfg.p_tran;
        let bounds = BoundsConfig::new(
            CONTROL_TIME + 0.5,
            CONTROL_TIME + 2.5 + cfg.i_max,
            std::iter::once(-(DEVICES as f64))
                .chain([CONTROL_ENERGY; DEVICES])
                .collect(),
            std::iter::once(0.0).chain([y_max_tx; DEVICES]).collect(),
            vec![],
            vec![],
        )?;
        Ok(Self {
            cfg,
            targets: ConstraintTargets::new(vec![cfg.constraint; DEVICES]),
            bounds,
        })
    }

    pub fn config(&self) -> &TaskNetConfig {
        &self.cfg
    }
}

impl Scenario for TaskNetwork {
    type Info = TaskInfo;
    type Action = TaskAction;

    fn targets(&self) -> &ConstraintTargets {
        &self.targets
    }

    fn bounds(&self) -> &BoundsConfig {
        &self.bounds
    }

    fn sample_info(&self, rng: &mut dyn RngCore) -> TaskInfo {
        sample_task(rng)
    }

    fn candidate_actions(&self, _info: &TaskInfo) -> Vec<TaskAction> {
        (1..=DEVICES)
            .flat_map(|device| {
                [0.0, self.cfg.i_max]
                    .into_iter()
                    .map(move |idle| TaskAction { device, idle })
            })
            .collect()
    }

    fn conditional_mean(&self, info: &TaskInfo, action: &TaskAction) -> Expectation {
        let o = evaluate(info, action, &self.cfg);
        Expectation {
            t: o.frame_length,
            y: o.penalties,
            x: o.attributes,
        }
    }

    fn realize(
        &self,
        info: &TaskInfo,
        action: &TaskAction,
        _rng: &mut dyn RngCore,
    ) -> Result<PolicyOutcome> {
        Ok(evaluate(info, action, &self.cfg))
    }

    fn best_response(&self, info: &TaskInfo, weights: &LinearWeights) -> (f64, TaskAction) {
        closed_form(info, weights, &self.cfg)
    }

    /// `[-5V, 3 Σ Z_l]`: `y0 >= -5` and `T >= 1` keep `val` non-negative at
    /// the lower end; at the upper end idle is maximal and the `θ T` term
    /// dominates every queue-weighted penalty.
    fn ratio_bracket(&self, w: &LinearWeights) -> Option<(f64, f64)> {
        if !w.x.is_empty() {
            return None;
        }
        let v = w.y[0];
        let z_sum: f64 = w.y[1..].iter().sum();
        Some((-(DEVICES as f64) * v, 3.0 * z_sum))
    }

    fn action_columns(&self) -> Vec<String> {
        vec!["device".into(), "idle".into()]
    }

    fn describe_action(&self, action: &TaskAction) -> Vec<String> {
        vec![action.device.to_string(), action.idle.to_string()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::replication_rng;
    use crate::scenario::enumerate_best;
    use proptest::prelude::*;

    fn info(qual: [f64; 5], t_tran: [f64; 5]) -> TaskInfo {
        TaskInfo { qual, t_tran }
    }

    #[test]
    fn evaluate_example() {
        let i = info([0.1, 0.2, 1.7, 0.4, 0.5], [1.0, 1.0, 2.0, 1.0, 1.0]);
        let o = evaluate(
            &i,
            &TaskAction {
                device: 3,
                idle: 0.0,
            },
            &TaskNetConfig::default(),
        );
        assert_eq!(o.penalties, vec![-1.7, 0.5, 0.5, 2.5, 0.5, 0.5]);
        assert_eq!(o.frame_length, 2.5);
        assert!(o.attributes.is_empty());
        let idle = evaluate(
            &i,
            &TaskAction {
                device: 3,
                idle: 5.0,
            },
            &TaskNetConfig::default(),
        );
        assert_eq!(idle.frame_length, 7.5);
        assert_eq!(idle.penalties, o.penalties);
    }

    #[test]
    fn dpp_device_choice_example() {
        // Scores -V qual + (0 - θ) t: [-50.5, -150.5, -290.5, -301.25, -200.5].
        let i = info([0.5, 1.5, 2.9, 3.0, 2.0], [1.0, 1.0, 1.0, 2.5, 1.0]);
        let cfg = TaskNetConfig::default();
        let a = best_action_dpp(&i, &[0.0; 5], 100.0, 0.5, &cfg);
        assert_eq!(
            a,
            TaskAction {
                device: 4,
                idle: 5.0
            }
        );
        assert_eq!(best_action_dpp(&i, &[0.0; 5], 100.0, 0.0, &cfg).idle, 0.0);
    }

    #[test]
    fn dpp_zero_v_avoids_loaded_queue() {
        let i = info([0.5, 1.5, 2.9, 3.0, 2.0], [1.0, 1.0, 1.0, 2.5, 1.0]);
        let a = best_action_dpp(
            &i,
            &[1.0, 0.0, 0.0, 0.0, 0.0],
            0.0,
            0.0,
            &TaskNetConfig::default(),
        );
        // Devices 2..5 all score 0; lowest index wins.
        assert_eq!(
            a,
            TaskAction {
                device: 2,
                idle: 0.0
            }
        );
    }

    #[test]
    fn alt_timeavg_examples() {
        let i = info([0.5, 1.5, 2.9, 3.0, 2.0], [1.0, 1.0, 1.0, 2.5, 1.0]);
        let cfg = TaskNetConfig::default();
        assert_eq!(
            best_action_alt_timeavg(&i, &[0.0; 5], 100.0, 0.0, &cfg),
            TaskAction {
                device: 4,
                idle: 0.0
            }
        );
        // V θ + Σ Z c = 100 * (-0.001) + 0.25 * 0.8 = 0.1 > 0.
        let a = best_action_alt_timeavg(&i, &[0.8, 0.0, 0.0, 0.0, 0.0], 100.0, -0.001, &cfg);
        assert_eq!(a.idle, 5.0);
    }

    #[test]
    fn deterministic_bound_constants() {
        let on = deterministic_bound_check(
            &TaskNetConfig {
                i_max: 11.0,
                ..Default::default()
            },
            100.0,
        );
        assert_eq!(on.threshold, 11.0);
        assert_eq!(on.bound, 1002.75);
        assert!(on.enabled);
        assert!(!deterministic_bound_check(&TaskNetConfig::default(), 100.0).enabled);
        assert_eq!(
            deterministic_bound_check(&TaskNetConfig::default(), 0.0).bound,
            2.75
        );
    }

    #[test]
    fn sampler_ranges_and_means() {
        let mut rng = replication_rng(11, 0);
        let n = 1_000_000;
        let (mut q5, mut tt) = (0.0, [0.0; 5]);
        for _ in 0..n {
            let s = sample_task(&mut rng);
            for (l, acc) in tt.iter_mut().enumerate() {
                assert!(s.qual[l] >= 0.0 && s.qual[l] <= (l + 1) as f64);
                assert!(s.t_tran[l] >= 0.5 && s.t_tran[l] <= 2.5);
                *acc += s.t_tran[l];
            }
            q5 += s.qual[4];
        }
        assert!((q5 / n as f64 - 2.5).abs() < 0.01);
        for t in tt {
            assert!((t / n as f64 - 1.5).abs() < 0.01);
        }
    }

    #[test]
    fn frame_length_at_least_one() {
        let s = TaskNetwork::new(TaskNetConfig::default()).unwrap();
        let mut rng = replication_rng(2, 0);
        for _ in 0..10_000 {
            let i = sample_task(&mut rng);
            for a in s.candidate_actions(&i) {
                assert!(evaluate(&i, &a, s.config()).frame_length >= 1.0);
            }
        }
        assert_eq!(s.bounds().t_min, 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(TaskNetwork::new(TaskNetConfig {
            p_tran: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(TaskNetwork::new(TaskNetConfig {
            i_max: -1.0,
            ..Default::default()
        })
        .is_err());
    }

    fn alt_objective(
        i: &TaskInfo,
        a: &TaskAction,
        z: &[f64],
        v: f64,
        theta: f64,
        cfg: &TaskNetConfig,
    ) -> f64 {
        let o = evaluate(i, a, cfg);
        let queued: f64 = z
            .iter()
            .zip(o.constrained())
            .map(|(zl, y)| zl * (y - cfg.constraint * o.frame_length))
            .sum();
        v * (o.penalties[0] - theta * o.frame_length) + queued
    }

    fn dpp_objective(
        i: &TaskInfo,
        a: &TaskAction,
        z: &[f64],
        v: f64,
        theta: f64,
        cfg: &TaskNetConfig,
    ) -> f64 {
        let o = evaluate(i, a, cfg);
        let queued: f64 = z.iter().zip(o.constrained()).map(|(zl, y)| zl * y).sum();
        v * o.penalties[0] - theta * o.frame_length + queued
    }

    fn argmin_by(actions: &[TaskAction], f: impl Fn(&TaskAction) -> f64) -> TaskAction {
        let mut best = (f64::INFINITY, actions[0]);
        for a in actions {
            let v = f(a);
            if v < best.0 {
                best = (v, *a);
            }
        }
        best.1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn closed_forms_match_enumeration(
            seed in any::<u64>(),
            z in prop::array::uniform5(0.0f64..50.0),
            v in 0.0f64..200.0,
            theta in -10.0f64..10.0,
        ) {
            let cfg = TaskNetConfig::default();
            let s = TaskNetwork::new(cfg).unwrap();
            let i = sample_task(&mut replication_rng(seed, 0));
            let actions = s.candidate_actions(&i);

            let dpp = argmin_by(&actions, |a| dpp_objective(&i, a, &z, v, theta, &cfg));
            prop_assert_eq!(best_action_dpp(&i, &z, v, theta, &cfg), dpp);

            let alt = argmin_by(&actions, |a| alt_objective(&i, a, &z, v, theta, &cfg));
            prop_assert_eq!(best_action_alt_timeavg(&i, &z, v, theta, &cfg), alt);

            let w = dpp_weights(&z, v, theta);
            let (value, action) = s.best_response(&i, &w);
            let (ev, ea) = enumerate_best(&s, &i, &w);
            prop_assert_eq!(action, ea);
            prop_assert!((value - ev).abs() <= 1e-9 * (1.0 + ev.abs()));
        }
    }
}
