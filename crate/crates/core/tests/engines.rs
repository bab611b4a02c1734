//! End-to-end engine runs on small finite systems and the task network,
//! checked against per-frame queue laws and the exact oracle optima.

use proptest::prelude::*;
use renewal::alt::{AltConfig, AltFormEngine, AltTimeAvgEngine};
use renewal::dpp::{DppConfig, DppEngine};
use renewal::engine::{FrameEngine, FrameRecord, SolverSettings};
use renewal::finite::{FinitePoint, FiniteScenario};
use renewal::oracle::{oracle_ratio_opt, oracle_util_opt, oracle_y0_opt, FinitePolicySystem};
use renewal::task_network::{TaskNetConfig, TaskNetwork};
use renewal::utility::{ScalarConcave, UtilityConfig, UtilityEngine, UtilityFunction};

fn point(y: &[f64], x: &[f64], t: f64) -> FinitePoint {
    FinitePoint {
        y: y.to_vec(),
        x: x.to_vec(),
        t,
    }
}

/// `A = (1, 1, T 1)`, `B = (4, 0, T 2)`; with `c = 0.5` the best ratio is 1.5
/// and the best per-frame `y0` is 2.
fn ab() -> (Vec<FinitePoint>, Vec<f64>) {
    (
        vec![point(&[1.0, 1.0], &[], 1.0), point(&[4.0, 0.0], &[], 2.0)],
        vec![0.5],
    )
}

fn dpp_cfg(v: f64, seed: u64) -> DppConfig {
    DppConfig {
        v,
        c_approx: 0.0,
        frames: 0,
        seed,
        sample_window: 1,
    }
}

/// Replays `Z <- max(Z + y - cT, 0)` and `G <- max(G + Tγ - x, 0)` on the
/// recorded outcomes and compares with the engine's post-update snapshots.
fn check_queue_laws<A>(records: &[FrameRecord<A>], targets: &[f64]) {
    let mut z = vec![0.0; targets.len()];
    let mut g = vec![0.0; records.first().map_or(0, |r| r.g.len())];
    for r in records {
        let o = &r.outcome;
        for (l, zl) in z.iter_mut().enumerate() {
            *zl = (*zl + o.penalties[l + 1] - targets[l] * o.frame_length).max(0.0);
        }
        for (m, gm) in g.iter_mut().enumerate() {
            *gm = (*gm + o.frame_length * r.gamma[m] - o.attributes[m]).max(0.0);
        }
        assert_eq!(r.z, z, "Z at frame {}", r.frame);
        assert_eq!(r.g, g, "G at frame {}", r.frame);
    }
}

fn run<E: FrameEngine>(engine: &mut E, frames: usize) -> Vec<FrameRecord<E::Action>> {
    (0..frames).map(|_| engine.step().unwrap()).collect()
}

/// `Σ y_l / Σ T <= c_l + Z_l(R) / Σ T`, which the queue law guarantees exactly.
fn check_telescoping<E: FrameEngine>(engine: &E, targets: &[f64]) {
    let sum_t = engine.ledger().sum_t();
    for (l, c) in targets.iter().enumerate() {
        let ratio = engine.ledger().sum_y(l + 1) / sum_t;
        let slack = engine.queues().z[l] / sum_t;
        assert!(
            ratio <= c + slack + 1e-9 * (1.0 + c.abs()),
            "constraint {l}: {ratio} > {c} + {slack}"
        );
    }
}

#[test]
fn dpp_engine_reaches_the_oracle_ratio() {
    let (points, targets) = ab();
    let sys = FinitePolicySystem::new(points.clone(), targets.clone()).unwrap();
    let opt = oracle_ratio_opt(&sys, 100).unwrap();
    assert!((opt - 1.5).abs() < 1e-9);

    let scenario = FiniteScenario::new(points, targets.clone(), 0.0).unwrap();
    let mut engine =
        DppEngine::new(scenario, dpp_cfg(200.0, 1), SolverSettings::default()).unwrap();
    let records = run(&mut engine, 20_000);
    check_queue_laws(&records, &targets);
    check_telescoping(&engine, &targets);
    let est = engine.ledger().ratio_estimates().unwrap();
    assert!(est.objective <= opt + 0.02, "ratio {}", est.objective);
    assert!(
        est.constraints[0] <= 0.5 + 0.01,
        "constraint {}",
        est.constraints[0]
    );
    assert!(records.iter().all(|r| r.theta.is_some()));
}

#[test]
fn alt_form_reaches_the_oracle_frame_average() {
    let (points, targets) = ab();
    let sys = FinitePolicySystem::new(points.clone(), targets.clone()).unwrap();
    let opt = oracle_y0_opt(&sys, 100).unwrap();
    assert!((opt - 2.0).abs() < 1e-9);

    let scenario = FiniteScenario::new(points, targets.clone(), 0.0).unwrap();
    let cfg = AltConfig {
        v: 200.0,
        seed: 2,
        theta_decay: None,
    };
    let mut engine = AltFormEngine::new(scenario, cfg).unwrap();
    let records = run(&mut engine, 20_000);
    check_queue_laws(&records, &targets);
    check_telescoping(&engine, &targets);
    let y0 = engine.frame_average_y0().unwrap();
    assert!(y0 <= opt + 0.02, "y0 per frame {y0}");
}

#[test]
fn alt_timeavg_theta_tracks_the_ledger() {
    let scenario = TaskNetwork::new(TaskNetConfig::default()).unwrap();
    let targets = scenario_targets();
    let cfg = AltConfig {
        v: 100.0,
        seed: 3,
        theta_decay: None,
    };
    let mut engine = AltTimeAvgEngine::new(scenario, cfg).unwrap();
    for _ in 0..5_000 {
        engine.step().unwrap();
        let ledger = engine.ledger();
        let direct = ledger.sum_y(0) / ledger.sum_t();
        let theta = engine.tracker().theta;
        assert!(
            (theta - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
            "{theta} vs {direct}"
        );
    }
    assert_eq!(engine.theta_history().len(), 5_000);
    check_telescoping(&engine, &targets);
}

fn scenario_targets() -> Vec<f64> {
    vec![0.25; 5]
}

#[test]
fn task_network_dpp_obeys_queue_laws() {
    let scenario = TaskNetwork::new(TaskNetConfig::default()).unwrap();
    let targets = scenario_targets();
    let mut engine =
        DppEngine::new(scenario, dpp_cfg(100.0, 4), SolverSettings::default()).unwrap();
    let records = run(&mut engine, 3_000);
    check_queue_laws(&records, &targets);
    check_telescoping(&engine, &targets);
    assert_eq!(engine.frame(), 3_000);
}

#[test]
fn utility_engine_approaches_the_oracle_utility() {
    let points = vec![
        point(&[0.0, 1.0], &[2.0], 1.0),
        point(&[0.0, 0.0], &[1.0], 2.0),
    ];
    let targets = vec![0.5];
    let util = UtilityFunction::separable(vec![ScalarConcave::Log1p(1.0)]);
    let sys = FinitePolicySystem::new(points.clone(), targets.clone()).unwrap();
    let opt = oracle_util_opt(&sys, &util, 10_000).unwrap();

    let scenario = FiniteScenario::new(points, targets.clone(), 0.0).unwrap();
    let cfg = UtilityConfig {
        v: 200.0,
        c_approx: 0.0,
        seed: 5,
        sample_window: 1,
    };
    let mut engine = UtilityEngine::new(scenario, util, cfg, SolverSettings::default()).unwrap();
    let records = run(&mut engine, 20_000);
    check_queue_laws(&records, &targets);
    check_telescoping(&engine, &targets);
    let achieved = engine.achieved_utility().unwrap();
    assert!(
        achieved >= opt - 0.02,
        "utility {achieved} vs optimum {opt}"
    );
    assert!(
        achieved <= opt + 0.02,
        "utility {achieved} above optimum {opt}"
    );
}

#[test]
fn engines_are_deterministic_per_seed() {
    let mk = || {
        let scenario = TaskNetwork::new(TaskNetConfig::default()).unwrap();
        DppEngine::new(scenario, dpp_cfg(10.0, 9), SolverSettings::default()).unwrap()
    };
    let a = run(&mut mk(), 500);
    let b = run(&mut mk(), 500);
    assert_eq!(a, b);
}

fn finite_system() -> impl Strategy<Value = (Vec<FinitePoint>, f64)> {
    let pt =
        (-3.0..3.0f64, 0.0..2.0f64, 0.5..3.0f64).prop_map(|(y0, y1, t)| point(&[y0, y1], &[], t));
    (prop::collection::vec(pt, 1..5), 0.0..2.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dpp_queue_laws_hold_on_random_systems((points, c) in finite_system(), v in 0.0..50.0f64, seed in any::<u64>()) {
        let targets = vec![c];
        let scenario = FiniteScenario::new(points, targets.clone(), 0.0).unwrap();
        let mut engine = DppEngine::new(scenario, dpp_cfg(v, seed), SolverSettings::default()).unwrap();
        let records = run(&mut engine, 300);
        check_queue_laws(&records, &targets);
        check_telescoping(&engine, &targets);
    }

    #[test]
    fn alt_engines_obey_queue_laws_on_random_systems((points, c) in finite_system(), v in 0.0..50.0f64, seed in any::<u64>()) {
        let targets = vec![c];
        let scenario = FiniteScenario::new(points, targets.clone(), 0.0).unwrap();
        let cfg = AltConfig { v, seed, theta_decay: None };
        let mut form = AltFormEngine::new(scenario.clone(), cfg.clone()).unwrap();
        check_queue_laws(&run(&mut form, 300), &targets);
        let mut avg = AltTimeAvgEngine::new(scenario, cfg).unwrap();
        check_queue_laws(&run(&mut avg, 300), &targets);
        check_telescoping(&avg, &targets);
    }
}
