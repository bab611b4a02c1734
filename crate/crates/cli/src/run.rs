//! Single runs: engine dispatch, checkpoint assertions, per-frame CSV and the
//! summary record.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use renewal::alt::{
    trailing_oscillation, AltConfig, AltFormEngine, AltTimeAvgEngine, THETA_CONVERGENCE_THRESHOLD,
};
use renewal::dpp::{DppConfig, DppEngine};
use renewal::engine::{replication_rng, FrameEngine, FrameRecord};
use renewal::ledger::CompensatedSum;
use renewal::scenario::Scenario;
use renewal::task_network::{deterministic_bound_check, TaskAction};
use renewal::utility::{UtilityConfig, UtilityEngine, UtilityFunction};

use crate::config::{Algorithm, BuiltScenario, RunConfig, Verbosity};

/// Relative slack for comparing a queue against the compensated sum it bounds.
const TELESCOPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub frame: u64,
    #[serde(rename = "Z")]
    pub z: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    pub constraint_ratios: Vec<f64>,
    /// `Σ (y_l - c_l T)` over frames so far; never above `Z_l`.
    pub constraint_drift: Vec<f64>,
    /// `Σ (T γ_m - x_m)`; never above `G_m`.
    pub aux_drift: Vec<f64>,
    /// `c_l + (d1 V + d2) / R` when the deterministic bound applies.
    pub deterministic_ratio_bound: Option<f64>,
    #[serde(rename = "peak_Z")]
    pub peak_z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub algorithm: String,
    pub frames: u64,
    pub seed: u64,
    pub replication: u64,
    pub v: f64,
    pub w: usize,
    /// `-ȳ0 / T̄`, or `φ(x̄ / T̄)` for the utility algorithm.
    pub utility: f64,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    pub idle_bar: Option<f64>,
    pub y0_bar: f64,
    pub objective_ratio: f64,
    pub constraint_ratios: Vec<f64>,
    pub attribute_ratios: Vec<f64>,
    #[serde(rename = "peak_Z")]
    pub peak_z: Vec<f64>,
    #[serde(rename = "final_Z")]
    pub final_z: Vec<f64>,
    #[serde(rename = "peak_G")]
    pub peak_g: Vec<f64>,
    #[serde(rename = "final_G")]
    pub final_g: Vec<f64>,
    pub theta_oscillation: Option<f64>,
    pub theta_converged: Option<bool>,
    /// `d1 V + d2` when the deterministic queue bound applies to this run.
    pub deterministic_queue_bound: Option<f64>,
    pub max_solver_iterations: usize,
    pub checkpoints: Vec<CheckpointReport>,
    /// Violated invariants, by name.
    pub failures: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub wall_clock_s: f64,
}

/// Runs `cfg` on replication stream 0.
pub fn run(cfg: &RunConfig, frames_csv: Option<&mut dyn Write>) -> Result<RunOutput> {
    run_replication(cfg, 0, frames_csv)
}

/// Runs `cfg` on the random stream `(cfg.seed, replication)`.
pub fn run_replication(
    cfg: &RunConfig,
    replication: u64,
    frames_csv: Option<&mut dyn Write>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let rng = replication_rng(cfg.seed, replication);
    let built = cfg.scenario.build()?;
    let util = cfg.utility.as_ref().map(|u| u.build());
    let summary = match built {
        BuiltScenario::TaskNetwork(s) => {
            let det = deterministic_bound_check(s.config(), cfg.v);
            let det = (det.enabled && cfg.algorithm == Algorithm::DppRatio).then_some(det.bound);
            let mut engine = build_engine(s.clone(), cfg, util.clone(), rng)?;
            let ctx = RunContext {
                cfg,
                replication,
                scenario_name: "task-network",
                idle_of: Some(|a: &TaskAction| a.idle),
                deterministic_bound: det,
                util: util.as_ref(),
            };
            simulate(&s, engine.as_mut(), &ctx, frames_csv)?
        }
        BuiltScenario::Finite(s) => {
            let mut engine = build_engine(s.clone(), cfg, util.clone(), rng)?;
            let ctx = RunContext {
                cfg,
                replication,
                scenario_name: "finite",
                idle_of: None::<fn(&usize) -> f64>,
                deterministic_bound: None,
                util: util.as_ref(),
            };
            simulate(&s, engine.as_mut(), &ctx, frames_csv)?
        }
    };
    Ok(RunOutput {
        summary,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

type BoxedEngine<A> = Box<dyn FrameEngine<Action = A>>;

fn build_engine<S>(
    scenario: S,
    cfg: &RunConfig,
    util: Option<UtilityFunction>,
    rng: rand_chacha::ChaCha8Rng,
) -> Result<BoxedEngine<S::Action>>
where
    S: Scenario + 'static,
{
    let solver = cfg.bisection.settings();
    let alt = AltConfig {
        v: cfg.v,
        seed: cfg.seed,
        theta_decay: cfg.theta_decay,
    };
    Ok(match cfg.algorithm {
        Algorithm::DppRatio => {
            let dpp = DppConfig {
                v: cfg.v,
                c_approx: cfg.c_approx,
                frames: cfg.frames,
                seed: cfg.seed,
                sample_window: cfg.w,
            };
            Box::new(DppEngine::with_rng(scenario, dpp, solver, rng)?)
        }
        Algorithm::AltForm => Box::new(AltFormEngine::with_rng(scenario, alt, rng)?),
        Algorithm::AltTimeavg => Box::new(AltTimeAvgEngine::with_rng(scenario, alt, rng)?),
        Algorithm::Utility => {
            let util = util.context("the utility algorithm needs a `utility` section")?;
            let ucfg = UtilityConfig {
                v: cfg.v,
                c_approx: cfg.c_approx,
                seed: cfg.seed,
                sample_window: cfg.w,
            };
            Box::new(UtilityEngine::with_rng(scenario, util, ucfg, solver, rng)?)
        }
    })
}

struct RunContext<'a, F> {
    cfg: &'a RunConfig,
    replication: u64,
    scenario_name: &'static str,
    idle_of: Option<F>,
    deterministic_bound: Option<f64>,
    util: Option<&'a UtilityFunction>,
}

/// Column names of the per-frame CSV.
pub fn frame_columns(
    action_columns: &[String],
    num_constraints: usize,
    num_attributes: usize,
) -> Vec<String> {
    let mut cols = vec!["frame".to_string(), "theta_hat".to_string()];
    cols.extend(action_columns.iter().cloned());
    cols.push("T".into());
    cols.extend((0..=num_constraints).map(|l| format!("y{l}")));
    cols.extend((1..=num_attributes).map(|m| format!("x{m}")));
    cols.extend((1..=num_constraints).map(|l| format!("Z{l}")));
    cols.extend((1..=num_attributes).map(|m| format!("G{m}")));
    cols.extend((1..=num_attributes).map(|m| format!("gamma{m}")));
    cols
}

fn frame_row<A>(rec: &FrameRecord<A>, action: Vec<String>) -> Vec<String> {
    let mut row =
        Vec::with_capacity(action.len() + 4 + rec.outcome.penalties.len() + 2 * rec.z.len());
    row.push(rec.frame.to_string());
    row.push(rec.theta.map(|t| t.to_string()).unwrap_or_default());
    row.extend(action);
    row.push(rec.outcome.frame_length.to_string());
    row.extend(rec.outcome.penalties.iter().map(f64::to_string));
    row.extend(rec.outcome.attributes.iter().map(f64::to_string));
    row.extend(rec.z.iter().map(f64::to_string));
    row.extend(rec.g.iter().map(f64::to_string));
    row.extend(rec.gamma.iter().map(f64::to_string));
    row
}

fn simulate<S, F>(
    scenario: &S,
    engine: &mut dyn FrameEngine<Action = S::Action>,
    ctx: &RunContext<'_, F>,
    frames_csv: Option<&mut dyn Write>,
) -> Result<Summary>
where
    S: Scenario,
    F: Fn(&S::Action) -> f64,
{
    let cfg = ctx.cfg;
    let l_count = scenario.num_constraints();
    let m_count = scenario.num_attributes();
    let targets = scenario.targets().as_slice().to_vec();
    let mut writer = frames_csv.map(csv::Writer::from_writer);
    if let Some(w) = writer.as_mut() {
        w.write_record(frame_columns(&scenario.action_columns(), l_count, m_count))?;
    }

    let checkpoints = cfg.checkpoint_frames();
    let mut next_cp = checkpoints.iter().peekable();
    let mut reports = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |msg: String| {
        if !failures.contains(&msg) {
            failures.push(msg);
        }
    };

    let mut idle_sum = CompensatedSum::default();
    let mut drift_z = vec![CompensatedSum::default(); l_count];
    let mut drift_g = vec![CompensatedSum::default(); m_count];
    let mut peak_z = vec![0.0f64; l_count];
    let mut peak_g = vec![0.0f64; m_count];
    let mut thetas = Vec::new();
    let mut max_iters = 0usize;

    for _ in 0..cfg.frames {
        let rec = engine.step()?;
        let o = &rec.outcome;
        if let Some(idle_of) = &ctx.idle_of {
            idle_sum.add(idle_of(&rec.action));
        }
        for l in 0..l_count {
            drift_z[l].add(o.penalties[l + 1] - targets[l] * o.frame_length);
            peak_z[l] = peak_z[l].max(rec.z[l]);
        }
        for m in 0..m_count.min(rec.g.len()) {
            drift_g[m].add(o.frame_length * rec.gamma[m] - o.attributes[m]);
            peak_g[m] = peak_g[m].max(rec.g[m]);
        }
        if rec.z.iter().chain(&rec.g).any(|q| !(*q >= 0.0)) {
            fail(format!(
                "queue non-negativity violated at frame {}",
                rec.frame
            ));
        }
        if cfg.algorithm == Algorithm::AltTimeavg {
            thetas.push(rec.theta.unwrap_or(0.0));
        }
        max_iters = max_iters.max(rec.solver_iterations);
        if let Some(w) = writer.as_mut() {
            w.write_record(frame_row(&rec, scenario.describe_action(&rec.action)))?;
        }

        let done = rec.frame + 1;
        if next_cp.peek() == Some(&&done) {
            next_cp.next();
            let ledger = engine.ledger();
            let est = ledger.ratio_estimates()?;
            let bank = engine.queues();
            let cz: Vec<f64> = drift_z.iter().map(CompensatedSum::value).collect();
            let cg: Vec<f64> = drift_g.iter().map(CompensatedSum::value).collect();
            for (l, (d, z)) in cz.iter().zip(&bank.z).enumerate() {
                if *d > z + TELESCOPE_TOL * (1.0 + d.abs() + done as f64) {
                    fail(format!(
                        "one-sided telescoping violated for Z{} at frame {done}",
                        l + 1
                    ));
                }
            }
            for (m, (d, g)) in cg.iter().zip(&bank.g).enumerate() {
                if *d > g + TELESCOPE_TOL * (1.0 + d.abs() + done as f64) {
                    fail(format!(
                        "one-sided telescoping violated for G{} at frame {done}",
                        m + 1
                    ));
                }
            }
            let det_ratio = ctx.deterministic_bound.map(|b| b / done as f64);
            if let (Some(slack), Some(bound)) = (det_ratio, ctx.deterministic_bound) {
                for l in 0..l_count {
                    if est.constraints[l] > targets[l] + slack {
                        fail(format!(
                            "deterministic constraint bound violated for y{} at frame {done}",
                            l + 1
                        ));
                    }
                    if peak_z[l] > bound {
                        fail(format!(
                            "deterministic queue bound violated for Z{} by frame {done}",
                            l + 1
                        ));
                    }
                }
            }
            reports.push(CheckpointReport {
                frame: done,
                z: bank.z.clone(),
                g: bank.g.clone(),
                constraint_ratios: est.constraints,
                constraint_drift: cz,
                aux_drift: cg,
                deterministic_ratio_bound: det_ratio
                    .map(|s| targets.first().copied().unwrap_or(0.0) + s),
                peak_z: peak_z.clone(),
            });
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }

    let ledger = engine.ledger();
    let est = ledger.ratio_estimates()?;
    let frames = ledger.frames() as f64;
    if let Some(bound) = ctx.deterministic_bound {
        for (l, p) in peak_z.iter().enumerate() {
            if *p > bound {
                fail(format!("deterministic queue bound violated for Z{}", l + 1));
            }
        }
    }
    let utility = match (cfg.algorithm, ctx.util) {
        (Algorithm::Utility, Some(u)) => u.value(&est.attributes),
        _ => -est.objective,
    };
    let theta_oscillation = trailing_oscillation(&thetas, 0.1);
    Ok(Summary {
        scenario: ctx.scenario_name.into(),
        algorithm: cfg.algorithm.name().into(),
        frames: ledger.frames(),
        seed: cfg.seed,
        replication: ctx.replication,
        v: cfg.v,
        w: cfg.w,
        utility,
        t_bar: ledger.sum_t() / frames,
        idle_bar: ctx.idle_of.as_ref().map(|_| idle_sum.value() / frames),
        y0_bar: ledger.sum_y(0) / frames,
        objective_ratio: est.objective,
        constraint_ratios: est.constraints,
        attribute_ratios: est.attributes,
        peak_z,
        final_z: engine.queues().z.clone(),
        peak_g,
        final_g: engine.queues().g.clone(),
        theta_converged: theta_oscillation.map(|o| o < THETA_CONVERGENCE_THRESHOLD),
        theta_oscillation,
        deterministic_queue_bound: ctx.deterministic_bound,
        max_solver_iterations: max_iters,
        checkpoints: reports,
        failures,
    })
}

/// Aggregates recomputed from a per-frame CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTotals {
    pub frames: u64,
    pub t_bar: f64,
    pub y0_bar: f64,
    pub objective_ratio: f64,
    pub constraint_ratios: Vec<f64>,
    pub idle_bar: Option<f64>,
    pub peak_z: Vec<f64>,
}

/// Recomputes the summary aggregates from per-frame CSV text, summing in the
/// same order and with the same compensation as the engines.
pub fn summary_from_csv(data: &[u8]) -> Result<CsvTotals> {
    let mut rdr = csv::Reader::from_reader(data);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let t_col = col("T").context("missing T column")?;
    let y_cols: Vec<usize> = (0..).map_while(|l| col(&format!("y{l}"))).collect();
    anyhow::ensure!(!y_cols.is_empty(), "missing y0 column");
    let z_cols: Vec<usize> = (1..).map_while(|l| col(&format!("Z{l}"))).collect();
    let idle_col = col("idle");

    let mut frames = 0u64;
    let mut sum_t = CompensatedSum::default();
    let mut sum_y = vec![CompensatedSum::default(); y_cols.len()];
    let mut idle = CompensatedSum::default();
    let mut peak_z = vec![0.0f64; z_cols.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            let field = rec
                .get(c)
                .with_context(|| format!("row {i}: missing field {c}"))?;
            field
                .parse::<f64>()
                .with_context(|| format!("row {i}: bad number {field:?}"))
        };
        let t = num(t_col)?;
        anyhow::ensure!(
            t > 0.0 && t.is_finite(),
            "row {i}: frame length must be positive"
        );
        sum_t.add(t);
        for (s, c) in sum_y.iter_mut().zip(&y_cols) {
            s.add(num(*c)?);
        }
        for (p, c) in peak_z.iter_mut().zip(&z_cols) {
            *p = p.max(num(*c)?);
        }
        if let Some(c) = idle_col {
            idle.add(num(c)?);
        }
        frames += 1;
    }
    anyhow::ensure!(frames > 0, "no frame rows");
    let n = frames as f64;
    let t = sum_t.value();
    Ok(CsvTotals {
        frames,
        t_bar: t / n,
        y0_bar: sum_y[0].value() / n,
        objective_ratio: sum_y[0].value() / t,
        constraint_ratios: sum_y[1..].iter().map(|s| s.value() / t).collect(),
        idle_bar: idle_col.map(|_| idle.value() / n),
        peak_z,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn summary_json(summary: &Summary) -> Result<String> {
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    Ok(s)
}

/// Runs `cfg` and writes `summary.json`, `timing.json` and, at frame
/// verbosity, `frames.csv` into `dir`. Each file appears atomically.
pub fn run_to_dir(cfg: &RunConfig, replication: u64, dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let out = if cfg.outputs.verbosity == Verbosity::Frames {
        let final_path = dir.join("frames.csv");
        let tmp = final_path.with_extension("tmp");
        let file = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        let mut buf = std::io::BufWriter::new(file);
        let out = run_replication(cfg, replication, Some(&mut buf))?;
        buf.flush()?;
        drop(buf);
        fs::rename(&tmp, &final_path)?;
        out
    } else {
        run_replication(cfg, replication, None)?
    };
    write_atomic(
        &dir.join("summary.json"),
        summary_json(&out.summary)?.as_bytes(),
    )?;
    let timing = serde_json::json!({ "wall_clock_s": out.wall_clock_s });
    write_atomic(&dir.join("timing.json"), format!("{timing}\n").as_bytes())?;
    Ok(out)
}
