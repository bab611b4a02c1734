//! Parameter sweeps: one run per value, replication stream `i` for value `i`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crate::config::{Algorithm, RunConfig};
use crate::run::{run_replication, run_to_dir, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    V,
    W,
    Algorithm,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::V => "v",
            Self::W => "w",
            Self::Algorithm => "algorithm",
        }
    }
}

/// Parses a comma- or whitespace-separated value list.
pub fn parse_values(raw: &[String]) -> Result<Vec<String>> {
    let values: Vec<String> = raw
        .iter()
        .flat_map(|s| s.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    Ok(values)
}

/// The base configuration with `axis` set to `value`.
pub fn apply_axis(base: &RunConfig, axis: Axis, value: &str) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match axis {
        Axis::V => {
            cfg.v = value
                .parse()
                .with_context(|| format!("bad V value {value:?}"))?
        }
        Axis::W => {
            cfg.w = value
                .parse()
                .with_context(|| format!("bad W value {value:?}"))?
        }
        Axis::Algorithm => cfg.algorithm = Algorithm::parse(value)?,
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub result: std::result::Result<Summary, String>,
}

/// Runs every value concurrently on a pool of at most `workers` threads.
/// Results come back in value order.
pub fn sweep(
    base: &RunConfig,
    axis: Axis,
    values: &[String],
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|v| apply_axis(base, axis, v))
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.clamp(1, values.len()))
        .build()?;
    let rows = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let result = match out_dir {
                    Some(dir) => run_to_dir(cfg, i as u64, &dir.join(format!("run-{i:03}"))),
                    None => run_replication(cfg, i as u64, None),
                };
                SweepRow {
                    value: values[i].clone(),
                    result: result.map(|o| o.summary).map_err(|e| format!("{e:#}")),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

/// Comparison table with one row per value.
pub fn sweep_table(axis: Axis, rows: &[SweepRow]) -> Result<Vec<u8>> {
    let num_constraints = rows
        .iter()
        .filter_map(|r| r.result.as_ref().ok())
        .map(|s| s.constraint_ratios.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        axis.name(),
        "replication",
        "algorithm",
        "frames",
        "utility",
        "T_bar",
        "idle_bar",
        "y0_bar",
        "objective_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=num_constraints).map(|l| format!("ratio{l}")));
    header.extend((1..=num_constraints).map(|l| format!("peak_Z{l}")));
    header.push("error".into());
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![row.value.clone(), i.to_string()];
        match &row.result {
            Ok(s) => {
                rec.extend([
                    s.algorithm.clone(),
                    s.frames.to_string(),
                    s.utility.to_string(),
                    s.t_bar.to_string(),
                    s.idle_bar.map(|v| v.to_string()).unwrap_or_default(),
                    s.y0_bar.to_string(),
                    s.objective_ratio.to_string(),
                ]);
                for v in [&s.constraint_ratios, &s.peak_z] {
                    rec.extend(
                        (0..num_constraints)
                            .map(|l| v.get(l).map(f64::to_string).unwrap_or_default()),
                    );
                }
                rec.push(s.failures.join("; "));
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 7 + 2 * num_constraints));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}
