use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use renewal_cli::config::{Algorithm, RunConfig, Verbosity};
use renewal_cli::sweep::{parse_values, sweep, sweep_table, Axis};
use renewal_cli::verify::{verify, Scale};
use renewal_cli::{run_to_dir, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "renewal",
    version,
    about = "Drift-plus-penalty ratio experiments on renewal systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags overriding fields of the configuration file.
#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    /// Output directory; defaults to $RENEWAL_OUTPUT_DIR, then `outputs.dir`, then ./out.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the per-frame CSV.
    #[arg(long)]
    frames_csv: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run(Overrides),
    /// Run one configuration per value of an axis.
    Sweep {
        #[command(flatten)]
        base: Overrides,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Values, comma- or space-separated.
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<String>,
        /// Concurrent runs; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the invariant suite at reduced scale.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        scale: Scale,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

impl Overrides {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::task_network(Algorithm::DppRatio, 1_000_000, 100.0, 10, 1),
        };
        if let Some(f) = self.frames {
            cfg.frames = f;
            if let Some(cps) = cfg.checkpoints.as_mut() {
                cps.retain(|c| *c <= f);
            }
        }
        if let Some(v) = self.v {
            cfg.v = v;
        }
        if let Some(w) = self.w {
            cfg.w = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = a;
        }
        if self.frames_csv {
            cfg.outputs.verbosity = Verbosity::Frames;
        }
        cfg.validate()?;
        let dir = self
            .output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| cfg.outputs.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, dir))
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    match Cli::parse().command {
        Command::Run(o) => {
            let (cfg, dir) = o.resolve()?;
            let out = run_to_dir(&cfg, 0, &dir)?;
            let s = &out.summary;
            println!(
                "{} {} frames={} utility={:.6} T_bar={:.6} y0_bar={:.6} ({:.1}s) -> {}",
                s.scenario,
                s.algorithm,
                s.frames,
                s.utility,
                s.t_bar,
                s.y0_bar,
                out.wall_clock_s,
                dir.display()
            );
            for f in &s.failures {
                eprintln!("invariant violated: {f}");
            }
            Ok(s.passed())
        }
        Command::Sweep {
            base,
            axis,
            values,
            jobs,
        } => {
            let (cfg, dir) = base.resolve()?;
            let values = parse_values(&values)?;
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = sweep(&cfg, axis, &values, jobs, Some(&dir))?;
            let table = sweep_table(axis, &rows)?;
            std::fs::write(dir.join("sweep.csv"), &table).context("writing sweep.csv")?;
            print!("{}", String::from_utf8_lossy(&table));
            let mut ok = true;
            for r in &rows {
                match &r.result {
                    Ok(s) if s.passed() => {}
                    Ok(s) => {
                        ok = false;
                        eprintln!("{}={}: {}", axis.name(), r.value, s.failures.join("; "));
                    }
                    Err(e) => {
                        ok = false;
                        eprintln!("{}={}: {e}", axis.name(), r.value);
                    }
                }
            }
            Ok(ok)
        }
        Command::Verify { scale, config } => {
            let user = config.as_deref().map(RunConfig::load).transpose()?;
            let results = verify(scale, user.as_ref());
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}
