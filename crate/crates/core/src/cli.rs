//! Command-line front end.
//!
//! Exit status: 0 on success, 2 for usage and configuration errors (missing
//! or malformed file, invalid parameter), 1 for failures while running.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel;
use crate::config::{Config, ConfigError};
use crate::geometry;
use crate::hierfl::{self, TrainingOutcome};
use crate::sim::{self, Algorithm, Scenario};
use crate::topology;

#[derive(Debug, Parser)]
#[command(name = "sgin", version, about = "Aggregation routing over LEO constellations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write satellite positions at a given time.
    GenerateConstellation {
        #[command(flatten)]
        common: Common,
        /// Epoch in seconds.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
    /// Write the weighted edge list of one slot, every frame.
    ExportSnapshot {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        slot: u32,
    },
    /// Run the scenario and write metrics JSON and the per-round CSV.
    RunScenario {
        #[command(flatten)]
        common: Common,
    },
    /// Run every selected algorithm on identical rounds and print a table.
    CompareAlgorithms {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep link distance and write rate, energy and outage.
    LinkSweep {
        #[command(flatten)]
        common: Common,
        /// Transmit power, W.
        #[arg(long, default_value_t = 1.0)]
        p_t: f64,
        #[arg(long, default_value_t = 500.0)]
        d_min_km: f64,
        #[arg(long, default_value_t = 6000.0)]
        d_max_km: f64,
        #[arg(long, default_value_t = 56)]
        steps: usize,
    },
    /// Train on synthetic tasks, aggregating along the routing trees.
    Train {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML). Without it the 80/4/1 Walker-Delta preset is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated algorithm list, e.g. `taeer,d-merge`.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<Algorithm>>,
    /// Overrides `simulation.rho`.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<sim::SimError> for Failure {
    fn from(e: sim::SimError) -> Self {
        match e {
            sim::SimError::Invalid { .. } => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

impl Common {
    fn load(&self) -> Result<Config, Failure> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::walker_delta_80(),
        };
        if let Some(seed) = self.seed {
            cfg.simulation.seed = seed;
        }
        if let Some(rho) = self.rho {
            cfg.simulation.rho = rho;
        }
        if let Some(a) = &self.algorithms {
            cfg.algorithms = a.clone();
        }
        Ok(cfg)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
        fs::create_dir_all(&self.out).map_err(|e| run_err(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        let f = File::create(&path).map_err(|e| run_err(format!("cannot create {}: {e}", path.display())))?;
        Ok((path, BufWriter::new(f)))
    }
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<(), Failure> {
    w.flush()
        .map_err(|e| run_err(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::GenerateConstellation { common, time } => {
            let cfg = common.load()?.scenario()?;
            let eph = geometry::propagate(&cfg.constellation, time).map_err(|e| Failure::Usage(e.to_string()))?;
            let (path, mut w) = common.create("constellation.csv")?;
            geometry::write_ephemeris_csv(&mut w, &eph).map_err(run_err)?;
            finish(&path, w)
        }
        Command::ExportSnapshot { common, slot } => {
            let cfg = common.load()?.scenario()?;
            let scenario = Scenario::new(cfg)?;
            let t0 = scenario.time.slot_start_s(slot);
            let snap = topology::build_snapshot(
                &scenario.config.constellation,
                &scenario.config.link,
                &scenario.powers_w,
                &scenario.time,
                slot,
                t0,
            )
            .map_err(run_err)?;
            let (path, mut w) = common.create("snapshot.csv")?;
            topology::write_snapshot_csv(&mut w, std::slice::from_ref(&snap)).map_err(run_err)?;
            finish(&path, w)
        }
        Command::RunScenario { common } => {
            let cfg = common.load()?.scenario()?;
            let metrics = sim::compare_algorithms(&cfg)?;
            write_metrics(&common, &metrics)
        }
        Command::CompareAlgorithms { common } => {
            let cfg = common.load()?.scenario()?;
            let metrics = sim::compare_algorithms(&cfg)?;
            print_table(&metrics);
            write_metrics(&common, &metrics)
        }
        Command::LinkSweep {
            common,
            p_t,
            d_min_km,
            d_max_km,
            steps,
        } => {
            let cfg = common.load()?.scenario()?;
            if !(d_min_km > 0.0 && d_max_km >= d_min_km) || steps == 0 || !(p_t > 0.0) {
                return Err(Failure::Usage(format!(
                    "link-sweep needs 0 < d-min-km <= d-max-km, steps >= 1 and p-t > 0 (got {d_min_km}, {d_max_km}, {steps}, {p_t})"
                )));
            }
            let mut rows = Vec::with_capacity(steps);
            for i in 0..steps {
                let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                let d = d_min_km + f * (d_max_km - d_min_km);
                rows.push((p_t, channel::link_metrics(p_t, d, &cfg.link).map_err(run_err)?));
            }
            let (path, mut w) = common.create("link_sweep.csv")?;
            channel::write_link_sweep_csv(&mut w, &rows).map_err(run_err)?;
            finish(&path, w)
        }
        Command::Train { common } => {
            let file = common.load()?;
            let cfg = file.scenario()?;
            let mut training = file.training.clone();
            if let Some(a) = common.algorithms.as_ref().and_then(|a| a.first()) {
                training.algorithm = *a;
            }
            let run = sim::run_training_scenario(&cfg, &training)?;
            if let Some(w) = &run.warning {
                eprintln!("warning: {w}");
            }
            let (path, mut w) = common.create("loss_trace.csv")?;
            hierfl::write_loss_trace_csv(&mut w, &run.trace.records).map_err(run_err)?;
            finish(&path, w)?;
            match run.trace.outcome {
                TrainingOutcome::Completed => Ok(()),
                TrainingOutcome::Diverged { round } => Err(Failure::Run(format!("training diverged at round {round}"))),
            }
        }
    }
}

fn write_metrics(common: &Common, metrics: &[sim::RunMetrics]) -> Result<(), Failure> {
    let (path, mut w) = common.create("metrics.json")?;
    sim::write_metrics_json(&mut w, metrics).map_err(run_err)?;
    writeln!(w).map_err(run_err)?;
    finish(&path, w)?;
    let (path, mut w) = common.create("rounds.csv")?;
    sim::write_rounds_csv(&mut w, metrics).map_err(run_err)?;
    finish(&path, w)
}

fn print_table(metrics: &[sim::RunMetrics]) {
    print!("{:<28}", "metric");
    for m in metrics {
        print!("{:>16}", m.algorithm.to_string());
    }
    println!();
    type Row = (&'static str, fn(&sim::RunMetrics) -> String);
    let rows: [Row; 3] = [
        ("avg energy per slot (J)", |m| format!("{:.3}", m.avg_energy_per_slot_j)),
        ("avg outage per ISL (%)", |m| format!("{:.3}", m.avg_outage_pct)),
        ("completed rounds", |m| format!("{}/{}", m.completed_rounds, m.rounds)),
    ];
    for (name, f) in rows {
        print!("{name:<28}");
        for m in metrics {
            print!("{:>16}", f(m));
        }
        println!();
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
