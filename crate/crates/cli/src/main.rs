use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hotpotato::dts::EngineView;
use hotpotato::sim::{RunOptions, Simulation};
use hotpotato::sweep::{run_sweep, SweepAxis};
use hotpotato::Scenario;

#[derive(Parser)]
#[command(
    name = "hotpotato",
    version,
    about = "Simulate the Hot Potato proximity game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write logs, metrics and a summary.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a parameter grid and print one row per cell.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Grid axis as `key=v1,v2,...`; repeat for more axes.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        /// Seeds per cell, starting at the scenario seed.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tab-separated instead of CSV.
        #[arg(long)]
        tsv: bool,
    },
    /// Check a scenario file without running it.
    Validate {
        /// Scenario file or preset name.
        scenario: String,
    },
    /// Merge device log dumps into one Engine log and report rule checks.
    MergeLogs {
        /// Device log files as written by `run`.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Write the merged log here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file or preset name (`indoor-room`, `outdoor`).
    #[arg(long, default_value = "indoor-room")]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the game duration cap, in seconds.
    #[arg(long)]
    duration_cap: Option<u64>,
    /// Override any scenario key, `key=value`; repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut sc = Scenario::resolve(&self.scenario)?;
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        if let Some(c) = self.duration_cap {
            sc.duration_cap_ms = c * 1000;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects key=value, got `{kv}`"))?;
            sc.set_param(k.trim(), v.trim())?;
        }
        sc.validate()?;
        Ok(sc)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out_dir } => {
            let sc = scenario.load()?;
            let art = Simulation::new(sc, RunOptions::default()).run();
            art.write_to(&out_dir)
                .with_context(|| format!("writing results to {}", out_dir.display()))?;
            print!("{}", art.summary_text());
            Ok(verdict(art.passed()))
        }
        Command::Sweep {
            scenario,
            params,
            reps,
            out,
            tsv,
        } => {
            let sc = scenario.load()?;
            let axes = params
                .iter()
                .map(|p| SweepAxis::parse(p))
                .collect::<Result<Vec<_>, _>>()?;
            let report = run_sweep(&sc, &axes, reps)?;
            let table = report.to_table(if tsv { '\t' } else { ',' });
            match out {
                Some(p) => {
                    std::fs::write(&p, table).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{table}"),
            }
            let violations: usize = report.cells.iter().map(|c| c.violations).sum();
            Ok(verdict(violations == 0))
        }
        Command::Validate { scenario } => {
            let sc = Scenario::resolve(&scenario)?;
            sc.validate()?;
            println!(
                "ok: {} players, {} stations, field {}x{} m, seed {}",
                sc.players.count,
                sc.stations.len(),
                sc.field.width,
                sc.field.height,
                sc.seed
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::MergeLogs { logs, out } => {
            let mut engine = EngineView::new();
            for p in &logs {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                engine
                    .merge_dump(&text)
                    .with_context(|| format!("parsing {}", p.display()))?;
            }
            let analysis = engine.analyze();
            let export = engine.export();
            match out {
                Some(p) => std::fs::write(&p, export)
                    .with_context(|| format!("writing {}", p.display()))?,
                None => print!("{export}"),
            }
            let violations = analysis.violations().count();
            eprintln!(
                "merged {} events, {violations} rule violations",
                engine.len()
            );
            Ok(verdict(violations == 0))
        }
    }
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
