use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mec_core::sim::ArrivalGenerator;
use mec_core::solve_pk;
use mec_sim::config::{bounds_for, parse_scenario};
use mec_sim::dataset::{generate_locations, write_locations, BoundingBox};
use mec_sim::runner::{run_scenario, run_sweep, validate_scenario, write_atomic, write_run};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "mec-sim", version, about = "Peer offloading simulator for edge base stations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary.json and trace.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the scenario's output_dir, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario once per value of a top-level key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the optimal throughput and service targets as JSON.
    SolvePk {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the closed-form queue bounds and the V ceiling as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic location CSV.
    DatasetGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 36)]
        stations: usize,
        #[arg(long, default_value_t = 126)]
        groups: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the scenario with every invariant check; exits non-zero on a violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = parse_scenario(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let output = run_scenario(&cfg)?;
            write_run(&dir, &output)?;
            let m = &output.summary.metrics;
            println!(
                "{}: served {} of {}, mean response {:.3} ms, utility {:.4} -> {}",
                output.summary.algorithm,
                m.served,
                m.arrived,
                m.mean_response_ms,
                m.utility,
                dir.display()
            );
        }
        Command::Sweep { config, param, values, out } => {
            let cfg = parse_scenario(&config)?;
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let manifest = run_sweep(&cfg, &param, &values, &dir)?;
            let failed = manifest.points.iter().filter(|p| !p.ok).count();
            println!("{} points, {failed} failed -> {}", manifest.points.len(), dir.display());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::SolvePk { config } => {
            let cfg = parse_scenario(&config)?;
            let sim = cfg.to_sim_config()?;
            let lambda = match &sim.known_lambda {
                Some(l) => l.clone(),
                None => {
                    let positions: Vec<_> = sim.stations.iter().map(|s| s.position).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
                    ArrivalGenerator::new(&sim.arrivals, &positions, sim.load_factor, sim.workload, &mut rng)?.presence_rate(1.0)
                }
            };
            let sol = solve_pk(&sim.stations, &lambda)?;
            println!("{}", serde_json::to_string_pretty(&sol)?);
        }
        Command::Bounds { config } => {
            let cfg = parse_scenario(&config)?;
            let report = bounds_for(&cfg.to_sim_config()?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::DatasetGen { seed, stations, groups, out } => {
            if stations == 0 {
                bail!("at least one station is required");
            }
            let rows = generate_locations(seed, stations, groups, &BoundingBox::default());
            let mut buf = Vec::new();
            write_locations(&rows, &mut buf)?;
            write_atomic(&out, &buf).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Validate { config } => {
            let cfg = parse_scenario(&config)?;
            let checks = validate_scenario(&cfg)?;
            for c in &checks {
                println!("{} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.ok) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
