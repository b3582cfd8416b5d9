use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use kelly_game::equilibrium::{contraction_threshold, solve_ne};
use kelly_game::sdsc::certify_sdsc;
use kelly_sim::config::ExperimentConfig;
use kelly_sim::experiment::{
    render_summary, run_experiment, write_outputs, NE_MAX_ITER, NE_TOLERANCE,
};
use kelly_sim::scenario::game_from_config;
use kelly_sim::table::{benchmark_table, TableSpec};

/// Simulator and analysis toolkit for repeated proportional-allocation
/// auctions.
#[derive(Parser)]
#[command(name = "kelly-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write trajectory/metrics CSVs plus a
    /// summary.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Overrides run.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output`, then `out/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify strict diagonal concavity for the configured game; exits
    /// nonzero when certification fails.
    CheckSdsc {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the configured game for its Nash equilibrium.
    SolveNe {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reproduce the convergence-speed benchmark grid.
    #[command(name = "table1")]
    Table1 {
        /// Also write the rendered table to DIR/table1.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    if let Ok(workers) = std::env::var("KELLY_SIM_WORKERS") {
        let workers: usize = workers
            .parse()
            .context("KELLY_SIM_WORKERS must be a positive integer")?;
        anyhow::ensure!(workers >= 1, "KELLY_SIM_WORKERS must be a positive integer");
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("failed to size the worker pool")?;
    }

    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.run.seed = seed;
            }
            let out_dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &out_dir)?;
            print!("{}", render_summary(&result));
            eprintln!(
                "wrote {}, {}, {}",
                out_dir.join("trajectory.csv").display(),
                out_dir.join("metrics.csv").display(),
                out_dir.join("summary.txt").display()
            );
        }
        Command::CheckSdsc { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let game = game_from_config(&cfg)?;
            let cert = certify_sdsc(&game, None)?;
            println!("certified: {}", cert.certified);
            println!("method: {:?}", cert.method);
            if let Some(resolution) = cert.grid_resolution {
                println!("grid resolution: {resolution}");
            }
            println!("psi_sup: {}", cert.psi_sup);
            println!("weights: {:?}", cert.r);
            if !cert.certified {
                std::process::exit(1);
            }
        }
        Command::SolveNe { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let game = game_from_config(&cfg)?;
            let ne = solve_ne(&game, NE_TOLERANCE, NE_MAX_ITER)?;
            println!("bids: {:?}", ne.profile.bids());
            println!("residual: {}", ne.residual);
            println!("iterations: {}", ne.iterations);
            println!("method: {:?}", ne.method);
            println!("converged: {}", ne.converged);
            match contraction_threshold(&game) {
                Ok(floor) => {
                    let min_bid = game
                        .agents()
                        .iter()
                        .map(|agent| agent.min_bid())
                        .fold(f64::INFINITY, f64::min);
                    let verdict = if min_bid > floor {
                        "geometric best-response convergence guaranteed"
                    } else {
                        "no geometric guarantee at this bid floor"
                    };
                    println!("contraction floor: {floor} (min bid {min_bid}; {verdict})");
                }
                Err(_) => println!("contraction floor: n/a for this game"),
            }
        }
        Command::Table1 { out } => {
            let table = benchmark_table(&TableSpec::default())?;
            print!("{table}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)
                    .with_context(|| format!("failed to create {}", dir.display()))?;
                let path = dir.join("table1.txt");
                fs::write(&path, &table)
                    .with_context(|| format!("failed to write {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
