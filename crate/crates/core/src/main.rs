//! Command line front end for the experiment harness.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kmg::equilibrium::{find_cce_with, CceObjective};
use kmg::game::{generate_random_game, write_game, GameConfig};
use kmg::harness::{
    self, checks, format_joint, load_config, parse_payoff_pair, summarize, SweepAxis,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "kmg",
    version,
    about = "Online learning laboratory for zero-sum kernel mixture Markov games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and write record files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the seed pool; defaults to one per CPU.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's algorithm variant.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long = "beta-scale")]
        beta_scale: Option<f64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long = "n-seeds")]
        n_seeds: Option<usize>,
    },
    /// Run one experiment per value along a single config axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of: episodes (T), beta_scale, iota, feature_dim (d),
        /// horizon (H), delta, eval_every, variant.
        #[arg(long)]
        axis: String,
        /// Comma separated values for the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Cross-check the exact oracles against independent implementations.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances per property.
        #[arg(long, default_value_t = 40)]
        rounds: usize,
    },
    /// Solve one coarse correlated equilibrium from a payoff pair file
    /// (dimension line, then the upper and lower tables).
    CceSolve {
        #[arg(long)]
        input: PathBuf,
        /// Write the joint distribution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximize the expected upper/lower spread over the feasible set
        /// instead of returning an arbitrary feasible point.
        #[arg(long = "maximize-spread", default_value_t = false)]
        maximize_spread: bool,
    },
    /// Generate a random game and write it in the kmg-v1 text format.
    GenGame {
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
        #[arg(long, default_value_t = 0.0)]
        iota: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, out, workers, seed, variant, beta_scale, episodes, n_seeds } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.run.master_seed = s;
            }
            if let Some(v) = variant {
                cfg.run.variant = v;
            }
            if let Some(b) = beta_scale {
                cfg.run.beta_scale = b;
            }
            if let Some(e) = episodes {
                cfg.run.episodes = e;
            }
            if let Some(n) = n_seeds {
                cfg.run.n_seeds = n;
            }
            cfg.validate()?;
            let out_dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let start = Instant::now();
            let outcome = harness::run_experiment(&cfg, &out_dir, workers)?;
            let stats = summarize(&outcome.outputs, cfg.run.episodes);
            println!(
                "ran {} seeds x {} episodes ({}) in {:.1}s",
                cfg.run.n_seeds,
                cfg.run.episodes,
                cfg.run.variant,
                start.elapsed().as_secs_f64()
            );
            println!(
                "final cum regret {:.4} (stderr {:.4}), final gap {:.4} (stderr {:.4})",
                stats.final_cum_mean,
                stats.final_cum_stderr,
                stats.final_gap_mean,
                stats.final_gap_stderr
            );
            println!("wrote {} files to {}", outcome.files.len(), out_dir.display());
        }
        Command::Sweep { config, axis, values, out, workers } => {
            let cfg = load_config(&config)?;
            let axis = SweepAxis::parse(&axis)
                .with_context(|| format!("unknown sweep axis {axis:?}"))?;
            let out_root = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("sweep"));
            let start = Instant::now();
            let outcomes = harness::run_sweep(&cfg, axis, &values, &out_root, workers)?;
            for (value, outcome) in &outcomes {
                let stats = summarize(&outcome.outputs, outcome.outputs[0].record.episodes);
                println!(
                    "{} = {}: final cum regret {:.4} (stderr {:.4})",
                    axis.name(),
                    value,
                    stats.final_cum_mean,
                    stats.final_cum_stderr
                );
            }
            println!(
                "swept {} values in {:.1}s, outputs under {}",
                outcomes.len(),
                start.elapsed().as_secs_f64(),
                out_root.display()
            );
        }
        Command::OracleCheck { seed, rounds } => {
            let reports = checks::run_all(seed, rounds);
            let mut failures = 0;
            for r in &reports {
                let status = if r.passed { "PASS" } else { "FAIL" };
                println!("oracle-check {}: {} ({})", r.name, status, r.detail);
                if !r.passed {
                    failures += 1;
                }
            }
            if failures > 0 {
                bail!("{failures} oracle check(s) failed");
            }
        }
        Command::CceSolve { input, out, maximize_spread } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let (upper, lower) = parse_payoff_pair(&text)?;
            let objective =
                if maximize_spread { CceObjective::MaxSpread } else { CceObjective::Feasibility };
            let (joint, _) = find_cce_with(&upper, &lower, objective)?;
            let formatted = format_joint(&joint);
            match out {
                Some(path) => fs::write(&path, formatted)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{formatted}"),
            }
        }
        Command::GenGame { states, actions, horizon, dim, concentration, iota, seed, out } => {
            let mut config = GameConfig::new(states, actions, horizon, dim);
            config.dirichlet_concentration = concentration;
            config.iota = iota;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let game = generate_random_game(&config, &mut rng)?;
            fs::write(&out, write_game(&game))
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} ({} states, {} actions, horizon {}, dim {}, iota {})",
                out.display(),
                states,
                actions,
                horizon,
                dim,
                iota
            );
        }
    }
    Ok(())
}
