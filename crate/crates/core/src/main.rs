use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlpomcp::agent::{train, write_train_log};
use rlpomcp::config::Config;
use rlpomcp::harness::{emit_outputs, read_episode_csv, run_episode, run_experiment, write_episode_csv, write_plots};
use rlpomcp::world::EpisodeConfig;
use rlpomcp::{IppError, Result};

#[derive(Parser)]
#[command(version, about = "Informative path planning with POMCP and a learned parameter selector")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed from which all randomness derives.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy; writes policy.txt and train_log.csv.
    Train,
    /// Run the evaluation matrix; writes episode logs, tables and plots.
    Eval,
    /// Run a single episode and write its log.
    Episode {
        /// Policy id: naive, random, learned-metadata or learned-fixed10.
        #[arg(long, default_value = "naive")]
        policy: String,
        /// Objective: entropy, ei or pi.
        #[arg(long, default_value = "ei")]
        objective: String,
    },
    /// Regenerate plots from episode CSVs in `<out>/episodes`.
    Plot,
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| IppError::io(p, e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.cmd {
        Cmd::Train => {
            let tc = cfg.train_config(cli.seed)?;
            let outcome = train(&tc)?;
            ensure_dir(&cli.out)?;
            let policy_path = cli.out.join("policy.txt");
            outcome.policy.save(&policy_path)?;
            write_train_log(&outcome.log, &cli.out.join("train_log.csv"))?;
            println!("wrote {}", policy_path.display());
        }
        Cmd::Eval => {
            let matrix = cfg.matrix(cli.seed)?;
            let results = run_experiment(&matrix)?;
            ensure_dir(&cli.out)?;
            let files = emit_outputs(&results, &cli.out)?;
            for a in &results.aggregates {
                println!(
                    "{} {} n={} mean_reward={:.4} std={:.4} mean_gc={:.0}",
                    a.objective, a.policy, a.n, a.mean_reward, a.std_reward, a.mean_generator_calls
                );
            }
            for s in &results.sign_tests {
                println!(
                    "{} {} vs {}: {}-{} (ties {}) p={:.4}",
                    s.objective, s.policy_a, s.policy_b, s.wins_a, s.wins_b, s.ties, s.p_a_better
                );
            }
            let failed = results.rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                eprintln!("warning: {failed} cells failed; see {}", files.results.display());
            }
        }
        Cmd::Episode { policy, objective } => {
            let spec = cfg.policy_spec(&policy)?;
            let resolved = spec.resolve()?;
            let obj = cfg.objectives(&[objective])?[0];
            let (world_name, source) = cfg.world_source()?;
            let seed = cfg.eval_seeds(cli.seed).first().copied().unwrap_or(cli.seed);
            let ep = EpisodeConfig {
                budget_steps: cfg.world.budget_steps,
                seed_samples: cfg.world.seed_samples,
                objective: obj,
                rng_seed: seed,
            };
            let norms = cfg.eval_norms(std::slice::from_ref(&spec));
            let log =
                run_episode(source.field_for(seed)?, &world_name, &resolved, spec.id(), &cfg.env_setup()?, ep, &norms)?;
            ensure_dir(&cli.out)?;
            let path = cli.out.join("episode.csv");
            write_episode_csv(&log, &path)?;
            println!("final_reward={:.6} generator_calls={}", log.final_reward(), log.total_generator_calls());
        }
        Cmd::Plot => {
            let dir = cli.out.join("episodes");
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| IppError::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            paths.sort();
            let logs = paths.iter().map(|p| read_episode_csv(p)).collect::<Result<Vec<_>>>()?;
            if logs.is_empty() {
                return Err(IppError::NoData);
            }
            for p in write_plots(&logs, &cli.out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} msg={msg:?}", e.kind());
            ExitCode::FAILURE
        }
    }
}
