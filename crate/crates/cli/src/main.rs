//! `isq` command line: training, evaluation, transfer, verification and a
//! quick parallel-speedup benchmark.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isq::einet::io::ParamDocument;
use isq::error::Error;
use isq::harness::{
    agent_from_document, bench_batch_gradient, checkpoint_env, default_episode_len, evaluate, manifest_files,
    manifest_name, rebuild_for, run_experiment, transfer_evaluate, ExperimentConfig, RandomPolicy,
};
use isq::verification::run_suite;

#[derive(Parser)]
#[command(name = "isq", version, about = "Iterative select Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write curves, checkpoints and a manifest.
    Train {
        /// JSON config file or preset name (cs-small, cs-medium, pp-small).
        #[arg(long)]
        config: String,
        /// Output directory; defaults to the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Train seeds on worker threads.
        #[arg(long)]
        parallel_seeds: bool,
        /// Also write an SVG of the summary curve.
        #[arg(long)]
        plot: bool,
    },
    /// Greedy evaluation of a checkpoint next to the uniform-random policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON config file or preset name giving the environment and episode settings.
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a checkpoint at a different number of items.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n_test: usize,
        /// Training environment; defaults to the one stored in the checkpoint.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Defaults to 2500 for circles, 175 for predator-prey, 100 for tabular.
        #[arg(long)]
        episode_len: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run property suites; prints one JSON report per line.
    Verify {
        /// ei, grad, theorem1, lemma, equiv, universal or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the batch gradient on the sequential and parallel paths.
    Bench {
        #[arg(long, default_value_t = 20)]
        n_items: usize,
        #[arg(long, default_value_t = 3)]
        k_select: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    CheckFailed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Format(_) | Error::Io { .. } => 2,
        _ => 1,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<Status, Error> {
    match cli.command {
        Command::Train {
            config,
            out,
            parallel_seeds,
            plot,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.parallel_seeds |= parallel_seeds;
            cfg.plot |= plot;
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out or set out_dir".into()))?;
            let manifest = run_experiment(&cfg, &out)?;
            for path in manifest_files(&manifest, &out) {
                eprintln!("wrote {}", path.display());
            }
            println!("{}", out.join(manifest_name(&manifest.config_hash)).display());
            print_json(&manifest.aggregate)?;
            Ok(Status::Ok)
        }
        Command::Eval { checkpoint, config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let doc = ParamDocument::read(&checkpoint)?;
            let mut env = cfg.env.build(seed)?;
            let desc = env.descriptor();
            let agent = rebuild_for(&agent_from_document(&doc)?, &desc)?;
            let (episodes, len) = (cfg.train.eval_episodes, cfg.train.episode_len);
            let policy = evaluate(&agent, env.as_mut(), episodes, len, seed)?;
            let random = RandomPolicy {
                k: desc.k_select,
                commands: desc.commands,
            };
            let baseline = evaluate(&random, env.as_mut(), episodes, len, seed)?;
            print_json(&serde_json::json!({ "policy": policy, "random": baseline }))?;
            Ok(Status::Ok)
        }
        Command::Transfer {
            checkpoint,
            n_test,
            config,
            episodes,
            episode_len,
            seed,
        } => {
            let doc = ParamDocument::read(&checkpoint)?;
            let env = match config {
                Some(spec) => ExperimentConfig::load(&spec)?.env,
                None => checkpoint_env(&doc)?.ok_or_else(|| {
                    Error::Config("checkpoint stores no environment; pass --config".into())
                })?,
            };
            let agent = agent_from_document(&doc)?;
            let len = episode_len.unwrap_or_else(|| default_episode_len(&env));
            print_json(&transfer_evaluate(&agent, &env, n_test, episodes, len, seed)?)?;
            Ok(Status::Ok)
        }
        Command::Verify { suite, seed } => {
            let reports = run_suite(&suite, seed)?;
            for r in &reports {
                print_json(r)?;
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.as_str()).collect();
            if failed.is_empty() {
                eprintln!("all {} suites passed", reports.len());
                Ok(Status::Ok)
            } else {
                eprintln!("failed: {}", failed.join(", "));
                Ok(Status::CheckFailed)
            }
        }
        Command::Bench {
            n_items,
            k_select,
            batch,
            reps,
        } => {
            let report = bench_batch_gradient(n_items, k_select, batch, reps)?;
            print_json(&report)?;
            Ok(if report.identical { Status::Ok } else { Status::CheckFailed })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
