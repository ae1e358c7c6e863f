//! Experiment configs, evaluation, transfer across item counts and result
//! files.

mod bench;
mod config;
mod eval;
mod run;
mod transfer;

pub use bench::{bench_batch_gradient, BenchFixture, BenchReport};
pub use config::{default_episode_len, preset, ExperimentConfig, HASH_LEN, PRESETS};
pub use eval::{evaluate, mean_ci95, t_quantile_975, EvalReport, Policy, RandomPolicy};
pub use run::{
    curve_csv, manifest_files, manifest_name, render_svg, run_experiment, summarize, Manifest, SeedResult, CSV_HEADER,
};
pub use transfer::{
    agent_from_document, checkpoint, checkpoint_env, rebuild_for, transfer_evaluate, TransferReport,
    TRANSFER_EI_STATES,
};
