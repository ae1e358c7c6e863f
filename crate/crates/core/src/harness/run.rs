//! Running an experiment and writing its files.
//!
//! Every file name starts with the config hash. A run writes, per seed, a
//! curve CSV and (for weight-shared algorithms) a checkpoint, then a summary
//! CSV with seed `all`, an optional SVG and finally the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{train_with, CurvePoint, SplitEvent, TrainOutcome};
use crate::par::{map_slice, Exec};

use super::config::ExperimentConfig;
use super::eval::{mean_ci95, EvalReport};
use super::transfer::checkpoint;

pub const CSV_HEADER: &str = "step,seed,mean_reward,ci95";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_eval: EvalReport,
    pub splits: Vec<SplitEvent>,
    pub last_loss: Option<f64>,
    pub curve_file: String,
    /// Absent for dense algorithms.
    pub checkpoint_file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    /// Across-seed report: mean and CI of the per-seed final means.
    pub aggregate: EvalReport,
    pub summary_file: String,
    pub plot_file: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn manifest_name(hash: &str) -> String {
    format!("{hash}-manifest.json")
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// CSV rows for one seed's curve, header included.
pub fn curve_csv(seed: &str, curve: &[CurvePoint]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for p in curve {
        writeln!(out, "{},{},{},{}", p.step, seed, p.mean_reward, p.ci95).expect("string write");
    }
    out
}

/// Across-seed curve: at each step, mean and CI of the per-seed means.
pub fn summarize(curves: &[&[CurvePoint]]) -> Result<Vec<CurvePoint>> {
    let first = curves.first().ok_or_else(|| Error::Config("no curves to summarize".into()))?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Config("curves have different lengths".into()));
    }
    (0..first.len())
        .map(|i| {
            let step = first[i].step;
            if curves.iter().any(|c| c[i].step != step) {
                return Err(Error::Config(format!("curves disagree at point {i}")));
            }
            let means: Vec<f64> = curves.iter().map(|c| c[i].mean_reward).collect();
            let (mean_reward, ci95) = mean_ci95(&means);
            Ok(CurvePoint {
                step,
                mean_reward,
                ci95,
            })
        })
        .collect()
}

/// Polyline of the mean over a shaded band of mean ± CI.
pub fn render_svg(curve: &[CurvePoint], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 48.0;
    let max_step = curve.iter().map(|p| p.step).max().unwrap_or(0).max(1) as f64;
    let lo = curve.iter().map(|p| p.mean_reward - p.ci95).fold(f64::INFINITY, f64::min);
    let hi = curve.iter().map(|p| p.mean_reward + p.ci95).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0) };
    let x = |s: u64| PAD + (W - 2.0 * PAD) * s as f64 / max_step;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let upper: Vec<String> = curve
        .iter()
        .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean_reward + p.ci95)))
        .collect();
    let lower: Vec<String> = curve
        .iter()
        .rev()
        .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean_reward - p.ci95)))
        .collect();
    let mean: Vec<String> = curve
        .iter()
        .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean_reward)))
        .collect();
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .expect("string write");
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).expect("string write");
    writeln!(
        svg,
        r#"<polygon points="{} {}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
        upper.join(" "),
        lower.join(" ")
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        mean.join(" ")
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<text x="{PAD}" y="{:.0}" font-family="sans-serif" font-size="11">step 0 to {max_step}; reward {lo:.3} to {hi:.3}</text>"#,
        H - 16.0
    )
    .expect("string write");
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Trains every seed of `cfg` and writes the result files into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = cfg.hash();
    let factory = |s: u64| cfg.env.build(s);
    let outcomes: Vec<Result<TrainOutcome>> = if cfg.parallel_seeds {
        map_slice(Exec::auto(), &cfg.seeds, |&s| train_with(&cfg.train, &factory, s, Exec::Sequential))
    } else {
        cfg.seeds
            .iter()
            .map(|&s| train_with(&cfg.train, &factory, s, Exec::auto()))
            .collect()
    };

    let mut seeds = Vec::with_capacity(outcomes.len());
    let mut curves = Vec::with_capacity(outcomes.len());
    for (&seed, outcome) in cfg.seeds.iter().zip(outcomes) {
        let outcome = outcome?;
        let curve_file = format!("{hash}-seed{seed}.csv");
        write(&out.join(&curve_file), &curve_csv(&seed.to_string(), &outcome.curve))?;
        let checkpoint_file = if outcome.agent.q.is_dense() {
            None
        } else {
            let name = format!("{hash}-seed{seed}.ckpt.json");
            let doc = checkpoint(&outcome.agent, &cfg.env)?;
            let path = out.join(&name);
            doc.write(&path)?;
            Some(name)
        };
        seeds.push(SeedResult {
            seed,
            final_eval: outcome.final_eval,
            splits: outcome.splits,
            last_loss: outcome.last_loss,
            curve_file,
            checkpoint_file,
        });
        curves.push(outcome.curve);
    }

    let refs: Vec<&[CurvePoint]> = curves.iter().map(Vec::as_slice).collect();
    let summary = summarize(&refs)?;
    let summary_file = format!("{hash}-summary.csv");
    write(&out.join(&summary_file), &curve_csv("all", &summary))?;
    let plot_file = if cfg.plot {
        let name = format!("{hash}-curve.svg");
        let title = format!("{} {} ({} seeds)", hash, cfg.train.algorithm.name(), cfg.seeds.len());
        write(&out.join(&name), &render_svg(&summary, &title))?;
        Some(name)
    } else {
        None
    };

    let per_seed: Vec<EvalReport> = seeds.iter().map(|s| s.final_eval.clone()).collect();
    let manifest = Manifest {
        config_hash: hash.clone(),
        config: cfg.clone(),
        seeds,
        aggregate: EvalReport::aggregate(&per_seed),
        summary_file,
        plot_file,
    };
    write(&out.join(manifest_name(&hash)), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Paths of every file a manifest lists, manifest included.
pub fn manifest_files(manifest: &Manifest, out: &Path) -> Vec<PathBuf> {
    let mut files = vec![out.join(manifest_name(&manifest.config_hash)), out.join(&manifest.summary_file)];
    for s in &manifest.seeds {
        files.push(out.join(&s.curve_file));
        if let Some(c) = &s.checkpoint_file {
            files.push(out.join(c));
        }
    }
    if let Some(p) = &manifest.plot_file {
        files.push(out.join(p));
    }
    files
}
