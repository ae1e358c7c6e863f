//! Fixture and timing for the sequential vs parallel batch gradient.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::Algorithm;
use crate::einet::Activation;
use crate::envs::{CircleConfig, EnvConfig};
use crate::error::Result;
use crate::learner::{batch_gradient, Agent, ReplayChain, SharingMode, TargetRule};
use crate::math::SeededRng;
use crate::par::Exec;

/// An agent and a batch of chains collected with exploratory actions.
pub struct BenchFixture {
    pub agent: Agent,
    pub chains: Vec<ReplayChain>,
}

impl BenchFixture {
    /// CS with `n` items and `k` selections, a 48-channel 3-layer I-shared
    /// cascade and `batch` chains.
    pub fn circles(n: usize, k: usize, batch: usize, seed: u64) -> Result<Self> {
        let env_cfg = EnvConfig::Circles(CircleConfig::new(n, 1, k, 5));
        let mut env = env_cfg.build(seed)?;
        let desc = env.descriptor();
        let mut rng = SeededRng::new(seed);
        let agent = Agent::init(Algorithm::Isq, &desc, &SharingMode::I, 48, 3, Activation::Relu, 1e-3, &mut rng)?;
        let mut obs = env.observe();
        let mut chains = Vec::with_capacity(batch);
        for _ in 0..batch {
            let d = agent.act(&obs, 0.5, &mut rng)?;
            let (reward, next) = env.step(&d.selection)?;
            let (next_start, _) = agent.prepare(&next)?;
            chains.push(ReplayChain {
                start: Arc::new(d.start),
                actions: d.actions,
                reward,
                next: Arc::new(next_start),
            });
            obs = next;
        }
        Ok(Self { agent, chains })
    }

    pub fn gradient(&self, exec: Exec) -> Result<(f64, Vec<Vec<f64>>)> {
        let refs: Vec<&ReplayChain> = self.chains.iter().collect();
        batch_gradient(&self.agent.q, &refs, 0.99, TargetRule::Max, exec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_items: usize,
    pub k_select: usize,
    pub batch: usize,
    pub reps: usize,
    pub threads: usize,
    pub sequential_ms: f64,
    pub parallel_ms: f64,
    /// Both paths returned bitwise-equal gradients.
    pub identical: bool,
}

fn time(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<Duration> {
    let start = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    Ok(start.elapsed() / reps.max(1) as u32)
}

/// Mean wall time per batch gradient on each path.
pub fn bench_batch_gradient(n: usize, k: usize, batch: usize, reps: usize) -> Result<BenchReport> {
    let fx = BenchFixture::circles(n, k, batch, 0)?;
    let identical = fx.gradient(Exec::Sequential)? == fx.gradient(Exec::Parallel)?;
    let seq = time(reps, || fx.gradient(Exec::Sequential).map(|_| ()))?;
    let par = time(reps, || fx.gradient(Exec::Parallel).map(|_| ()))?;
    Ok(BenchReport {
        n_items: n,
        k_select: k,
        batch,
        reps,
        threads: std::thread::available_parallelism().map_or(1, |t| t.get()),
        sequential_ms: seq.as_secs_f64() * 1e3,
        parallel_ms: par.as_secs_f64() * 1e3,
        identical,
    })
}
