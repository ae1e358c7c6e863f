//! The training loop.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::Algorithm;
use crate::einet::Activation;
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::harness::{evaluate, EvalReport};
use crate::ismdp::SelectEnv;
use crate::math::{AdamState, SeededRng};
use crate::par::{add_into, map_slice, Exec};

use super::agent::Agent;
use super::cascade::{CascadedQ, TargetRule};
use super::replay::{ReplayBuffer, ReplayChain, DEFAULT_CAPACITY};
use super::sharing::{sharing_groups, SharingKind, SharingMode};

/// Seeds for curve evaluations live far from training episode seeds.
const EVAL_SEED_BASE: u64 = 1 << 40;

/// Seed of the evaluation episodes for training seed `seed`.
pub fn eval_seed(seed: u64) -> u64 {
    EVAL_SEED_BASE + seed * 1_000_003
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub sharing: SharingKind,
    /// Macro steps (environment steps).
    pub total_steps: u64,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub target_period: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of `total_steps` over which ε decays linearly.
    pub eps_fraction: f64,
    /// Total layers, output layer included.
    pub layers: usize,
    pub channels: usize,
    pub activation: Activation,
    pub buffer_capacity: usize,
    /// Chains collected before the first update.
    pub learning_starts: usize,
    /// Steps per training segment and per evaluation episode.
    pub episode_len: u64,
    /// Steps between curve points; 0 records only the final point.
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Isq,
            sharing: SharingKind::I,
            total_steps: 200_000,
            gamma: 0.99,
            lr: AdamState::DEFAULT_LR,
            batch: 64,
            target_period: 1000,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_fraction: 0.1,
            layers: 3,
            channels: 48,
            activation: Activation::Relu,
            buffer_capacity: DEFAULT_CAPACITY,
            learning_starts: 1000,
            episode_len: 2500,
            eval_interval: 20_000,
            eval_episodes: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch == 0 || self.target_period == 0 || self.episode_len == 0 || self.buffer_capacity == 0 {
            return bad("batch, target_period, episode_len and buffer_capacity must be positive");
        }
        if self.layers == 0 || self.channels == 0 {
            return bad("layers and channels must be positive");
        }
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return bad("need 0 <= eps_end <= eps_start <= 1");
        }
        if !(0.0..=1.0).contains(&self.eps_fraction) {
            return bad("eps_fraction must lie in [0, 1]");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        Ok(())
    }

    /// Effective sharing: dense baselines own one net per phase, IDQN one
    /// net for everything.
    pub fn sharing_mode(&self, k: usize) -> SharingMode {
        if self.algorithm.is_dense() {
            SharingMode::I
        } else if self.algorithm == Algorithm::Idqn {
            SharingMode::U
        } else {
            SharingMode::from_kind(self.sharing, self.total_steps, k)
        }
    }
}

/// Linear decay from `eps_start` to `eps_end` over the first
/// `eps_fraction·total_steps` steps.
pub fn epsilon(step: u64, cfg: &TrainConfig) -> f64 {
    let window = cfg.eps_fraction * cfg.total_steps as f64;
    if window <= 0.0 {
        return cfg.eps_end;
    }
    let t = step as f64 / window;
    if t >= 1.0 {
        return cfg.eps_end;
    }
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_reward: f64,
    pub ci95: f64,
}

/// A change of the phase→set map during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEvent {
    pub step: u64,
    pub sets_before: usize,
    pub sets_after: usize,
    /// Children were bitwise copies of their parent at the split.
    pub copies_equal: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurvePoint>,
    pub splits: Vec<SplitEvent>,
    /// Mean chain loss of the last update, if any.
    pub last_loss: Option<f64>,
    pub final_eval: EvalReport,
}

/// Mean chain loss over `chains` and its gradient per parameter set. Chains
/// are evaluated with `exec` and summed in order, so the result does not
/// depend on `exec`.
pub fn batch_gradient(
    q: &CascadedQ,
    chains: &[&ReplayChain],
    gamma: f64,
    rule: TargetRule,
    exec: Exec,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let scale = 1.0 / chains.len().max(1) as f64;
    let losses = map_slice(exec, chains, |c| q.phase_loss(c, gamma, rule, scale));
    let mut grads = q.zero_grads();
    let mut total = 0.0;
    for l in losses {
        let l = l?;
        total += l.loss;
        for (acc, g) in grads.iter_mut().zip(&l.grads) {
            add_into(acc, g);
        }
    }
    Ok((total * scale, grads))
}

pub fn train(cfg: &TrainConfig, env: &EnvConfig, seed: u64) -> Result<TrainOutcome> {
    train_with(cfg, &|s| env.build(s), seed, Exec::auto())
}

/// Training with an arbitrary environment factory. `exec` only changes how
/// per-chain gradients are computed; results are identical either way.
pub fn train_with(
    cfg: &TrainConfig,
    factory: &dyn Fn(u64) -> Result<Box<dyn SelectEnv>>,
    seed: u64,
    exec: Exec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = factory(seed)?;
    let desc = env.descriptor();
    let k = desc.k_select;
    let mode = cfg.sharing_mode(k);
    let mut agent = Agent::init(
        cfg.algorithm,
        &desc,
        &mode,
        cfg.channels,
        cfg.layers,
        cfg.activation,
        cfg.lr,
        &mut SeededRng::with_stream(seed, 0),
    )?;
    let mut act_rng = SeededRng::with_stream(seed, 1);
    let mut replay_rng = SeededRng::with_stream(seed, 2);
    let mut episode_rng = SeededRng::with_stream(seed, 3);
    let rule = cfg.algorithm.target_rule();
    let eval_seed = eval_seed(seed);
    let mut eval_env = factory(seed)?;

    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut curve = Vec::new();
    let mut splits = Vec::new();
    let mut last_loss = None;
    let mut obs = env.reset(episode_rng.next_u64());
    let start_updates = cfg.learning_starts.max(1);

    for step in 0..cfg.total_steps {
        if step > 0 && step % cfg.episode_len == 0 {
            obs = env.reset(episode_rng.next_u64());
        }
        if cfg.eval_interval > 0 && step % cfg.eval_interval == 0 {
            let r = evaluate(&agent, eval_env.as_mut(), cfg.eval_episodes, cfg.episode_len, eval_seed)?;
            curve.push(CurvePoint {
                step,
                mean_reward: r.mean,
                ci95: r.ci95,
            });
        }
        let map = sharing_groups(&mode, step, k);
        if !agent.q.is_dense() && map != agent.q.phase_map() {
            let (old_sets, old_map) = (agent.q.sets().to_vec(), agent.q.phase_map().to_vec());
            agent.q.remap(map)?;
            let q = &agent.q;
            let copies_equal = (0..k).all(|p| q.sets()[q.phase_map()[p]] == old_sets[old_map[p]]);
            splits.push(SplitEvent {
                step,
                sets_before: old_sets.len(),
                sets_after: agent.q.set_count(),
                copies_equal,
            });
        }

        let decision = agent.act(&obs, epsilon(step, cfg), &mut act_rng)?;
        let (reward, next) = env.step(&decision.selection)?;
        if !reward.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: "environment returned a non-finite reward".into(),
            });
        }
        let (next_start, _) = agent.prepare(&next)?;
        buffer.push(ReplayChain {
            start: Arc::new(decision.start),
            actions: decision.actions,
            reward,
            next: Arc::new(next_start),
        });
        obs = next;

        if buffer.len() >= start_updates {
            let idx = buffer.sample_indices(cfg.batch, &mut replay_rng);
            let chains: Vec<&ReplayChain> = idx.iter().map(|&i| buffer.get(i)).collect();
            let (mean, grads) = batch_gradient(&agent.q, &chains, cfg.gamma, rule, exec)?;
            if !mean.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: format!("loss became {mean}"),
                });
            }
            agent.q.apply(&grads).map_err(|e| Error::Diverged {
                step,
                detail: e.to_string(),
            })?;
            last_loss = Some(mean);
        }
        if (step + 1) % cfg.target_period == 0 {
            agent.q.sync_targets();
        }
    }

    let final_eval = evaluate(&agent, eval_env.as_mut(), cfg.eval_episodes, cfg.episode_len, eval_seed)?;
    curve.push(CurvePoint {
        step: cfg.total_steps,
        mean_reward: final_eval.mean,
        ci95: final_eval.ci95,
    });
    Ok(TrainOutcome {
        agent,
        curve,
        splits,
        last_loss,
        final_eval,
    })
}
