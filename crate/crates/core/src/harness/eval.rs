//! Greedy evaluation and confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::Result;
use crate::ismdp::{Observation, SelectEnv};
use crate::learner::Agent;
use crate::math::SeededRng;

/// Something that picks a joint selection from an observation.
pub trait Policy {
    fn select(&self, obs: &Observation, rng: &mut SeededRng) -> Result<Vec<(usize, usize)>>;
}

impl Policy for Agent {
    fn select(&self, obs: &Observation, rng: &mut SeededRng) -> Result<Vec<(usize, usize)>> {
        Ok(self.act(obs, 0.0, rng)?.selection)
    }
}

/// Uniform over joint selections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomPolicy {
    pub k: usize,
    pub commands: usize,
}

impl Policy for RandomPolicy {
    fn select(&self, obs: &Observation, rng: &mut SeededRng) -> Result<Vec<(usize, usize)>> {
        let perm = rng.permutation(obs.items.rows());
        Ok(perm[..self.k].iter().map(|&j| (j, rng.below(self.commands))).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean summed reward per episode.
    pub mean: f64,
    /// Half-width of the 95% t-interval over `samples`.
    pub ci95: f64,
    /// Per-episode returns, or per-seed means for aggregated reports.
    pub samples: Vec<f64>,
    pub episode_len: u64,
}

impl EvalReport {
    pub fn from_samples(samples: Vec<f64>, episode_len: u64) -> Self {
        let (mean, ci95) = mean_ci95(&samples);
        Self {
            mean,
            ci95,
            samples,
            episode_len,
        }
    }

    /// Across-seed report built from each seed's mean.
    pub fn aggregate(per_seed: &[EvalReport]) -> Self {
        let len = per_seed.first().map_or(0, |r| r.episode_len);
        Self::from_samples(per_seed.iter().map(|r| r.mean).collect(), len)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        std_dev(&self.samples) / (self.samples.len() as f64).sqrt()
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Two-sided 95% Student-t quantile for `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean and 95% half-width; the half-width is 0 for fewer than two samples.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    (mean, t_quantile_975(n - 1) * std_dev(xs) / (n as f64).sqrt())
}

/// Runs `episodes` greedy episodes of `episode_len` steps. Episode `e`
/// resets the environment with `seed + e`.
pub fn evaluate(
    policy: &dyn Policy,
    env: &mut dyn SelectEnv,
    episodes: usize,
    episode_len: u64,
    seed: u64,
) -> Result<EvalReport> {
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes as u64 {
        let mut rng = SeededRng::with_stream(seed, e);
        let mut obs = env.reset(seed.wrapping_add(e));
        let mut total = 0.0;
        for _ in 0..episode_len {
            let sel = policy.select(&obs, &mut rng)?;
            let (r, next) = env.step(&sel)?;
            total += r;
            obs = next;
        }
        returns.push(total);
    }
    Ok(EvalReport::from_samples(returns, episode_len))
}
