//! Select-MDP environments and their JSON configs.

mod circles;
mod predator_prey;
mod tabular;

use serde::{Deserialize, Serialize};

pub use circles::{cs_reward, Circle, CircleConfig, CircleEnv};
pub use predator_prey::{caught_preys, featurize_cell, Cell, PPConfig, PredatorPreyEnv, CATCH_THRESHOLD};
pub use tabular::{delayed_reward_task, enumerate_selections, tabular_random, Selection, TabularEnv, TabularSMDP};

use crate::error::Result;
use crate::ismdp::{EnvDescriptor, SelectEnv};

/// `{"kind": "circles", ...}`, `{"kind": "predator_prey", ...}`,
/// `{"kind": "tabular", ...}` or `{"kind": "delayed_reward"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Circles(CircleConfig),
    PredatorPrey(PPConfig),
    Tabular(TabularConfig),
    /// The fixed two-item task where greedy selection is suboptimal.
    DelayedReward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    pub n: usize,
    pub a: usize,
    pub c: usize,
    pub k: usize,
    pub seed: u64,
}

impl EnvConfig {
    pub fn build(&self, seed: u64) -> Result<Box<dyn SelectEnv>> {
        let mut env: Box<dyn SelectEnv> = match self {
            EnvConfig::Circles(c) => Box::new(CircleEnv::new(c.clone(), seed)?),
            EnvConfig::PredatorPrey(c) => Box::new(PredatorPreyEnv::new(c.clone(), seed)?),
            EnvConfig::Tabular(t) => Box::new(TabularEnv::new(std::sync::Arc::new(TabularSMDP::random(
                t.n, t.a, t.c, t.k, t.seed,
            )?))),
            EnvConfig::DelayedReward => Box::new(TabularEnv::new(std::sync::Arc::new(delayed_reward_task()))),
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn descriptor(&self) -> Result<EnvDescriptor> {
        Ok(self.build(0)?.descriptor())
    }

    /// Same environment with a different number of selectable items.
    pub fn with_items(&self, n: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            EnvConfig::Circles(c) => c.n = n,
            EnvConfig::PredatorPrey(c) => c.n = n,
            EnvConfig::Tabular(t) => t.n = n,
            EnvConfig::DelayedReward => {}
        }
        out
    }

    pub fn with_commands(&self, commands: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            EnvConfig::Circles(c) => c.commands = commands,
            EnvConfig::PredatorPrey(c) => c.commands = commands,
            EnvConfig::Tabular(t) => t.c = commands,
            EnvConfig::DelayedReward => {}
        }
        out
    }
}
