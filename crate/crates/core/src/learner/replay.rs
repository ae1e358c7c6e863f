//! Replay of whole macro steps.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::Result;
use crate::ismdp::{PhaseAction, PhaseState};
use crate::math::SeededRng;

pub const DEFAULT_CAPACITY: usize = 50_000;

/// The `K` phase decisions of one macro step. Intermediate states are
/// rebuilt from `start` because phase transitions are deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayChain {
    pub start: Arc<PhaseState>,
    pub actions: Vec<PhaseAction>,
    pub reward: f64,
    /// Phase-0 state after the environment moved.
    pub next: Arc<PhaseState>,
}

impl ReplayChain {
    /// `s_0 … s_K`; the last entry is the completed selection.
    pub fn phase_states(&self) -> Result<Vec<PhaseState>> {
        let mut out = Vec::with_capacity(self.actions.len() + 1);
        out.push((*self.start).clone());
        for &a in &self.actions {
            let next = out.last().expect("non-empty").advance(a)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// FIFO ring of chains.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    chains: VecDeque<ReplayChain>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            chains: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            inserted: 0,
        }
    }

    pub fn push(&mut self, chain: ReplayChain) {
        if self.chains.len() == self.capacity {
            self.chains.pop_front();
        }
        self.chains.push_back(chain);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, idx: usize) -> &ReplayChain {
        &self.chains[idx]
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut SeededRng) -> Vec<usize> {
        (0..batch).map(|_| rng.below(self.chains.len())).collect()
    }
}
