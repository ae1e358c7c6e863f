//! Cascaded per-phase Q-networks, their targets and the phase losses.

use crate::einet::{Architecture, DenseNet, PhaseInput, QMatrix, SharedParams};
use crate::error::{Error, Result};
use crate::math::{AdamState, Matrix, SeededRng};

use super::replay::ReplayChain;
use super::sharing::set_count;

/// One phase network: tied scalars or an untied dense baseline.
#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Shared(SharedParams),
    Dense(DenseNet),
}

impl Network {
    pub fn forward(&self, s: &PhaseInput) -> Result<QMatrix> {
        match self {
            Network::Shared(p) => p.forward(s),
            Network::Dense(d) => d.forward(s),
        }
    }

    /// Forward pass, then adds `∂(upstream·Q)/∂params` into `grad`, where
    /// `upstream` is computed from the forward output.
    pub fn accumulate<F>(&self, s: &PhaseInput, upstream: F, grad: &mut [f64]) -> Result<QMatrix>
    where
        F: FnOnce(&QMatrix) -> Matrix,
    {
        match self {
            Network::Shared(p) => {
                let (q, trace) = p.forward_trace(s)?;
                let up = upstream(&q);
                p.backward_trace(&trace, &up, grad)?;
                Ok(q)
            }
            Network::Dense(d) => {
                let q = d.forward(s)?;
                let up = upstream(&q);
                for (g, v) in grad.iter_mut().zip(d.backward(s, &up)?.0) {
                    *g += v;
                }
                Ok(q)
            }
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Network::Shared(p) => p.scalars(),
            Network::Dense(d) => d.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Network::Shared(p) => p.scalars_mut(),
            Network::Dense(d) => d.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    pub fn as_shared(&self) -> Option<&SharedParams> {
        match self {
            Network::Shared(p) => Some(p),
            Network::Dense(_) => None,
        }
    }
}

/// How a phase value `V(s)` is read off a target network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetRule {
    /// `max` over all entries; final target `r + γ V'_0(s')`.
    Max,
    /// As `Max`, but the final target is `r` alone.
    Myopic,
    /// Items are drawn uniformly, commands greedily: mean of row maxima.
    RandomSelect,
    /// Per-item targets `r + γ max_c Q'_0(s')[j, c]` on the selected items.
    Independent,
}

impl TargetRule {
    fn value(self, q: &QMatrix) -> f64 {
        match self {
            TargetRule::RandomSelect => row_maxima(q).iter().sum::<f64>() / q.rows() as f64,
            _ => q.max().expect("non-empty Q matrix"),
        }
    }
}

pub fn row_maxima(q: &QMatrix) -> Vec<f64> {
    (0..q.rows())
        .map(|r| q.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Squared TD error of one chain and its gradients, one vector per set.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainLoss {
    pub loss: f64,
    pub phase_losses: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

/// Main and target networks for `K` phases, plus one Adam state per set.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadedQ {
    nets: Vec<Network>,
    targets: Vec<Network>,
    adam: Vec<AdamState>,
    phase_map: Vec<usize>,
}

impl CascadedQ {
    pub fn new(nets: Vec<Network>, phase_map: Vec<usize>, lr: f64) -> Result<Self> {
        if phase_map.is_empty() || set_count(&phase_map) != nets.len() {
            return Err(Error::Config(format!(
                "phase map {phase_map:?} does not cover {} parameter sets",
                nets.len()
            )));
        }
        if (0..nets.len()).any(|m| !phase_map.contains(&m)) {
            return Err(Error::Config(format!("phase map {phase_map:?} leaves a set unused")));
        }
        let adam = nets.iter().map(|n| AdamState::new(n.param_count(), lr)).collect();
        Ok(Self {
            targets: nets.clone(),
            nets,
            adam,
            phase_map,
        })
    }

    /// Independently initialised tied sets, one per set in `phase_map`.
    pub fn shared(arch: &Architecture, phase_map: Vec<usize>, lr: f64, rng: &mut SeededRng) -> Result<Self> {
        let nets = (0..set_count(&phase_map))
            .map(|_| SharedParams::init(arch.clone(), rng).map(Network::Shared))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nets, phase_map, lr)
    }

    /// One dense network per phase, bound to `n_items` and `n_context`.
    pub fn dense(
        arch: &Architecture,
        k: usize,
        n_items: usize,
        n_context: usize,
        lr: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let nets = (0..k)
            .map(|p| DenseNet::init(arch, p, n_items - p, n_context, rng).map(Network::Dense))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nets, (0..k).collect(), lr)
    }

    pub fn k(&self) -> usize {
        self.phase_map.len()
    }

    pub fn phase_map(&self) -> &[usize] {
        &self.phase_map
    }

    pub fn set_count(&self) -> usize {
        self.nets.len()
    }

    pub fn sets(&self) -> &[Network] {
        &self.nets
    }

    pub fn target_sets(&self) -> &[Network] {
        &self.targets
    }

    pub fn adam_states(&self) -> &[AdamState] {
        &self.adam
    }

    pub fn net(&self, phase: usize) -> &Network {
        &self.nets[self.phase_map[phase]]
    }

    pub fn target(&self, phase: usize) -> &Network {
        &self.targets[self.phase_map[phase]]
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Network::param_count).sum()
    }

    pub fn is_dense(&self) -> bool {
        self.nets.iter().any(|n| matches!(n, Network::Dense(_)))
    }

    /// Tied sets, or `None` for dense networks.
    pub fn shared_sets(&self) -> Option<Vec<SharedParams>> {
        self.nets.iter().map(|n| n.as_shared().cloned()).collect()
    }

    pub fn q(&self, phase: usize, s: &PhaseInput) -> Result<QMatrix> {
        self.net(phase).forward(s)
    }

    pub fn sync_targets(&mut self) {
        self.targets.clone_from(&self.nets);
    }

    /// Switches to a finer phase map. Every new set starts as a bitwise copy
    /// of the set its phases used before, including target and optimizer
    /// state.
    pub fn remap(&mut self, new_map: Vec<usize>) -> Result<()> {
        if new_map.len() != self.phase_map.len() {
            return Err(Error::Config("phase map length changed".into()));
        }
        let count = set_count(&new_map);
        let mut nets = Vec::with_capacity(count);
        let mut targets = Vec::with_capacity(count);
        let mut adam = Vec::with_capacity(count);
        for m in 0..count {
            let phase = new_map
                .iter()
                .position(|&x| x == m)
                .ok_or_else(|| Error::Config(format!("phase map {new_map:?} leaves set {m} unused")))?;
            let parent = self.phase_map[phase];
            nets.push(self.nets[parent].clone());
            targets.push(self.targets[parent].clone());
            adam.push(self.adam[parent].clone());
        }
        self.nets = nets;
        self.targets = targets;
        self.adam = adam;
        self.phase_map = new_map;
        Ok(())
    }

    /// One Adam step per set with already-averaged gradients.
    pub fn apply(&mut self, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.nets.len() {
            return Err(Error::shape("apply", format!("{} gradients for {} sets", grads.len(), self.nets.len())));
        }
        for ((net, adam), g) in self.nets.iter_mut().zip(&mut self.adam).zip(grads) {
            adam.step(net.params_mut(), g)?;
            if let Network::Shared(p) = net {
                p.enforce_structure();
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.nets.iter().map(|n| vec![0.0; n.param_count()]).collect()
    }

    /// Per-phase squared errors of `chain` and their gradients scaled by
    /// `scale`. Gradients reach only the main set of each phase.
    pub fn phase_loss(&self, chain: &ReplayChain, gamma: f64, rule: TargetRule, scale: f64) -> Result<ChainLoss> {
        let mut grads = self.zero_grads();
        if rule == TargetRule::Independent {
            return self.independent_loss(chain, gamma, scale, grads);
        }
        let states = chain.phase_states()?;
        let k_total = self.k();
        if chain.actions.len() != k_total {
            return Err(Error::shape("phase_loss", format!("{} actions for {k_total} phases", chain.actions.len())));
        }
        let mut phase_losses = Vec::with_capacity(k_total);
        for (k, &a) in chain.actions.iter().enumerate() {
            let y = if k + 1 < k_total {
                rule.value(&self.target(k + 1).forward(states[k + 1].input())?)
            } else if rule == TargetRule::Myopic {
                chain.reward
            } else {
                chain.reward + gamma * rule.value(&self.target(0).forward(chain.next.input())?)
            };
            let mut err = 0.0;
            self.net(k).accumulate(
                states[k].input(),
                |q| {
                    err = q[(a.n, a.c)] - y;
                    let mut up = Matrix::zeros(q.rows(), q.cols());
                    up[(a.n, a.c)] = 2.0 * err * scale;
                    up
                },
                &mut grads[self.phase_map[k]],
            )?;
            phase_losses.push(err * err);
        }
        Ok(ChainLoss {
            loss: phase_losses.iter().sum(),
            phase_losses,
            grads,
        })
    }

    fn independent_loss(&self, chain: &ReplayChain, gamma: f64, scale: f64, mut grads: Vec<Vec<f64>>) -> Result<ChainLoss> {
        let done = chain.phase_states()?.pop().expect("start state");
        let next_q = self.target(0).forward(chain.next.input())?;
        let next_v = row_maxima(&next_q);
        let start_ids = chain.start.item_ids();
        let mut losses = Vec::with_capacity(done.selection().len());
        self.net(0).accumulate(
            chain.start.input(),
            |q| {
                let mut up = Matrix::zeros(q.rows(), q.cols());
                for &(item, c) in done.selection() {
                    let row = start_ids.iter().position(|&id| id == item).expect("selected item in start state");
                    let err = q[(row, c)] - (chain.reward + gamma * next_v[row]);
                    up[(row, c)] = 2.0 * err * scale;
                    losses.push(err * err);
                }
                up
            },
            &mut grads[self.phase_map[0]],
        )?;
        Ok(ChainLoss {
            loss: losses.iter().sum(),
            phase_losses: losses,
            grads,
        })
    }
}
