//! Acting with a cascade: behaviour and greedy policies.

use crate::baselines::{greedy_action, idqn_policy, rsq_policy, sort_items, Algorithm};
use crate::einet::{Activation, Architecture};
use crate::error::{Error, Result};
use crate::ismdp::{feasible_actions, to_phase0, EnvDescriptor, Observation, PhaseAction, PhaseState};
use crate::math::SeededRng;

use super::cascade::CascadedQ;
use super::sharing::{sharing_groups, SharingMode};

/// One macro-step decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Phase-0 state as the networks see it (sorted for the sorting baseline).
    pub start: PhaseState,
    pub actions: Vec<PhaseAction>,
    /// `(environment item, command)` pairs.
    pub selection: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub algorithm: Algorithm,
    pub q: CascadedQ,
    pub k: usize,
    pub commands: usize,
}

/// Network shape for an environment.
pub fn architecture_for(
    desc: &EnvDescriptor,
    channels: usize,
    layers: usize,
    activation: Activation,
    local_only: bool,
) -> Result<Architecture> {
    let ctx = (desc.n_context > 0).then_some(desc.context_width);
    Ok(Architecture::new(desc.item_width, desc.commands, ctx, channels, layers, activation)?.with_local_only(local_only))
}

/// Phase actions that reproduce `selection` from `s0`.
pub fn actions_for_selection(s0: &PhaseState, selection: &[(usize, usize)]) -> Result<Vec<PhaseAction>> {
    let mut ids = s0.item_ids().to_vec();
    selection
        .iter()
        .map(|&(item, c)| {
            let n = ids
                .iter()
                .position(|&id| id == item)
                .ok_or_else(|| Error::Selection(format!("item {item} not available")))?;
            ids.remove(n);
            Ok(PhaseAction { n, c })
        })
        .collect()
}

impl Agent {
    /// Fresh agent for `desc`. Dense baselines always get one net per phase.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        algorithm: Algorithm,
        desc: &EnvDescriptor,
        mode: &SharingMode,
        channels: usize,
        layers: usize,
        activation: Activation,
        lr: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if algorithm.single_command() && desc.commands != 1 {
            return Err(Error::Config(format!(
                "{} needs a single-command environment, got C={}",
                algorithm.name(),
                desc.commands
            )));
        }
        let arch = architecture_for(desc, channels, layers, activation, algorithm.local_only())?;
        let k = desc.k_select;
        let q = if algorithm.is_dense() {
            CascadedQ::dense(&arch, k, desc.n_items, desc.n_context, lr, rng)?
        } else if algorithm == Algorithm::Idqn {
            CascadedQ::shared(&arch, vec![0; k], lr, rng)?
        } else {
            CascadedQ::shared(&arch, sharing_groups(mode, 0, k), lr, rng)?
        };
        Ok(Self {
            algorithm,
            q,
            k,
            commands: desc.commands,
        })
    }

    /// Phase-0 state and the row order used (`order[j]` = environment item).
    pub fn prepare(&self, obs: &Observation) -> Result<(PhaseState, Vec<usize>)> {
        if self.algorithm.sorts_items() {
            let order = sort_items(&obs.items)?;
            let sorted = Observation {
                items: obs.items.gather_rows(&order),
                context: obs.context.clone(),
            };
            Ok((to_phase0(&sorted, self.commands, self.k), order))
        } else {
            Ok((to_phase0(obs, self.commands, self.k), (0..obs.items.rows()).collect()))
        }
    }

    /// ε-greedy phase actions from `s0`; `eps = 0` is the greedy policy.
    pub fn decide(&self, s0: &PhaseState, eps: f64, rng: &mut SeededRng) -> Result<Vec<PhaseAction>> {
        let explore = |rng: &mut SeededRng| eps > 0.0 && rng.bernoulli(eps);
        if self.algorithm == Algorithm::Idqn {
            let selection = if explore(rng) {
                let perm = rng.permutation(s0.n_unselected());
                perm[..self.k].iter().map(|&j| (s0.item_ids()[j], rng.below(self.commands))).collect()
            } else {
                let q = self.q.q(0, s0.input())?;
                idqn_policy(&q, self.k)?
                    .into_iter()
                    .map(|(r, c)| (s0.item_ids()[r], c))
                    .collect::<Vec<_>>()
            };
            return actions_for_selection(s0, &selection);
        }
        let mut s = s0.clone();
        let mut actions = Vec::with_capacity(self.k);
        for phase in 0..self.k {
            let a = if self.algorithm == Algorithm::Rsq {
                let q = self.q.q(phase, s.input())?;
                let a = rsq_policy(&q, rng);
                if explore(rng) {
                    PhaseAction {
                        n: a.n,
                        c: rng.below(self.commands),
                    }
                } else {
                    a
                }
            } else if explore(rng) {
                let all = feasible_actions(&s);
                all[rng.below(all.len())]
            } else {
                greedy_action(&self.q.q(phase, s.input())?)
            };
            actions.push(a);
            if phase + 1 < self.k {
                s = s.advance(a)?;
            }
        }
        Ok(actions)
    }

    pub fn act(&self, obs: &Observation, eps: f64, rng: &mut SeededRng) -> Result<Decision> {
        let (start, order) = self.prepare(obs)?;
        let actions = self.decide(&start, eps, rng)?;
        let mut s = start.clone();
        for &a in &actions {
            s = s.advance(a)?;
        }
        let selection = s.selection().iter().map(|&(row, c)| (order[row], c)).collect();
        Ok(Decision {
            start,
            actions,
            selection,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::einet::Perm;
    use crate::ismdp::Observation;
    use crate::math::Matrix;

    fn desc(n: usize, k: usize, c: usize) -> EnvDescriptor {
        EnvDescriptor {
            n_items: n,
            k_select: k,
            commands: c,
            item_width: 3,
            n_context: 1,
            context_width: 3,
        }
    }

    fn obs(seed: u64, n: usize) -> Observation {
        let mut rng = SeededRng::new(seed);
        Observation {
            items: Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.uniform(-0.5, 0.5)).collect()).unwrap(),
            context: Matrix::from_vec(1, 3, vec![0.1, 0.2, 0.3]).unwrap(),
        }
    }

    fn agent(alg: Algorithm, n: usize, k: usize, c: usize) -> Agent {
        Agent::init(alg, &desc(n, k, c), &SharingMode::I, 8, 3, Activation::Relu, 1e-3, &mut SeededRng::new(2)).unwrap()
    }

    #[test]
    fn full_exploration_is_uniform() {
        let a = agent(Algorithm::Isq, 4, 1, 5);
        let (s0, _) = a.prepare(&obs(0, 4)).unwrap();
        let mut rng = SeededRng::new(1);
        let mut counts = [0usize; 20];
        for _ in 0..10_000 {
            let act = a.decide(&s0, 1.0, &mut rng).unwrap()[0];
            counts[act.n * 5 + act.c] += 1;
        }
        // chi-square, 19 dof, 0.999 quantile 43.82
        let chi: f64 = counts.iter().map(|&o| (o as f64 - 500.0).powi(2) / 500.0).sum();
        assert!(chi < 43.82, "{chi}");
    }

    #[test]
    fn greedy_follows_permutation() {
        let a = agent(Algorithm::Isq, 5, 1, 2);
        let o = obs(3, 5);
        let sigma = Perm::new(vec![3, 0, 4, 1, 2]).unwrap();
        let moved = Observation {
            items: sigma.permute_rows(&o.items).unwrap(),
            context: o.context.clone(),
        };
        let mut rng = SeededRng::new(0);
        let x = a.act(&o, 0.0, &mut rng).unwrap().selection[0];
        let y = a.act(&moved, 0.0, &mut rng).unwrap().selection[0];
        assert_eq!((sigma.map(x.0), x.1), y);
    }

    #[test]
    fn selections_are_distinct_for_every_algorithm() {
        for alg in Algorithm::ALL {
            let c = if alg.single_command() { 1 } else { 2 };
            let a = agent(alg, 5, 3, c);
            let mut rng = SeededRng::new(4);
            for eps in [0.0, 0.5, 1.0] {
                let d = a.act(&obs(5, 5), eps, &mut rng).unwrap();
                let mut items: Vec<usize> = d.selection.iter().map(|p| p.0).collect();
                items.sort();
                items.dedup();
                assert_eq!(items.len(), 3, "{alg:?}");
            }
        }
    }

    #[test]
    fn sorting_maps_back_to_environment_items() {
        let a = agent(Algorithm::SortingDqn, 4, 1, 1);
        let o = obs(6, 4);
        let d = a.act(&o, 0.0, &mut SeededRng::new(0)).unwrap();
        let order = sort_items(&o.items).unwrap();
        assert_eq!(d.selection[0].0, order[d.actions[0].n]);
    }

    #[test]
    fn single_command_needs_single_command_env() {
        let r = Agent::init(
            Algorithm::IsqSingleCommand,
            &desc(4, 1, 5),
            &SharingMode::I,
            8,
            3,
            Activation::Relu,
            1e-3,
            &mut SeededRng::new(0),
        );
        assert!(r.is_err());
    }
}
