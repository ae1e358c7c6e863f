//! Exact solutions of enumerable select-MDPs and their phase-wise forms.

use std::collections::HashMap;

use crate::envs::TabularSMDP;
use crate::error::{Error, Result};

/// Upper bound on enumerated (state, action) pairs.
pub const MAX_STATE_ACTIONS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    /// Discount applied to the successor's value.
    pub discount: f64,
    pub next: Vec<(usize, f64)>,
}

/// Finite MDP with per-action discounts: `actions[s][a]`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FiniteMdp {
    pub actions: Vec<Vec<Outcome>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub q: Vec<Vec<f64>>,
    /// Sup-norm Bellman residual of the last sweep.
    pub residual: f64,
}

impl QTable {
    pub fn value(&self, s: usize) -> f64 {
        self.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// First maximising action.
    pub fn greedy(&self, s: usize) -> usize {
        let row = &self.q[s];
        (0..row.len()).fold(0, |b, a| if row[a] > row[b] { a } else { b })
    }

    /// Gap between the best and second-best action values.
    pub fn gap(&self, s: usize) -> f64 {
        let mut v = self.q[s].clone();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.len() < 2 {
            f64::INFINITY
        } else {
            v[0] - v[1]
        }
    }
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let pairs: usize = self.actions.iter().map(Vec::len).sum();
        if pairs > MAX_STATE_ACTIONS {
            return Err(Error::Guard(format!("{pairs} state-action pairs exceed the solver guard")));
        }
        for (s, acts) in self.actions.iter().enumerate() {
            if acts.is_empty() {
                return Err(Error::Config(format!("state {s} has no actions")));
            }
            for o in acts {
                let mass: f64 = o.next.iter().map(|&(_, p)| p).sum();
                if (mass - 1.0).abs() > 1e-9 || o.next.iter().any(|&(t, _)| t >= self.actions.len()) {
                    return Err(Error::Config(format!("state {s}: bad successor distribution")));
                }
                if !(0.0..=1.0).contains(&o.discount) {
                    return Err(Error::Config(format!("state {s}: discount {}", o.discount)));
                }
            }
        }
        Ok(())
    }
}

/// Jacobi value iteration until the sup-norm residual is at most `tol`.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<QTable> {
    mdp.validate()?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let mut v = vec![0.0; mdp.n_states()];
    let mut q: Vec<Vec<f64>> = mdp.actions.iter().map(|a| vec![0.0; a.len()]).collect();
    for _ in 0..10_000_000u64 {
        for (s, acts) in mdp.actions.iter().enumerate() {
            for (a, o) in acts.iter().enumerate() {
                q[s][a] = o.reward + o.discount * o.next.iter().map(|&(t, p)| p * v[t]).sum::<f64>();
            }
        }
        let mut residual = 0.0f64;
        for s in 0..v.len() {
            let best = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual <= tol {
            return Ok(QTable { q, residual });
        }
    }
    Err(Error::Config("value iteration did not converge".into()))
}

/// The select-MDP itself: actions are joint selections.
pub fn smdp_as_finite(t: &TabularSMDP, gamma: f64) -> FiniteMdp {
    let actions = (0..t.n_states())
        .map(|s| {
            (0..t.selections().len())
                .map(|sel| Outcome {
                    reward: t.reward(s, sel),
                    discount: gamma,
                    next: sparse(t.transition_row(s, sel)),
                })
                .collect()
        })
        .collect();
    FiniteMdp { actions }
}

fn sparse(row: &[f64]) -> Vec<(usize, f64)> {
    row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| (i, p)).collect()
}

/// Phase-wise form. States are `(joint state, partial selection)`; actions
/// at a state are `(unselected slot, command)` in lexicographic order.
/// Intermediate phases are reward-free with discount 1.
#[derive(Clone, Debug, PartialEq)]
pub struct IsForm {
    pub mdp: FiniteMdp,
    /// `(joint state, sorted partial selection)` per state id.
    pub states: Vec<(usize, Vec<(usize, usize)>)>,
    /// `(slot, command)` per action index, per state id.
    pub moves: Vec<Vec<(usize, usize)>>,
    index: HashMap<(usize, Vec<(usize, usize)>), usize>,
}

impl IsForm {
    /// Id of the phase-0 state for a joint state.
    pub fn root(&self, s: usize) -> usize {
        self.index[&(s, Vec::new())]
    }

    pub fn id(&self, s: usize, partial: &[(usize, usize)]) -> Option<usize> {
        let mut key = partial.to_vec();
        key.sort_unstable();
        self.index.get(&(s, key)).copied()
    }
}

pub fn ismdp_as_finite(t: &TabularSMDP, gamma: f64) -> Result<IsForm> {
    let (n, k, c) = (t.n_items(), t.k_select(), t.commands());
    let mut partials: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..k - 1 {
        let mut next = Vec::new();
        for p in &frontier {
            let last = p.last().map_or(0, |&(slot, _)| slot + 1);
            for slot in last..n {
                for cmd in 0..c {
                    let mut q: Vec<(usize, usize)> = p.clone();
                    q.push((slot, cmd));
                    next.push(q);
                }
            }
        }
        partials.extend(next.iter().cloned());
        frontier = next;
    }
    let mut states = Vec::new();
    let mut index = HashMap::new();
    for s in 0..t.n_states() {
        for p in &partials {
            index.insert((s, p.clone()), states.len());
            states.push((s, p.clone()));
        }
    }
    let mut actions = Vec::with_capacity(states.len());
    let mut moves = Vec::with_capacity(states.len());
    for (s, p) in &states {
        let mut acts = Vec::new();
        let mut mv = Vec::new();
        for slot in (0..n).filter(|j| !p.iter().any(|&(q, _)| q == *j)) {
            for cmd in 0..c {
                let mut full = p.clone();
                full.push((slot, cmd));
                full.sort_unstable();
                let outcome = if full.len() == k {
                    let sel = t.selection_index(&full)?;
                    Outcome {
                        reward: t.reward(*s, sel),
                        discount: gamma,
                        next: sparse(t.transition_row(*s, sel))
                            .into_iter()
                            .map(|(sp, pr)| (index[&(sp, Vec::new())], pr))
                            .collect(),
                    }
                } else {
                    Outcome {
                        reward: 0.0,
                        discount: 1.0,
                        next: vec![(index[&(*s, full)], 1.0)],
                    }
                };
                acts.push(outcome);
                mv.push((slot, cmd));
            }
        }
        actions.push(acts);
        moves.push(mv);
    }
    Ok(IsForm {
        mdp: FiniteMdp { actions },
        states,
        moves,
        index,
    })
}

/// Joint selection reached by following the phase-wise greedy policy from
/// the root of `s`, sorted by slot.
pub fn is_greedy_selection(form: &IsForm, q: &QTable, s: usize, k: usize) -> Vec<(usize, usize)> {
    let mut id = form.root(s);
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let a = q.greedy(id);
        picked.push(form.moves[id][a]);
        if picked.len() < k {
            id = form.id(s, &picked).expect("partial selection enumerated");
        }
    }
    picked.sort_unstable();
    picked
}

/// Expected discounted return of following `policy` from `start` for
/// `horizon` steps, by exact propagation of discount-weighted state mass.
pub fn rollout_value(mdp: &FiniteMdp, policy: &dyn Fn(usize) -> usize, start: usize, horizon: usize) -> f64 {
    let mut mass = vec![0.0; mdp.n_states()];
    mass[start] = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; mdp.n_states()];
        for (s, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let o = &mdp.actions[s][policy(s)];
            total += m * o.reward;
            for &(t, p) in &o.next {
                next[t] += m * p * o.discount;
            }
        }
        mass = next;
    }
    total
}
