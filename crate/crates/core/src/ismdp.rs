//! Select-MDP ↔ iterative select-MDP adapter.
//!
//! A joint selection of `K` items is made one item per phase. Intermediate
//! phases are deterministic and reward-free; the wrapped environment only
//! moves after the last phase.

use serde::{Deserialize, Serialize};

use crate::einet::PhaseInput;
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Static shape of a select environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvDescriptor {
    /// Selectable items `N`.
    pub n_items: usize,
    /// Items selected per step `K`.
    pub k_select: usize,
    /// Commands per selected item `C`.
    pub commands: usize,
    pub item_width: usize,
    /// Context items `|U|` (may be zero).
    pub n_context: usize,
    pub context_width: usize,
}

/// What the agent sees of the environment between macro steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub items: Matrix,
    pub context: Matrix,
}

/// Behavioural contract of a select-MDP.
pub trait SelectEnv: Send {
    fn descriptor(&self) -> EnvDescriptor;

    /// Re-seeds the environment and returns the first observation.
    fn reset(&mut self, seed: u64) -> Observation;

    fn observe(&self) -> Observation;

    /// Applies a joint selection of `K` distinct `(item, command)` pairs.
    fn step(&mut self, selection: &[(usize, usize)]) -> Result<(f64, Observation)>;
}

impl<E: SelectEnv + ?Sized> SelectEnv for Box<E> {
    fn descriptor(&self) -> EnvDescriptor {
        (**self).descriptor()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        (**self).reset(seed)
    }

    fn observe(&self) -> Observation {
        (**self).observe()
    }

    fn step(&mut self, selection: &[(usize, usize)]) -> Result<(f64, Observation)> {
        (**self).step(selection)
    }
}

/// Checks that `selection` names `k` distinct items below `n` and valid
/// commands.
pub fn validate_selection(selection: &[(usize, usize)], n: usize, k: usize, commands: usize) -> Result<()> {
    if selection.len() != k {
        return Err(Error::Selection(format!("{} pairs, expected {k}", selection.len())));
    }
    let mut seen = vec![false; n];
    for &(item, c) in selection {
        if item >= n {
            return Err(Error::Selection(format!("item {item} out of range {n}")));
        }
        if c >= commands {
            return Err(Error::Selection(format!("command {c} out of range {commands}")));
        }
        if std::mem::replace(&mut seen[item], true) {
            return Err(Error::Selection(format!("item {item} selected twice")));
        }
    }
    Ok(())
}

/// Index `n` into the current unselected list plus command `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseAction {
    pub n: usize,
    pub c: usize,
}

/// IS-MDP state `s = (x, i, u)` at phase `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    input: PhaseInput,
    /// Original indices of the unselected items, in row order of `input.i`.
    item_ids: Vec<usize>,
    /// Accumulated `(original item, command)` pairs.
    selection: Vec<(usize, usize)>,
    commands: usize,
    k_select: usize,
}

impl PhaseState {
    pub fn input(&self) -> &PhaseInput {
        &self.input
    }

    pub fn phase(&self) -> usize {
        self.selection.len()
    }

    pub fn k_select(&self) -> usize {
        self.k_select
    }

    pub fn commands(&self) -> usize {
        self.commands
    }

    pub fn n_unselected(&self) -> usize {
        self.input.i.rows()
    }

    pub fn item_ids(&self) -> &[usize] {
        &self.item_ids
    }

    pub fn selection(&self) -> &[(usize, usize)] {
        &self.selection
    }

    pub fn is_final_phase(&self) -> bool {
        self.phase() + 1 == self.k_select
    }

    pub fn is_feasible(&self, a: PhaseAction) -> bool {
        a.n < self.n_unselected() && a.c < self.commands
    }

    fn check(&self, a: PhaseAction) -> Result<()> {
        if !self.is_feasible(a) {
            return Err(Error::InfeasibleAction {
                n: a.n,
                c: a.c,
                items: self.n_unselected(),
                commands: self.commands,
            });
        }
        if self.phase() >= self.k_select {
            return Err(Error::Selection("all phases already taken".into()));
        }
        Ok(())
    }

    /// Deterministic intermediate transition `s' = (x + (i_n, c), i - i_n)`.
    /// Also valid at the last phase, where it yields the completed selection.
    pub fn advance(&self, a: PhaseAction) -> Result<PhaseState> {
        self.check(a)?;
        let mut next = self.clone();
        let info = next.input.i.remove_row(a.n);
        let item = next.item_ids.remove(a.n);
        let mut row = info;
        row.extend((0..self.commands).map(|c| if c == a.c { 1.0 } else { 0.0 }));
        next.input.x.push_row(&row)?;
        next.selection.push((item, a.c));
        Ok(next)
    }
}

/// Embeds an environment observation as a phase-0 state.
pub fn to_phase0(obs: &Observation, commands: usize, k_select: usize) -> PhaseState {
    let d = obs.items.cols();
    PhaseState {
        input: PhaseInput {
            x: Matrix::zeros(0, d + commands),
            i: obs.items.clone(),
            u: obs.context.clone(),
        },
        item_ids: (0..obs.items.rows()).collect(),
        selection: Vec::with_capacity(k_select),
        commands,
        k_select,
    }
}

/// All `(N-k)·C` feasible actions in lexicographic `(n, c)` order.
pub fn feasible_actions(s: &PhaseState) -> Vec<PhaseAction> {
    let mut out = Vec::with_capacity(s.n_unselected() * s.commands);
    for n in 0..s.n_unselected() {
        for c in 0..s.commands {
            out.push(PhaseAction { n, c });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTransition {
    pub s: PhaseState,
    pub a: PhaseAction,
    /// Zero unless this was the final phase.
    pub r: f64,
    pub s_next: PhaseState,
    pub is_final_phase: bool,
}

/// One IS-MDP transition. The final phase hands the accumulated selection to
/// the wrapped environment.
pub fn phase_step(env: &mut dyn SelectEnv, s: &PhaseState, a: PhaseAction) -> Result<PhaseTransition> {
    let advanced = s.advance(a)?;
    if s.is_final_phase() {
        let (r, obs) = env.step(advanced.selection())?;
        Ok(PhaseTransition {
            s: s.clone(),
            a,
            r,
            s_next: to_phase0(&obs, s.commands, s.k_select),
            is_final_phase: true,
        })
    } else {
        Ok(PhaseTransition {
            s: s.clone(),
            a,
            r: 0.0,
            s_next: advanced,
            is_final_phase: false,
        })
    }
}
