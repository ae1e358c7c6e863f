//! Enumerable select-MDPs for oracle tests.
//!
//! Joint states are `N` slot infos over an alphabet of size `A`, indexed
//! base-`A` with slot 0 most significant. Joint selections are `K`-subsets of
//! slots with one command each, stored sorted by slot.

use std::collections::HashMap;
use std::sync::Arc;

use crate::einet::Perm;
use crate::error::{Error, Result};
use crate::ismdp::{validate_selection, EnvDescriptor, Observation, SelectEnv};
use crate::math::{Matrix, SeededRng};

/// Upper bound on enumerated (state, selection) pairs.
pub const MAX_PAIRS: usize = 100_000;
/// Upper bound on stored transition probabilities.
pub const MAX_TABLE: usize = 20_000_000;
pub const ROW_TOL: f64 = 1e-12;

pub type Selection = Vec<(usize, usize)>;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularSMDP {
    n: usize,
    a: usize,
    c: usize,
    k: usize,
    n_states: usize,
    selections: Vec<Selection>,
    index: HashMap<Selection, usize>,
    rewards: Vec<f64>,
    /// `[state][selection][next state]`.
    trans: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// All joint selections: subsets in lexicographic order, commands base-`C`.
pub fn enumerate_selections(n: usize, k: usize, c: usize) -> Vec<Selection> {
    let mut out = Vec::new();
    for subset in combinations(n, k) {
        for code in 0..c.pow(k as u32) {
            let mut rest = code;
            let mut cmds = vec![0; k];
            for slot in (0..k).rev() {
                cmds[slot] = rest % c;
                rest /= c;
            }
            out.push(subset.iter().copied().zip(cmds).collect());
        }
    }
    out
}

/// `out[σ(j)] = v[j]`.
fn permute_slots(sigma: &Perm, v: &[usize]) -> Vec<usize> {
    let mut out = vec![0; v.len()];
    for (j, &x) in v.iter().enumerate() {
        out[sigma.map(j)] = x;
    }
    out
}

fn canonical_selection(mut sel: Selection) -> Selection {
    sel.sort_unstable();
    sel
}

impl TabularSMDP {
    fn shell(n: usize, a: usize, c: usize, k: usize) -> Result<Self> {
        if n == 0 || a == 0 || c == 0 || k == 0 || k > n {
            return Err(Error::Config(format!("tabular: bad sizes N={n} A={a} C={c} K={k}")));
        }
        let n_states = (a as u128).pow(n as u32);
        let n_sel = binomial(n, k) as u128 * (c as u128).pow(k as u32);
        let pairs = n_states * n_sel;
        if pairs > MAX_PAIRS as u128 || pairs * n_states > MAX_TABLE as u128 {
            return Err(Error::Guard(format!(
                "tabular: {pairs} state-selection pairs over {n_states} states exceeds the enumeration guard"
            )));
        }
        let n_states = n_states as usize;
        let selections = enumerate_selections(n, k, c);
        let index = selections.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let pairs = pairs as usize;
        Ok(Self {
            n,
            a,
            c,
            k,
            n_states,
            selections,
            index,
            rewards: vec![0.0; pairs],
            trans: vec![0.0; pairs * n_states],
        })
    }

    /// Seeded permutation-symmetric instance. Rewards and kernels are drawn
    /// once per orbit representative (sorted slot codes), symmetrized over the
    /// representative's stabilizer and copied to every orbit member.
    pub fn random(n: usize, a: usize, c: usize, k: usize, seed: u64) -> Result<Self> {
        let mut mdp = Self::shell(n, a, c, k)?;
        let mut rng = SeededRng::new(seed);
        let perms = Perm::all(n);
        let mut reps: HashMap<Vec<usize>, (f64, Vec<f64>)> = HashMap::new();
        for s in 0..mdp.n_states {
            let infos = mdp.decode(s);
            for (si, sel) in mdp.selections.clone().iter().enumerate() {
                let mut codes: Vec<usize> = infos.iter().map(|&x| x * (c + 1)).collect();
                for &(j, cmd) in sel {
                    codes[j] += cmd + 1;
                }
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by_key(|&j| codes[j]);
                let canon: Vec<usize> = order.iter().map(|&j| codes[j]).collect();
                let (r, row) = reps
                    .entry(canon.clone())
                    .or_insert_with(|| {
                        let r = rng.uniform(0.0, 1.0);
                        let raw: Vec<f64> = (0..mdp.n_states).map(|_| rng.uniform(0.0, 1.0).powi(3)).collect();
                        let stab: Vec<&Perm> = perms
                            .iter()
                            .filter(|t| (0..n).all(|j| canon[t.map(j)] == canon[j]))
                            .collect();
                        let mut row = vec![0.0; mdp.n_states];
                        for (sp, p) in row.iter_mut().enumerate() {
                            let next = mdp.decode(sp);
                            *p = stab.iter().map(|t| raw[mdp.encode(&permute_slots(t, &next))]).sum::<f64>();
                        }
                        let z: f64 = row.iter().sum();
                        row.iter_mut().for_each(|p| *p /= z);
                        (r, row)
                    })
                    .clone();
                let pair = s * mdp.selections.len() + si;
                mdp.rewards[pair] = r;
                // P_t(s') = P_canon(s'') with s''[j] = s'[order[j]]
                for sp in 0..mdp.n_states {
                    let next = mdp.decode(sp);
                    let pulled: Vec<usize> = order.iter().map(|&j| next[j]).collect();
                    mdp.trans[pair * mdp.n_states + sp] = row[mdp.encode(&pulled)];
                }
            }
        }
        Ok(mdp)
    }

    /// Instance from a closure returning the reward and a sparse next-state
    /// distribution over info vectors.
    pub fn from_fn<F>(n: usize, a: usize, c: usize, k: usize, f: F) -> Result<Self>
    where
        F: Fn(&[usize], &[(usize, usize)]) -> (f64, Vec<(Vec<usize>, f64)>),
    {
        let mut mdp = Self::shell(n, a, c, k)?;
        let n_sel = mdp.selections.len();
        for s in 0..mdp.n_states {
            let infos = mdp.decode(s);
            for si in 0..n_sel {
                let (r, dist) = f(&infos, &mdp.selections[si]);
                let pair = s * n_sel + si;
                mdp.rewards[pair] = r;
                for (next, p) in dist {
                    if next.len() != n || next.iter().any(|&x| x >= a) {
                        return Err(Error::Config(format!("tabular: bad next state {next:?}")));
                    }
                    let sp = mdp.encode(&next);
                    mdp.trans[pair * mdp.n_states + sp] += p;
                }
            }
        }
        mdp.check_rows()?;
        Ok(mdp)
    }

    fn check_rows(&self) -> Result<()> {
        for pair in 0..self.rewards.len() {
            let row = &self.trans[pair * self.n_states..(pair + 1) * self.n_states];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL || row.iter().any(|&p| p < 0.0) || !self.rewards[pair].is_finite() {
                return Err(Error::Config(format!("tabular: row {pair} is not a distribution (sum {sum})")));
            }
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> usize {
        self.a
    }

    pub fn commands(&self) -> usize {
        self.c
    }

    pub fn k_select(&self) -> usize {
        self.k
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn selections(&self) -> &[Selection] {
        &self.selections
    }

    pub fn decode(&self, mut s: usize) -> Vec<usize> {
        let mut infos = vec![0; self.n];
        for slot in (0..self.n).rev() {
            infos[slot] = s % self.a;
            s /= self.a;
        }
        infos
    }

    pub fn encode(&self, infos: &[usize]) -> usize {
        infos.iter().fold(0, |acc, &x| acc * self.a + x)
    }

    /// Index of a selection given in any pair order.
    pub fn selection_index(&self, sel: &[(usize, usize)]) -> Result<usize> {
        validate_selection(sel, self.n, self.k, self.c)?;
        Ok(self.index[&canonical_selection(sel.to_vec())])
    }

    pub fn reward(&self, s: usize, sel: usize) -> f64 {
        self.rewards[s * self.selections.len() + sel]
    }

    pub fn transition_row(&self, s: usize, sel: usize) -> &[f64] {
        let pair = s * self.selections.len() + sel;
        &self.trans[pair * self.n_states..(pair + 1) * self.n_states]
    }

    /// One-hot slot infos, `N × A`.
    pub fn features(&self, s: usize) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.a);
        for (j, x) in self.decode(s).into_iter().enumerate() {
            m[(j, x)] = 1.0;
        }
        m
    }

    /// Largest deviation of `R` or `P` under any slot relabeling `σ`, checked
    /// over every state, selection and next state.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for sigma in Perm::all(self.n) {
            for s in 0..self.n_states {
                let ps = self.encode(&permute_slots(&sigma, &self.decode(s)));
                for (si, sel) in self.selections.iter().enumerate() {
                    let moved: Selection = sel.iter().map(|&(j, c)| (sigma.map(j), c)).collect();
                    let psi = self.index[&canonical_selection(moved)];
                    worst = worst.max((self.reward(s, si) - self.reward(ps, psi)).abs());
                    let (a, b) = (self.transition_row(s, si), self.transition_row(ps, psi));
                    for sp in 0..self.n_states {
                        let psp = self.encode(&permute_slots(&sigma, &self.decode(sp)));
                        worst = worst.max((a[sp] - b[psp]).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Seeded random instance; argument order follows the generator contract.
pub fn tabular_random(seed: u64, n: usize, a: usize, c: usize, k: usize) -> Result<TabularSMDP> {
    TabularSMDP::random(n, a, c, k, seed)
}

/// Two items, binary infos, one command, one pick per step. Picking an info-0
/// item pays 1 now; picking an info-1 item pays 0 now but leads to a state
/// paying 3 and then back to a mixed state, so greedy play is suboptimal for `γ > 1/2`.
pub fn delayed_reward_task() -> TabularSMDP {
    TabularSMDP::from_fn(2, 2, 1, 1, |infos, sel| {
        let picked = infos[sel[0].0];
        let mixed = vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)];
        match (infos[0], infos[1]) {
            (1, 1) => (3.0, mixed),
            (0, 0) => (0.0, mixed),
            _ if picked == 0 => (1.0, vec![(infos.to_vec(), 1.0)]),
            _ => (0.0, vec![(vec![1, 1], 1.0)]),
        }
    })
    .expect("fixed task is well formed")
}

/// A [`TabularSMDP`] driven as a [`SelectEnv`].
#[derive(Clone, Debug)]
pub struct TabularEnv {
    mdp: Arc<TabularSMDP>,
    state: usize,
    rng: SeededRng,
}

impl TabularEnv {
    pub fn new(mdp: Arc<TabularSMDP>) -> Self {
        Self {
            mdp,
            state: 0,
            rng: SeededRng::new(0),
        }
    }

    pub fn mdp(&self) -> &Arc<TabularSMDP> {
        &self.mdp
    }

    pub fn state_index(&self) -> usize {
        self.state
    }

    pub fn set_state(&mut self, s: usize) -> Result<()> {
        if s >= self.mdp.n_states {
            return Err(Error::Config(format!("state {s} out of range")));
        }
        self.state = s;
        Ok(())
    }
}

impl SelectEnv for TabularEnv {
    fn descriptor(&self) -> EnvDescriptor {
        EnvDescriptor {
            n_items: self.mdp.n,
            k_select: self.mdp.k,
            commands: self.mdp.c,
            item_width: self.mdp.a,
            n_context: 0,
            context_width: 0,
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = SeededRng::new(seed);
        self.state = self.rng.below(self.mdp.n_states);
        self.observe()
    }

    fn observe(&self) -> Observation {
        Observation {
            items: self.mdp.features(self.state),
            context: Matrix::zeros(0, 0),
        }
    }

    fn step(&mut self, selection: &[(usize, usize)]) -> Result<(f64, Observation)> {
        let si = self.mdp.selection_index(selection)?;
        let r = self.mdp.reward(self.state, si);
        self.state = self.rng.categorical(self.mdp.transition_row(self.state, si));
        Ok((r, self.observe()))
    }
}
