//! Comparison agents. All of them run on the same phase plumbing and differ
//! in network, behaviour policy or bootstrap target.

use serde::{Deserialize, Serialize};

use crate::einet::{DenseNet, PhaseInput, QMatrix, SharedParams};
use crate::error::{Error, Result};
use crate::ismdp::PhaseAction;
use crate::learner::TargetRule;
use crate::math::{Matrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Cascaded I-shared networks, greedy over all feasible pairs.
    Isq,
    /// One untied dense network per phase.
    VanillaDqn,
    /// Vanilla DQN over items sorted by radius, largest first.
    SortingDqn,
    /// ISQ trained on the instantaneous reward only.
    MyopicDqn,
    /// One shared per-item network; top-`K` items by their best command.
    Idqn,
    /// Uniformly random items, greedy commands.
    Rsq,
    /// ISQ with every pooled weight held at zero.
    Eq,
    /// ISQ restricted to the single "stay" command.
    IsqSingleCommand,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Isq,
        Algorithm::VanillaDqn,
        Algorithm::SortingDqn,
        Algorithm::MyopicDqn,
        Algorithm::Idqn,
        Algorithm::Rsq,
        Algorithm::Eq,
        Algorithm::IsqSingleCommand,
    ];

    pub fn target_rule(self) -> TargetRule {
        match self {
            Algorithm::MyopicDqn => TargetRule::Myopic,
            Algorithm::Rsq => TargetRule::RandomSelect,
            Algorithm::Idqn => TargetRule::Independent,
            _ => TargetRule::Max,
        }
    }

    pub fn is_dense(self) -> bool {
        matches!(self, Algorithm::VanillaDqn | Algorithm::SortingDqn)
    }

    pub fn local_only(self) -> bool {
        self == Algorithm::Eq
    }

    pub fn sorts_items(self) -> bool {
        self == Algorithm::SortingDqn
    }

    pub fn single_command(self) -> bool {
        self == Algorithm::IsqSingleCommand
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Isq => "isq",
            Algorithm::VanillaDqn => "vanilla_dqn",
            Algorithm::SortingDqn => "sorting_dqn",
            Algorithm::MyopicDqn => "myopic_dqn",
            Algorithm::Idqn => "idqn",
            Algorithm::Rsq => "rsq",
            Algorithm::Eq => "eq",
            Algorithm::IsqSingleCommand => "isq_single_command",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {name:?}")))
    }
}

/// First maximum in row-major order.
pub fn greedy_action(q: &QMatrix) -> PhaseAction {
    let (n, c, _) = q.argmax().expect("non-empty Q matrix");
    PhaseAction { n, c }
}

/// Uniform item, best command for that item.
pub fn rsq_policy(q: &QMatrix, rng: &mut SeededRng) -> PhaseAction {
    let n = rng.below(q.rows());
    PhaseAction {
        n,
        c: first_argmax(q.row(n)),
    }
}

fn first_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Top-`k` rows by their maximum (ties to the lower index), each with its
/// best command. Returned in rank order.
pub fn idqn_policy(q: &QMatrix, k: usize) -> Result<Vec<(usize, usize)>> {
    if k > q.rows() {
        return Err(Error::Selection(format!("cannot pick {k} of {} items", q.rows())));
    }
    let mut rows: Vec<usize> = (0..q.rows()).collect();
    let best: Vec<f64> = rows.iter().map(|&r| q.row(r)[first_argmax(q.row(r))]).collect();
    rows.sort_by(|&a, &b| best[b].total_cmp(&best[a]).then(a.cmp(&b)));
    Ok(rows[..k].iter().map(|&r| (r, first_argmax(q.row(r)))).collect())
}

/// Stable order of circle rows by radius, largest first; `order[j]` is the
/// original row placed at position `j`.
pub fn sort_items(items: &Matrix) -> Result<Vec<usize>> {
    if items.cols() != 3 {
        return Err(Error::Config(format!(
            "sorting needs (x, y, radius) rows, got width {}",
            items.cols()
        )));
    }
    let mut order: Vec<usize> = (0..items.rows()).collect();
    order.sort_by(|&a, &b| items[(b, 2)].total_cmp(&items[(a, 2)]));
    Ok(order)
}

pub fn vanilla_forward(net: &DenseNet, s: &PhaseInput) -> Result<QMatrix> {
    net.forward(s)
}

/// Forward pass with every pooled weight forced to zero.
pub fn eq_forward(theta: &SharedParams, s: &PhaseInput) -> Result<QMatrix> {
    let local = SharedParams::new(theta.arch().clone().with_local_only(true), theta.scalars().to_vec())?;
    local.forward(s)
}
