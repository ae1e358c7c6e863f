//! Iterative select Q-learning: replay of macro steps, ε-greedy behaviour,
//! hard target copies and the I/U/P sharing schedules.

mod agent;
mod cascade;
mod replay;
mod sharing;
mod train;

pub use agent::{actions_for_selection, architecture_for, Agent, Decision};
pub use cascade::{row_maxima, CascadedQ, ChainLoss, Network, TargetRule};
pub use replay::{ReplayBuffer, ReplayChain, DEFAULT_CAPACITY};
pub use sharing::{set_count, sharing_groups, split_schedule, splits_needed, SharingKind, SharingMode};
pub use train::{batch_gradient, epsilon, eval_seed, train, train_with, CurvePoint, SplitEvent, TrainConfig, TrainOutcome};
