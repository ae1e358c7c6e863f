//! Iterative select Q-learning.
//!
//! Select-MDPs (choose `K` of `N` items plus a command for each) are solved by
//! unrolling every joint choice into `K` single-item phases and training one
//! permutation equi-invariant, weight-shared Q-network per phase.

pub mod baselines;
pub mod einet;
pub mod envs;
pub mod error;
pub mod harness;
pub mod ismdp;
pub mod learner;
pub mod math;
pub mod par;
pub mod verification;

pub use error::{Error, Result};
