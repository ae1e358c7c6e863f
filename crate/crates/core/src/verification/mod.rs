//! Mechanised checks: exact tabular solutions, equivalence of the joint and
//! phase-wise formulations, and property suites for the shared networks.

mod tabular;
mod theorems;
mod universality;

use serde::{Deserialize, Serialize};

pub use tabular::{
    is_greedy_selection, ismdp_as_finite, rollout_value, smdp_as_finite, value_iteration, FiniteMdp, IsForm, Outcome,
    QTable, MAX_STATE_ACTIONS,
};
pub use theorems::{
    check_ei, check_gradients, check_loss_invariance, ei_deviation, check_theorem1_projection, CONTROL_THRESHOLD, EI_TOL, FD_STEP,
    GRAD_TOL, LOSS_TOL, PROJECTION_TOL, STATIONARY_TOL,
};
pub use universality::{check_universality_fit, fit_ratio, FitResult, UniversalityConfig, UNIVERSALITY_RATIO};

use crate::envs::TabularSMDP;
use crate::error::{Error, Result};

pub const EQUIVALENCE_TOL: f64 = 1e-9;
pub const EQUIVALENCE_GAMMA: f64 = 0.9;
/// Best-vs-second gap above which an optimum counts as unique.
pub const UNIQUE_GAP: f64 = 1e-6;

/// A deliberately broken variant that the suite must detect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub deviation: f64,
    pub threshold: f64,
    pub detected: bool,
}

impl Control {
    pub fn new(deviation: f64, threshold: f64) -> Self {
        Self {
            deviation,
            threshold,
            detected: deviation > threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
}

/// Outcome of one suite. `pass` holds iff every deviation is within its
/// tolerance and the control, if any, was detected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<SubCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Control>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckReport {
    pub fn new(suite: &str, seed: u64, trials: usize, max_deviation: f64, tolerance: f64) -> Self {
        let mut r = Self {
            suite: suite.into(),
            seed,
            trials,
            max_deviation,
            tolerance,
            pass: false,
            parts: Vec::new(),
            control: None,
            note: String::new(),
        };
        r.refresh();
        r
    }

    fn refresh(&mut self) {
        self.pass = self.max_deviation <= self.tolerance
            && self.parts.iter().all(|p| p.max_deviation <= p.tolerance)
            && self.control.as_ref().is_none_or(|c| c.detected);
    }

    pub fn with_control(mut self, control: Control) -> Self {
        self.control = Some(control);
        self.refresh();
        self
    }

    pub fn with_part(mut self, name: &str, max_deviation: f64, tolerance: f64) -> Self {
        self.parts.push(SubCheck {
            name: name.into(),
            max_deviation,
            tolerance,
        });
        self.refresh();
        self
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = note.into();
        self
    }
}

/// Optimal values of a tabular select-MDP and of its phase-wise form, and the
/// joint selections each picks where the optimum is unique.
#[derive(Clone, Debug, PartialEq)]
pub struct Equivalence {
    pub max_value_gap: f64,
    pub unique_states: usize,
    pub selection_mismatches: usize,
}

pub fn compare_formulations(t: &TabularSMDP, gamma: f64) -> Result<Equivalence> {
    let tol = 1e-13;
    let joint = value_iteration(&smdp_as_finite(t, gamma), tol)?;
    let form = ismdp_as_finite(t, gamma)?;
    let phased = value_iteration(&form.mdp, tol)?;
    let mut gap = 0.0f64;
    let (mut unique, mut mismatches) = (0, 0);
    for s in 0..t.n_states() {
        gap = gap.max((joint.value(s) - phased.value(form.root(s))).abs());
        if joint.gap(s) > UNIQUE_GAP {
            unique += 1;
            let best = &t.selections()[joint.greedy(s)];
            if is_greedy_selection(&form, &phased, s, t.k_select()) != *best {
                mismatches += 1;
            }
        }
    }
    Ok(Equivalence {
        max_value_gap: gap,
        unique_states: unique,
        selection_mismatches: mismatches,
    })
}

/// Joint vs phase-wise optimal values and selections on random instances of
/// `(N, A, C, K)`, one per seed in `seed..seed+instances`.
pub fn check_equivalence_family(seed: u64, instances: usize, n: usize, a: usize, c: usize, k: usize) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let (mut unique, mut mismatches) = (0, 0);
    for i in 0..instances as u64 {
        let t = TabularSMDP::random(n, a, c, k, seed + i)?;
        let e = compare_formulations(&t, EQUIVALENCE_GAMMA)?;
        worst = worst.max(e.max_value_gap);
        unique += e.unique_states;
        mismatches += e.selection_mismatches;
    }
    Ok(CheckReport::new("equiv", seed, instances, worst, EQUIVALENCE_TOL)
        .with_part("selection_mismatches", mismatches as f64, 0.0)
        .with_note(&format!("N={n} A={a} C={c} K={k}; {unique} unique-optimum states compared")))
}

/// The default family `N=3, A=2, C=1, K=2` over 20 seeds.
pub fn check_equivalence(seed: u64) -> Result<CheckReport> {
    check_equivalence_family(seed, 20, 3, 2, 1, 2)
}

pub const SUITES: [&str; 6] = ["ei", "grad", "theorem1", "lemma", "equiv", "universal"];

/// Runs a named suite, or every suite for `"all"`, at the standard sizes.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CheckReport>> {
    match name {
        "ei" => Ok(vec![check_ei(seed, 1000)?]),
        "grad" => Ok(vec![check_gradients(seed, 100)?]),
        "theorem1" => Ok(vec![check_theorem1_projection(seed, 50)?]),
        "lemma" => Ok(vec![check_loss_invariance(seed, 50)?]),
        "equiv" => Ok(vec![
            check_equivalence(seed)?,
            check_equivalence_family(seed, 5, 3, 2, 1, 3)?,
            check_equivalence_family(seed, 5, 3, 2, 2, 1)?,
        ]),
        "universal" => Ok(vec![check_universality_fit(seed)?]),
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
        other => Err(Error::Config(format!(
            "unknown suite {other:?}; expected one of {} or all",
            SUITES.join(", ")
        ))),
    }
}
