//! Fitting a random smooth equi-invariant target with a four-layer shared
//! network.
//!
//! Targets have the form `Q(s)[j] = H(Σ_l ξ_x(x_l), i_j, Σ_l ξ_i(i_l))` with
//! `H`, `ξ_x`, `ξ_i` fixed random tanh perceptrons.

use serde::{Deserialize, Serialize};

use crate::einet::{apply_permutation, permute_rows, Activation, Architecture, Permutation, PhaseInput, SharedParams};
use crate::error::Result;
use crate::math::{AdamState, Matrix, SeededRng};

use super::theorems::rand_matrix;
use super::CheckReport;

/// Final MSE must fall to this fraction of the initial MSE.
pub const UNIVERSALITY_RATIO: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalityConfig {
    pub n_items: usize,
    pub k: usize,
    pub commands: usize,
    pub item_width: usize,
    pub states: usize,
    pub channels: usize,
    pub layers: usize,
    pub lr: f64,
    pub max_steps: usize,
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        Self {
            n_items: 4,
            k: 1,
            commands: 2,
            item_width: 2,
            states: 64,
            channels: 16,
            layers: 4,
            lr: 1e-2,
            max_steps: 10_000,
        }
    }
}

/// `tanh` hidden layer, linear output.
struct Perceptron {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

impl Perceptron {
    fn random(input: usize, hidden: usize, output: usize, rng: &mut SeededRng) -> Self {
        let s1 = 2.0 / (input as f64).sqrt();
        let s2 = 2.0 / (hidden as f64).sqrt();
        Self {
            w1: Matrix::from_vec(hidden, input, (0..hidden * input).map(|_| rng.uniform(-s1, s1)).collect()).expect("sized"),
            b1: (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            w2: Matrix::from_vec(output, hidden, (0..output * hidden).map(|_| rng.uniform(-s2, s2)).collect()).expect("sized"),
            b2: (0..output).map(|_| rng.uniform(-0.5, 0.5)).collect(),
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = (0..self.w1.rows())
            .map(|r| (self.w1.row(r).iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + self.b1[r]).tanh())
            .collect();
        (0..self.w2.rows())
            .map(|r| self.w2.row(r).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + self.b2[r])
            .collect()
    }
}

struct Target {
    xi_x: Perceptron,
    xi_i: Perceptron,
    h: Perceptron,
}

const SUMMARY: usize = 3;

impl Target {
    fn random(cfg: &UniversalityConfig, rng: &mut SeededRng) -> Self {
        let d = cfg.item_width;
        Self {
            xi_x: Perceptron::random(d + cfg.commands, 8, SUMMARY, rng),
            xi_i: Perceptron::random(d, 8, SUMMARY, rng),
            h: Perceptron::random(2 * SUMMARY + d, 16, cfg.commands, rng),
        }
    }

    fn eval(&self, s: &PhaseInput) -> Matrix {
        let pool = |m: &Matrix, f: &Perceptron| {
            let mut acc = vec![0.0; SUMMARY];
            for r in 0..m.rows() {
                for (a, v) in acc.iter_mut().zip(f.apply(m.row(r))) {
                    *a += v;
                }
            }
            acc
        };
        let (sx, si) = (pool(&s.x, &self.xi_x), pool(&s.i, &self.xi_i));
        let rows: Vec<Vec<f64>> = (0..s.i.rows())
            .map(|j| {
                let mut input = sx.clone();
                input.extend_from_slice(s.i.row(j));
                input.extend_from_slice(&si);
                self.h.apply(&input)
            })
            .collect();
        Matrix::from_rows(self.h.w2.rows(), &rows).expect("sized")
    }
}

fn mse(theta: &SharedParams, data: &[(PhaseInput, Matrix)]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for (s, t) in data {
        let q = theta.forward(s)?;
        total += q.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += t.as_slice().len();
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Variance of the target entries, for judging the fit beyond its offset.
    pub target_variance: f64,
    pub steps: usize,
}

impl FitResult {
    pub fn ratio(&self) -> f64 {
        if self.initial_mse == 0.0 {
            0.0
        } else {
            self.final_mse / self.initial_mse
        }
    }
}

/// Samples and fits until the MSE ratio is reached or `max_steps` run out.
/// `early_stop = false` always runs every step. `target` overrides the
/// random perceptron target.
pub fn fit_ratio(
    cfg: &UniversalityConfig,
    seed: u64,
    target: Option<&dyn Fn(&PhaseInput) -> Matrix>,
    early_stop: bool,
) -> Result<FitResult> {
    let mut rng = SeededRng::new(seed);
    let arch = Architecture::new(cfg.item_width, cfg.commands, None, cfg.channels, cfg.layers, Activation::Tanh)?;
    let random_target = Target::random(cfg, &mut rng);
    let f = |s: &PhaseInput| match target {
        Some(t) => t(s),
        None => random_target.eval(s),
    };
    let mut base = Vec::with_capacity(cfg.states);
    for _ in 0..cfg.states {
        let mut x = rand_matrix(cfg.k, cfg.item_width + cfg.commands, &mut rng);
        for r in 0..cfg.k {
            let cmd = rng.below(cfg.commands);
            for c in 0..cfg.commands {
                x[(r, cfg.item_width + c)] = if c == cmd { 1.0 } else { 0.0 };
            }
        }
        let s = PhaseInput {
            x,
            i: rand_matrix(cfg.n_items - cfg.k, cfg.item_width, &mut rng),
            u: Matrix::zeros(0, 1),
        };
        base.push(s);
    }
    // the orbit of every sampled state, with targets evaluated on each member
    let perms = Permutation::enumerate(cfg.k, cfg.n_items - cfg.k, 0);
    let mut data = Vec::with_capacity(base.len() * perms.len());
    for s in &base {
        for sigma in &perms {
            let moved = apply_permutation(sigma, s)?;
            let t = f(&moved);
            data.push((moved, t));
        }
    }
    // the target itself must be equi-invariant on the orbit
    debug_assert!(perms.iter().all(|sigma| {
        let s = &base[0];
        let moved = apply_permutation(sigma, s).expect("sized");
        f(&moved).max_abs_diff(&permute_rows(&sigma.i, &f(s)).expect("sized")) < 1e-10
    }));

    let entries: Vec<f64> = data.iter().flat_map(|(_, t)| t.as_slice().to_vec()).collect();
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    let target_variance = entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / entries.len() as f64;
    let mut theta = SharedParams::init(arch, &mut rng)?;
    let initial = mse(&theta, &data)?;
    let result = |final_mse: f64, steps: usize| FitResult {
        initial_mse: initial,
        final_mse,
        target_variance,
        steps,
    };
    if initial == 0.0 {
        return Ok(result(0.0, 0));
    }
    let mut adam = AdamState::new(theta.param_count(), cfg.lr);
    let scale = 1.0 / (data.len() * cfg.commands * (cfg.n_items - cfg.k)) as f64;
    for step in 0..cfg.max_steps {
        let mut grad = vec![0.0; theta.param_count()];
        let mut total = 0.0;
        for (s, t) in &data {
            let (q, trace) = theta.forward_trace(s)?;
            let mut up = q.clone();
            for (u, v) in up.as_mut_slice().iter_mut().zip(t.as_slice()) {
                total += (*u - v).powi(2);
                *u = 2.0 * (*u - v) * scale;
            }
            theta.backward_trace(&trace, &up, &mut grad)?;
        }
        if early_stop && total * scale / initial <= UNIVERSALITY_RATIO {
            return Ok(result(total * scale, step));
        }
        adam.step(theta.scalars_mut(), &grad)?;
    }
    Ok(result(mse(&theta, &data)?, cfg.max_steps))
}

/// Random perceptron target, seeded.
pub fn check_universality_fit(seed: u64) -> Result<CheckReport> {
    let cfg = UniversalityConfig::default();
    let fit = fit_ratio(&cfg, seed, None, true)?;
    Ok(CheckReport::new("universal", seed, 1, fit.ratio(), UNIVERSALITY_RATIO).with_note(&format!(
        "N={} k={} C={} d_I={}, {} states and their orbits, {}-layer tanh, {} Adam steps, final MSE / target variance {:.3e}",
        cfg.n_items,
        cfg.k,
        cfg.commands,
        cfg.item_width,
        cfg.states,
        cfg.layers,
        fit.steps,
        fit.final_mse / fit.target_variance
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_absorbed() {
        let cfg = UniversalityConfig {
            states: 8,
            max_steps: 3000,
            ..UniversalityConfig::default()
        };
        let constant = |s: &PhaseInput| {
            let mut m = Matrix::zeros(s.i.rows(), 2);
            m.as_mut_slice().iter_mut().for_each(|v| *v = 0.7);
            m
        };
        let fit = fit_ratio(&cfg, 1, Some(&constant), true).unwrap();
        assert!(fit.ratio() <= UNIVERSALITY_RATIO, "{fit:?}");
    }
}
