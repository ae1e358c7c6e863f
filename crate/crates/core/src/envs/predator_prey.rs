//! Selective Predator-Prey.
//!
//! `N` predators and `U` preys on a `G×G` grid. Each step the agent moves `K`
//! predators; a prey is caught when at least two moved predators sit within
//! its 8-neighbourhood (or on its cell).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ismdp::{validate_selection, EnvDescriptor, Observation, SelectEnv};
use crate::math::{Matrix, SeededRng};

/// Commands: stay, up, down, left, right.
pub const MOVES: [(i64, i64); 5] = [(0, 0), (0, 1), (0, -1), (-1, 0), (1, 0)];

/// Moved predators needed for a catch.
pub const CATCH_THRESHOLD: usize = 2;

pub type Cell = (i64, i64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PPConfig {
    #[serde(default = "default_grid")]
    pub grid: i64,
    pub n: usize,
    pub u: usize,
    pub k: usize,
    #[serde(default = "default_commands")]
    pub commands: usize,
}

fn default_grid() -> i64 {
    10
}
fn default_commands() -> usize {
    5
}

impl PPConfig {
    pub fn new(n: usize, u: usize, k: usize) -> Self {
        Self {
            grid: default_grid(),
            n,
            u,
            k,
            commands: default_commands(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(Error::Config(format!("predator-prey: need 0 < K <= N, got K={} N={}", self.k, self.n)));
        }
        if self.grid < 1 {
            return Err(Error::Config("predator-prey: grid must be positive".into()));
        }
        if self.commands == 0 || self.commands > MOVES.len() {
            return Err(Error::Config(format!("predator-prey: C must be in 1..=5, got {}", self.commands)));
        }
        Ok(())
    }
}

/// `(x/G, y/G)`.
pub fn featurize_cell(cell: Cell, grid: i64) -> [f64; 2] {
    [cell.0 as f64 / grid as f64, cell.1 as f64 / grid as f64]
}

fn shift(cell: Cell, command: usize, grid: i64) -> Cell {
    let (dx, dy) = MOVES[command];
    let (x, y) = (cell.0 + dx, cell.1 + dy);
    if (0..grid).contains(&x) && (0..grid).contains(&y) {
        (x, y)
    } else {
        cell
    }
}

fn near(a: Cell, b: Cell) -> bool {
    (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1
}

/// Preys with at least [`CATCH_THRESHOLD`] of `hunters` around them.
pub fn caught_preys(hunters: &[Cell], preys: &[Cell]) -> Vec<usize> {
    (0..preys.len())
        .filter(|&p| hunters.iter().filter(|&&h| near(h, preys[p])).count() >= CATCH_THRESHOLD)
        .collect()
}

#[derive(Clone, Debug)]
pub struct PredatorPreyEnv {
    cfg: PPConfig,
    predators: Vec<Cell>,
    preys: Vec<Cell>,
    rng: SeededRng,
}

impl PredatorPreyEnv {
    pub fn new(cfg: PPConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = Self {
            cfg,
            predators: Vec::new(),
            preys: Vec::new(),
            rng: SeededRng::new(seed),
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn config(&self) -> &PPConfig {
        &self.cfg
    }

    pub fn predators(&self) -> &[Cell] {
        &self.predators
    }

    pub fn preys(&self) -> &[Cell] {
        &self.preys
    }

    pub fn set_positions(&mut self, predators: Vec<Cell>, preys: Vec<Cell>) -> Result<()> {
        let g = self.cfg.grid;
        let on_grid = |c: &Cell| (0..g).contains(&c.0) && (0..g).contains(&c.1);
        if predators.len() != self.cfg.n
            || preys.len() != self.cfg.u
            || !predators.iter().chain(&preys).all(on_grid)
        {
            return Err(Error::Config("positions do not match the config".into()));
        }
        self.predators = predators;
        self.preys = preys;
        Ok(())
    }

    fn random_cell(&mut self) -> Cell {
        let g = self.cfg.grid as usize;
        (self.rng.below(g) as i64, self.rng.below(g) as i64)
    }

    pub fn pp_step(&mut self, selection: &[(usize, usize)]) -> Result<f64> {
        validate_selection(selection, self.cfg.n, self.cfg.k, self.cfg.commands)?;
        let g = self.cfg.grid;
        for &(j, c) in selection {
            self.predators[j] = shift(self.predators[j], c, g);
        }
        let hunters: Vec<Cell> = selection.iter().map(|&(j, _)| self.predators[j]).collect();
        let caught = caught_preys(&hunters, &self.preys);
        for &p in &caught {
            self.preys[p] = self.random_cell();
        }
        for p in 0..self.preys.len() {
            let c = self.rng.below(MOVES.len());
            self.preys[p] = shift(self.preys[p], c, g);
        }
        Ok(caught.len() as f64)
    }
}

impl SelectEnv for PredatorPreyEnv {
    fn descriptor(&self) -> EnvDescriptor {
        EnvDescriptor {
            n_items: self.cfg.n,
            k_select: self.cfg.k,
            commands: self.cfg.commands,
            item_width: 2,
            n_context: self.cfg.u,
            context_width: 2,
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = SeededRng::new(seed);
        self.predators = (0..self.cfg.n).map(|_| self.random_cell()).collect();
        self.preys = (0..self.cfg.u).map(|_| self.random_cell()).collect();
        self.observe()
    }

    fn observe(&self) -> Observation {
        let g = self.cfg.grid;
        let feats = |cells: &[Cell]| {
            Matrix::from_vec(cells.len(), 2, cells.iter().flat_map(|&c| featurize_cell(c, g)).collect())
                .expect("two features per cell")
        };
        Observation {
            items: feats(&self.predators),
            context: feats(&self.preys),
        }
    }

    fn step(&mut self, selection: &[(usize, usize)]) -> Result<(f64, Observation)> {
        let r = self.pp_step(selection)?;
        Ok((r, self.observe()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(preds: Vec<Cell>, preys: Vec<Cell>, k: usize) -> PredatorPreyEnv {
        let mut e = PredatorPreyEnv::new(PPConfig::new(preds.len(), preys.len(), k), 1).unwrap();
        e.set_positions(preds, preys).unwrap();
        e
    }

    #[test]
    fn two_adjacent_predators_catch() {
        let mut e = env(vec![(4, 5), (6, 6), (0, 0)], vec![(5, 5)], 2);
        assert_eq!(e.pp_step(&[(0, 0), (1, 0)]).unwrap(), 1.0);
    }

    #[test]
    fn one_predator_is_not_enough() {
        let mut e = env(vec![(4, 5), (0, 0)], vec![(5, 5)], 2);
        assert_eq!(e.pp_step(&[(0, 0), (1, 0)]).unwrap(), 0.0);
    }

    #[test]
    fn unselected_predators_do_not_count() {
        let mut e = env(vec![(4, 5), (6, 6), (0, 0)], vec![(5, 5)], 1);
        assert_eq!(e.pp_step(&[(0, 0)]).unwrap(), 0.0);
    }

    #[test]
    fn far_predators_score_nothing() {
        let mut e = env(vec![(0, 0), (0, 1)], vec![(8, 8), (9, 9)], 2);
        assert_eq!(e.pp_step(&[(0, 1), (1, 4)]).unwrap(), 0.0);
    }

    #[test]
    fn moves_happen_before_the_catch() {
        let mut e = env(vec![(3, 5), (6, 6)], vec![(5, 5)], 2);
        assert_eq!(e.pp_step(&[(0, 4), (1, 0)]).unwrap(), 1.0);
        assert_eq!(e.predators()[0], (4, 5));
    }

    #[test]
    fn off_grid_move_is_stay() {
        let mut e = env(vec![(0, 0)], vec![(9, 9)], 1);
        e.pp_step(&[(0, 3)]).unwrap();
        assert_eq!(e.predators()[0], (0, 0));
    }

    #[test]
    fn reward_bounds_and_determinism() {
        let cfg = PPConfig::new(10, 4, 4);
        let mut a = PredatorPreyEnv::new(cfg.clone(), 2).unwrap();
        let mut b = PredatorPreyEnv::new(cfg, 2).unwrap();
        let mut rng = SeededRng::new(7);
        for _ in 0..500 {
            let p = rng.permutation(10);
            let sel: Vec<_> = p[..4].iter().map(|&j| (j, rng.below(5))).collect();
            let (ra, oa) = a.step(&sel).unwrap();
            assert_eq!((ra, oa), b.step(&sel).unwrap());
            assert!((0.0..=4.0).contains(&ra) && ra.fract() == 0.0);
            assert_eq!(a.preys().len(), 4);
        }
    }

    #[test]
    fn features_scale_by_grid() {
        assert_eq!(featurize_cell((3, 7), 10), [0.3, 0.7]);
    }
}
