//! Circle Selection.
//!
//! `N` selectable and `U` unselectable circles grow in the unit square. Each
//! step the agent picks `K` selectable circles, optionally moves them, and
//! harvests their area unless they touch an unselectable circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ismdp::{validate_selection, EnvDescriptor, Observation, SelectEnv};
use crate::math::{Matrix, SeededRng};

pub const HALF_SIDE: f64 = 0.5;

/// Commands: stay, up, down, left, right.
pub const MOVES: [(f64, f64); 5] = [(0.0, 0.0), (0.0, 1.0), (0.0, -1.0), (-1.0, 0.0), (1.0, 0.0)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub pos_x: f64,
    pub pos_y: f64,
    pub radius: f64,
    pub selectable: bool,
}

impl Circle {
    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    /// Strict overlap; tangent circles do not collide.
    pub fn collides(&self, other: &Circle) -> bool {
        let (dx, dy) = (self.pos_x - other.pos_x, self.pos_y - other.pos_y);
        (dx * dx + dy * dy).sqrt() < self.radius + other.radius
    }

    pub fn features(&self) -> [f64; 3] {
        [self.pos_x, self.pos_y, self.radius]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleConfig {
    pub n: usize,
    pub u: usize,
    pub k: usize,
    #[serde(default = "default_commands")]
    pub commands: usize,
    #[serde(default = "default_move")]
    pub move_distance: f64,
    #[serde(default = "default_init_radius")]
    pub init_radius: f64,
    #[serde(default = "default_growth")]
    pub growth: [f64; 2],
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_max_radius")]
    pub max_radius: f64,
}

fn default_commands() -> usize {
    5
}
fn default_move() -> f64 {
    0.1
}
fn default_init_radius() -> f64 {
    0.01
}
fn default_growth() -> [f64; 2] {
    [0.045, 0.055]
}
fn default_jitter() -> f64 {
    0.01
}
fn default_max_radius() -> f64 {
    0.45
}

impl CircleConfig {
    pub fn new(n: usize, u: usize, k: usize, commands: usize) -> Self {
        Self {
            n,
            u,
            k,
            commands,
            move_distance: default_move(),
            init_radius: default_init_radius(),
            growth: default_growth(),
            jitter: default_jitter(),
            max_radius: default_max_radius(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(Error::Config(format!("circles: need 0 < K <= N, got K={} N={}", self.k, self.n)));
        }
        if self.commands != 1 && self.commands != 5 {
            return Err(Error::Config(format!("circles: C must be 1 or 5, got {}", self.commands)));
        }
        if !(self.init_radius > 0.0 && self.init_radius <= self.max_radius) {
            return Err(Error::Config("circles: need 0 < init_radius <= max_radius".into()));
        }
        if self.growth[0] > self.growth[1] || self.jitter < 0.0 || self.move_distance < 0.0 {
            return Err(Error::Config("circles: bad growth, jitter or move distance".into()));
        }
        Ok(())
    }
}

fn clamp(v: f64) -> f64 {
    v.clamp(-HALF_SIDE, HALF_SIDE)
}

/// Sum over selected circles of `-area` (touches an unselectable circle),
/// `0` (touches another selected circle only) or `+area`.
pub fn cs_reward(circles: &[Circle], selected: &[usize]) -> Result<f64> {
    let mut seen = vec![false; circles.len()];
    for &s in selected {
        let c = circles
            .get(s)
            .ok_or_else(|| Error::Selection(format!("circle {s} out of range")))?;
        if !c.selectable {
            return Err(Error::Selection(format!("circle {s} is not selectable")));
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::Selection(format!("circle {s} selected twice")));
        }
    }
    let mut r = 0.0;
    for &s in selected {
        let c = &circles[s];
        let hits_blocked = circles.iter().any(|o| !o.selectable && c.collides(o));
        let hits_selected = selected.iter().any(|&o| o != s && c.collides(&circles[o]));
        r += if hits_blocked {
            -c.area()
        } else if hits_selected {
            0.0
        } else {
            c.area()
        };
    }
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct CircleEnv {
    cfg: CircleConfig,
    /// Selectable circles first, then unselectable ones.
    circles: Vec<Circle>,
    rng: SeededRng,
}

impl CircleEnv {
    pub fn new(cfg: CircleConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = Self {
            cfg,
            circles: Vec::new(),
            rng: SeededRng::new(seed),
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn config(&self) -> &CircleConfig {
        &self.cfg
    }

    pub fn circles(&self) -> &[Circle] {
        &self.circles
    }

    /// Replaces the whole configuration; the first `N` circles must be the
    /// selectable ones.
    pub fn set_circles(&mut self, circles: Vec<Circle>) -> Result<()> {
        let ok = circles.len() == self.cfg.n + self.cfg.u
            && circles.iter().enumerate().all(|(j, c)| c.selectable == (j < self.cfg.n));
        if !ok {
            return Err(Error::Config("circle layout does not match the config".into()));
        }
        self.circles = circles;
        Ok(())
    }

    fn spawn(&mut self, radius: f64, selectable: bool) -> Circle {
        Circle {
            pos_x: self.rng.uniform(-HALF_SIDE, HALF_SIDE),
            pos_y: self.rng.uniform(-HALF_SIDE, HALF_SIDE),
            radius,
            selectable,
        }
    }

    /// Moves, scores, replaces and grows. Returns the reward.
    pub fn cs_step(&mut self, selection: &[(usize, usize)]) -> Result<f64> {
        validate_selection(selection, self.cfg.n, self.cfg.k, self.cfg.commands)?;
        let d = self.cfg.move_distance;
        for &(j, c) in selection {
            let (mx, my) = MOVES[c];
            let circle = &mut self.circles[j];
            circle.pos_x = clamp(circle.pos_x + d * mx);
            circle.pos_y = clamp(circle.pos_y + d * my);
        }
        let selected: Vec<usize> = selection.iter().map(|&(j, _)| j).collect();
        let r = cs_reward(&self.circles, &selected)?;

        let mut replace = vec![false; self.circles.len()];
        for &j in &selected {
            replace[j] = true;
        }
        for o in self.cfg.n..self.circles.len() {
            if selected.iter().any(|&j| self.circles[j].collides(&self.circles[o])) {
                replace[o] = true;
            }
        }
        let [g_lo, g_hi] = self.cfg.growth;
        for j in 0..self.circles.len() {
            if replace[j] {
                let sel = self.circles[j].selectable;
                self.circles[j] = self.spawn(self.cfg.init_radius, sel);
            } else {
                let grow = self.rng.uniform(g_lo, g_hi);
                let jx = self.rng.uniform(-self.cfg.jitter, self.cfg.jitter);
                let jy = self.rng.uniform(-self.cfg.jitter, self.cfg.jitter);
                let c = &mut self.circles[j];
                c.radius = (c.radius + grow).min(self.cfg.max_radius);
                c.pos_x = clamp(c.pos_x + jx);
                c.pos_y = clamp(c.pos_y + jy);
            }
        }
        Ok(r)
    }
}

impl SelectEnv for CircleEnv {
    fn descriptor(&self) -> EnvDescriptor {
        EnvDescriptor {
            n_items: self.cfg.n,
            k_select: self.cfg.k,
            commands: self.cfg.commands,
            item_width: 3,
            n_context: self.cfg.u,
            context_width: 3,
        }
    }

    /// Circles start at uniform positions with radii uniform in
    /// `[init_radius, max_radius]`.
    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = SeededRng::new(seed);
        let (lo, hi) = (self.cfg.init_radius, self.cfg.max_radius);
        self.circles = (0..self.cfg.n + self.cfg.u)
            .map(|j| {
                let r = self.rng.uniform(lo, hi);
                self.spawn(r, j < self.cfg.n)
            })
            .collect();
        self.observe()
    }

    fn observe(&self) -> Observation {
        let feats = |cs: &[Circle]| {
            Matrix::from_vec(cs.len(), 3, cs.iter().flat_map(|c| c.features()).collect())
                .expect("three features per circle")
        };
        Observation {
            items: feats(&self.circles[..self.cfg.n]),
            context: feats(&self.circles[self.cfg.n..]),
        }
    }

    fn step(&mut self, selection: &[(usize, usize)]) -> Result<(f64, Observation)> {
        let r = self.cs_step(selection)?;
        Ok((r, self.observe()))
    }
}
