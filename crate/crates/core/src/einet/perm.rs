use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};

use super::PhaseInput;

/// A permutation of `0..n` stored as an image vector: position `j` is sent
/// to `image[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Perm(Vec<usize>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n).collect())
    }

    pub fn new(image: Vec<usize>) -> Result<Self> {
        let mut sorted = image.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::Config(format!("{image:?} is not a bijection")));
        }
        Ok(Perm(image))
    }

    pub fn random(n: usize, rng: &mut SeededRng) -> Self {
        Perm(rng.permutation(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn image(&self) -> &[usize] {
        &self.0
    }

    #[inline]
    pub fn map(&self, j: usize) -> usize {
        self.0[j]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (j, &t) in self.0.iter().enumerate() {
            inv[t] = j;
        }
        Perm(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Self {
        Perm(other.0.iter().map(|&j| self.0[j]).collect())
    }

    /// Moves row `j` of `m` to row `image[j]`.
    pub fn permute_rows(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.len() {
            return Err(Error::shape(
                "permute_rows",
                format!("{} rows, permutation of {}", m.rows(), self.len()),
            ));
        }
        // gather with the inverse: out[image[j]] = m[j]
        Ok(m.gather_rows(self.inverse().image()))
    }

    /// All permutations of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Perm> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Perm(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

/// Per-group permutation `σ_s = (σ_x, σ_i, σ_u)` of a phase state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    pub x: Perm,
    pub i: Perm,
    pub u: Perm,
}

impl Permutation {
    pub fn identity_for(s: &PhaseInput) -> Self {
        Self {
            x: Perm::identity(s.x.rows()),
            i: Perm::identity(s.i.rows()),
            u: Perm::identity(s.u.rows()),
        }
    }

    pub fn random_for(s: &PhaseInput, rng: &mut SeededRng) -> Self {
        Self {
            x: Perm::random(s.x.rows(), rng),
            i: Perm::random(s.i.rows(), rng),
            u: Perm::random(s.u.rows(), rng),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            x: self.x.inverse(),
            i: self.i.inverse(),
            u: self.u.inverse(),
        }
    }

    pub fn compose(&self, other: &Permutation) -> Self {
        Self {
            x: self.x.compose(&other.x),
            i: self.i.compose(&other.i),
            u: self.u.compose(&other.u),
        }
    }

    /// Every element of `S_k × S_{N-k} × S_{|U|}` for the given sizes.
    pub fn enumerate(k: usize, n_items: usize, n_context: usize) -> Vec<Permutation> {
        let xs = Perm::all(k);
        let is = Perm::all(n_items);
        let us = Perm::all(n_context);
        let mut out = Vec::with_capacity(xs.len() * is.len() * us.len());
        for x in &xs {
            for i in &is {
                for u in &us {
                    out.push(Permutation {
                        x: x.clone(),
                        i: i.clone(),
                        u: u.clone(),
                    });
                }
            }
        }
        out
    }
}

/// `σ_s(s)`: permutes each group of `s`.
pub fn apply_permutation(sigma: &Permutation, s: &PhaseInput) -> Result<PhaseInput> {
    Ok(PhaseInput {
        x: sigma.x.permute_rows(&s.x)?,
        i: sigma.i.permute_rows(&s.i)?,
        u: sigma.u.permute_rows(&s.u)?,
    })
}

/// `σ_i(q)`: permutes the rows of a Q-matrix.
pub fn permute_rows(sigma_i: &Perm, q: &Matrix) -> Result<Matrix> {
    sigma_i.permute_rows(q)
}
