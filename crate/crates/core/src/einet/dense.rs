//! Dense (untied) networks.
//!
//! `project_params` expands the tied scalars of a shared network into the
//! weight matrices of an ordinary multilayer perceptron over the concatenated
//! item features. The same type, initialised freely, is the vanilla DQN
//! baseline.

use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, Perm, Permutation, PhaseInput, QMatrix, SharedParams};
use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};

/// `(item count, width)` for each group at one layer boundary.
pub type BoundaryLayout = Vec<(usize, usize)>;

/// Borrowed view of one dense layer.
pub struct DenseLayer<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    pub out_dim: usize,
    pub in_dim: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    activation: Activation,
    /// Layouts of the `layers + 1` boundaries; the last holds only group I.
    boundaries: Vec<BoundaryLayout>,
    params: Vec<f64>,
}

/// Gradient of a dense network, same layout as its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad(pub Vec<f64>);

fn boundary_dim(b: &BoundaryLayout) -> usize {
    b.iter().map(|(n, w)| n * w).sum()
}

fn group_offsets(b: &BoundaryLayout) -> Vec<usize> {
    let mut off = Vec::with_capacity(b.len());
    let mut acc = 0;
    for (n, w) in b {
        off.push(acc);
        acc += n * w;
    }
    off
}

/// Item counts per group as the architecture sees them.
fn counts_for(arch: &Architecture, k: usize, n_items: usize, n_context: usize) -> Result<Vec<usize>> {
    if n_items == 0 {
        return Err(Error::EmptyItems);
    }
    let mut counts = vec![k, n_items];
    if arch.has_context() {
        counts.push(n_context);
    } else if n_context > 0 {
        return Err(Error::shape("project_params", "context items without a context group"));
    }
    Ok(counts)
}

fn boundaries_for(arch: &Architecture, counts: &[usize]) -> Vec<BoundaryLayout> {
    let mut out = Vec::with_capacity(arch.layers + 1);
    out.push(counts.iter().zip(&arch.groups).map(|(&n, g)| (n, g.width)).collect());
    for _ in 1..arch.layers {
        out.push(counts.iter().map(|&n| (n, arch.channels)).collect());
    }
    // output boundary: only group I carries values
    let mut last: BoundaryLayout = counts.iter().map(|&n| (n, 0)).collect();
    last[1] = (counts[1], arch.commands);
    out.push(last);
    out
}

impl DenseNet {
    fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        // (weight offset, bias offset, out_dim, in_dim)
        let mut acc = 0;
        let mut out = Vec::with_capacity(self.boundaries.len() - 1);
        for l in 0..self.boundaries.len() - 1 {
            let ind = boundary_dim(&self.boundaries[l]);
            let outd = boundary_dim(&self.boundaries[l + 1]);
            out.push((acc, acc + outd * ind, outd, ind));
            acc += outd * ind + outd;
        }
        out
    }

    fn total_len(boundaries: &[BoundaryLayout]) -> usize {
        boundaries
            .windows(2)
            .map(|w| {
                let (i, o) = (boundary_dim(&w[0]), boundary_dim(&w[1]));
                o * i + o
            })
            .sum()
    }

    /// Freely initialised dense network with the same shape as the
    /// projection of `arch` at the given item counts.
    pub fn init(arch: &Architecture, k: usize, n_items: usize, n_context: usize, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let counts = counts_for(arch, k, n_items, n_context)?;
        let boundaries = boundaries_for(arch, &counts);
        let mut net = Self {
            activation: arch.activation,
            params: vec![0.0; Self::total_len(&boundaries)],
            boundaries,
        };
        for (w_off, b_off, outd, ind) in net.layer_offsets() {
            let bound = 1.0 / (ind.max(1) as f64).sqrt();
            for v in &mut net.params[w_off..b_off + outd] {
                *v = rng.uniform(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn layer(&self, l: usize) -> DenseLayer<'_> {
        let (w_off, b_off, outd, ind) = self.layer_offsets()[l];
        DenseLayer {
            weights: &self.params[w_off..b_off],
            bias: &self.params[b_off..b_off + outd],
            out_dim: outd,
            in_dim: ind,
            activation: self.layer_activation(l),
        }
    }

    fn layer_activation(&self, l: usize) -> Activation {
        if l + 1 == self.layers() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Item counts per group `(k, N-k[, |U|])` this network was built for.
    pub fn counts(&self) -> Vec<usize> {
        self.boundaries[0].iter().map(|(n, _)| *n).collect()
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.boundaries.last().unwrap()[1]
    }

    /// Concatenates the groups of `s` into the input vector.
    pub fn vectorize(&self, s: &PhaseInput) -> Result<Vec<f64>> {
        let b0 = &self.boundaries[0];
        let groups: Vec<&Matrix> = [&s.x, &s.i, &s.u].into_iter().take(b0.len()).collect();
        if b0.len() == 2 && s.u.rows() > 0 {
            return Err(Error::shape("dense forward", "unexpected context items"));
        }
        let mut v = Vec::with_capacity(boundary_dim(b0));
        for (m, &(n, w)) in groups.iter().zip(b0) {
            if m.rows() != n || (n > 0 && m.cols() != w) {
                return Err(Error::shape(
                    "dense forward",
                    format!("group of {}x{} where {n}x{w} expected", m.rows(), m.cols()),
                ));
            }
            v.extend_from_slice(m.as_slice());
        }
        Ok(v)
    }

    /// Forward pass on a flat input; returns per-layer pre-activations and
    /// the final output.
    fn forward_vec_trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = vec![input.to_vec()];
        let mut pres = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let layer = self.layer(l);
            let x = acts.last().unwrap();
            let mut z = layer.bias.to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                *zr += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pres.push(z);
            acts.push(a);
        }
        (acts, pres)
    }

    pub fn forward(&self, s: &PhaseInput) -> Result<QMatrix> {
        let x = self.vectorize(s)?;
        let (mut acts, _) = self.forward_vec_trace(&x);
        let (rows, cols) = self.output_shape();
        Matrix::from_vec(rows, cols, acts.pop().unwrap())
    }

    /// `∂(Σ upstream ⊙ Q(s))/∂ω` by ordinary backpropagation.
    pub fn backward(&self, s: &PhaseInput, upstream: &Matrix) -> Result<DenseGrad> {
        let x = self.vectorize(s)?;
        let (rows, cols) = self.output_shape();
        if (upstream.rows(), upstream.cols()) != (rows, cols) {
            return Err(Error::shape("dense backward", "upstream shape"));
        }
        let (acts, pres) = self.forward_vec_trace(&x);
        let offsets = self.layer_offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = upstream.as_slice().to_vec();
        for l in (0..self.layers()).rev() {
            let (w_off, b_off, outd, ind) = offsets[l];
            let act = self.layer_activation(l);
            for (d, &z) in delta.iter_mut().zip(&pres[l]) {
                *d *= act.derivative(z);
            }
            let input = &acts[l];
            for r in 0..outd {
                let d = delta[r];
                grad[b_off + r] += d;
                if d == 0.0 {
                    continue;
                }
                for (g, &xv) in grad[w_off + r * ind..w_off + (r + 1) * ind].iter_mut().zip(input) {
                    *g += d * xv;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; ind];
                for r in 0..outd {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    for (nv, &w) in next.iter_mut().zip(&self.params[w_off + r * ind..w_off + (r + 1) * ind]) {
                        *nv += d * w;
                    }
                }
                delta = next;
            }
        }
        Ok(DenseGrad(grad))
    }

    /// `σ(ω)`: each layer's weights become `M_σ W M_σ⁻¹` and biases `M_σ b`,
    /// with `σ` acting on item blocks and leaving channels alone.
    pub fn permuted(&self, sigma: &Permutation) -> Result<DenseNet> {
        let perms = [&sigma.x, &sigma.i, &sigma.u];
        let maps: Vec<Vec<usize>> = self
            .boundaries
            .iter()
            .map(|b| boundary_map(b, &perms))
            .collect::<Result<_>>()?;
        let mut out = self.clone();
        for (l, (w_off, b_off, outd, ind)) in self.layer_offsets().into_iter().enumerate() {
            let (rin, rout) = (&maps[l], &maps[l + 1]);
            for r in 0..outd {
                out.params[b_off + rout[r]] = self.params[b_off + r];
                for c in 0..ind {
                    out.params[w_off + rout[r] * ind + rin[c]] = self.params[w_off + r * ind + c];
                }
            }
        }
        Ok(out)
    }

    /// `self + other`, for networks of identical shape.
    pub fn add(&self, other: &DenseNet) -> Result<DenseNet> {
        if self.boundaries != other.boundaries {
            return Err(Error::shape("DenseNet::add", "shape mismatch"));
        }
        let mut out = self.clone();
        for (a, b) in out.params.iter_mut().zip(&other.params) {
            *a += b;
        }
        Ok(out)
    }

    /// Same shape with the given parameter vector.
    pub fn with_params(&self, params: Vec<f64>) -> Result<DenseNet> {
        if params.len() != self.params.len() {
            return Err(Error::shape("DenseNet::with_params", "length"));
        }
        Ok(DenseNet {
            params,
            ..self.clone()
        })
    }
}

/// Dense index `a` at this boundary maps to `map[a]` under `σ`.
fn boundary_map(b: &BoundaryLayout, perms: &[&Perm; 3]) -> Result<Vec<usize>> {
    let offs = group_offsets(b);
    let mut map = vec![0; boundary_dim(b)];
    for (g, &(n, w)) in b.iter().enumerate() {
        if w == 0 {
            continue;
        }
        let p = perms[g];
        if p.len() != n {
            return Err(Error::shape(
                "DenseNet::permuted",
                format!("permutation of {} for group of {n}", p.len()),
            ));
        }
        for j in 0..n {
            for c in 0..w {
                map[offs[g] + j * w + c] = offs[g] + p.map(j) * w + c;
            }
        }
    }
    Ok(map)
}

/// `ω(θ)`: the dense network that evaluates identically to `theta` on every
/// state with `k` selected, `n_items` unselected and `n_context` context
/// items.
pub fn project_params(theta: &SharedParams, k: usize, n_items: usize, n_context: usize) -> Result<DenseNet> {
    let arch = theta.arch();
    let counts = counts_for(arch, k, n_items, n_context)?;
    let boundaries = boundaries_for(arch, &counts);
    let mut net = DenseNet {
        activation: arch.activation,
        params: vec![0.0; DenseNet::total_len(&boundaries)],
        boundaries,
    };
    let offsets = net.layer_offsets();
    let sc = theta.scalars();
    for (l, lay) in theta.layouts().iter().enumerate() {
        let (w_off, b_off, _, ind) = offsets[l];
        let bin = &net.boundaries[l];
        let bout = &net.boundaries[l + 1];
        let in_offs = group_offsets(bin);
        let out_offs = group_offsets(bout);
        let ow = lay.out_width;
        for (slot, &g) in lay.out_groups.iter().enumerate() {
            let ng = counts[g];
            for j in 0..ng {
                for o in 0..ow {
                    let row = out_offs[g] + j * ow + o;
                    net.params[b_off + row] = sc[lay.bias_off[slot] + o];
                    for (s, &(ns, ws)) in bin.iter().enumerate() {
                        if ns == 0 {
                            continue;
                        }
                        let pooled = if arch.local_only {
                            None
                        } else {
                            Some(&sc[lay.pool_off[slot][s] + o * ws..lay.pool_off[slot][s] + (o + 1) * ws])
                        };
                        for jj in 0..ns {
                            for p in 0..ws {
                                let col = in_offs[s] + jj * ws + p;
                                let mut v = 0.0;
                                if let Some(pw) = pooled {
                                    v += pw[p] / ns as f64;
                                }
                                if s == g && jj == j {
                                    v += sc[lay.self_off[slot] + o * ws + p];
                                }
                                net.params[w_off + row * ind + col] = v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(net)
}

/// Chain rule through the projection: `∂L/∂θ_t = Σ_pos (∂ω_pos/∂θ_t)·∂L/∂ω_pos`,
/// i.e. the sum of dense gradients over the positions tied to each scalar,
/// weighted by the pooling normaliser.
pub fn tie_gradient(theta: &SharedParams, dense: &DenseNet, grad: &DenseGrad) -> Result<Vec<f64>> {
    let arch = theta.arch();
    let counts = dense.counts();
    let expected = project_params(theta, counts[0], counts[1], counts.get(2).copied().unwrap_or(0))?;
    if expected.boundaries != dense.boundaries || grad.0.len() != dense.params.len() {
        return Err(Error::shape("tie_gradient", "dense network does not match theta"));
    }
    let offsets = dense.layer_offsets();
    let mut out = vec![0.0; theta.param_count()];
    for (l, lay) in theta.layouts().iter().enumerate() {
        let (w_off, b_off, _, ind) = offsets[l];
        let bin = &dense.boundaries[l];
        let in_offs = group_offsets(bin);
        let out_offs = group_offsets(&dense.boundaries[l + 1]);
        let ow = lay.out_width;
        for (slot, &g) in lay.out_groups.iter().enumerate() {
            for j in 0..counts[g] {
                for o in 0..ow {
                    let row = out_offs[g] + j * ow + o;
                    out[lay.bias_off[slot] + o] += grad.0[b_off + row];
                    for (s, &(ns, ws)) in bin.iter().enumerate() {
                        for jj in 0..ns {
                            for p in 0..ws {
                                let gpos = grad.0[w_off + row * ind + in_offs[s] + jj * ws + p];
                                if !arch.local_only {
                                    out[lay.pool_off[slot][s] + o * ws + p] += gpos / ns as f64;
                                }
                                if s == g && jj == j {
                                    out[lay.self_off[slot] + o * ws + p] += gpos;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
