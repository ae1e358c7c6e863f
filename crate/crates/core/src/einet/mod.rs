//! Equi-invariant weight-shared Q-network kernel.
//!
//! A network is a stack of equivariant layers followed by one output layer
//! that only emits values for the unselected-item group. Every layer maps item
//! `j` of group `g`, channel `o`, to
//!
//! ```text
//! ρ( Σ_p W_g[o,p]·h_{g,j,p} + Σ_{g'} Σ_p W_{g,g'}[o,p]·mean_{j'} h_{g',j',p} + b_g[o] )
//! ```
//!
//! where the mean over an empty group contributes nothing. All weights are
//! scalars shared across items, so the parameter count does not depend on how
//! many items the state holds.

mod arch;
pub mod dense;
pub mod io;
mod perm;

pub use arch::{Activation, Architecture, GroupId, GroupSpec, LayerLayout};
pub use dense::{project_params, tie_gradient, DenseGrad, DenseLayer, DenseNet};
pub use perm::{apply_permutation, permute_rows, Perm, Permutation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};

/// `(N-k) × C` action values; row `n` is unselected item `n`, column `c` is
/// command `c`.
pub type QMatrix = Matrix;

/// Features of one phase state, one row per item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseInput {
    /// Selected pairs: item info followed by the one-hot command.
    pub x: Matrix,
    /// Unselected item infos.
    pub i: Matrix,
    /// Context (unselectable) infos; may have zero rows.
    pub u: Matrix,
}

impl PhaseInput {
    pub fn phase(&self) -> usize {
        self.x.rows()
    }

    fn groups(&self, arch: &Architecture) -> Result<Vec<&Matrix>> {
        let mut groups = vec![&self.x, &self.i];
        if arch.has_context() {
            groups.push(&self.u);
        } else if self.u.rows() > 0 {
            return Err(Error::shape(
                "network_forward",
                "state has context items but the network has no context group",
            ));
        }
        for (m, spec) in groups.iter().zip(&arch.groups) {
            if m.cols() != spec.width && m.rows() > 0 {
                return Err(Error::shape(
                    "network_forward",
                    format!("group {:?} has width {}, expected {}", spec.id, m.cols(), spec.width),
                ));
            }
        }
        if self.i.rows() == 0 {
            return Err(Error::EmptyItems);
        }
        Ok(groups)
    }
}

/// Tied scalars `θ` of one cascaded network, laid out layer-major; inside a
/// layer, per emitted group: self block, pooled blocks in group order, bias.
/// Weight blocks are `out × in`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedParams {
    arch: Architecture,
    scalars: Vec<f64>,
    layouts: Vec<LayerLayout>,
}

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input groups to each layer.
    inputs: Vec<Vec<Matrix>>,
    /// Pre-activations of each layer's emitted groups.
    pre: Vec<Vec<Matrix>>,
}

impl SharedParams {
    pub fn new(arch: Architecture, scalars: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layouts = arch.layouts();
        let expected: usize = layouts.iter().map(|l| l.len).sum();
        if scalars.len() != expected {
            return Err(Error::shape(
                "SharedParams::new",
                format!("{} scalars, architecture needs {expected}", scalars.len()),
            ));
        }
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        let mut p = Self {
            arch,
            scalars,
            layouts,
        };
        p.enforce_structure();
        Ok(p)
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Self::new(arch, vec![0.0; n])
    }

    pub fn init(arch: Architecture, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let scalars = arch.init_scalars(rng);
        Self::new(arch, scalars)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layouts(&self) -> &[LayerLayout] {
        &self.layouts
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }

    /// Mutable scalars. Callers must keep values finite.
    pub fn scalars_mut(&mut self) -> &mut [f64] {
        &mut self.scalars
    }

    pub fn param_count(&self) -> usize {
        self.scalars.len()
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        self.scalars[idx] = value;
    }

    /// Re-zeroes pooled weights of a local-only network.
    pub fn enforce_structure(&mut self) {
        if !self.arch.local_only {
            return;
        }
        for lay in &self.layouts {
            for (slot, _) in lay.out_groups.iter().enumerate() {
                for (s, &w) in lay.in_widths.iter().enumerate() {
                    let off = lay.pool_off[slot][s];
                    self.scalars[off..off + lay.out_width * w].fill(0.0);
                }
            }
        }
    }

    /// Same scalars under a different activation (used by verification).
    pub fn with_activation(&self, activation: Activation) -> Self {
        let mut p = self.clone();
        p.arch.activation = activation;
        p
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layouts.len() {
            Activation::Identity
        } else {
            self.arch.activation
        }
    }

    /// Pre-activations of `layer` for the given input groups.
    fn layer_pre(&self, layer: usize, inputs: &[&Matrix]) -> Result<Vec<Matrix>> {
        let lay = &self.layouts[layer];
        if inputs.len() != lay.in_widths.len() {
            return Err(Error::shape(
                "layer_forward",
                format!("{} groups, layer expects {}", inputs.len(), lay.in_widths.len()),
            ));
        }
        for (m, &w) in inputs.iter().zip(&lay.in_widths) {
            if m.cols() != w && m.rows() > 0 {
                return Err(Error::shape(
                    "layer_forward",
                    format!("input width {} where {w} expected", m.cols()),
                ));
            }
        }
        let means: Vec<Option<Vec<f64>>> = inputs
            .iter()
            .zip(&lay.in_widths)
            .map(|(m, &w)| column_mean(m, w))
            .collect();
        let ow = lay.out_width;
        let mut out = Vec::with_capacity(lay.out_groups.len());
        for (slot, &g) in lay.out_groups.iter().enumerate() {
            let bias = &self.scalars[lay.bias_off[slot]..lay.bias_off[slot] + ow];
            let mut pooled = bias.to_vec();
            if !self.arch.local_only {
                for (s, mean) in means.iter().enumerate() {
                    let Some(mean) = mean else { continue };
                    let w = lay.in_widths[s];
                    let block = &self.scalars[lay.pool_off[slot][s]..lay.pool_off[slot][s] + ow * w];
                    for (o, acc) in pooled.iter_mut().enumerate() {
                        *acc += dot(&block[o * w..(o + 1) * w], mean);
                    }
                }
            }
            let iw = lay.in_widths[g];
            let self_block = &self.scalars[lay.self_off[slot]..lay.self_off[slot] + ow * iw];
            let input = inputs[g];
            let mut z = Matrix::zeros(input.rows(), ow);
            for j in 0..input.rows() {
                let row = input.row(j);
                let zr = z.row_mut(j);
                for o in 0..ow {
                    zr[o] = pooled[o] + dot(&self_block[o * iw..(o + 1) * iw], row);
                }
            }
            out.push(z);
        }
        Ok(out)
    }

    /// Output of one layer. Equivariant layers return every group; the output
    /// layer returns only the unselected-item group.
    pub fn layer_forward(&self, layer: usize, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        if layer >= self.layouts.len() {
            return Err(Error::Config(format!("no layer {layer}")));
        }
        let refs: Vec<&Matrix> = inputs.iter().collect();
        let act = self.activation_of(layer);
        let mut out = self.layer_pre(layer, &refs)?;
        for m in &mut out {
            for v in m.as_mut_slice() {
                *v = act.apply(*v);
            }
        }
        Ok(out)
    }

    /// `Q_k(s; θ)`.
    pub fn forward(&self, s: &PhaseInput) -> Result<QMatrix> {
        let groups = s.groups(&self.arch)?;
        let mut cur: Vec<Matrix> = Vec::new();
        for l in 0..self.layouts.len() {
            let refs: Vec<&Matrix> = if l == 0 { groups.clone() } else { cur.iter().collect() };
            let act = self.activation_of(l);
            let mut next = self.layer_pre(l, &refs)?;
            for m in &mut next {
                for v in m.as_mut_slice() {
                    *v = act.apply(*v);
                }
            }
            cur = next;
        }
        Ok(cur.pop().expect("output layer emits one group"))
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_trace(&self, s: &PhaseInput) -> Result<(QMatrix, Trace)> {
        let groups = s.groups(&self.arch)?;
        let mut inputs: Vec<Vec<Matrix>> = Vec::with_capacity(self.layouts.len());
        let mut pre: Vec<Vec<Matrix>> = Vec::with_capacity(self.layouts.len());
        let mut cur: Vec<Matrix> = groups.into_iter().cloned().collect();
        for l in 0..self.layouts.len() {
            let refs: Vec<&Matrix> = cur.iter().collect();
            let z = self.layer_pre(l, &refs)?;
            let act = self.activation_of(l);
            let mut next = z.clone();
            for m in &mut next {
                for v in m.as_mut_slice() {
                    *v = act.apply(*v);
                }
            }
            inputs.push(std::mem::replace(&mut cur, next));
            pre.push(z);
        }
        let q = cur.pop().expect("output layer emits one group");
        Ok((q, Trace { inputs, pre }))
    }

    /// Accumulates `∂(Σ upstream ⊙ Q)/∂θ` into `grad`.
    pub fn backward_trace(&self, trace: &Trace, upstream: &Matrix, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.scalars.len() {
            return Err(Error::shape("network_backward", "gradient buffer length"));
        }
        let last = self.layouts.len() - 1;
        let q_pre = &trace.pre[last][0];
        if (upstream.rows(), upstream.cols()) != (q_pre.rows(), q_pre.cols()) {
            return Err(Error::shape(
                "network_backward",
                format!(
                    "upstream {}x{}, output {}x{}",
                    upstream.rows(),
                    upstream.cols(),
                    q_pre.rows(),
                    q_pre.cols()
                ),
            ));
        }
        if !upstream.is_finite() {
            return Err(Error::NonFinite("upstream gradient"));
        }
        // d(output) per emitted group of the current layer
        let mut d_out: Vec<Matrix> = vec![upstream.clone()];
        for l in (0..=last).rev() {
            let lay = &self.layouts[l];
            let act = self.activation_of(l);
            let inputs = &trace.inputs[l];
            let ow = lay.out_width;
            let need_input_grad = l > 0;
            let mut d_in: Vec<Matrix> = if need_input_grad {
                inputs.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect()
            } else {
                Vec::new()
            };
            let means: Vec<Option<Vec<f64>>> = inputs
                .iter()
                .zip(&lay.in_widths)
                .map(|(m, &w)| column_mean(m, w))
                .collect();
            for (slot, &g) in lay.out_groups.iter().enumerate() {
                let z = &trace.pre[l][slot];
                let mut dz = d_out[slot].clone();
                if act != Activation::Identity {
                    for (d, &zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                        *d *= act.derivative(zv);
                    }
                }
                let iw = lay.in_widths[g];
                let input = &inputs[g];
                let mut col_sum = vec![0.0; ow];
                {
                    let self_off = lay.self_off[slot];
                    for j in 0..dz.rows() {
                        let dr = dz.row(j);
                        let xr = input.row(j);
                        for o in 0..ow {
                            let d = dr[o];
                            if d == 0.0 {
                                continue;
                            }
                            col_sum[o] += d;
                            let gw = &mut grad[self_off + o * iw..self_off + (o + 1) * iw];
                            for (gv, &xv) in gw.iter_mut().zip(xr) {
                                *gv += d * xv;
                            }
                        }
                    }
                }
                let bias_off = lay.bias_off[slot];
                for o in 0..ow {
                    grad[bias_off + o] += col_sum[o];
                }
                if need_input_grad {
                    let self_block = &self.scalars[lay.self_off[slot]..lay.self_off[slot] + ow * iw];
                    let dxg = &mut d_in[g];
                    for j in 0..dz.rows() {
                        let dr = dz.row(j);
                        let out_row = dxg.row_mut(j);
                        for o in 0..ow {
                            let d = dr[o];
                            if d == 0.0 {
                                continue;
                            }
                            for (ov, &w) in out_row.iter_mut().zip(&self_block[o * iw..(o + 1) * iw]) {
                                *ov += d * w;
                            }
                        }
                    }
                }
                if self.arch.local_only {
                    continue;
                }
                for (s, mean) in means.iter().enumerate() {
                    let Some(mean) = mean else { continue };
                    let w = lay.in_widths[s];
                    let off = lay.pool_off[slot][s];
                    for o in 0..ow {
                        let d = col_sum[o];
                        if d == 0.0 {
                            continue;
                        }
                        for (gv, &mv) in grad[off + o * w..off + (o + 1) * w].iter_mut().zip(mean) {
                            *gv += d * mv;
                        }
                    }
                    if need_input_grad {
                        let n = inputs[s].rows() as f64;
                        let block = &self.scalars[off..off + ow * w];
                        let mut shared = vec![0.0; w];
                        for o in 0..ow {
                            let d = col_sum[o] / n;
                            if d == 0.0 {
                                continue;
                            }
                            for (sv, &wv) in shared.iter_mut().zip(&block[o * w..(o + 1) * w]) {
                                *sv += d * wv;
                            }
                        }
                        let dxs = &mut d_in[s];
                        for j in 0..dxs.rows() {
                            for (v, &sv) in dxs.row_mut(j).iter_mut().zip(&shared) {
                                *v += sv;
                            }
                        }
                    }
                }
            }
            if need_input_grad {
                d_out = d_in;
            }
        }
        Ok(())
    }

    /// `∂(Σ upstream ⊙ Q(s))/∂θ` in scalar layout.
    pub fn backward(&self, s: &PhaseInput, upstream: &Matrix) -> Result<Vec<f64>> {
        let (_, trace) = self.forward_trace(s)?;
        let mut grad = vec![0.0; self.scalars.len()];
        self.backward_trace(&trace, upstream, &mut grad)?;
        Ok(grad)
    }
}

fn column_mean(m: &Matrix, width: usize) -> Option<Vec<f64>> {
    if m.rows() == 0 {
        return None;
    }
    let mut mean = vec![0.0; width];
    for j in 0..m.rows() {
        for (a, &v) in mean.iter_mut().zip(m.row(j)) {
            *a += v;
        }
    }
    let n = m.rows() as f64;
    for a in &mut mean {
        *a /= n;
    }
    Some(mean)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn network_forward(theta: &SharedParams, s: &PhaseInput) -> Result<QMatrix> {
    theta.forward(s)
}

pub fn network_backward(theta: &SharedParams, s: &PhaseInput, upstream: &Matrix) -> Result<Vec<f64>> {
    theta.backward(s, upstream)
}

pub fn param_count(theta: &SharedParams) -> usize {
    theta.param_count()
}

#[cfg(test)]
mod tests;
