use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::SeededRng;

/// The three item groups a phase state is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    /// Already selected (info, command) pairs.
    X,
    /// Unselected items; the only group with equivariant output.
    I,
    /// Context items that can never be selected.
    U,
}

impl GroupId {
    pub fn is_equivariant_output(self) -> bool {
        self == GroupId::I
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub id: GroupId,
    #[serde(rename = "d")]
    pub width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => 1.0,
        }
    }
}

/// Shape-agnostic description of one weight-shared Q-network.
///
/// Nothing here depends on the number of items, which is what lets one
/// parameter vector serve every phase and every item count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Group order is fixed: X, I, then optionally U.
    pub groups: Vec<GroupSpec>,
    /// Hidden channel width shared by every group.
    pub channels: usize,
    /// Total layer count: `layers - 1` equivariant layers then the output layer.
    pub layers: usize,
    /// Output width of the final layer (number of commands).
    pub commands: usize,
    /// Activation of the hidden layers; the output layer is linear.
    pub activation: Activation,
    /// Forces every pooled weight to zero (per-item local network).
    #[serde(default)]
    pub local_only: bool,
}

/// Where one layer's blocks live in the flat scalar vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_widths: Vec<usize>,
    pub out_width: usize,
    /// Indices (into the group list) of groups this layer emits.
    pub out_groups: Vec<usize>,
    /// Per emitted group: offset of its self block.
    pub(crate) self_off: Vec<usize>,
    /// Per emitted group, per source group: offset of the pooled block.
    pub(crate) pool_off: Vec<Vec<usize>>,
    /// Per emitted group: offset of its bias.
    pub(crate) bias_off: Vec<usize>,
    pub(crate) start: usize,
    pub(crate) len: usize,
}

impl Architecture {
    /// Standard X/I(/U) architecture for items of width `item_width`,
    /// `commands` commands and optional context of width `context_width`.
    pub fn new(
        item_width: usize,
        commands: usize,
        context_width: Option<usize>,
        channels: usize,
        layers: usize,
        activation: Activation,
    ) -> Result<Self> {
        let mut groups = vec![
            GroupSpec {
                id: GroupId::X,
                width: item_width + commands,
            },
            GroupSpec {
                id: GroupId::I,
                width: item_width,
            },
        ];
        if let Some(w) = context_width {
            groups.push(GroupSpec {
                id: GroupId::U,
                width: w,
            });
        }
        let arch = Self {
            groups,
            channels,
            layers,
            commands,
            activation,
            local_only: false,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_local_only(mut self, local_only: bool) -> Self {
        self.local_only = local_only;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.channels == 0 || self.commands == 0 {
            return Err(Error::Config("channels and commands must be positive".into()));
        }
        let ids: Vec<GroupId> = self.groups.iter().map(|g| g.id).collect();
        let ok = ids == [GroupId::X, GroupId::I] || ids == [GroupId::X, GroupId::I, GroupId::U];
        if !ok {
            return Err(Error::Config(format!("group order must be x, i[, u]; got {ids:?}")));
        }
        if self.groups.iter().any(|g| g.width == 0) {
            return Err(Error::Config("group widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn has_context(&self) -> bool {
        self.groups.len() == 3
    }

    pub fn item_width(&self) -> usize {
        self.groups[1].width
    }

    pub fn context_width(&self) -> Option<usize> {
        self.groups.get(2).map(|g| g.width)
    }

    pub(crate) fn group_index(&self, id: GroupId) -> Option<usize> {
        self.groups.iter().position(|g| g.id == id)
    }

    /// Layouts of all layers in order, with offsets into the scalar vector.
    pub fn layouts(&self) -> Vec<LayerLayout> {
        let ng = self.groups.len();
        let mut out = Vec::with_capacity(self.layers);
        let mut cursor = 0;
        for l in 0..self.layers {
            let in_widths: Vec<usize> = if l == 0 {
                self.groups.iter().map(|g| g.width).collect()
            } else {
                vec![self.channels; ng]
            };
            let last = l + 1 == self.layers;
            let (out_groups, out_width) = if last {
                (vec![1usize], self.commands)
            } else {
                ((0..ng).collect(), self.channels)
            };
            let start = cursor;
            let mut self_off = Vec::new();
            let mut pool_off = Vec::new();
            let mut bias_off = Vec::new();
            for &g in &out_groups {
                self_off.push(cursor);
                cursor += out_width * in_widths[g];
                let mut pools = Vec::with_capacity(ng);
                for w in &in_widths {
                    pools.push(cursor);
                    cursor += out_width * w;
                }
                pool_off.push(pools);
                bias_off.push(cursor);
                cursor += out_width;
            }
            out.push(LayerLayout {
                in_widths,
                out_width,
                out_groups,
                self_off,
                pool_off,
                bias_off,
                start,
                len: cursor - start,
            });
        }
        out
    }

    /// Exact number of tied scalars. Independent of item counts.
    pub fn param_count(&self) -> usize {
        self.layouts().iter().map(|l| l.len).sum()
    }

    fn out_slot(&self, layout: &LayerLayout, group: GroupId) -> Result<(usize, usize)> {
        let g = self
            .group_index(group)
            .ok_or_else(|| Error::Config(format!("architecture has no group {group:?}")))?;
        let slot = layout
            .out_groups
            .iter()
            .position(|&x| x == g)
            .ok_or_else(|| Error::Config(format!("layer does not emit group {group:?}")))?;
        Ok((g, slot))
    }

    /// Index of the self weight `W_g^{o,p}` of `layer`.
    pub fn self_index(&self, layer: usize, group: GroupId, o: usize, p: usize) -> Result<usize> {
        let layouts = self.layouts();
        let lay = layouts
            .get(layer)
            .ok_or_else(|| Error::Config(format!("no layer {layer}")))?;
        let (g, slot) = self.out_slot(lay, group)?;
        check_channel(o, lay.out_width, p, lay.in_widths[g])?;
        Ok(lay.self_off[slot] + o * lay.in_widths[g] + p)
    }

    /// Index of the pooled weight `W_{g,src}^{o,p}` of `layer`.
    pub fn pool_index(
        &self,
        layer: usize,
        group: GroupId,
        src: GroupId,
        o: usize,
        p: usize,
    ) -> Result<usize> {
        let layouts = self.layouts();
        let lay = layouts
            .get(layer)
            .ok_or_else(|| Error::Config(format!("no layer {layer}")))?;
        let (_, slot) = self.out_slot(lay, group)?;
        let s = self
            .group_index(src)
            .ok_or_else(|| Error::Config(format!("architecture has no group {src:?}")))?;
        check_channel(o, lay.out_width, p, lay.in_widths[s])?;
        Ok(lay.pool_off[slot][s] + o * lay.in_widths[s] + p)
    }

    /// Index of the bias `b_g^o` of `layer`.
    pub fn bias_index(&self, layer: usize, group: GroupId, o: usize) -> Result<usize> {
        let layouts = self.layouts();
        let lay = layouts
            .get(layer)
            .ok_or_else(|| Error::Config(format!("no layer {layer}")))?;
        let (_, slot) = self.out_slot(lay, group)?;
        check_channel(o, lay.out_width, 0, 1)?;
        Ok(lay.bias_off[slot] + o)
    }

    /// True when scalar `idx` is a pooled (cross-item) weight.
    pub fn is_pooled(&self, idx: usize) -> bool {
        self.layouts().iter().any(|lay| {
            lay.out_groups.iter().enumerate().any(|(slot, _)| {
                lay.pool_off[slot]
                    .iter()
                    .zip(&lay.in_widths)
                    .any(|(&off, &w)| idx >= off && idx < off + lay.out_width * w)
            })
        })
    }

    /// Seeded initialisation, uniform in ±1/sqrt(fan-in channels).
    pub fn init_scalars(&self, rng: &mut SeededRng) -> Vec<f64> {
        let mut scalars = vec![0.0; self.param_count()];
        for lay in self.layouts() {
            for (slot, &g) in lay.out_groups.iter().enumerate() {
                let fill = |scalars: &mut Vec<f64>, off: usize, len: usize, fan_in: usize, rng: &mut SeededRng| {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for v in &mut scalars[off..off + len] {
                        *v = rng.uniform(-bound, bound);
                    }
                };
                fill(&mut scalars, lay.self_off[slot], lay.out_width * lay.in_widths[g], lay.in_widths[g], rng);
                for (s, &w) in lay.in_widths.iter().enumerate() {
                    if self.local_only {
                        continue;
                    }
                    fill(&mut scalars, lay.pool_off[slot][s], lay.out_width * w, w, rng);
                }
                fill(&mut scalars, lay.bias_off[slot], lay.out_width, lay.in_widths[g], rng);
            }
        }
        scalars
    }
}

fn check_channel(o: usize, out: usize, p: usize, inp: usize) -> Result<()> {
    if o >= out || p >= inp {
        return Err(Error::Config(format!(
            "channel ({o},{p}) out of range ({out},{inp})"
        )));
    }
    Ok(())
}
