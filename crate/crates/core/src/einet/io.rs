//! JSON parameter documents.
//!
//! ```json
//! {"format_version": 1, "K": 2, "D": 3, "channels": 16, "commands": 5,
//!  "groups": [{"id": "x", "d": 8}, {"id": "i", "d": 3}, {"id": "u", "d": 3}],
//!  "activation": "relu", "local_only": false,
//!  "param_sets": [{"phases": [0, 1], "scalars": [...]}]}
//! ```
//!
//! `D` is the total layer count. Scalars follow the canonical order of
//! [`SharedParams`]: layer-major; inside a layer, per emitted group (x, i, u)
//! the self block, the pooled blocks in source-group order and the bias, each
//! weight block output-channel-major. Floats are written in shortest
//! round-trip form, so a write/read cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, GroupSpec, SharedParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSetDoc {
    pub phases: Vec<usize>,
    pub scalars: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDocument {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub layers: usize,
    pub channels: usize,
    pub commands: usize,
    pub groups: Vec<GroupSpec>,
    pub activation: Activation,
    #[serde(default)]
    pub local_only: bool,
    pub param_sets: Vec<ParamSetDoc>,
    /// Environment the parameters were trained on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<serde_json::Value>,
    /// Name of the algorithm that produced the parameters, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
}

impl ParamDocument {
    /// Document for `sets`, where `phase_map[k]` is the set used at phase `k`.
    pub fn from_sets(sets: &[SharedParams], phase_map: &[usize]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Format("no parameter sets".into()))?;
        let arch = first.arch().clone();
        if sets.iter().any(|s| s.arch() != &arch) {
            return Err(Error::Format("parameter sets disagree on architecture".into()));
        }
        let param_sets = sets
            .iter()
            .enumerate()
            .map(|(idx, s)| ParamSetDoc {
                phases: phase_map
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m == idx)
                    .map(|(k, _)| k)
                    .collect(),
                scalars: s.scalars().to_vec(),
            })
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            k: phase_map.len(),
            layers: arch.layers,
            channels: arch.channels,
            commands: arch.commands,
            groups: arch.groups.clone(),
            activation: arch.activation,
            local_only: arch.local_only,
            param_sets,
            env: None,
            algorithm: None,
        })
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let arch = Architecture {
            groups: self.groups.clone(),
            channels: self.channels,
            layers: self.layers,
            commands: self.commands,
            activation: self.activation,
            local_only: self.local_only,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Parameter sets and the phase→set map.
    pub fn to_sets(&self) -> Result<(Vec<SharedParams>, Vec<usize>)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let arch = self.architecture()?;
        let mut map = vec![usize::MAX; self.k];
        let mut sets = Vec::with_capacity(self.param_sets.len());
        for (idx, ps) in self.param_sets.iter().enumerate() {
            for &k in &ps.phases {
                let slot = map
                    .get_mut(k)
                    .ok_or_else(|| Error::Format(format!("phase {k} out of range")))?;
                if *slot != usize::MAX {
                    return Err(Error::Format(format!("phase {k} assigned twice")));
                }
                *slot = idx;
            }
            sets.push(SharedParams::new(arch.clone(), ps.scalars.clone())?);
        }
        if map.contains(&usize::MAX) {
            return Err(Error::Format("some phase has no parameter set".into()));
        }
        Ok((sets, map))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
