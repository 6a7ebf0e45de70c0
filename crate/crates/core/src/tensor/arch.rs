use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Stem,
    Conv,
    Downsample,
}

/// One convolution layer of an architecture descriptor file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    pub o: usize,
    pub i: usize,
    pub kh: usize,
    pub kw: usize,
    pub group: String,
    pub module_index: usize,
    pub kind: LayerKind,
}

impl LayerDescriptor {
    /// Background-space dimension `i·k_h·k_w`.
    pub fn background_dim(&self) -> usize {
        self.i * self.kh * self.kw
    }
}

/// Parses and validates an architecture JSON array.
pub fn load_architecture(text: &str) -> Result<Vec<LayerDescriptor>> {
    let layers: Vec<LayerDescriptor> = serde_json::from_str(text)?;
    validate(&layers)?;
    Ok(layers)
}

fn validate(layers: &[LayerDescriptor]) -> Result<()> {
    let mut names = HashSet::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for l in layers {
        if !names.insert(l.name.as_str()) {
            return Err(Error::Architecture(format!(
                "duplicate layer name {:?}",
                l.name
            )));
        }
        if [l.o, l.i, l.kh, l.kw].contains(&0) {
            return Err(Error::Architecture(format!(
                "layer {:?} has a non-positive dimension",
                l.name
            )));
        }
        l.i.checked_mul(l.kh)
            .and_then(|v| v.checked_mul(l.kw))
            .and_then(|d| d.checked_mul(l.o))
            .ok_or_else(|| Error::Size(format!("layer {:?} dimensions overflow", l.name)))?;
        groups.entry(&l.group).or_default().push(l.module_index);
    }
    for (group, mut idx) in groups {
        idx.sort_unstable();
        if idx.iter().enumerate().any(|(pos, &m)| pos != m) {
            return Err(Error::Architecture(format!(
                "group {group:?} module indices {idx:?} are not unique and contiguous from 0"
            )));
        }
    }
    Ok(())
}
