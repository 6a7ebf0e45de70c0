//! Relaxed orthogonality: which layers can be held to full orthogonality,
//! how many filters are structural, and how many correlation pairs to
//! exempt from the loss.

mod mask;
mod montecarlo;
mod plan;
mod ratio;

pub use mask::{build_exemption_mask, PairMask};
pub use montecarlo::{closed_form_pairs, expected_relaxed_pairs, PairEstimate};
pub use plan::{build_plan, plan_from_json, plan_to_json, PlanOptions, RelaxationPlanEntry};
pub use ratio::{build_ratio_map, exemption_counts, ExemptionCounts, RatioMapConfig, RatioPattern};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeterminacyClass {
    /// More filters than background dimensions; `K Kᵀ = I` is unreachable.
    OverDetermined,
    LessDetermined,
}

pub fn classify(o: usize, d: usize) -> DeterminacyClass {
    if o > d {
        DeterminacyClass::OverDetermined
    } else {
        DeterminacyClass::LessDetermined
    }
}

/// Inputs to the transition-dimension estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionConfig {
    /// Number of dataset classes or attributes.
    pub attribute: usize,
    /// Intrinsic dimension of the data.
    pub intrinsic: usize,
    /// Model-dependent cap.
    pub max_transition: usize,
}

impl TransitionConfig {
    pub fn new(attribute: usize, intrinsic: usize, max_transition: usize) -> Result<Self> {
        let cfg = Self {
            attribute,
            intrinsic,
            max_transition,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attribute == 0 || self.intrinsic == 0 || self.max_transition == 0 {
            return Err(Error::Config(format!(
                "transition config values must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `min(max(attribute, intrinsic), max_transition)`
pub fn transition_dimension(cfg: &TransitionConfig) -> usize {
    cfg.attribute.max(cfg.intrinsic).min(cfg.max_transition)
}

/// Filters held to strict orthogonality: the whole background space for an
/// over-determined layer, the transition dimension (capped at `o`)
/// otherwise.
pub fn structural_dimension(o: usize, d: usize, cfg: &TransitionConfig) -> usize {
    match classify(o, d) {
        DeterminacyClass::OverDetermined => d,
        DeterminacyClass::LessDetermined => transition_dimension(cfg).min(o),
    }
}
