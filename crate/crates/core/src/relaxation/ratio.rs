use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RatioPattern {
    Linear,
    #[default]
    Log,
    Exp,
}

/// Module-wise ratio map settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMapConfig {
    /// Ratio of the first module in a group.
    pub least_ratio: f64,
    pub pattern: RatioPattern,
}

impl RatioMapConfig {
    pub fn new(least_ratio: f64, pattern: RatioPattern) -> Result<Self> {
        let cfg = Self {
            least_ratio,
            pattern,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.least_ratio) {
            return Err(Error::Config(format!(
                "least_ratio must lie in [0, 1], got {}",
                self.least_ratio
            )));
        }
        Ok(())
    }

    fn fraction(&self, i: usize, last: usize) -> f64 {
        let (i, m) = (i as f64, last as f64);
        match self.pattern {
            RatioPattern::Linear => i / m,
            RatioPattern::Log => (1.0 + i).ln() / (1.0 + m).ln(),
            RatioPattern::Exp => 1.0 - (-i / m).exp(),
        }
    }
}

/// Ratios for modules `0..module_count` of one group, rising from
/// `least_ratio`. A single-module group gets 1.0.
pub fn build_ratio_map(module_count: usize, cfg: &RatioMapConfig) -> Vec<f64> {
    if module_count == 1 {
        return vec![1.0];
    }
    let last = module_count.saturating_sub(1);
    let least = cfg.least_ratio;
    (0..module_count)
        .map(|i| {
            let t = cfg.fraction(i, last);
            if t == 1.0 {
                1.0
            } else {
                (least + t * (1.0 - least)).min(1.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemptionCounts {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Splits `round(expected · ratio)` pairs between the positive and negative
/// ends; the positive side takes the odd one.
pub fn exemption_counts(expected_pairs: f64, ratio: f64) -> ExemptionCounts {
    let total = (expected_pairs * ratio).round().max(0.0) as usize;
    ExemptionCounts {
        total,
        positive: total.div_ceil(2),
        negative: total / 2,
    }
}
