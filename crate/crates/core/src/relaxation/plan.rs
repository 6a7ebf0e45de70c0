use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use super::{
    build_ratio_map, classify, exemption_counts, expected_relaxed_pairs, structural_dimension,
    DeterminacyClass, RatioMapConfig, TransitionConfig,
};
use crate::error::Result;
use crate::measures::pair_count;
use crate::rng::derive_seed;
use crate::tensor::LayerDescriptor;

fn six_significant<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(*v);
    s.serialize_f64(rounded)
}

/// Relaxation settings for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationPlanEntry {
    pub layer: String,
    pub o: usize,
    pub d: usize,
    pub determinacy: DeterminacyClass,
    pub structural_dim: usize,
    pub freed_count: usize,
    #[serde(serialize_with = "six_significant")]
    pub expected_relaxed_pairs: f64,
    #[serde(serialize_with = "six_significant")]
    pub ratio: f64,
    pub exempt_total: usize,
    pub exempt_positive: usize,
    pub exempt_negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    pub trials: usize,
    pub seed: u64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 0,
        }
    }
}

/// One entry per layer, in architecture order.
///
/// Less-determined layers take their ratio from the group's ratio map at
/// their `module_index`; over-determined layers always use 1.0. Each layer's
/// Monte Carlo run is seeded from `opts.seed` and the layer position.
pub fn build_plan(
    arch: &[LayerDescriptor],
    transition: &TransitionConfig,
    ratio_cfg: &RatioMapConfig,
    opts: PlanOptions,
) -> Result<Vec<RelaxationPlanEntry>> {
    transition.validate()?;
    ratio_cfg.validate()?;

    let mut group_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for l in arch {
        *group_sizes.entry(&l.group).or_default() += 1;
    }
    let ratio_maps: BTreeMap<&str, Vec<f64>> = group_sizes
        .into_iter()
        .map(|(g, n)| (g, build_ratio_map(n, ratio_cfg)))
        .collect();

    arch.iter()
        .enumerate()
        .map(|(pos, l)| {
            let (o, d) = (l.o, l.background_dim());
            let determinacy = classify(o, d);
            let structural_dim = structural_dimension(o, d, transition);
            let freed_count = o.saturating_sub(structural_dim);
            let expected = if freed_count < 2 {
                0.0
            } else {
                expected_relaxed_pairs(
                    freed_count,
                    structural_dim,
                    opts.trials,
                    derive_seed(opts.seed, pos as u64),
                )?
                .mean
            };
            let ratio = match determinacy {
                DeterminacyClass::OverDetermined => 1.0,
                DeterminacyClass::LessDetermined => ratio_maps[l.group.as_str()][l.module_index],
            };
            let mut counts = exemption_counts(expected, ratio);
            if counts.total > pair_count(o) {
                counts = exemption_counts(pair_count(o) as f64, 1.0);
            }
            Ok(RelaxationPlanEntry {
                layer: l.name.clone(),
                o,
                d,
                determinacy,
                structural_dim,
                freed_count,
                expected_relaxed_pairs: expected,
                ratio,
                exempt_total: counts.total,
                exempt_positive: counts.positive,
                exempt_negative: counts.negative,
            })
        })
        .collect()
}

pub fn plan_to_json(plan: &[RelaxationPlanEntry]) -> Result<String> {
    Ok(serde_json::to_string_pretty(plan)?)
}

pub fn plan_from_json(text: &str) -> Result<Vec<RelaxationPlanEntry>> {
    Ok(serde_json::from_str(text)?)
}
