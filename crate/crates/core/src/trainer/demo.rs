//! Strict orthogonality is out of reach for an over-determined layer: its
//! Frobenius residual cannot drop below `√(o − d)` however hard it is pushed.

use serde::{Deserialize, Serialize};

use super::network::layer_name;
use super::{train, PlanSource, RegularizerConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::measures::{
    correlation_tril, disentangled_loss, frobenius_loss, RegularizerSpec, Variant,
};
use crate::relaxation::{
    build_exemption_mask, build_plan, classify, DeterminacyClass, PlanOptions, RatioMapConfig,
    RelaxationPlanEntry, TransitionConfig,
};
use crate::tensor::KernelMatrix;

use super::network::ToyNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub c_reg: f64,
    pub lambda_diag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Must contain an over-determined hidden layer. Its regularizer, balance
    /// and plan settings are replaced per run.
    pub base: TrainConfig,
    pub c_values: Vec<f64>,
    /// Defaults to the first over-determined hidden layer.
    #[serde(default)]
    pub layer: Option<String>,
    #[serde(default)]
    pub comparison: Option<ComparisonConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub c_reg: f64,
    pub residual: f64,
    pub task_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub structural_dim: usize,
    pub freed_count: usize,
    pub exempt_total: usize,
    /// Correlation term of the strict run.
    pub strict_corr: f64,
    /// Masked correlation term of the relaxed run.
    pub relaxed_masked_corr: f64,
    /// Unmasked correlation term of the relaxed run.
    pub relaxed_unmasked_corr: f64,
    pub strict_accuracy: f64,
    pub relaxed_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub layer: String,
    pub o: usize,
    pub d: usize,
    /// `√(o − d)`
    pub floor: f64,
    /// Residual of the unregularized run.
    pub baseline_residual: f64,
    pub rows: Vec<DemoRow>,
    pub all_above_floor: bool,
    #[serde(default)]
    pub comparison: Option<ComparisonReport>,
}

impl DemoReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "layer {} ({}x{}), floor sqrt(o-d) = {:.6}, baseline residual {:.6}\n",
            self.layer, self.o, self.d, self.floor, self.baseline_residual
        );
        out.push_str(&format!(
            "{:>12} {:>12} {:>12} {:>10}\n",
            "c_reg", "residual", "task_loss", "val_acc"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>12.4e} {:>12.6} {:>12.6} {:>10.4}\n",
                r.c_reg, r.residual, r.task_loss, r.val_accuracy
            ));
        }
        out.push_str(&format!(
            "floor respected: {}\n",
            if self.all_above_floor { "yes" } else { "NO" }
        ));
        if let Some(c) = &self.comparison {
            out.push_str(&format!(
                "relaxed (structural {}, freed {}, exempt {}): masked corr {:.6} vs strict corr {:.6} (relaxed unmasked {:.6})\n",
                c.structural_dim,
                c.freed_count,
                c.exempt_total,
                c.relaxed_masked_corr,
                c.strict_corr,
                c.relaxed_unmasked_corr
            ));
        }
        out
    }
}

fn select_layer(cfg: &DemoConfig, net: &ToyNetwork) -> Result<usize> {
    let hidden = net.layers.len() - 1;
    let index = match &cfg.layer {
        Some(name) => (0..hidden)
            .find(|&j| &layer_name(j) == name)
            .ok_or_else(|| Error::Config(format!("no hidden layer named {name:?}")))?,
        None => (0..hidden)
            .find(|&j| {
                let (o, d) = net.layers[j].weight.shape();
                classify(o, d) == DeterminacyClass::OverDetermined
            })
            .ok_or_else(|| Error::Config("no over-determined hidden layer".into()))?,
    };
    let (o, d) = net.layers[index].weight.shape();
    if classify(o, d) != DeterminacyClass::OverDetermined {
        return Err(Error::Config(format!(
            "layer {} is {o}x{d}, which is not over-determined",
            layer_name(index)
        )));
    }
    Ok(index)
}

fn layer_plan(net: &ToyNetwork, index: usize, seed: u64) -> Result<RelaxationPlanEntry> {
    let desc = net.architecture().swap_remove(index);
    // the transition settings do not matter for an over-determined layer
    let transition = TransitionConfig::new(1, 1, 1)?;
    let ratio = RatioMapConfig::new(1.0, Default::default())?;
    let opts = PlanOptions {
        seed,
        ..Default::default()
    };
    Ok(build_plan(&[desc], &transition, &ratio, opts)?.remove(0))
}

fn run(
    base: &TrainConfig,
    variant: Variant,
    c_reg: f64,
    lambda_diag: f64,
    entry: &RelaxationPlanEntry,
) -> Result<(ToyNetwork, f64, f64)> {
    let cfg = TrainConfig {
        regularizer: Some(RegularizerConfig {
            variant,
            c_reg,
            lambda_diag,
            power_iterations: 2,
        }),
        balance: None,
        plan: Some(PlanSource::Entries(vec![entry.clone()])),
        ..base.clone()
    };
    let (net, hist) = train(&cfg)?;
    let last = hist.last().expect("at least one epoch");
    let (task, acc) = (last.task_loss, last.val_accuracy);
    Ok((net, task, acc))
}

fn masked_corr(k: &KernelMatrix, entry: &RelaxationPlanEntry, lambda: f64) -> Result<f64> {
    let tril = correlation_tril(k)?;
    let mask = build_exemption_mask(&tril, entry.exempt_positive, entry.exempt_negative);
    Ok(disentangled_loss(k, &RegularizerSpec::relaxed(lambda, mask))?.corr_component)
}

/// Trains the selected layer under Frobenius regularization for every
/// `c_reg` in the sweep and records the final residual.
pub fn inaccessible_orthogonality_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    cfg.base.validate()?;
    if cfg.c_values.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::Config(
            "c_values must be finite and non-negative".into(),
        ));
    }
    let probe = ToyNetwork::new(&cfg.base.layer_sizes(), cfg.base.seed)?;
    let index = select_layer(cfg, &probe)?;
    let (o, d) = probe.layers[index].weight.shape();
    let floor = ((o - d) as f64).sqrt();
    let entry = layer_plan(&probe, index, cfg.base.seed)?;

    let vanilla = TrainConfig {
        regularizer: None,
        balance: None,
        plan: None,
        ..cfg.base.clone()
    };
    let (net, _) = train(&vanilla)?;
    let baseline_residual = frobenius_loss(&net.layers[index].weight).total;

    let rows = cfg
        .c_values
        .iter()
        .map(|&c| {
            let (net, task_loss, val_accuracy) =
                run(&cfg.base, Variant::Frobenius, c, 0.0, &entry)?;
            Ok(DemoRow {
                c_reg: c,
                residual: frobenius_loss(&net.layers[index].weight).total,
                task_loss,
                val_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_above_floor = rows.iter().all(|r| r.residual >= floor - 1e-6);

    let comparison = match &cfg.comparison {
        None => None,
        Some(cmp) => {
            let (strict, _, strict_accuracy) = run(
                &cfg.base,
                Variant::Disentangled,
                cmp.c_reg,
                cmp.lambda_diag,
                &entry,
            )?;
            let (relaxed, _, relaxed_accuracy) = run(
                &cfg.base,
                Variant::RelaxedDisentangled,
                cmp.c_reg,
                cmp.lambda_diag,
                &entry,
            )?;
            let strict_k = &strict.layers[index].weight;
            let relaxed_k = &relaxed.layers[index].weight;
            let unmasked = RegularizerSpec::disentangled(cmp.lambda_diag);
            Some(ComparisonReport {
                structural_dim: entry.structural_dim,
                freed_count: entry.freed_count,
                exempt_total: entry.exempt_total,
                strict_corr: disentangled_loss(strict_k, &unmasked)?.corr_component,
                relaxed_masked_corr: masked_corr(relaxed_k, &entry, cmp.lambda_diag)?,
                relaxed_unmasked_corr: disentangled_loss(relaxed_k, &unmasked)?.corr_component,
                strict_accuracy,
                relaxed_accuracy,
            })
        }
    };

    Ok(DemoReport {
        layer: layer_name(index),
        o,
        d,
        floor,
        baseline_residual,
        rows,
        all_above_floor,
        comparison,
    })
}
