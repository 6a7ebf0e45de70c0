//! Desk-scale trainer: small rectifier networks on synthetic Gaussian
//! clusters, optimized by minibatch SGD with Nesterov momentum.

mod data;
mod demo;
mod network;
mod objective;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{near_orth_report, NearOrthReport, Variant};
use crate::relaxation::{
    build_plan, plan_from_json, PlanOptions, RatioMapConfig, RatioPattern, RelaxationPlanEntry,
    TransitionConfig,
};
use crate::rng::derive_seed;
use crate::scheduler::{adjustment_epochs, share, Adjustment, BalanceConfig, CoefficientState};

pub use data::{make_synthetic_dataset, Dataset, DatasetSpec};
pub use demo::{
    inaccessible_orthogonality_demo, ComparisonConfig, ComparisonReport, DemoConfig, DemoReport,
    DemoRow,
};
pub use network::{layer_name, DenseLayer, Gradients, ToyNetwork};
pub use objective::{LayerTerm, Objective, ObjectiveValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub variant: Variant,
    /// Initial `c_reg`; replaced at calibration when balancing is enabled.
    #[serde(default = "default_c_reg")]
    pub c_reg: f64,
    #[serde(default)]
    pub lambda_diag: f64,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
}

fn default_c_reg() -> f64 {
    0.1
}

fn default_power_iterations() -> usize {
    2
}

/// Settings for deriving a relaxation plan from the network itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSettings {
    pub attribute: usize,
    #[serde(default = "default_intrinsic")]
    pub intrinsic: usize,
    pub max_transition: usize,
    #[serde(default = "default_least_ratio")]
    pub least_ratio: f64,
    #[serde(default)]
    pub pattern: RatioPattern,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_intrinsic() -> usize {
    30
}

fn default_least_ratio() -> f64 {
    1.0
}

fn default_trials() -> usize {
    10_000
}

/// Where the relaxation plan comes from: a plan file, inline entries, or
/// settings to build one from the network architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSource {
    File(PathBuf),
    Entries(Vec<RelaxationPlanEntry>),
    Build(RelaxationSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs at which the learning rate is multiplied by `lr_decay`.
    #[serde(default)]
    pub lr_milestones: Vec<usize>,
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_nesterov")]
    pub nesterov: bool,
    #[serde(default)]
    pub seed: u64,
    /// Widths of the hidden layers.
    pub hidden: Vec<usize>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub regularizer: Option<RegularizerConfig>,
    #[serde(default)]
    pub balance: Option<BalanceConfig>,
    #[serde(default)]
    pub plan: Option<PlanSource>,
}

fn default_lr_decay() -> f64 {
    0.1
}

fn default_momentum() -> f64 {
    0.9
}

fn default_nesterov() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return Err(Error::Config("lr_decay must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if let Some(reg) = &self.regularizer {
            if !(reg.c_reg.is_finite() && reg.c_reg >= 0.0) {
                return Err(Error::Config("c_reg must be non-negative".into()));
            }
            if !(reg.lambda_diag.is_finite() && reg.lambda_diag >= 0.0) {
                return Err(Error::Config("lambda_diag must be non-negative".into()));
            }
            if reg.power_iterations == 0 {
                return Err(Error::Config("power_iterations must be at least 1".into()));
            }
            if reg.variant == Variant::RelaxedDisentangled && self.plan.is_none() {
                return Err(Error::Config(
                    "the relaxed variant needs a relaxation plan".into(),
                ));
            }
        }
        if let Some(b) = &self.balance {
            b.validate()?;
        }
        Ok(())
    }

    /// Layer widths `[input, hidden…, classes]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.dataset.input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.dataset.classes);
        sizes
    }

    /// Rewrites a relative plan file path against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        if let Some(PlanSource::File(p)) = &mut self.plan {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let k = self.lr_milestones.iter().filter(|&&m| m <= epoch).count();
        self.learning_rate * self.lr_decay.powi(k as i32)
    }

    fn resolve_plan(&self, net: &ToyNetwork) -> Result<Option<Vec<RelaxationPlanEntry>>> {
        Ok(match &self.plan {
            None => None,
            Some(PlanSource::Entries(e)) => Some(e.clone()),
            Some(PlanSource::File(p)) => Some(plan_from_json(&std::fs::read_to_string(p)?)?),
            Some(PlanSource::Build(s)) => {
                let transition = TransitionConfig::new(s.attribute, s.intrinsic, s.max_transition)?;
                let ratio = RatioMapConfig::new(s.least_ratio, s.pattern)?;
                let opts = PlanOptions {
                    trials: s.trials,
                    seed: self.seed,
                };
                Some(build_plan(&net.architecture(), &transition, &ratio, opts)?)
            }
        })
    }
}

/// Regularized layers: the plan's layers when there is a plan, otherwise
/// every hidden layer.
pub fn regularized_terms(
    net: &ToyNetwork,
    plan: Option<&[RelaxationPlanEntry]>,
) -> Result<Vec<LayerTerm>> {
    let Some(plan) = plan else {
        return Ok((0..net.layers.len() - 1)
            .map(|layer| LayerTerm {
                layer,
                exempt_positive: 0,
                exempt_negative: 0,
            })
            .collect());
    };
    let mut terms: Vec<LayerTerm> = plan
        .iter()
        .map(|entry| {
            let layer = (0..net.layers.len())
                .find(|&j| layer_name(j) == entry.layer)
                .ok_or_else(|| {
                    Error::Config(format!("plan names unknown layer {:?}", entry.layer))
                })?;
            let shape = net.layers[layer].weight.shape();
            if shape != (entry.o, entry.d) {
                return Err(Error::Config(format!(
                    "plan entry {} is {}x{} but the layer is {}x{}",
                    entry.layer, entry.o, entry.d, shape.0, shape.1
                )));
            }
            Ok(LayerTerm {
                layer,
                exempt_positive: entry.exempt_positive,
                exempt_negative: entry.exempt_negative,
            })
        })
        .collect::<Result<_>>()?;
    terms.sort_by_key(|t| t.layer);
    if terms.windows(2).any(|w| w[0].layer == w[1].layer) {
        return Err(Error::Config("plan lists a layer twice".into()));
    }
    Ok(terms)
}

/// Builds the training objective for `net` with the configured initial
/// coefficients.
pub fn objective_for(config: &TrainConfig, net: &ToyNetwork) -> Result<Objective> {
    let Some(reg) = &config.regularizer else {
        return Ok(Objective::unregularized());
    };
    let plan = config.resolve_plan(net)?;
    Ok(Objective {
        variant: Some(reg.variant),
        c_reg: reg.c_reg,
        lambda_diag: reg.lambda_diag,
        power_iterations: reg.power_iterations,
        terms: regularized_terms(net, plan.as_deref())?,
        seed: derive_seed(config.seed, 0x5219),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Epoch means over minibatches.
    pub task_loss: f64,
    pub reg_loss: f64,
    pub corr_loss: f64,
    pub diag_loss: f64,
    /// `c_reg · reg / (task + c_reg · reg)` with the coefficients used
    /// during the epoch.
    pub reg_share: f64,
    pub c_reg: f64,
    pub lambda_diag: f64,
    pub val_accuracy: f64,
    pub layers: Vec<NearOrthReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsHistory {
    pub records: Vec<EpochRecord>,
    pub adjustments: Vec<Adjustment>,
}

impl MetricsHistory {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Final-epoch table: losses, accuracy and one row per layer.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let Some(r) = self.last() else {
            return "no epochs recorded\n".into();
        };
        let _ = writeln!(out, "epochs        {}", self.records.len());
        let _ = writeln!(out, "task loss     {:.6}", r.task_loss);
        let _ = writeln!(out, "reg loss      {:.6}", r.reg_loss);
        let _ = writeln!(out, "reg share     {:.4}", r.reg_share);
        let _ = writeln!(out, "c_reg         {:.6e}", r.c_reg);
        let _ = writeln!(out, "lambda_diag   {:.6e}", r.lambda_diag);
        let _ = writeln!(out, "val accuracy  {:.4}", r.val_accuracy);
        let _ = writeln!(out, "{:<8} {:>10}  near-orthogonality", "layer", "shape");
        for l in &r.layers {
            let _ = writeln!(
                out,
                "{:<8} {:>10}  {}",
                l.layer_name,
                format!("{}x{}", l.rows, l.cols),
                l.table_cell()
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct EpochMeans {
    task: f64,
    reg: f64,
    corr: f64,
    diag: f64,
}

impl EpochMeans {
    /// Regularizer mean re-weighted with a different λ.
    fn reg_with(&self, disentangled: bool, lambda: f64) -> f64 {
        if disentangled {
            self.corr + lambda * self.diag
        } else {
            self.reg
        }
    }
}

fn layer_reports(net: &ToyNetwork) -> Vec<NearOrthReport> {
    net.layers
        .iter()
        .enumerate()
        .filter_map(|(j, l)| near_orth_report(&l.weight, layer_name(j)).ok())
        .collect()
}

fn ensure_finite(value: f64, epoch: usize, batch: usize, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical {
            epoch,
            batch,
            what: format!("{what} is {value}"),
        })
    }
}

/// Trains a fresh network according to `config`.
pub fn train(config: &TrainConfig) -> Result<(ToyNetwork, MetricsHistory)> {
    config.validate()?;
    let (train_set, val_set) = make_synthetic_dataset(&config.dataset, config.seed)?;
    let mut net = ToyNetwork::new(&config.layer_sizes(), config.seed)?;
    let mut objective = objective_for(config, &net)?;
    let disentangled = objective.variant.is_some_and(Variant::is_disentangled);

    let balance = config.balance.clone().map(|mut b| {
        if b.milestone_epochs.is_empty() {
            b.milestone_epochs = config.lr_milestones.clone();
        }
        b
    });
    let cap_epochs = balance
        .as_ref()
        .map(|b| adjustment_epochs(b, config.epochs))
        .unwrap_or_default();
    let mut state = CoefficientState::new(objective.c_reg, objective.lambda_diag);

    let mut velocity = Gradients::zeros_like(&net);
    let order_seed = derive_seed(config.seed, 0xBA7C);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut previous: Option<EpochMeans> = None;
    let mut records = Vec::with_capacity(config.epochs);
    let mut step = 0u64;

    for epoch in 0..config.epochs {
        if let (Some(b), Some(prev)) = (&balance, previous) {
            if objective.variant.is_some()
                && epoch > b.calibration_epoch
                && cap_epochs.contains(&epoch)
            {
                let reg = prev.reg_with(disentangled, state.lambda_diag);
                state.enforce_cap(epoch, prev.task, reg, b);
            }
        }
        objective.c_reg = state.c_reg;
        objective.lambda_diag = state.lambda_diag;

        let lr = config.learning_rate_at(epoch);
        let mu = config.momentum;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(order_seed, epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut sums = EpochMeans::default();
        let mut batches = 0usize;
        for (b_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let (value, grads) = objective.value_and_gradient(&net, &train_set, batch, step)?;
            ensure_finite(value.total, epoch, b_idx, "objective")?;
            for &g in grads.weights.iter().chain(&grads.biases).flatten() {
                ensure_finite(g, epoch, b_idx, "gradient")?;
            }
            let params = net
                .layers
                .iter_mut()
                .flat_map(|l| l.weight.data_mut().iter_mut().chain(l.bias.iter_mut()));
            let vels = velocity
                .weights
                .iter_mut()
                .zip(velocity.biases.iter_mut())
                .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()));
            let gs = grads
                .weights
                .iter()
                .zip(&grads.biases)
                .flat_map(|(w, b)| w.iter().chain(b));
            for ((p, v), &g) in params.zip(vels).zip(gs) {
                *v = mu * *v + g;
                *p -= lr * if config.nesterov { g + mu * *v } else { *v };
            }
            sums.task += value.task;
            sums.reg += value.reg;
            sums.corr += value.corr;
            sums.diag += value.diag;
            batches += 1;
            step += 1;
        }
        let n = batches as f64;
        let means = EpochMeans {
            task: sums.task / n,
            reg: sums.reg / n,
            corr: sums.corr / n,
            diag: sums.diag / n,
        };

        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            task_loss: means.task,
            reg_loss: means.reg,
            corr_loss: means.corr,
            diag_loss: means.diag,
            reg_share: share(means.task, objective.c_reg * means.reg),
            c_reg: objective.c_reg,
            lambda_diag: objective.lambda_diag,
            val_accuracy: net.accuracy(&val_set),
            layers: layer_reports(&net),
        });

        if let Some(b) = &balance {
            if objective.variant.is_some() && epoch == b.calibration_epoch {
                if disentangled {
                    state.calibrate_lambda(epoch, means.corr, means.diag, b);
                }
                let reg = means.reg_with(disentangled, state.lambda_diag);
                state.calibrate_reg(epoch, means.task, reg, b);
            }
        }
        previous = Some(means);
    }

    Ok((
        net,
        MetricsHistory {
            records,
            adjustments: state.history,
        },
    ))
}
