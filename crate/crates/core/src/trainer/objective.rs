use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::network::{Gradients, ToyNetwork};
use crate::error::{Error, Result};
use crate::measures::{correlation_tril, regularizer_gradient, RegularizerSpec, Variant};
use crate::relaxation::{build_exemption_mask, PairMask};
use crate::rng::derive_seed;
use crate::tensor::KernelMatrix;

/// A regularized layer and, for the relaxed variant, how many positive and
/// negative correlations it may exempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTerm {
    pub layer: usize,
    pub exempt_positive: usize,
    pub exempt_negative: usize,
}

/// `task + c_reg · Σ_layers reg(K_layer)`
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub variant: Option<Variant>,
    pub c_reg: f64,
    pub lambda_diag: f64,
    pub power_iterations: usize,
    pub terms: Vec<LayerTerm>,
    /// Base seed for the power-iteration start vectors.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub task: f64,
    /// Regularizer summed over layers, before `c_reg`.
    pub reg: f64,
    pub corr: f64,
    pub diag: f64,
    pub total: f64,
}

impl Objective {
    pub fn unregularized() -> Self {
        Self {
            variant: None,
            c_reg: 0.0,
            lambda_diag: 0.0,
            power_iterations: 2,
            terms: Vec::new(),
            seed: 0,
        }
    }

    /// Spec for one term at one optimizer step. Relaxed masks are rebuilt
    /// from the current correlations.
    pub fn layer_spec(
        &self,
        variant: Variant,
        k: &KernelMatrix,
        term_pos: usize,
        step: u64,
    ) -> RegularizerSpec {
        let term = &self.terms[term_pos];
        let mut spec = RegularizerSpec::new(variant);
        spec.lambda_diag = self.lambda_diag;
        spec.power_iterations = self.power_iterations;
        spec.seed = derive_seed(derive_seed(self.seed, step), term_pos as u64);
        if variant == Variant::RelaxedDisentangled {
            let mask = match correlation_tril(k) {
                Ok(tril) => build_exemption_mask(&tril, term.exempt_positive, term.exempt_negative),
                Err(_) => PairMask::empty(k.rows()),
            };
            spec.exemption_mask = Some(mask);
        }
        spec
    }

    /// Objective and its gradient with respect to every parameter, on the
    /// listed samples.
    pub fn value_and_gradient(
        &self,
        net: &ToyNetwork,
        data: &Dataset,
        batch: &[usize],
        step: u64,
    ) -> Result<(ObjectiveValue, Gradients)> {
        let (task, mut grads) = net.task_loss_and_grad(data, batch);
        let mut value = ObjectiveValue {
            task,
            ..Default::default()
        };
        if let Some(variant) = self.variant {
            for (pos, term) in self.terms.iter().enumerate() {
                let layer = net.layers.get(term.layer).ok_or_else(|| {
                    Error::Config(format!("regularized layer {} does not exist", term.layer))
                })?;
                let spec = self.layer_spec(variant, &layer.weight, pos, step);
                let res = regularizer_gradient(&layer.weight, &spec)?;
                value.reg += res.total;
                value.corr += res.corr_component;
                value.diag += res.diag_component;
                if self.c_reg != 0.0 {
                    let g = res.gradient.expect("gradient requested");
                    for (acc, gi) in grads.weights[term.layer].iter_mut().zip(g) {
                        *acc += self.c_reg * gi;
                    }
                }
            }
        }
        value.total = value.task + self.c_reg * value.reg;
        Ok((value, grads))
    }

    pub fn value(
        &self,
        net: &ToyNetwork,
        data: &Dataset,
        batch: &[usize],
        step: u64,
    ) -> Result<ObjectiveValue> {
        self.value_and_gradient(net, data, batch, step)
            .map(|(v, _)| v)
    }
}
