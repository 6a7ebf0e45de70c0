use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{diagonal, gram, norm, normalized_rows, tril_of_unit_rows, NORM_FLOOR};
use crate::error::{Error, Result};
use crate::relaxation::PairMask;
use crate::tensor::KernelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Frobenius,
    ScaledFrobenius,
    Srip,
    Disentangled,
    RelaxedDisentangled,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Frobenius,
        Variant::ScaledFrobenius,
        Variant::Srip,
        Variant::Disentangled,
        Variant::RelaxedDisentangled,
    ];

    pub fn is_disentangled(self) -> bool {
        matches!(self, Variant::Disentangled | Variant::RelaxedDisentangled)
    }
}

/// Which measure to evaluate, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSpec {
    pub variant: Variant,
    /// Weight of the diagonal term in the disentangled measures.
    pub lambda_diag: f64,
    /// Rounds of `u ← A v, v ← A u` for SRIP.
    pub power_iterations: usize,
    /// Seeds the SRIP start vector.
    pub seed: u64,
    pub exemption_mask: Option<PairMask>,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self {
            variant: Variant::Frobenius,
            lambda_diag: 0.0,
            power_iterations: 2,
            seed: 0,
            exemption_mask: None,
        }
    }
}

impl RegularizerSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn srip(seed: u64) -> Self {
        Self {
            variant: Variant::Srip,
            seed,
            ..Self::default()
        }
    }

    pub fn disentangled(lambda_diag: f64) -> Self {
        Self {
            variant: Variant::Disentangled,
            lambda_diag,
            ..Self::default()
        }
    }

    pub fn relaxed(lambda_diag: f64, mask: PairMask) -> Self {
        Self {
            variant: Variant::RelaxedDisentangled,
            lambda_diag,
            exemption_mask: Some(mask),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_diag >= 0.0 && self.lambda_diag.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_diag must be finite and non-negative, got {}",
                self.lambda_diag
            )));
        }
        if self.power_iterations == 0 {
            return Err(Error::Config("power_iterations must be at least 1".into()));
        }
        match (self.variant, &self.exemption_mask) {
            (Variant::RelaxedDisentangled, None) => Err(Error::Config(
                "relaxed disentangled measure needs an exemption mask".into(),
            )),
            (Variant::RelaxedDisentangled, Some(_)) | (_, None) => Ok(()),
            (v, Some(_)) => Err(Error::Config(format!(
                "{v:?} does not take an exemption mask"
            ))),
        }
    }

    pub(crate) fn mask_for(&self, k: &KernelMatrix) -> Result<Option<&PairMask>> {
        match &self.exemption_mask {
            Some(m) if m.filters() != k.rows() => Err(Error::Shape(format!(
                "mask built for {} filters applied to {}",
                m.filters(),
                k.rows()
            ))),
            m => Ok(m.as_ref()),
        }
    }
}

/// Value of a measure, its parts and optionally `∂total/∂K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerResult {
    pub total: f64,
    /// Correlation term; zero for the Gram-based measures.
    pub corr_component: f64,
    /// Diagonal term before weighting by λ; zero for the Gram-based measures.
    pub diag_component: f64,
    /// Row-major `o × d`, present only when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gradient: Option<Vec<f64>>,
    /// Set when the input hit a degeneracy (zero-norm filter, vanishing
    /// power-iteration vector) and the gradient was defined as zero.
    #[serde(default)]
    pub degenerate: bool,
}

impl RegularizerResult {
    fn plain(total: f64) -> Self {
        Self {
            total,
            corr_component: 0.0,
            diag_component: 0.0,
            gradient: None,
            degenerate: false,
        }
    }
}

/// `K Kᵀ − I`, row-major.
pub(crate) fn residual(k: &KernelMatrix) -> Vec<f64> {
    let o = k.rows();
    let mut a = gram(k).entries().to_vec();
    for j in 0..o {
        a[j * o + j] -= 1.0;
    }
    a
}

/// `‖K Kᵀ − I‖_F`
pub fn frobenius_loss(k: &KernelMatrix) -> RegularizerResult {
    RegularizerResult::plain(norm(&residual(k)))
}

/// `‖K Kᵀ − I‖_F / √o`
pub fn scaled_frobenius_loss(k: &KernelMatrix) -> RegularizerResult {
    RegularizerResult::plain(norm(&residual(k)) / (k.rows() as f64).sqrt())
}

/// Same value as [`frobenius_loss`], assembled from the diagonal and the
/// raw (un-normalized) lower-triangle inner products:
/// `√(Σ_j (⟨k_j,k_j⟩ − 1)² + 2 Σ_{r>c} ⟨k_r,k_c⟩²)`.
pub fn decomposed_frobenius(k: &KernelMatrix) -> f64 {
    let g = gram(k);
    let diag: f64 = g.diagonal().0.iter().map(|v| (v - 1.0).powi(2)).sum();
    let tril: f64 = g.lower_triangle().iter().map(|v| v * v).sum();
    (diag + 2.0 * tril).sqrt()
}

pub(crate) fn matvec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    a.chunks_exact(n).map(|row| super::dot(row, x)).collect()
}

#[derive(Debug, Clone)]
pub(crate) struct SripRound {
    /// Norm of the incoming vector before normalization.
    pub w_norm: f64,
    /// Unit start vector of the round.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct SripTrace {
    pub a: Vec<f64>,
    pub rounds: Vec<SripRound>,
    pub value: f64,
    pub degenerate: bool,
}

pub(crate) fn unit(x: &[f64]) -> Vec<f64> {
    let len = norm(x);
    x.iter().map(|v| v / len).collect()
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm(&v);
        if len > 0.0 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

fn power_rounds(a: &[f64], o: usize, v0: Vec<f64>, iterations: usize) -> Option<Vec<SripRound>> {
    let mut rounds = Vec::with_capacity(iterations);
    let mut w = v0;
    for _ in 0..iterations {
        let w_norm = norm(&w);
        if w_norm < NORM_FLOOR {
            return None;
        }
        let y: Vec<f64> = w.iter().map(|x| x / w_norm).collect();
        let u = matvec(a, o, &y);
        if norm(&u) < NORM_FLOOR {
            return None;
        }
        w = matvec(a, o, &u);
        rounds.push(SripRound { w_norm, y, u });
    }
    Some(rounds)
}

/// Unrolled power iteration on `A = K Kᵀ − I`. The start vector is redrawn
/// once from the same generator if the iteration collapses; a second
/// collapse means `A ≈ 0` and the value is 0.
pub(crate) fn srip_forward(k: &KernelMatrix, spec: &RegularizerSpec) -> SripTrace {
    let o = k.rows();
    let a = residual(k);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..2 {
        let v0 = unit_gaussian(&mut rng, o);
        if let Some(rounds) = power_rounds(&a, o, v0, spec.power_iterations) {
            let last = rounds.last().expect("at least one round");
            // ‖A û‖ with û = u/‖u‖ equals ‖v‖/‖u‖ and is exact on
            // diagonal residuals
            let value = norm(&matvec(&a, o, &unit(&last.u)));
            return SripTrace {
                a,
                rounds,
                value,
                degenerate: false,
            };
        }
    }
    SripTrace {
        a,
        rounds: Vec::new(),
        value: 0.0,
        degenerate: true,
    }
}

/// Power-iteration estimate of `σ_max(K Kᵀ − I)`.
pub fn srip_loss(k: &KernelMatrix, spec: &RegularizerSpec) -> RegularizerResult {
    let trace = srip_forward(k, spec);
    RegularizerResult {
        degenerate: trace.degenerate,
        ..RegularizerResult::plain(trace.value)
    }
}

pub(crate) struct DisentangledParts {
    pub unit: Vec<f64>,
    pub norms: Vec<f64>,
    pub tril: Vec<f64>,
    pub sq_norms: Vec<f64>,
    pub corr: f64,
    pub diag: f64,
}

pub(crate) fn disentangled_parts(
    k: &KernelMatrix,
    mask: Option<&PairMask>,
) -> Result<DisentangledParts> {
    let (unit, norms) = normalized_rows(k)?;
    let tril = tril_of_unit_rows(&unit, k.rows(), k.cols());
    let corr = match mask {
        Some(m) => tril
            .iter()
            .enumerate()
            .filter(|(p, _)| !m.is_exempt(*p))
            .map(|(_, t)| t * t)
            .sum::<f64>(),
        None => tril.iter().map(|t| t * t).sum::<f64>(),
    }
    .sqrt();
    let sq_norms = diagonal(k).0;
    let diag = sq_norms
        .iter()
        .map(|s| (s - 1.0).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(DisentangledParts {
        unit,
        norms,
        tril,
        sq_norms,
        corr,
        diag,
    })
}

/// Correlation-triangle norm plus `λ ·` diagonal residual norm. Pairs in the
/// spec's exemption mask are left out of the correlation term.
pub fn disentangled_loss(k: &KernelMatrix, spec: &RegularizerSpec) -> Result<RegularizerResult> {
    let parts = disentangled_parts(k, spec.mask_for(k)?)?;
    Ok(RegularizerResult {
        total: parts.corr + spec.lambda_diag * parts.diag,
        corr_component: parts.corr,
        diag_component: parts.diag,
        gradient: None,
        degenerate: false,
    })
}

/// Evaluates whichever measure `spec` selects.
pub fn evaluate(k: &KernelMatrix, spec: &RegularizerSpec) -> Result<RegularizerResult> {
    spec.validate()?;
    match spec.variant {
        Variant::Frobenius => Ok(frobenius_loss(k)),
        Variant::ScaledFrobenius => Ok(scaled_frobenius_loss(k)),
        Variant::Srip => Ok(srip_loss(k, spec)),
        Variant::Disentangled | Variant::RelaxedDisentangled => disentangled_loss(k, spec),
    }
}
