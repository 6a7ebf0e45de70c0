//! Orthogonality measures over a [`KernelMatrix`].
//!
//! Everything here is a pure function of its inputs. SRIP draws its start
//! vector from a generator seeded by the caller, so repeated calls agree.

mod grad;
mod loss;
mod report;

pub use grad::regularizer_gradient;
pub use loss::{
    decomposed_frobenius, disentangled_loss, evaluate, frobenius_loss, scaled_frobenius_loss,
    srip_loss, RegularizerResult, RegularizerSpec, Variant,
};
pub use report::{aggregate_reports, near_orth_report, NearOrthReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::KernelMatrix;

/// Rows with a norm below this are treated as degenerate filters.
pub const NORM_FLOOR: f64 = 1e-12;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Number of strictly-lower-triangular entries of an `o × o` matrix.
pub fn pair_count(o: usize) -> usize {
    o * o.saturating_sub(1) / 2
}

/// Flat index of pair `(r, c)`, `r > c`, in row-then-column order:
/// `(1,0), (2,0), (2,1), (3,0), …`.
pub fn pair_index(r: usize, c: usize) -> usize {
    debug_assert!(r > c);
    r * (r - 1) / 2 + c
}

/// Inverse of [`pair_index`].
pub fn pair_at(index: usize) -> (usize, usize) {
    // largest r with r(r-1)/2 <= index
    let mut r = ((1.0 + (1.0 + 8.0 * index as f64).sqrt()) / 2.0) as usize;
    while r * (r - 1) / 2 > index {
        r -= 1;
    }
    while (r + 1) * r / 2 <= index {
        r += 1;
    }
    (r, index - r * (r - 1) / 2)
}

/// `K Kᵀ`, symmetric by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    o: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.o
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.o + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn diagonal(&self) -> DiagonalVector {
        DiagonalVector((0..self.o).map(|j| self.get(j, j)).collect())
    }

    /// Lower-triangle entries in [`pair_index`] order.
    pub fn lower_triangle(&self) -> Vec<f64> {
        (1..self.o)
            .flat_map(|r| (0..r).map(move |c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect()
    }
}

/// Squared filter norms `⟨k_j, k_j⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalVector(pub Vec<f64>);

impl DiagonalVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Pairwise filter correlations below the diagonal, in [`pair_index`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLowerTriangle {
    o: usize,
    entries: Vec<f64>,
}

impl CorrelationLowerTriangle {
    pub fn new(o: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != pair_count(o) {
            return Err(Error::Shape(format!(
                "{o} filters have {} pairs, got {}",
                pair_count(o),
                entries.len()
            )));
        }
        Ok(Self { o, entries })
    }

    pub fn filters(&self) -> usize {
        self.o
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[pair_index(r, c)]
    }
}

pub fn gram(k: &KernelMatrix) -> GramMatrix {
    let o = k.rows();
    let mut entries = vec![0.0; o * o];
    for r in 0..o {
        for c in 0..=r {
            let v = dot(k.row(r), k.row(c));
            entries[r * o + c] = v;
            entries[c * o + r] = v;
        }
    }
    GramMatrix { o, entries }
}

pub fn diagonal(k: &KernelMatrix) -> DiagonalVector {
    DiagonalVector(k.row_iter().map(|r| dot(r, r)).collect())
}

/// Rows scaled to unit norm, plus the original norms.
pub(crate) fn normalized_rows(k: &KernelMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = k.cols();
    let mut unit = Vec::with_capacity(k.data().len());
    let mut norms = Vec::with_capacity(k.rows());
    for (j, row) in k.row_iter().enumerate() {
        let n = norm(row);
        if n < NORM_FLOOR {
            return Err(Error::DegenerateFilter {
                row: j,
                floor: NORM_FLOOR,
            });
        }
        unit.extend(row.iter().map(|v| v / n));
        norms.push(n);
    }
    debug_assert_eq!(unit.len(), k.rows() * d);
    Ok((unit, norms))
}

pub(crate) fn tril_of_unit_rows(unit: &[f64], o: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(pair_count(o));
    for r in 1..o {
        let ur = &unit[r * d..(r + 1) * d];
        for c in 0..r {
            out.push(dot(ur, &unit[c * d..(c + 1) * d]));
        }
    }
    out
}

/// `Corr(k_r, k_c)` for every `r > c`.
///
/// Rows are normalized once and the lower triangle of the normalized Gram
/// matrix is taken, so only half the pairwise products are formed.
pub fn correlation_tril(k: &KernelMatrix) -> Result<CorrelationLowerTriangle> {
    let (unit, _) = normalized_rows(k)?;
    Ok(CorrelationLowerTriangle {
        o: k.rows(),
        entries: tril_of_unit_rows(&unit, k.rows(), k.cols()),
    })
}
