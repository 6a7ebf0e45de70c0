#![allow(dead_code)]

use nalgebra::DMatrix;
use orthoreg::KernelMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_kernel(rng: &mut ChaCha8Rng, o: usize, d: usize, scale: f64) -> KernelMatrix {
    let data = (0..o * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>();
    KernelMatrix::from_rows(o, d, data).unwrap()
}

pub fn to_dmatrix(k: &KernelMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(k.rows(), k.cols(), k.data())
}

/// `K Kᵀ − I` via nalgebra.
pub fn residual_oracle(k: &KernelMatrix) -> DMatrix<f64> {
    let m = to_dmatrix(k);
    &m * m.transpose() - DMatrix::identity(k.rows(), k.rows())
}

pub fn frobenius_oracle(k: &KernelMatrix) -> f64 {
    residual_oracle(k).norm()
}

/// Largest absolute eigenvalue of the symmetric residual.
pub fn sigma_max_oracle(k: &KernelMatrix) -> (f64, f64) {
    let eig = residual_oracle(k).symmetric_eigen();
    let mut mags: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (mags[0], mags.get(1).copied().unwrap_or(0.0))
}

/// Cosine similarities of all filter pairs `r > c`, row-then-column order.
pub fn correlations_oracle(k: &KernelMatrix) -> Vec<f64> {
    let m = to_dmatrix(k);
    let mut out = Vec::new();
    for r in 0..k.rows() {
        for c in 0..r {
            let (a, b) = (m.row(r), m.row(c));
            out.push(a.dot(&b) / (a.norm() * b.norm()));
        }
    }
    out
}

/// Disentangled loss evaluated from scratch, skipping `exempt` pairs.
pub fn disentangled_oracle(k: &KernelMatrix, lambda: f64, exempt: &[usize]) -> (f64, f64) {
    let corr = correlations_oracle(k)
        .iter()
        .enumerate()
        .filter(|(p, _)| !exempt.contains(p))
        .map(|(_, t)| t * t)
        .sum::<f64>()
        .sqrt();
    let m = to_dmatrix(k);
    let diag = (0..k.rows())
        .map(|j| (m.row(j).norm_squared() - 1.0).powi(2))
        .sum::<f64>()
        .sqrt();
    (corr + lambda * diag, corr)
}

/// Central differences of `f` at every entry of `k`.
pub fn numeric_gradient(k: &KernelMatrix, step: f64, f: impl Fn(&KernelMatrix) -> f64) -> Vec<f64> {
    let (o, d) = k.shape();
    (0..o * d)
        .map(|j| {
            let mut up = k.data().to_vec();
            let mut down = k.data().to_vec();
            up[j] += step;
            down[j] -= step;
            let fu = f(&KernelMatrix::from_rows(o, d, up).unwrap());
            let fd = f(&KernelMatrix::from_rows(o, d, down).unwrap());
            (fu - fd) / (2.0 * step)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
