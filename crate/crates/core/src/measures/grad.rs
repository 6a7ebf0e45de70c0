//! `∂total/∂K` for every measure.
//!
//! Frobenius and disentangled gradients are closed form. SRIP is
//! differentiated in reverse through the unrolled power iteration with the
//! start vector held constant.

use super::loss::{
    disentangled_parts, matvec, residual, srip_forward, unit, RegularizerResult, RegularizerSpec,
    Variant,
};
use super::{diagonal, dot, norm, NORM_FLOOR};
use crate::error::{Error, Result};
use crate::relaxation::PairMask;
use crate::tensor::KernelMatrix;

/// `(S + Sᵀ) K` for an `o × o` adjoint `S` of `A = K Kᵀ − I`.
fn residual_adjoint_to_kernel(adj: &[f64], k: &KernelMatrix) -> Vec<f64> {
    let (o, d) = k.shape();
    let mut out = vec![0.0; o * d];
    for r in 0..o {
        let out_row = &mut out[r * d..(r + 1) * d];
        for c in 0..o {
            let s = adj[r * o + c] + adj[c * o + r];
            if s != 0.0 {
                for (g, kv) in out_row.iter_mut().zip(k.row(c)) {
                    *g += s * kv;
                }
            }
        }
    }
    out
}

fn frobenius_gradient(k: &KernelMatrix, divisor: f64) -> RegularizerResult {
    let a = residual(k);
    let value = norm(&a);
    let gradient = if value > 0.0 {
        // ∂‖A‖_F/∂K = 2 A K / ‖A‖_F; the adjoint helper doubles A.
        let adj: Vec<f64> = a.iter().map(|x| x / value / divisor).collect();
        residual_adjoint_to_kernel(&adj, k)
    } else {
        vec![0.0; k.data().len()]
    };
    RegularizerResult {
        total: value / divisor,
        corr_component: 0.0,
        diag_component: 0.0,
        gradient: Some(gradient),
        degenerate: false,
    }
}

fn srip_gradient(k: &KernelMatrix, spec: &RegularizerSpec) -> RegularizerResult {
    let o = k.rows();
    let trace = srip_forward(k, spec);
    if trace.degenerate {
        return RegularizerResult {
            total: trace.value,
            corr_component: 0.0,
            diag_component: 0.0,
            gradient: Some(vec![0.0; k.data().len()]),
            degenerate: true,
        };
    }

    let a = &trace.a;
    let mut a_bar = vec![0.0; o * o];
    let outer = |acc: &mut [f64], x: &[f64], y: &[f64]| {
        for (r, xr) in x.iter().enumerate() {
            for (c, yc) in y.iter().enumerate() {
                acc[r * o + c] += xr * yc;
            }
        }
    };
    // A is symmetric, so Aᵀx = Ax.
    // value = ‖q‖, q = A z, z = u/‖u‖ for the last round's u
    let last = trace
        .rounds
        .last()
        .expect("non-degenerate trace has rounds");
    let u_len = norm(&last.u);
    let z = unit(&last.u);
    let q = matvec(a, o, &z);
    let q_bar: Vec<f64> = if trace.value > 0.0 {
        q.iter().map(|x| x / trace.value).collect()
    } else {
        vec![0.0; o]
    };
    outer(&mut a_bar, &q_bar, &z);
    let z_bar = matvec(a, o, &q_bar);
    let proj = dot(&z, &z_bar);
    let mut u_direct: Vec<f64> = z_bar
        .iter()
        .zip(&z)
        .map(|(zb, zv)| (zb - zv * proj) / u_len)
        .collect();
    let mut v_bar = vec![0.0; o];

    for round in trace.rounds.iter().rev() {
        // v = A u
        outer(&mut a_bar, &v_bar, &round.u);
        let mut u_bar = matvec(a, o, &v_bar);
        for (ub, ud) in u_bar.iter_mut().zip(&u_direct) {
            *ub += ud;
        }
        // u = A y
        outer(&mut a_bar, &u_bar, &round.y);
        let y_bar = matvec(a, o, &u_bar);
        // y = w / ‖w‖, w = previous v
        let proj = dot(&round.y, &y_bar);
        v_bar = y_bar
            .iter()
            .zip(&round.y)
            .map(|(yb, y)| (yb - y * proj) / round.w_norm)
            .collect();
        u_direct = vec![0.0; o];
    }

    RegularizerResult {
        total: trace.value,
        corr_component: 0.0,
        diag_component: 0.0,
        gradient: Some(residual_adjoint_to_kernel(&a_bar, k)),
        degenerate: false,
    }
}

fn disentangled_gradient(
    k: &KernelMatrix,
    lambda: f64,
    mask: Option<&PairMask>,
) -> RegularizerResult {
    let (o, d) = k.shape();
    let parts = match disentangled_parts(k, mask) {
        Ok(p) => p,
        Err(_) => return degenerate_disentangled(k, lambda, mask),
    };

    let mut unit_bar = vec![0.0; o * d];
    if parts.corr > 0.0 {
        let mut p = 0;
        for r in 1..o {
            for c in 0..r {
                let exempt = mask.is_some_and(|m| m.is_exempt(p));
                let t = parts.tril[p];
                p += 1;
                if exempt || t == 0.0 {
                    continue;
                }
                let g = t / parts.corr;
                for x in 0..d {
                    unit_bar[r * d + x] += g * parts.unit[c * d + x];
                    unit_bar[c * d + x] += g * parts.unit[r * d + x];
                }
            }
        }
    }

    let mut gradient = vec![0.0; o * d];
    for j in 0..o {
        let n = &parts.unit[j * d..(j + 1) * d];
        let nb = &unit_bar[j * d..(j + 1) * d];
        let proj = dot(n, nb);
        let diag_coeff = if parts.diag > 0.0 {
            lambda * 2.0 * (parts.sq_norms[j] - 1.0) / parts.diag
        } else {
            0.0
        };
        for x in 0..d {
            gradient[j * d + x] = (nb[x] - n[x] * proj) / parts.norms[j] + diag_coeff * k.row(j)[x];
        }
    }

    RegularizerResult {
        total: parts.corr + lambda * parts.diag,
        corr_component: parts.corr,
        diag_component: parts.diag,
        gradient: Some(gradient),
        degenerate: false,
    }
}

// Zero-norm rows: correlations touching them count as 0 and the gradient is
// defined as zero.
fn degenerate_disentangled(
    k: &KernelMatrix,
    lambda: f64,
    mask: Option<&PairMask>,
) -> RegularizerResult {
    let o = k.rows();
    let norms: Vec<f64> = k.row_iter().map(norm).collect();
    let mut corr_sq = 0.0;
    let mut p = 0;
    for r in 1..o {
        for c in 0..r {
            let exempt = mask.is_some_and(|m| m.is_exempt(p));
            p += 1;
            if exempt || norms[r] < NORM_FLOOR || norms[c] < NORM_FLOOR {
                continue;
            }
            let t = dot(k.row(r), k.row(c)) / (norms[r] * norms[c]);
            corr_sq += t * t;
        }
    }
    let corr = corr_sq.sqrt();
    let diag = diagonal(k)
        .0
        .iter()
        .map(|s| (s - 1.0).powi(2))
        .sum::<f64>()
        .sqrt();
    RegularizerResult {
        total: corr + lambda * diag,
        corr_component: corr,
        diag_component: diag,
        gradient: Some(vec![0.0; k.data().len()]),
        degenerate: true,
    }
}

/// Evaluates the selected measure together with its gradient.
///
/// Degenerate inputs do not error: the gradient is a zero matrix and
/// [`RegularizerResult::degenerate`] is set.
pub fn regularizer_gradient(k: &KernelMatrix, spec: &RegularizerSpec) -> Result<RegularizerResult> {
    spec.validate()?;
    let mask = spec.mask_for(k)?;
    if !k.is_finite() {
        return Err(Error::Shape("kernel contains non-finite values".into()));
    }
    Ok(match spec.variant {
        Variant::Frobenius => frobenius_gradient(k, 1.0),
        Variant::ScaledFrobenius => frobenius_gradient(k, (k.rows() as f64).sqrt()),
        Variant::Srip => srip_gradient(k, spec),
        Variant::Disentangled | Variant::RelaxedDisentangled => {
            disentangled_gradient(k, spec.lambda_diag, mask)
        }
    })
}
