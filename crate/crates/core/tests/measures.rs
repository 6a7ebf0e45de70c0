mod common;

use approx::assert_relative_eq;
use common::*;
use orthoreg::measures::{
    correlation_tril, decomposed_frobenius, disentangled_loss, evaluate, frobenius_loss,
    near_orth_report, scaled_frobenius_loss, srip_loss, RegularizerSpec, Variant,
};
use orthoreg::relaxation::{build_exemption_mask, PairMask};
use orthoreg::tensor::{load_tensor, reshape_kernel, save_tensor, Dtype};
use orthoreg::{KernelMatrix, KernelTensor};
use proptest::prelude::*;

fn kernel_strategy(max_o: usize, max_d: usize) -> impl Strategy<Value = KernelMatrix> {
    (1..=max_o, 1..=max_d).prop_flat_map(|(o, d)| {
        prop::collection::vec(-2.0f64..2.0, o * d)
            .prop_map(move |data| KernelMatrix::from_rows(o, d, data).unwrap())
    })
}

fn over_determined_strategy() -> impl Strategy<Value = KernelMatrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(d, extra)| {
        let o = d + extra;
        prop::collection::vec(-2.0f64..2.0, o * d)
            .prop_map(move |data| KernelMatrix::from_rows(o, d, data).unwrap())
    })
}

fn has_tiny_row(k: &KernelMatrix) -> bool {
    k.row_iter()
        .any(|r| r.iter().map(|x| x * x).sum::<f64>() < 1e-6)
}

proptest! {
    #[test]
    fn decomposition_matches_direct(k in kernel_strategy(12, 12)) {
        let direct = frobenius_loss(&k).total;
        let rebuilt = decomposed_frobenius(&k);
        prop_assert!((rebuilt - direct).abs() <= 1e-10 * direct.max(1e-300));
    }

    #[test]
    fn frobenius_matches_dense_oracle(k in kernel_strategy(10, 10)) {
        let ours = frobenius_loss(&k).total;
        prop_assert!((ours - frobenius_oracle(&k)).abs() <= 1e-10 * ours.max(1.0));
        let scaled = scaled_frobenius_loss(&k).total;
        prop_assert!((scaled * (k.rows() as f64).sqrt() - ours).abs() <= 1e-10 * ours.max(1.0));
    }

    #[test]
    fn over_determined_frobenius_floor(k in over_determined_strategy()) {
        let (o, d) = k.shape();
        prop_assert!(frobenius_loss(&k).total >= ((o - d) as f64).sqrt() - 1e-9);
    }

    #[test]
    fn over_determined_correlation_floor(k in over_determined_strategy()) {
        prop_assume!(!has_tiny_row(&k));
        let (o, d) = k.shape();
        let floor = ((o * (o - d)) as f64 / (2 * d) as f64).sqrt();
        let corr = disentangled_loss(&k, &RegularizerSpec::disentangled(0.0)).unwrap().corr_component;
        prop_assert!(corr >= floor - 1e-9, "corr {} < floor {}", corr, floor);
    }

    #[test]
    fn correlation_term_ignores_row_scaling(
        k in kernel_strategy(8, 8),
        scales in prop::collection::vec(0.1f64..10.0, 8),
    ) {
        prop_assume!(!has_tiny_row(&k));
        let (o, d) = k.shape();
        let mut data = k.data().to_vec();
        for (j, row) in data.chunks_exact_mut(d).enumerate() {
            row.iter_mut().for_each(|x| *x *= scales[j]);
        }
        let scaled = KernelMatrix::from_rows(o, d, data).unwrap();
        let spec = RegularizerSpec::disentangled(0.5);
        let a = disentangled_loss(&k, &spec).unwrap().corr_component;
        let b = disentangled_loss(&scaled, &spec).unwrap().corr_component;
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn disentangled_matches_oracle(k in kernel_strategy(9, 9), lambda in 0.0f64..2.0) {
        prop_assume!(!has_tiny_row(&k));
        let ours = disentangled_loss(&k, &RegularizerSpec::disentangled(lambda)).unwrap();
        let (total, corr) = disentangled_oracle(&k, lambda, &[]);
        prop_assert!((ours.total - total).abs() <= 1e-10 * total.max(1.0));
        prop_assert!((ours.corr_component - corr).abs() <= 1e-10 * corr.max(1.0));
    }

    #[test]
    fn masking_never_increases_correlation_term(
        k in kernel_strategy(8, 6),
        n_pos in 0usize..6,
        n_neg in 0usize..6,
    ) {
        prop_assume!(!has_tiny_row(&k));
        let tril = correlation_tril(&k).unwrap();
        let mask = build_exemption_mask(&tril, n_pos, n_neg);
        let masked = disentangled_loss(&k, &RegularizerSpec::relaxed(0.1, mask.clone())).unwrap();
        let full = disentangled_loss(&k, &RegularizerSpec::disentangled(0.1)).unwrap();
        prop_assert!(masked.corr_component <= full.corr_component + 1e-12);
        let (_, corr) = disentangled_oracle(&k, 0.1, mask.exempt());
        prop_assert!((masked.corr_component - corr).abs() <= 1e-10 * corr.max(1.0));
    }

    #[test]
    fn srip_never_exceeds_sigma_max(k in kernel_strategy(8, 8), seed in any::<u64>()) {
        let (sigma, _) = sigma_max_oracle(&k);
        let value = srip_loss(&k, &RegularizerSpec::srip(seed)).total;
        prop_assert!(value <= sigma * (1.0 + 1e-9) + 1e-12, "{} > {}", value, sigma);
    }

    #[test]
    fn correlations_match_oracle(k in kernel_strategy(9, 7)) {
        prop_assume!(!has_tiny_row(&k));
        let ours = correlation_tril(&k).unwrap();
        for (a, b) in ours.entries().iter().zip(correlations_oracle(&k)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn reshape_preserves_rows(
        dims in (1usize..5, 1usize..4, 1usize..4, 1usize..4),
        seed in any::<u64>(),
    ) {
        let (o, i, kh, kw) = dims;
        let n = o * i * kh * kw;
        let data: Vec<f64> = (0..n).map(|j| (j as f64 + seed as f64 % 97.0).sin()).collect();
        let t = KernelTensor::new("w", [o, i, kh, kw], data.clone()).unwrap();
        let k = reshape_kernel(&t).unwrap();
        prop_assert_eq!(k.shape(), (o, i * kh * kw));
        prop_assert_eq!(k.data(), &data[..]);
        let back = k.to_tensor();
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn container_round_trip(
        dims in (1usize..4, 1usize..4, 1usize..3, 1usize..3),
        values in prop::collection::vec(-1e6f64..1e6, 36),
    ) {
        let (o, i, kh, kw) = dims;
        let data = values[..o * i * kh * kw].to_vec();
        let t = KernelTensor::new("w", [o, i, kh, kw], data).unwrap();
        let back = load_tensor(&save_tensor(&t, Dtype::F64).unwrap()).unwrap();
        prop_assert_eq!(back.data(), t.data());
        prop_assert_eq!(back.dims(), t.dims());
        let narrow = load_tensor(&save_tensor(&t, Dtype::F32).unwrap()).unwrap();
        for (a, b) in narrow.data().iter().zip(t.data()) {
            prop_assert_eq!(*a, *b as f32 as f64);
        }
    }
}

#[test]
fn decomposition_identity_on_hundred_kernels() {
    let mut r = rng(1);
    let shapes = [(4, 9), (9, 9), (16, 8), (3, 27), (32, 16), (7, 5)];
    for n in 0..100 {
        let (o, d) = shapes[n % shapes.len()];
        let k = gaussian_kernel(&mut r, o, d, 0.7);
        let direct = frobenius_loss(&k).total;
        assert!((decomposed_frobenius(&k) - direct).abs() / direct <= 1e-10);
    }
}

#[test]
fn floors_on_named_shapes() {
    let mut r = rng(2);
    for (o, d) in [(16, 8), (128, 64)] {
        for scale in [0.05, 1.0 / (d as f64).sqrt(), 1.0] {
            let k = gaussian_kernel(&mut r, o, d, scale);
            assert!(frobenius_loss(&k).total >= ((o - d) as f64).sqrt() - 1e-9);
        }
    }
    // an orthonormal basis repeated twice attains the correlation floor
    let mut rows = Vec::new();
    for _ in 0..2 {
        for j in 0..64 {
            let mut e = vec![0.0; 64];
            e[j] = 1.0;
            rows.push(e);
        }
    }
    let k = KernelMatrix::from_row_vecs(&rows).unwrap();
    let corr = disentangled_loss(&k, &RegularizerSpec::disentangled(0.0))
        .unwrap()
        .corr_component;
    assert_relative_eq!(corr, 8.0, max_relative = 1e-12);
}

#[test]
fn srip_converges_to_dense_eigensolve() {
    let mut r = rng(3);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 50 {
        attempts += 1;
        assert!(attempts < 10_000, "could not find enough gapped kernels");
        let o = 3 + attempts % 6;
        let k = gaussian_kernel(&mut r, o, o + 2, 0.6);
        let (s1, s2) = sigma_max_oracle(&k);
        if (s1 - s2) / s1 < 0.1 {
            continue;
        }
        let mut spec = RegularizerSpec::srip(attempts as u64);
        spec.power_iterations = 40;
        let value = srip_loss(&k, &spec).total;
        assert!(
            (value - s1).abs() <= 0.05 * s1,
            "srip {value} vs sigma {s1}"
        );
        checked += 1;
    }
}

#[test]
fn orthonormal_kernels_score_zero_everywhere() {
    let k = KernelMatrix::from_row_vecs(&[
        vec![0.6, 0.8, 0.0],
        vec![-0.8, 0.6, 0.0],
        vec![0.0, 0.0, 1.0],
    ])
    .unwrap();
    for v in Variant::ALL {
        let mut spec = RegularizerSpec::new(v);
        if v == Variant::RelaxedDisentangled {
            spec.exemption_mask = Some(PairMask::empty(3));
        }
        assert!(evaluate(&k, &spec).unwrap().total < 1e-15, "{v:?}");
    }
    let report = near_orth_report(&k, "q").unwrap();
    assert_eq!(report.table_cell(), "0.00 ± 0.00/1.00");
}
