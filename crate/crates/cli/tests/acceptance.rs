//! One line per acceptance criterion, at the stated tolerances.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use orthoreg::measures::{
    correlation_tril, decomposed_frobenius, evaluate, frobenius_loss, regularizer_gradient,
    srip_loss, RegularizerSpec, Variant,
};
use orthoreg::relaxation::{
    build_exemption_mask, build_ratio_map, closed_form_pairs, expected_relaxed_pairs,
    transition_dimension, RatioMapConfig, RatioPattern, TransitionConfig,
};
use orthoreg::scheduler::{
    adjustment_epochs, calibrate_reg_coefficient, enforce_cap, share, BalanceConfig,
};
use orthoreg::trainer::{
    inaccessible_orthogonality_demo, make_synthetic_dataset, objective_for, train, DemoConfig,
    ToyNetwork, TrainConfig,
};
use orthoreg::KernelMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tempfile::TempDir;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load<T: serde::de::DeserializeOwned>(name: &str) -> T {
    serde_json::from_str(&std::fs::read_to_string(configs().join(name)).unwrap()).unwrap()
}

fn kernel(rng: &mut ChaCha8Rng, o: usize, d: usize, scale: f64) -> KernelMatrix {
    let data = (0..o * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    KernelMatrix::from_rows(o, d, data).unwrap()
}

fn dense(k: &KernelMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(k.rows(), k.cols(), k.data())
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn central_diff(x: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += step;
            down[j] -= step;
            (f(&up) - f(&down)) / (2.0 * step)
        })
        .collect()
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

fn c1_decomposition() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let shapes = [(4, 12), (8, 8), (16, 8), (5, 20), (30, 10)];
    let mut worst = 0.0f64;
    for n in 0..100 {
        let (o, d) = shapes[n % shapes.len()];
        let k = kernel(&mut rng, o, d, 0.6);
        let direct = (&dense(&k) * dense(&k).transpose() - DMatrix::identity(o, o)).norm();
        worst = worst.max((decomposed_frobenius(&k) - direct).abs() / direct);
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-10 && within(el, Duration::from_secs(1)),
        format!("worst relative gap {worst:.2e}, {el:.2?}"),
    )
}

fn c2_floor() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut shapes = vec![(16, 8), (128, 64)];
    for n in 0..98 {
        let d = 1 + n % 12;
        shapes.push((d + 1 + n % 7, d));
    }
    let mut breaches = 0;
    for &(o, d) in &shapes {
        let k = kernel(&mut rng, o, d, 1.0 / (d as f64).sqrt());
        if frobenius_loss(&k).total < ((o - d) as f64).sqrt() - 1e-9 {
            breaches += 1;
        }
    }
    let demo =
        inaccessible_orthogonality_demo(&load::<DemoConfig>("demo_inaccessible.json")).unwrap();
    let demo_ok =
        demo.all_above_floor && demo.rows.iter().all(|r| r.residual >= (8f64).sqrt() - 1e-6);
    let min_residual = demo
        .rows
        .iter()
        .map(|r| r.residual)
        .fold(f64::INFINITY, f64::min);
    let el = t.elapsed();
    outcome(
        breaches == 0 && demo_ok && within(el, Duration::from_secs(30)),
        format!(
            "{breaches} of {} kernels below floor; demo min residual {min_residual:.6} vs {:.6}; {el:.2?}",
            shapes.len(),
            8f64.sqrt()
        ),
    )
}

fn c3_srip() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut checked, mut misses, mut worst, mut attempt) = (0, 0, 0.0f64, 0u64);
    while checked < 50 {
        attempt += 1;
        let o = 3 + (attempt as usize) % 6;
        let k = kernel(&mut rng, o, o + 2, 0.6);
        let a = &dense(&k) * dense(&k).transpose() - DMatrix::identity(o, o);
        let mut mags: Vec<f64> = a
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .collect();
        mags.sort_by(|x, y| y.partial_cmp(x).unwrap());
        if (mags[0] - mags[1]) / mags[0] < 0.1 {
            continue;
        }
        checked += 1;
        let err = (srip_loss(&k, &RegularizerSpec::srip(attempt)).total - mags[0]).abs() / mags[0];
        worst = worst.max(err);
        if err > 0.05 {
            misses += 1;
        }
    }
    let diag = KernelMatrix::from_row_vecs(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let exact = srip_loss(&diag, &RegularizerSpec::srip(0)).total;
    let el = t.elapsed();
    outcome(
        misses == 0 && exact == 3.0 && within(el, Duration::from_secs(5)),
        format!(
            "{misses}/50 beyond 5% (worst {:.1}%); diag(2,1) = {exact}; {el:.2?}",
            worst * 100.0
        ),
    )
}

fn c4_gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for variant in [
        Variant::Frobenius,
        Variant::ScaledFrobenius,
        Variant::Srip,
        Variant::Disentangled,
        Variant::RelaxedDisentangled,
    ] {
        for n in 0..20 {
            let (o, d) = [(4, 6), (6, 4), (5, 5), (8, 12)][n % 4];
            let k = kernel(&mut rng, o, d, 0.5);
            let mut spec = RegularizerSpec::new(variant);
            spec.lambda_diag = 0.25;
            spec.seed = n as u64;
            if variant == Variant::RelaxedDisentangled {
                spec.exemption_mask =
                    Some(build_exemption_mask(&correlation_tril(&k).unwrap(), 2, 2));
            }
            let analytic = regularizer_gradient(&k, &spec).unwrap().gradient.unwrap();
            let numeric = central_diff(k.data(), 1e-5, |p| {
                evaluate(&KernelMatrix::from_rows(o, d, p.to_vec()).unwrap(), &spec)
                    .unwrap()
                    .total
            });
            worst = worst.max(rel_err(&analytic, &numeric));
        }
    }
    let cfg: TrainConfig = load("train_strict.json");
    let (data, _) = make_synthetic_dataset(&cfg.dataset, cfg.seed).unwrap();
    let net = ToyNetwork::new(&cfg.layer_sizes(), cfg.seed).unwrap();
    let obj = objective_for(&cfg, &net).unwrap();
    let batch: Vec<usize> = (0..16).collect();
    let (_, grads) = obj.value_and_gradient(&net, &data, &batch, 0).unwrap();
    let numeric = central_diff(&net.flat_params(), 1e-5, |p| {
        obj.value(&net.with_flat_params(p), &data, &batch, 0)
            .unwrap()
            .total
    });
    let e2e = rel_err(&grads.flatten(), &numeric);
    let el = t.elapsed();
    outcome(
        worst <= 1e-4 && e2e <= 1e-4 && within(el, Duration::from_secs(60)),
        format!("worst kernel error {worst:.2e}, end-to-end {e2e:.2e}; {el:.2?}"),
    )
}

fn c5_monte_carlo() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (f, b) in [(2usize, 2usize), (60, 100), (64, 64), (144, 16)] {
        let est = expected_relaxed_pairs(f, b, 10_000, 0).unwrap();
        let truth = (f * (f - 1)) as f64 / 2.0 / b as f64;
        let z = (est.mean - truth).abs() / est.std_error;
        pass &= z <= 3.0;
        parts.push(format!("({f},{b}) {z:.2}se"));
    }
    pass &= closed_form_pairs(64, 64) == 31.5;
    let el = t.elapsed();
    outcome(
        pass && within(el, Duration::from_secs(5)),
        format!("{}; {el:.2?}", parts.join(", ")),
    )
}

fn c6_transition() -> Outcome {
    let cases = [
        ((100, 30, 100), 100),
        ((10, 30, 30), 30),
        ((100, 30, 60), 60),
        ((100, 30, 80), 80),
    ];
    let got: Vec<usize> = cases
        .iter()
        .map(|&((a, i, m), _)| transition_dimension(&TransitionConfig::new(a, i, m).unwrap()))
        .collect();
    let want: Vec<usize> = cases.iter().map(|c| c.1).collect();
    outcome(got == want, format!("{got:?}"))
}

fn c7_ratio_maps() -> Outcome {
    let mut pass = true;
    for pattern in [RatioPattern::Linear, RatioPattern::Log, RatioPattern::Exp] {
        for least in [0.0, 0.25, 0.6] {
            for count in 2..10 {
                let map = build_ratio_map(count, &RatioMapConfig::new(least, pattern).unwrap());
                pass &= map[0] == least;
                pass &= map.windows(2).all(|w| w[0] <= w[1]);
                if pattern != RatioPattern::Exp {
                    pass &= map[count - 1] == 1.0;
                }
            }
        }
    }
    let exp = build_ratio_map(2, &RatioMapConfig::new(0.0, RatioPattern::Exp).unwrap())[1];
    let gap = (exp - (1.0 - (-1.0f64).exp())).abs();
    outcome(pass && gap <= 1e-12, format!("exp endpoint gap {gap:.1e}"))
}

fn c8_scheduler() -> Outcome {
    let cfg = BalanceConfig {
        milestone_epochs: vec![80, 120, 160],
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for (task, raw) in [(0.9, 1.0), (2.3, 0.5), (0.01, 40.0), (5.0, 1e-3)] {
        let c = calibrate_reg_coefficient(task, raw, 0.10).unwrap();
        worst = worst.max((share(task, c * raw) - 0.10).abs());
    }
    let (task, raw) = (1.0, 2.0);
    let capped = enforce_cap(task, 1.0, raw, &cfg);
    let cap_gap = (share(task, capped * raw) - 0.35).abs();
    let idempotent = enforce_cap(task, capped, raw, &cfg) == capped;
    let epochs = adjustment_epochs(&cfg, 200);
    outcome(
        worst <= 1e-12 && cap_gap <= 1e-15 && idempotent && epochs == vec![80, 100, 120, 140, 160],
        format!("calibration gap {worst:.1e}, cap share gap {cap_gap:.1e}, epochs {epochs:?}"),
    )
}

fn mean_abs_corr(k: &KernelMatrix) -> f64 {
    let t = correlation_tril(k).unwrap();
    t.entries().iter().map(|x| x.abs()).sum::<f64>() / t.len() as f64
}

fn c9_training() -> Outcome {
    let t = Instant::now();
    let (v_net, _) = train(&load::<TrainConfig>("train_vanilla.json")).unwrap();
    let (s_net, hist) = train(&load::<TrainConfig>("train_strict.json")).unwrap();
    let r = &hist.last().unwrap().layers[0];
    let gap = mean_abs_corr(&v_net.layers[0].weight) - mean_abs_corr(&s_net.layers[0].weight);
    let demo =
        inaccessible_orthogonality_demo(&load::<DemoConfig>("demo_inaccessible.json")).unwrap();
    let cmp = demo.comparison.unwrap();
    let el = t.elapsed();
    outcome(
        (r.rows, r.cols) == (8, 32)
            && r.tril_std <= 0.05
            && (0.8..=1.2).contains(&r.diag_mean)
            && gap >= 0.01
            && cmp.relaxed_masked_corr < cmp.strict_corr
            && within(el, Duration::from_secs(300)),
        format!(
            "strict {}x{} std {:.4} diag {:.3}, |tril| gap {gap:.3}; masked {:.4} < strict {:.4}; {el:.2?}",
            r.rows, r.cols, r.tril_std, r.diag_mean, cmp.relaxed_masked_corr, cmp.strict_corr
        ),
    )
}

fn c10_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_orthoreg");
    let arch = configs().join("wrn16_8.json");
    let train_cfg = configs().join("train_relaxed.json");
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = TempDir::new().unwrap();
            let plan_out = dir.path().join("plan.json");
            let mut bytes = Vec::new();
            let out = Command::new(exe)
                .arg("plan")
                .arg(&arch)
                .args([
                    "--attribute",
                    "100",
                    "--max-transition",
                    "100",
                    "--seed",
                    "5",
                    "--out",
                ])
                .arg(&plan_out)
                .output()
                .unwrap();
            assert!(out.status.success());
            bytes.extend(out.stdout);
            bytes.extend(std::fs::read(&plan_out).unwrap());
            let out = Command::new(exe)
                .args([
                    "simulate", "--freed", "144", "--boxes", "16", "--seed", "9", "--json",
                ])
                .output()
                .unwrap();
            bytes.extend(out.stdout);
            let out = Command::new(exe)
                .arg("train")
                .arg(&train_cfg)
                .arg("--out-dir")
                .arg(dir.path())
                .output()
                .unwrap();
            assert!(out.status.success());
            bytes.extend(out.stdout);
            for f in ["metrics.jsonl", "schedule.jsonl", "summary.txt"] {
                bytes.extend(std::fs::read(dir.path().join(f)).unwrap());
            }
            bytes
        })
        .collect();
    outcome(
        runs[0] == runs[1],
        format!("{} bytes compared", runs[0].len()),
    )
}

#[test]
fn acceptance() {
    let criteria: [Check; 10] = [
        ("decomposition identity", c1_decomposition),
        ("over-determined floor", c2_floor),
        ("SRIP fidelity", c3_srip),
        ("gradient checks", c4_gradients),
        ("Monte Carlo oracle", c5_monte_carlo),
        ("transition dimension", c6_transition),
        ("ratio maps", c7_ratio_maps),
        ("scheduler algebra", c8_scheduler),
        ("desk-scale training effect", c9_training),
        ("determinism", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (n, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!(
            "criterion {:>2} {:<28} {}  {}",
            n + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(n + 1);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
