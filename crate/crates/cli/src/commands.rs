use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orthoreg::gradcheck::{check_regularizer_gradient, GRAD_TOLERANCE};
use orthoreg::measures::{
    aggregate_reports, correlation_tril, decomposed_frobenius, evaluate, frobenius_loss,
    near_orth_report, NearOrthReport, RegularizerSpec, Variant,
};
use orthoreg::relaxation::{
    build_exemption_mask, build_plan, build_ratio_map, closed_form_pairs, expected_relaxed_pairs,
    plan_from_json, plan_to_json, PairEstimate, PlanOptions, RatioMapConfig, RelaxationPlanEntry,
    TransitionConfig,
};
use orthoreg::tensor::{load_architecture, read_tensor_file, reshape_kernel};
use orthoreg::trainer::{inaccessible_orthogonality_demo, train, DemoConfig, TrainConfig};
use orthoreg::KernelMatrix;
use serde::{Deserialize, Serialize};

use crate::{Command, LossArgs, NumericalFailure, PlanArgs};

/// Flags that parse but do not make sense together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub freed: usize,
    pub boxes: usize,
    pub estimate: PairEstimate,
    pub closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub direct: f64,
    pub decomposed: f64,
    pub relative_difference: f64,
}

const VERIFY_TOLERANCE: f64 = 1e-10;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Report {
            files,
            group_by_shape,
            json,
        } => report(&files, group_by_shape, json),
        Command::Plan(args) => plan(&args),
        Command::Loss(args) => loss(&args),
        Command::Gradcheck(args) => gradcheck(&args),
        Command::Simulate {
            freed,
            boxes,
            trials,
            seed,
            json,
        } => simulate(freed, boxes, trials, seed, json),
        Command::RatioMap {
            modules,
            least_ratio,
            pattern,
            json,
        } => {
            if modules == 0 {
                return Err(UsageError("--modules must be positive".into()).into());
            }
            let map = build_ratio_map(modules, &RatioMapConfig::new(least_ratio, pattern.into())?);
            if json {
                println!("{}", serde_json::to_string(&map)?);
            } else {
                for (i, r) in map.iter().enumerate() {
                    println!("{i:>4}  {r:.6}");
                }
            }
            Ok(())
        }
        Command::Verify { file, json } => verify(&file, json),
        Command::Train { config, out_dir } => train_cmd(&config, &out_dir),
        Command::DemoInaccessible { config, out_dir } => demo(&config, &out_dir),
    }
}

fn load_kernel(path: &Path) -> Result<KernelMatrix> {
    let t = read_tensor_file(path).with_context(|| format!("reading {}", path.display()))?;
    let name = t.name().to_string();
    Ok(reshape_kernel(&t)?.with_source(name))
}

fn report(files: &[PathBuf], group: bool, json: bool) -> Result<()> {
    let mut reports = Vec::with_capacity(files.len());
    for f in files {
        let k = load_kernel(f)?;
        let name = k.source().unwrap_or_default().to_string();
        reports.push(near_orth_report(&k, name)?);
    }
    if group {
        reports = aggregate_reports(&reports);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        print!("{}", report_table(&reports));
    }
    Ok(())
}

fn report_table(reports: &[NearOrthReport]) -> String {
    let mut out = format!("{:<24} {:>12}  {}\n", "layer", "shape", "mean ± std/diag");
    for r in reports {
        out.push_str(&format!(
            "{:<24} {:>12}  {}\n",
            r.layer_name,
            format!("{}x{}", r.rows, r.cols),
            r.table_cell()
        ));
    }
    out
}

fn plan(args: &PlanArgs) -> Result<()> {
    let text = fs::read_to_string(&args.arch)
        .with_context(|| format!("reading {}", args.arch.display()))?;
    let arch = load_architecture(&text)?;
    let transition = TransitionConfig::new(args.attribute, args.intrinsic, args.max_transition)?;
    let ratio = RatioMapConfig::new(args.least_ratio, args.pattern.into())?;
    let opts = PlanOptions {
        trials: args.trials,
        seed: args.seed,
    };
    let plan = build_plan(&arch, &transition, &ratio, opts)?;
    let json = plan_to_json(&plan)?;
    if let Some(out) = &args.out {
        fs::write(out, format!("{json}\n"))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    if args.json {
        println!("{json}");
    } else {
        print!("{}", plan_table(&plan));
    }
    Ok(())
}

fn plan_table(plan: &[RelaxationPlanEntry]) -> String {
    let mut out = format!(
        "{:<20} {:>6} {:>7} {:>16} {:>10} {:>6} {:>10} {:>6} {:>8}\n",
        "layer", "o", "d", "class", "structural", "freed", "pairs", "ratio", "exempt"
    );
    for e in plan {
        let class = serde_json::to_value(e.determinacy)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        out.push_str(&format!(
            "{:<20} {:>6} {:>7} {:>16} {:>10} {:>6} {:>10.3} {:>6.3} {:>4}+{:<3}\n",
            e.layer,
            e.o,
            e.d,
            class,
            e.structural_dim,
            e.freed_count,
            e.expected_relaxed_pairs,
            e.ratio,
            e.exempt_positive,
            e.exempt_negative
        ));
    }
    out
}

fn mask_entry<'a>(
    plan: &'a [RelaxationPlanEntry],
    k: &KernelMatrix,
) -> Result<&'a RelaxationPlanEntry> {
    let name = k.source().unwrap_or_default();
    if let Some(e) = plan.iter().find(|e| e.layer == name) {
        if (e.o, e.d) != k.shape() {
            bail!(
                "plan entry {} is {}x{} but the tensor is {}x{}",
                e.layer,
                e.o,
                e.d,
                k.rows(),
                k.cols()
            );
        }
        return Ok(e);
    }
    let matches: Vec<_> = plan.iter().filter(|e| (e.o, e.d) == k.shape()).collect();
    match matches.as_slice() {
        [one] => Ok(one),
        [] => bail!("no plan entry matches {name:?} or shape {:?}", k.shape()),
        _ => bail!(
            "several plan entries match shape {:?}; name the tensor after its layer",
            k.shape()
        ),
    }
}

fn spec_for(args: &LossArgs, k: &KernelMatrix) -> Result<RegularizerSpec> {
    let variant: Variant = args.measure.into();
    let mut spec = RegularizerSpec::new(variant);
    spec.lambda_diag = args.lambda;
    spec.seed = args.seed;
    spec.power_iterations = args.power_iterations;
    match (&args.mask, variant) {
        (Some(path), Variant::RelaxedDisentangled) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let plan = plan_from_json(&text)?;
            let entry = mask_entry(&plan, k)?;
            let tril = correlation_tril(k)?;
            spec.exemption_mask = Some(build_exemption_mask(
                &tril,
                entry.exempt_positive,
                entry.exempt_negative,
            ));
        }
        (None, Variant::RelaxedDisentangled) => {
            return Err(UsageError("--measure relaxed-disentangled needs --mask".into()).into())
        }
        (Some(_), _) => {
            return Err(UsageError("--mask only applies to relaxed-disentangled".into()).into())
        }
        (None, _) => {}
    }
    Ok(spec)
}

fn loss(args: &LossArgs) -> Result<()> {
    let k = load_kernel(&args.file)?;
    let spec = spec_for(args, &k)?;
    let result = evaluate(&k, &spec)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        println!("total {}", result.total);
        if spec.variant.is_disentangled() {
            println!("corr  {}", result.corr_component);
            println!("diag  {}", result.diag_component);
        }
        if result.degenerate {
            println!("degenerate input");
        }
    }
    Ok(())
}

fn gradcheck(args: &LossArgs) -> Result<()> {
    let k = load_kernel(&args.file)?;
    let spec = spec_for(args, &k)?;
    let report = check_regularizer_gradient(&k, &spec)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("max relative error {:.3e}", report.relative_error);
        println!(
            "max abs error      {:.3e} at {}",
            report.max_abs_error, report.worst_index
        );
    }
    if !report.passed(GRAD_TOLERANCE) {
        return Err(NumericalFailure(format!(
            "gradient check failed: {:.3e} > {GRAD_TOLERANCE:e}",
            report.relative_error
        ))
        .into());
    }
    if !args.json {
        println!("pass");
    }
    Ok(())
}

fn simulate(freed: usize, boxes: usize, trials: usize, seed: u64, json: bool) -> Result<()> {
    if boxes == 0 || trials == 0 {
        return Err(UsageError("--boxes and --trials must be positive".into()).into());
    }
    let out = SimulateOutput {
        freed,
        boxes,
        estimate: expected_relaxed_pairs(freed, boxes, trials, seed)?,
        closed_form: closed_form_pairs(freed, boxes),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("estimate     {:.6}", out.estimate.mean);
        println!("std error    {:.6}", out.estimate.std_error);
        println!("closed form  {:.6}", out.closed_form);
    }
    Ok(())
}

fn verify(file: &Path, json: bool) -> Result<()> {
    let k = load_kernel(file)?;
    let direct = frobenius_loss(&k).total;
    let decomposed = decomposed_frobenius(&k);
    let relative_difference = if direct > 0.0 {
        (decomposed - direct).abs() / direct
    } else {
        decomposed.abs()
    };
    let out = VerifyOutput {
        direct,
        decomposed,
        relative_difference,
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("direct      {direct:.15e}");
        println!("decomposed  {decomposed:.15e}");
        println!("rel diff    {relative_difference:.3e}");
    }
    if relative_difference > VERIFY_TOLERANCE {
        return Err(NumericalFailure(format!(
            "identity off by {relative_difference:e} > {VERIFY_TOLERANCE:e}"
        ))
        .into());
    }
    Ok(())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn train_cmd(config: &Path, out_dir: &Path) -> Result<()> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: TrainConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    cfg.resolve_paths(&config_dir(config));
    let (_, history) = train(&cfg)?;
    fs::create_dir_all(out_dir)?;
    write(out_dir, "metrics.jsonl", &history.to_json_lines()?)?;
    let mut schedule = String::new();
    for adj in &history.adjustments {
        schedule.push_str(&serde_json::to_string(adj)?);
        schedule.push('\n');
    }
    write(out_dir, "schedule.jsonl", &schedule)?;
    let summary = history.summary_table();
    write(out_dir, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn demo(config: &Path, out_dir: &Path) -> Result<()> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: DemoConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    cfg.base.resolve_paths(&config_dir(config));
    let report = inaccessible_orthogonality_demo(&cfg)?;
    fs::create_dir_all(out_dir)?;
    write(
        out_dir,
        "demo.json",
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;
    let table = report.table();
    write(out_dir, "demo.txt", &table)?;
    print!("{table}");
    if !report.all_above_floor {
        return Err(NumericalFailure("a residual fell below the rank floor".into()).into());
    }
    Ok(())
}
