use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use seqtransport::basis::{FeatureBasis, ReferenceMeasure};
use seqtransport::bridging::{
    beta_schedule_exp, beta_schedule_log, diffusion_time_schedule, BridgingSchedule, ScheduleKind,
    DEFAULT_B, DEFAULT_RHO, DEFAULT_T_MAX,
};
use seqtransport::fit::{encode_conic, FitProblem, IntegralMode};
use seqtransport::model_io::{load_model, save_model, ModelFile};
use seqtransport::pipeline::{
    ess, fit_from_data, fit_from_density, parse_csv, preprocess, DataSchedule, PipelineFailure,
    PreprocessConfig, Run, RunReport, SequentialConfig, Table,
};
use seqtransport::rng::{derive_seed, Purpose};
use seqtransport::targets::{builtin_target, BuiltinTarget};
use seqtransport::transport::ComposedMap;

use crate::config::{pick, Config};
use crate::error::{read, usage, write, CliError, CliResult};
use crate::{Command, FitArgs};

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::FitDensity {
            common,
            target,
            params,
            alpha,
            samples,
            diagnostic_samples,
            schedule,
            integral,
        } => fit_density(common, target, params, alpha, samples, diagnostic_samples, schedule, integral),
        Command::FitData {
            common,
            data,
            l0,
            layers_max,
            enrichment,
            schedule,
            layers,
            b,
            rho,
            t_max,
            validation_fraction,
            test_fraction,
            corr_threshold,
            discrete_max,
            split_seed,
        } => {
            let cfg = load_config(&common.config)?;
            let pre = PreprocessConfig {
                corr_threshold: pick(corr_threshold, &cfg, "data.corr_threshold")?.unwrap_or(0.98),
                discrete_max: pick(discrete_max, &cfg, "data.discrete_max")?.unwrap_or(20),
                test_fraction: pick(test_fraction, &cfg, "data.test_fraction")?.unwrap_or(0.1),
                validation_fraction: pick(validation_fraction, &cfg, "data.validation_fraction")?
                    .unwrap_or(0.2),
                seed: pick(split_seed, &cfg, "data.split_seed")?.unwrap_or(0),
            };
            let mut sc = sequential_config(&common, &cfg, ReferenceMeasure::gaussian(1))?;
            sc.l0 = pick(l0, &cfg, "data.l0")?.unwrap_or(sc.l0);
            sc.layers_max = pick(layers_max, &cfg, "data.layers_max")?.unwrap_or(sc.layers_max);
            sc.enrichment = pick(enrichment, &cfg, "data.enrichment")?.unwrap_or(1);
            sc.diffusion_b = pick(b, &cfg, "schedule.B")?.unwrap_or(DEFAULT_B);
            sc.diffusion_rho = pick(rho, &cfg, "schedule.rho")?.unwrap_or(DEFAULT_RHO);
            sc.t_max = pick(t_max, &cfg, "schedule.t_max")?.unwrap_or(DEFAULT_T_MAX);
            let kind: String = pick(schedule, &cfg, "schedule.kind")?.unwrap_or("adaptive".into());
            let sched = match kind.as_str() {
                "adaptive" => DataSchedule::Adaptive,
                "fixed" => {
                    let l = pick(layers, &cfg, "schedule.layers")?.unwrap_or(20);
                    let s = diffusion_time_schedule(sc.diffusion_b, sc.diffusion_rho, l)?;
                    DataSchedule::Fixed(s.capped(sc.t_max))
                }
                other => return Err(usage(format!("unknown data schedule `{other}`"))),
            };
            fit_data(&common, &data, pre, sc, sched)
        }
        Command::Sample { model, n, seed, out } => sample(&model, n, seed, out),
        Command::Logpdf { model, data, out } => logpdf(&model, &data, out),
        Command::Report {
            model,
            metrics,
            data,
            target,
            params,
            n,
            seed,
        } => report(&model, &metrics, data, target, params, n, seed),
        Command::ExportConic {
            target,
            params,
            alpha,
            degree,
            samples,
            seed,
            integral,
            out,
        } => export_conic(&target, params, alpha, degree, samples, seed, &integral, out),
        Command::Schedule {
            kind,
            layers,
            b,
            rho,
            c1,
            a,
        } => {
            let s = match kind.as_str() {
                "diffusion" => diffusion_time_schedule(b, rho, layers)?,
                "tempering-log" => beta_schedule_log(c1, layers)?,
                "tempering-exp" => beta_schedule_exp(a, layers)?,
                other => return Err(usage(format!("unknown schedule kind `{other}`"))),
            };
            let mut text = String::new();
            for (l, v) in s.values().iter().enumerate() {
                let _ = writeln!(text, "{} {v:.16e}", l + 1);
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: &Option<String>) -> CliResult<Config> {
    match path {
        Some(p) => Config::parse(&read(p)?),
        None => Ok(Config::default()),
    }
}

fn sequential_config(common: &FitArgs, cfg: &Config, reference: ReferenceMeasure) -> CliResult<SequentialConfig> {
    let mut sc = SequentialConfig::new(reference);
    sc.degree = pick(common.degree, cfg, "fit.degree")?.unwrap_or(2);
    sc.seed = pick(common.seed, cfg, "fit.seed")?.unwrap_or(0);
    sc.solver.max_iterations =
        pick(common.max_iterations, cfg, "fit.max_iterations")?.unwrap_or(sc.solver.max_iterations);
    sc.lazy_rank = match common.lazy_rank {
        Some(r) => Some(r),
        None => match cfg.get("fit.lazy_rank") {
            None | Some("off") => None,
            Some(v) => Some(v.parse().map_err(|_| usage(format!("bad lazy rank `{v}`")))?),
        },
    };
    Ok(sc)
}

fn parse_params(flags: &[String], cfg: &Config) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (k, v) in cfg.target_params() {
        let v = v.parse().map_err(|_| usage(format!("target parameter `{k}`: bad number `{v}`")))?;
        out.insert(k.to_string(), v);
    }
    for p in flags {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| usage(format!("--param expects key=value, got `{p}`")))?;
        let v = v.parse().map_err(|_| usage(format!("--param {k}: bad number `{v}`")))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn load_target(name: &str, params: &[String], cfg: &Config) -> CliResult<BuiltinTarget> {
    builtin_target(name, &parse_params(params, cfg)?).map_err(|e| usage(e.to_string()))
}

/// Reference and tempering split `(ln ℒ, ln π₀)` of a built-in target.
///
/// The SIR posterior lives on the uniform cube through `θ = 1 + x`; the
/// other targets are bridged from the standard Gaussian.
fn density_target(t: &BuiltinTarget) -> (ReferenceMeasure, impl Fn(&[f64]) -> (f64, f64) + Sync + '_) {
    let reference = match t {
        BuiltinTarget::Sir(_) => ReferenceMeasure::uniform_cube(2),
        _ => ReferenceMeasure::gaussian(t.dim()),
    };
    let parts = move |x: &[f64]| match t {
        BuiltinTarget::Sir(s) => s.cube_parts(x),
        _ => {
            let lr = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
            (t.log_density(x) - lr, lr)
        }
    };
    (reference, parts)
}

fn digest(report: &RunReport) -> String {
    Sha256::digest(report.deterministic_text().as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Writes model and report; a failed run still leaves its partial output.
fn finish(
    outcome: Result<Run, PipelineFailure>,
    common: &FitArgs,
    meta: Vec<(String, String)>,
    extra: impl FnOnce(&mut Run) -> CliResult<()>,
) -> CliResult<()> {
    let (mut run, error) = match outcome {
        Ok(r) => (r, None),
        Err(f) => (*f.partial, Some(f.error)),
    };
    if error.is_none() {
        extra(&mut run)?;
    }
    let hash = digest(&run.report);
    let mut model = ModelFile::new(run.map.clone());
    model.meta = meta;
    model.meta.push(("report_digest".into(), hash.clone()));
    if let Some(path) = &common.out {
        save_model(&model, path)?;
    }
    let text = format!("{}digest = {hash}\n", run.report.to_text());
    match &common.report {
        Some(path) => write(path, &text)?,
        None if common.out.is_none() => print!("{text}"),
        None => {}
    }
    println!("layers = {}", run.map.len());
    println!("digest = {hash}");
    match error {
        Some(e) => Err(CliError::Core(e)),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_density(
    common: FitArgs,
    target: Option<String>,
    params: Vec<String>,
    alpha: Option<f64>,
    samples: Option<usize>,
    diagnostic_samples: Option<usize>,
    schedule: Option<String>,
    integral: Option<String>,
) -> CliResult<()> {
    let cfg = load_config(&common.config)?;
    let name: String = pick(target, &cfg, "target.name")?.ok_or_else(|| usage("--target is required"))?;
    let t = load_target(&name, &params, &cfg)?;
    let (reference, parts) = density_target(&t);
    let mut sc = sequential_config(&common, &cfg, reference)?;
    sc.alpha = pick(alpha, &cfg, "fit.alpha")?.unwrap_or(1.0);
    sc.samples = pick(samples, &cfg, "fit.samples")?.unwrap_or(sc.samples);
    sc.diagnostic_samples =
        pick(diagnostic_samples, &cfg, "fit.diagnostic_samples")?.unwrap_or(sc.diagnostic_samples);
    sc.integral = match pick(integral, &cfg, "fit.integral")?.as_deref() {
        None | Some("trace") => IntegralMode::Trace,
        Some("samples") => IntegralMode::Samples,
        Some(other) => return Err(usage(format!("unknown integral mode `{other}`"))),
    };
    let values: String = pick(schedule, &cfg, "schedule.values")?.unwrap_or("0.125,0.25,0.5,1".into());
    let betas = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("bad schedule `{values}`")))?;
    let sched = BridgingSchedule::explicit(ScheduleKind::Tempering, betas).map_err(|e| usage(e.to_string()))?;
    let outcome = fit_from_density(parts, &sched, &sc);
    let meta = vec![
        ("command".into(), "fit-density".into()),
        ("target".into(), name),
        ("seed".into(), sc.seed.to_string()),
    ];
    finish(outcome, &common, meta, |_| Ok(()))
}

/// Column selection and z-scoring recorded in a model file.
struct Standardizer {
    columns: Vec<String>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

impl Standardizer {
    fn from_model(model: &ModelFile) -> CliResult<Option<Self>> {
        let Some(columns) = model.meta("preprocess.columns") else {
            return Ok(None);
        };
        let nums = |key: &str| -> CliResult<Vec<f64>> {
            model
                .meta(key)
                .ok_or_else(|| usage(format!("model is missing `{key}`")))?
                .split(',')
                .map(|v| v.parse().map_err(|_| usage(format!("model field `{key}` is malformed"))))
                .collect()
        };
        let s = Self {
            columns: columns.split(',').map(String::from).collect(),
            means: nums("preprocess.means")?,
            scales: nums("preprocess.scales")?,
        };
        if s.means.len() != s.columns.len() || s.scales.len() != s.columns.len() {
            return Err(usage("model preprocessing fields differ in length"));
        }
        Ok(Some(s))
    }

    fn log_scale(&self) -> f64 {
        self.scales.iter().map(|s| s.ln()).sum()
    }
}

fn fit_data(
    common: &FitArgs,
    path: &str,
    pre: PreprocessConfig,
    mut sc: SequentialConfig,
    sched: DataSchedule,
) -> CliResult<()> {
    let table = parse_csv(&read(path)?)?;
    let ds = preprocess(&table, &pre)?;
    sc.reference = ReferenceMeasure::gaussian(ds.dim());
    let outcome = fit_from_data(&ds.train(), &ds.validation(), &sched, &sc);
    let meta = vec![
        ("command".into(), "fit-data".into()),
        ("seed".into(), sc.seed.to_string()),
        ("split_seed".into(), pre.seed.to_string()),
        ("preprocess.columns".into(), ds.names.join(",")),
        ("preprocess.means".into(), join(&ds.means)),
        ("preprocess.scales".into(), join(&ds.scales)),
    ];
    let log_scale: f64 = ds.scales.iter().map(|s| s.ln()).sum();
    finish(outcome, common, meta, |run| {
        let test = ds.test();
        let nll = seqtransport::pipeline::negative_log_likelihood(&run.map, &test)?;
        run.report.set("test_rows", test.len());
        run.report.set_f64("final.test_nll", nll.mean + log_scale);
        run.report.set_f64("final.test_nll_standardized", nll.mean);
        for (name, why) in &ds.dropped {
            run.report.set(format!("preprocess.dropped.{name}"), why);
        }
        Ok(())
    })
}

/// Rows in model coordinates and the log-Jacobian of the standardization.
fn model_rows(model: &ModelFile, path: &str) -> CliResult<(Vec<Vec<f64>>, f64)> {
    let table = parse_csv(&read(path)?)?;
    let d = model.map.dim();
    match Standardizer::from_model(model)? {
        Some(s) => {
            let idx = s
                .columns
                .iter()
                .map(|c| {
                    table
                        .names
                        .iter()
                        .position(|n| n == c)
                        .ok_or_else(|| usage(format!("data has no column `{c}`")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let rows = table
                .rows
                .iter()
                .map(|r| idx.iter().enumerate().map(|(k, &i)| (r[i] - s.means[k]) / s.scales[k]).collect())
                .collect();
            Ok((rows, s.log_scale()))
        }
        None => {
            if table.names.len() != d {
                return Err(usage(format!("data has {} columns, model has {d}", table.names.len())));
            }
            Ok((table.rows, 0.0))
        }
    }
}

fn sample(path: &str, n: usize, seed: u64, out: Option<String>) -> CliResult<()> {
    let model = load_model(path)?;
    let z = model.map.sample(n, seed)?;
    let (names, rows) = match Standardizer::from_model(&model)? {
        Some(s) => {
            let rows = z
                .iter()
                .map(|r| r.iter().enumerate().map(|(k, v)| v * s.scales[k] + s.means[k]).collect())
                .collect();
            (s.columns, rows)
        }
        None => ((1..=model.map.dim()).map(|k| format!("x{k}")).collect(), z),
    };
    emit(out, &Table::new(names, rows)?.to_csv()?)
}

fn emit(out: Option<String>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write(&p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn logpdf(path: &str, data: &str, out: Option<String>) -> CliResult<()> {
    let model = load_model(path)?;
    let (rows, log_scale) = model_rows(&model, data)?;
    let values = model.map.pushforward_logpdf_batch(&rows)?;
    let table = Table::new(
        vec!["logpdf".into()],
        values.into_iter().map(|v| vec![v - log_scale]).collect(),
    )?;
    emit(out, &table.to_csv()?)
}

#[allow(clippy::too_many_arguments)]
fn report(
    path: &str,
    metrics: &str,
    data: Option<String>,
    target: Option<String>,
    params: Vec<String>,
    n: usize,
    seed: u64,
) -> CliResult<()> {
    let model = load_model(path)?;
    let mut r = RunReport::new();
    for metric in metrics.split(',').map(str::trim) {
        match metric {
            "nll" => {
                let data = data.as_deref().ok_or_else(|| usage("nll needs --data"))?;
                let (rows, log_scale) = model_rows(&model, data)?;
                let nll = seqtransport::pipeline::negative_log_likelihood(&model.map, &rows)?;
                r.set("nll.count", nll.count);
                r.set_f64("nll.mean", nll.mean + log_scale);
                r.set_f64("nll.total", nll.total + log_scale * nll.count as f64);
            }
            "ess" => {
                let name = target.as_deref().ok_or_else(|| usage("ess needs --target"))?;
                let t = load_target(name, &params, &Config::default())?;
                let (value, count) = model_ess(&model, &t, n, seed)?;
                r.set_f64("ess", value);
                r.set_f64("ess.fraction", value / count as f64);
            }
            other => return Err(usage(format!("unknown metric `{other}`"))),
        }
    }
    print!("{}", r.deterministic_text());
    Ok(())
}

/// ESS of the model as an importance proposal for a built-in target, in
/// the coordinates the target was fitted in.
pub fn model_ess(model: &ModelFile, t: &BuiltinTarget, n: usize, seed: u64) -> CliResult<(f64, usize)> {
    if t.dim() != model.map.dim() {
        return Err(usage(format!("target has dimension {}, model {}", t.dim(), model.map.dim())));
    }
    let (_, parts) = density_target(t);
    let xi = ComposedMap::sample_reference(model.map.reference(), n, derive_seed(seed, Purpose::Validation, 0))?;
    let mut lt = Vec::with_capacity(n);
    let mut lq = Vec::with_capacity(n);
    for x in &xi {
        let (y, ld) = model.map.forward_with_logdet(x)?;
        let (a, b) = parts(&y);
        lt.push(a + b);
        lq.push(model.map.reference().log_density(x)? - ld);
    }
    Ok((ess(&lt, &lq)?, n))
}

#[allow(clippy::too_many_arguments)]
fn export_conic(
    name: &str,
    params: Vec<String>,
    alpha: f64,
    degree: u32,
    samples: usize,
    seed: u64,
    integral: &str,
    out: Option<String>,
) -> CliResult<()> {
    let t = load_target(name, &params, &Config::default())?;
    let (reference, parts) = density_target(&t);
    let xi = ComposedMap::sample_reference(&reference, samples, derive_seed(seed, Purpose::Reference, 1))?;
    let log_r = xi
        .iter()
        .map(|x| {
            let (a, b) = parts(x);
            Ok(a + b - reference.log_density(x)?)
        })
        .collect::<seqtransport::Result<Vec<f64>>>()?;
    let max = log_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CliError::Core(seqtransport::Error::DegenerateWeights));
    }
    let ratios = log_r.iter().map(|v| (v - max).exp()).collect();
    let basis = FeatureBasis::total_degree(reference, degree)?;
    let mut features = nalgebra::DMatrix::zeros(samples, basis.len());
    for (i, x) in xi.iter().enumerate() {
        features.row_mut(i).copy_from(&basis.eval(x)?.transpose());
    }
    let mode = match integral {
        "trace" => IntegralMode::Trace,
        "samples" => IntegralMode::Samples,
        other => return Err(usage(format!("unknown integral mode `{other}`"))),
    };
    let problem = FitProblem::divergence(basis, features, ratios, alpha)?.with_integral(mode)?;
    emit(out, &encode_conic(&problem)?.to_text())
}
