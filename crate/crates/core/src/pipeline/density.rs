use std::time::Instant;

use rayon::prelude::*;

use super::{failure, Discretization, fit_layer, record_fit, Run, PipelineFailure, RunReport, SequentialConfig};
use crate::basis::tensor_rule;
use crate::bridging::{BridgingSchedule, ScheduleKind};
use crate::divergence::phi_alpha_normalized;
use crate::error::{Error, Result};
use crate::numeric::pairwise_mean;
use crate::rng::{derive_seed, Purpose};
use crate::transport::ComposedMap;

/// Shifted log-ratios `ln f(T ξ) + ln|det ∇T(ξ)| - ln ρ(ξ)` for
/// `f = β ln ℒ + ln π₀`, evaluated at fresh reference draws.
fn log_ratios<F>(
    target: &F,
    map: &ComposedMap,
    xi: &[Vec<f64>],
    betas: &[f64],
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> (f64, f64) + Sync,
{
    let rows = xi
        .par_iter()
        .map(|x| -> Result<Vec<f64>> {
            let (y, ld) = map.forward_with_logdet(x)?;
            let (ll, lp) = target(&y);
            let lr = map.reference().log_density(x)?;
            Ok(betas
                .iter()
                .map(|b| {
                    let v = if *b == 0.0 { lp } else { b * ll + lp };
                    if v.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        v + ld - lr
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    // transpose to one vector per exponent
    Ok((0..betas.len())
        .map(|k| rows.iter().map(|r| r[k]).collect())
        .collect())
}

fn exp_shifted(log_r: &[f64]) -> Result<Vec<f64>> {
    let max = log_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(log_r.iter().map(|v| (v - max).exp()).collect())
}

/// Normalized α-divergence estimate of `w/mean(w)` against the reference.
fn residual(log_r: &[f64], alpha: f64) -> Result<f64> {
    let w = exp_shifted(log_r)?;
    let mean = pairwise_mean(&w);
    let terms = w
        .iter()
        .map(|v| phi_alpha_normalized(v / mean, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_mean(&terms))
}

/// Learns `T_L` along a tempering schedule `π^(ℓ) ∝ ℒ^{β_ℓ} π₀`.
///
/// `target` returns `(ln ℒ(x), ln π₀(x))` up to constants; a plain target
/// may return `(ln π(x), 0)`. Each layer uses fresh reference draws.
pub fn fit_from_density<F>(
    target: F,
    schedule: &BridgingSchedule,
    config: &SequentialConfig,
) -> std::result::Result<Run, PipelineFailure>
where
    F: Fn(&[f64]) -> (f64, f64) + Sync,
{
    let mut report = RunReport::new();
    report.set("mode", "density");
    config.echo(&mut report);
    report.set_array("schedule", schedule.values());
    let mut map = ComposedMap::identity(config.reference.clone());
    if let Err(e) = config.validate() {
        return Err(failure(e, &map, report));
    }
    if schedule.kind() != ScheduleKind::Tempering {
        let e = Error::Argument("density mode needs a tempering schedule".into());
        return Err(failure(e, &map, report));
    }
    let mut bridge_trace = Vec::new();
    let mut target_trace = Vec::new();
    let mut ess_trace = Vec::new();
    for (k, &beta) in schedule.values().iter().enumerate() {
        let level = k + 1;
        let start = Instant::now();
        let step = (|| -> Result<_> {
            let (xi, weights) = match config.discretization {
                Discretization::MonteCarlo => {
                    let seed = derive_seed(config.seed, Purpose::Reference, level as u64);
                    let xi = ComposedMap::sample_reference(&config.reference, config.samples, seed)?;
                    (xi, None)
                }
                Discretization::Quadrature(q) => {
                    let d = config.dim();
                    let (nodes, w) = tensor_rule(d, q);
                    let scale = 0.5f64.powi(d as i32);
                    let xi = nodes.iter().map(|u| config.reference.from_canonical(u)).collect();
                    (xi, Some(w.iter().map(|v| v * scale).collect()))
                }
            };
            let log_r = log_ratios(&target, &map, &xi, &[beta])?.remove(0);
            let lf = fit_layer(config, level, &xi, Some(exp_shifted(&log_r)?), weights)?;
            Ok(lf)
        })();
        let lf = match step {
            Ok(lf) => lf,
            Err(e) => {
                let e = Error::Numeric(format!("layer {level}: {e}"));
                return Err(failure(e, &map, report));
            }
        };
        record_fit(&mut report, level, &lf);
        report.set_f64(format!("layer.{level}.beta"), beta);
        if let Err(e) = map.push(lf.layer) {
            return Err(failure(e, &map, report));
        }
        if config.diagnostic_samples > 0 {
            let diag = (|| -> Result<(f64, f64, f64)> {
                let seed = derive_seed(config.seed, Purpose::Validation, level as u64);
                let xi =
                    ComposedMap::sample_reference(&config.reference, config.diagnostic_samples, seed)?;
                let lr = log_ratios(&target, &map, &xi, &[beta, 1.0])?;
                let ess = super::metrics::ess_from_log_ratios(&lr[1])?;
                Ok((
                    residual(&lr[0], config.alpha)?,
                    residual(&lr[1], config.alpha)?,
                    ess / xi.len() as f64,
                ))
            })();
            match diag {
                Ok((b, t, e)) => {
                    bridge_trace.push(b);
                    target_trace.push(t);
                    ess_trace.push(e);
                }
                Err(e) => {
                    let e = Error::Numeric(format!("layer {level} diagnostics: {e}"));
                    return Err(failure(e, &map, report));
                }
            }
        }
        report.timing(format!("layer.{level}"), start.elapsed().as_secs_f64());
    }
    report.set("layers", map.len());
    report.set_array("trace.bridge_residual", &bridge_trace);
    report.set_array("trace.target_residual", &target_trace);
    report.set_array("trace.ess_fraction", &ess_trace);
    if let Some(e) = ess_trace.last() {
        report.set_f64("final.ess_fraction", *e);
    }
    report.set("status", "ok");
    Ok(Run { map, report })
}
