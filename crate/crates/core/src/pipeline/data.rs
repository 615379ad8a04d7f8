use std::time::Instant;

use super::metrics::negative_log_likelihood;
use super::{failure, fit_layer, record_fit, PipelineFailure, Run, RunReport, SequentialConfig};
use crate::bridging::{diffuse_samples, t_data_schedule, BridgingSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose};
use crate::transport::ComposedMap;

/// Diffusion times used by the data-mode driver.
#[derive(Debug, Clone)]
pub enum DataSchedule {
    /// `t_ℓ = t_data(ℓ/L₀)`; after `L₀` layers the loop stops at the first
    /// increase of the validation NLL and returns the previous map.
    Adaptive,
    /// A fixed list of diffusion times; every layer is fitted.
    Fixed(BridgingSchedule),
}

fn validation_nll(map: &ComposedMap, validation: &[Vec<f64>]) -> f64 {
    match negative_log_likelihood(map, validation) {
        Ok(n) if n.mean.is_finite() => n.mean,
        _ => f64::INFINITY,
    }
}

/// Learns a map from samples by fitting the likelihood objective on
/// diffused training data pulled back through the current map.
pub fn fit_from_data(
    train: &[Vec<f64>],
    validation: &[Vec<f64>],
    schedule: &DataSchedule,
    config: &SequentialConfig,
) -> std::result::Result<Run, PipelineFailure> {
    let mut report = RunReport::new();
    report.set("mode", "data");
    config.echo(&mut report);
    let mut map = ComposedMap::identity(config.reference.clone());
    let check = (|| -> Result<()> {
        config.validate()?;
        if !config.reference.is_gaussian() {
            return Err(Error::Argument(
                "data mode needs the standard Gaussian reference".into(),
            ));
        }
        if train.is_empty() || validation.is_empty() {
            return Err(Error::Argument("training and validation sets must be nonempty".into()));
        }
        let d = config.dim();
        if train.iter().chain(validation).any(|r| r.len() != d) {
            return Err(Error::Argument(format!("rows must have {d} columns")));
        }
        if let DataSchedule::Fixed(s) = schedule {
            if s.kind() != ScheduleKind::Diffusion {
                return Err(Error::Argument("data mode needs diffusion times".into()));
            }
        }
        Ok(())
    })();
    if let Err(e) = check {
        return Err(failure(e, &map, report));
    }
    let (cap, adaptive) = match schedule {
        DataSchedule::Adaptive => (config.layers_max, true),
        DataSchedule::Fixed(s) => (s.len(), false),
    };
    report.set("schedule", if adaptive { "adaptive" } else { "fixed" });
    report.set("train_rows", train.len());
    report.set("validation_rows", validation.len());

    let mut prev = validation_nll(&map, validation);
    let mut nll_trace = vec![prev];
    let mut times = Vec::new();
    let mut stop = "layer cap";
    for level in 1..=cap {
        let start = Instant::now();
        let t = match schedule {
            DataSchedule::Adaptive => {
                t_data_schedule(config.diffusion_b, config.diffusion_rho, config.l0, level)
            }
            DataSchedule::Fixed(s) => Ok(s.values()[level - 1]),
        }
        .map(|t| t.min(config.t_max));
        let step = (|| -> Result<_> {
            let t = t?;
            let seed = derive_seed(config.seed, Purpose::Diffusion, level as u64);
            let diffused = diffuse_samples(train, t, config.enrichment, seed)?;
            let total = diffused.len();
            let xi: Vec<Vec<f64>> = map
                .inverse_batch(&diffused.samples)
                .into_iter()
                .filter_map(|r| r.ok().map(|(xi, _)| xi))
                .filter(|xi| xi.iter().all(|v| v.is_finite()))
                .collect();
            let dropped = total - xi.len();
            if dropped as f64 > config.drop_cap * total as f64 {
                return Err(Error::Numeric(format!(
                    "{dropped} of {total} diffused samples could not be pulled back"
                )));
            }
            Ok((t, dropped, fit_layer(config, level, &xi, None, None)?))
        })();
        let (t, dropped, lf) = match step {
            Ok(v) => v,
            Err(e) => {
                let e = Error::Numeric(format!("layer {level}: {e}"));
                return Err(failure(e, &map, report));
            }
        };
        times.push(t);
        record_fit(&mut report, level, &lf);
        report.set_f64(format!("layer.{level}.t"), t);
        report.set(format!("layer.{level}.dropped"), dropped);
        let mut candidate = map.clone();
        if let Err(e) = candidate.push(lf.layer) {
            return Err(failure(e, &map, report));
        }
        let r = validation_nll(&candidate, validation);
        nll_trace.push(r);
        report.timing(format!("layer.{level}"), start.elapsed().as_secs_f64());
        if adaptive && level > config.l0 && !(r <= prev) {
            stop = "validation increase";
            break;
        }
        map = candidate;
        prev = r;
    }
    report.set_array("trace.t", &times);
    report.set_array("trace.validation_nll", &nll_trace);
    report.set("stop", stop);
    report.set("layers", map.len());
    report.set_f64("final.validation_nll", prev);
    report.set("status", "ok");
    Ok(Run { map, report })
}
