//! Flat `key = value` configuration files with `[section]` headers.
//!
//! Keys are addressed as `section.key`; keys before the first header have
//! no prefix. Only keys listed in [`CONFIG_KEYS`] or starting with
//! `target.param.` are accepted.

use std::collections::BTreeMap;

use crate::error::{usage, CliResult};

/// Every accepted key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("fit.alpha", "divergence order of density-mode fits"),
    ("fit.degree", "total polynomial degree of every layer"),
    ("fit.samples", "reference draws per layer (density mode)"),
    ("fit.diagnostic_samples", "fresh draws for per-layer diagnostics (density mode)"),
    ("fit.seed", "master seed"),
    ("fit.lazy_rank", "rank of lazy layers; `off` for full layers"),
    ("fit.max_iterations", "solver iteration cap per layer"),
    ("fit.integral", "`trace` or `samples` integral term (density mode)"),
    ("schedule.values", "comma list of tempering exponents ending in 1"),
    ("schedule.kind", "`adaptive` or `fixed` diffusion times (data mode)"),
    ("schedule.layers", "number of fixed diffusion layers"),
    ("schedule.B", "diffusion schedule parameter B in (0, 1)"),
    ("schedule.rho", "diffusion rate"),
    ("schedule.t_max", "cap on diffusion times"),
    ("data.l0", "layers before validation-based stopping"),
    ("data.layers_max", "hard cap on adaptive layers"),
    ("data.enrichment", "noise draws per training point"),
    ("data.validation_fraction", "share of the training block held out"),
    ("data.test_fraction", "share of rows held out for testing"),
    ("data.corr_threshold", "absolute correlation above which columns are dropped"),
    ("data.discrete_max", "columns with at most this many values are dropped"),
    ("data.split_seed", "seed of the train/validation/test split"),
    ("target.name", "built-in target: bimodal, banana or sir"),
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = match section.as_str() {
                "" => k.trim().to_string(),
                s => format!("{s}.{}", k.trim()),
            };
            let known = CONFIG_KEYS.iter().any(|(n, _)| *n == key) || key.starts_with("target.param.");
            if !known {
                return Err(usage(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(usage(format!("config line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn target_params(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("target.param.").map(|p| (p, v.as_str())))
    }

    pub fn help_text() -> String {
        let mut s = String::from(
            "Configuration file (--config): `key = value` lines under [fit], [schedule], [data]\n\
             and [target] sections; `#` starts a comment. Command-line flags take precedence.\n\
             Unknown keys are errors. Keys:\n",
        );
        for (k, d) in CONFIG_KEYS {
            s.push_str(&format!("  {k:<26} {d}\n"));
        }
        s.push_str("  target.param.<name>        built-in target parameter, e.g. target.param.warp\n");
        s
    }
}

/// Flag value if given, else config value, else `None`.
pub fn pick<T: std::str::FromStr>(flag: Option<T>, config: &Config, key: &str) -> CliResult<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match config.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("config key `{key}`: cannot parse `{v}`"))),
    }
}
