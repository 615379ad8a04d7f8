use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::rng::{derive_seed, Purpose};

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(Error::Preprocess(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                rows[i].len(),
                names.len()
            )));
        }
        Ok(Self { names, rows })
    }

    /// Unnamed columns `x1..xd`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        Self::new((1..=d).map(|k| format!("x{k}")).collect(), rows)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names).map_err(csv_error)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:.16e}"))).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Preprocess(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Preprocess(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Preprocess(format!("csv: {e}"))
}

/// Reads a CSV table with a header row and numeric fields.
pub fn parse_csv(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if names.is_empty() {
        return Err(Error::Preprocess("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.parse::<f64>().map_err(|_| {
                    Error::Parse {
                        line: i + 2,
                        msg: format!("column `{}`: `{s}` is not a number", names[k]),
                    }
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Table::new(names, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Columns with more than this absolute Pearson correlation against an
    /// already retained column are dropped.
    pub corr_threshold: f64,
    /// Columns with at most this many distinct values count as discrete.
    pub discrete_max: usize,
    pub test_fraction: f64,
    /// Share of the training block held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            corr_threshold: 0.98,
            discrete_max: 20,
            test_fraction: 0.1,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// A preprocessed table: retained columns z-scored with training-block
/// statistics, plus recorded train/validation/test indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub raw: Table,
    pub retained: Vec<usize>,
    pub names: Vec<String>,
    pub dropped: Vec<(String, String)>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub config: PreprocessConfig,
    /// Training rows excluding the validation carve-out.
    pub train_idx: Vec<usize>,
    pub validation_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// All rows after column selection and z-scoring.
    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.data[i].clone()).collect()
    }

    pub fn train(&self) -> Vec<Vec<f64>> {
        self.rows(&self.train_idx)
    }

    pub fn validation(&self) -> Vec<Vec<f64>> {
        self.rows(&self.validation_idx)
    }

    /// Training block including the validation carve-out.
    pub fn train_full(&self) -> Vec<Vec<f64>> {
        let mut idx = self.train_idx.clone();
        idx.extend_from_slice(&self.validation_idx);
        idx.sort_unstable();
        self.rows(&idx)
    }

    pub fn test(&self) -> Vec<Vec<f64>> {
        self.rows(&self.test_idx)
    }

    /// Raw row (all original columns) to the standardized retained columns.
    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        self.retained
            .iter()
            .enumerate()
            .map(|(k, &c)| (raw[c] - self.means[k]) / self.scales[k])
            .collect()
    }

    /// Standardized row back to the retained raw columns.
    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(k, v)| v * self.scales[k] + self.means[k])
            .collect()
    }

    /// Sidecar record of every preprocessing decision.
    pub fn record_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "rows = {}", self.len());
        let _ = writeln!(s, "corr_threshold = {}", c.corr_threshold);
        let _ = writeln!(s, "discrete_max = {}", c.discrete_max);
        let _ = writeln!(s, "test_fraction = {}", c.test_fraction);
        let _ = writeln!(s, "validation_fraction = {}", c.validation_fraction);
        let _ = writeln!(s, "split_seed = {}", c.seed);
        let _ = writeln!(s, "retained = {}", self.names.join(","));
        for (name, why) in &self.dropped {
            let _ = writeln!(s, "dropped.{name} = {why}");
        }
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "means = {}", fmt(&self.means));
        let _ = writeln!(s, "scales = {}", fmt(&self.scales));
        let idx = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "train = {}", idx(&self.train_idx));
        let _ = writeln!(s, "validation = {}", idx(&self.validation_idx));
        let _ = writeln!(s, "test = {}", idx(&self.test_idx));
        s
    }
}

fn distinct_count(values: &[f64], cap: usize) -> usize {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len().min(cap + 1)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = pairwise_sum(a) / n;
    let mb = pairwise_sum(b) / n;
    let cross: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let va: Vec<f64> = a.iter().map(|x| (x - ma).powi(2)).collect();
    let vb: Vec<f64> = b.iter().map(|y| (y - mb).powi(2)).collect();
    pairwise_sum(&cross) / (pairwise_sum(&va) * pairwise_sum(&vb)).sqrt()
}

/// Column filtering, seeded split and z-scoring.
///
/// The training block holds `floor((1 - test_fraction)·N)` rows; its first
/// `floor(validation_fraction·n_train)` rows (at least one) in shuffled
/// order form the validation set. Scales are sample standard deviations
/// over the whole training block.
pub fn preprocess(table: &Table, config: &PreprocessConfig) -> Result<Dataset> {
    let n = table.rows.len();
    if !(config.validation_fraction > 0.0 && config.validation_fraction <= 0.5) {
        return Err(Error::Preprocess(format!(
            "validation fraction {} is outside (0, 0.5]",
            config.validation_fraction
        )));
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::Preprocess(format!(
            "test fraction {} is outside (0, 1)",
            config.test_fraction
        )));
    }
    if table.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Preprocess("table has non-finite entries".into()));
    }
    let columns: Vec<Vec<f64>> = (0..table.names.len()).map(|k| table.column(k)).collect();
    let mut retained: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for (k, col) in columns.iter().enumerate() {
        let distinct = distinct_count(col, config.discrete_max);
        if distinct <= config.discrete_max {
            dropped.push((table.names[k].clone(), format!("discrete ({distinct} values)")));
            continue;
        }
        if let Some(&j) = retained
            .iter()
            .find(|&&j| pearson(col, &columns[j]).abs() > config.corr_threshold)
        {
            dropped.push((table.names[k].clone(), format!("correlated with {}", table.names[j])));
            continue;
        }
        retained.push(k);
    }
    if retained.len() < 2 {
        return Err(Error::Preprocess(format!(
            "only {} column(s) remain after filtering",
            retained.len()
        )));
    }
    let n_train = ((1.0 - config.test_fraction) * n as f64 + 1e-9).floor() as usize;
    let n_val = ((config.validation_fraction * n_train as f64 + 1e-9).floor() as usize).max(1);
    if n_train < n_val + 2 || n_train == n {
        return Err(Error::Preprocess(format!("{n} rows are too few to split")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, Purpose::Split, 0));
    perm.shuffle(&mut rng);
    let mut validation_idx = perm[..n_val].to_vec();
    let mut train_idx = perm[n_val..n_train].to_vec();
    let mut test_idx = perm[n_train..].to_vec();
    validation_idx.sort_unstable();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let block = &perm[..n_train];
    let mut means = Vec::with_capacity(retained.len());
    let mut scales = Vec::with_capacity(retained.len());
    for &c in &retained {
        let v: Vec<f64> = block.iter().map(|&i| columns[c][i]).collect();
        let m = pairwise_sum(&v) / v.len() as f64;
        let sq: Vec<f64> = v.iter().map(|x| (x - m).powi(2)).collect();
        let s = (pairwise_sum(&sq) / (v.len() - 1) as f64).sqrt();
        if !(s > 0.0) {
            return Err(Error::Preprocess(format!(
                "column `{}` is constant on the training block",
                table.names[c]
            )));
        }
        means.push(m);
        scales.push(s);
    }
    let data = table
        .rows
        .iter()
        .map(|r| {
            retained
                .iter()
                .enumerate()
                .map(|(k, &c)| (r[c] - means[k]) / scales[k])
                .collect()
        })
        .collect();
    Ok(Dataset {
        raw: table.clone(),
        names: retained.iter().map(|&c| table.names[c].clone()).collect(),
        retained,
        dropped,
        means,
        scales,
        config: config.clone(),
        train_idx,
        validation_idx,
        test_idx,
        data,
    })
}
