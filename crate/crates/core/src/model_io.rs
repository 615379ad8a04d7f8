//! Versioned text format for composed maps (`.stm` files).
//!
//! ```text
//! STM 1
//! reference probit,probit
//! meta seed = 7
//! layers 2
//! layer full
//! index 2 3
//! 0 0
//! 0 1
//! 1 0
//! matrix
//! <3 rows of 3 numbers>
//! layer lazy 2
//! subspace
//! <d rows of r numbers>
//! index ...
//! matrix
//! ...
//! end
//! ```
//!
//! Matrices are written row-major with 17 significant digits. The
//! reference of a full layer is the map reference; the inner reference of
//! a lazy layer is the standard Gaussian on `ℝ^r`. Unit-trace matrices are
//! stored, so a load reproduces every map evaluation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::basis::{FeatureBasis, IndexSet, MapKind, ReferenceMeasure};
use crate::error::{Error, Result};
use crate::sos::SosDensity;
use crate::transport::{ComposedMap, LazyLayer, Layer, TriangularMap};

pub const MODEL_FORMAT: u32 = 1;

/// A composed map together with free-form provenance fields.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub map: ComposedMap,
    pub meta: Vec<(String, String)>,
}

impl ModelFile {
    pub fn new(map: ComposedMap) -> Self {
        Self {
            map,
            meta: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_sos(out: &mut String, density: &SosDensity) {
    let index = density.basis().index();
    let _ = writeln!(out, "index {} {}", index.dim(), index.len());
    for alpha in index.iter() {
        let row: Vec<String> = alpha.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "matrix");
    write_matrix(out, density.matrix());
}

fn write_matrix(out: &mut String, a: &DMatrix<f64>) {
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| num(a[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn model_to_text(model: &ModelFile) -> String {
    let map = &model.map;
    let mut out = String::new();
    let _ = writeln!(out, "STM {MODEL_FORMAT}");
    let maps: Vec<&str> = map.reference().maps().iter().map(|m| m.name()).collect();
    let _ = writeln!(out, "reference {}", maps.join(","));
    for (k, v) in &model.meta {
        let _ = writeln!(out, "meta {k} = {v}");
    }
    let _ = writeln!(out, "layers {}", map.len());
    for layer in map.layers() {
        match layer {
            Layer::Full(m) => {
                let _ = writeln!(out, "layer full");
                write_sos(&mut out, m.density());
            }
            Layer::Lazy(l) => {
                let _ = writeln!(out, "layer lazy {}", l.rank());
                let _ = writeln!(out, "subspace");
                write_matrix(&mut out, l.subspace());
                write_sos(&mut out, l.inner().density());
            }
        }
    }
    let _ = writeln!(out, "end");
    out
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_text(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    model_from_text(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok(l);
            }
        }
        Err(Error::Parse {
            line: self.line + 1,
            msg: "unexpected end of file".into(),
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(word) {
            return Err(self.err(format!("expected `{word}`, found `{l}`")));
        }
        Ok(parts.collect())
    }

    fn numbers(&mut self, n: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("bad number: {e}")))?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} numbers, found {}", v.len())));
        }
        Ok(v)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut a = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for (j, v) in self.numbers(cols)?.into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        Ok(a)
    }
}

fn parse_usize(lines: &Lines, s: Option<&&str>, what: &str) -> Result<usize> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| lines.err(format!("expected integer {what}")))
}

fn field(field: &str, e: Error) -> Error {
    Error::InvalidField {
        field: field.into(),
        msg: e.to_string(),
    }
}

fn read_sos(lines: &mut Lines, reference: ReferenceMeasure, name: &str) -> Result<SosDensity> {
    let head = lines.keyword("index")?;
    let d = parse_usize(lines, head.first(), "dimension")?;
    let m = parse_usize(lines, head.get(1), "index count")?;
    if d != reference.dim() {
        return Err(Error::InvalidField {
            field: format!("{name}.index"),
            msg: format!("dimension {d} does not match reference dimension {}", reference.dim()),
        });
    }
    let mut stored = Vec::with_capacity(m);
    for _ in 0..m {
        let v = lines.numbers(d)?;
        if v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
            return Err(lines.err("multi-index entries must be nonnegative integers"));
        }
        stored.push(v.into_iter().map(|x| x as u32).collect::<Vec<u32>>());
    }
    let index = IndexSet::from_indices(d, stored.clone()).map_err(|e| field(&format!("{name}.index"), e))?;
    if index.len() != m {
        return Err(Error::InvalidField {
            field: format!("{name}.index"),
            msg: "duplicate multi-indices".into(),
        });
    }
    lines.keyword("matrix")?;
    let raw = lines.matrix(m, m)?;
    // Stored order may differ from the canonical sorted order.
    let pos: Vec<usize> = stored.iter().map(|a| index.position(a).unwrap()).collect();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(pos[i], pos[j])] = raw[(i, j)];
        }
    }
    let basis = FeatureBasis::new(index, reference).map_err(|e| field(&format!("{name}.index"), e))?;
    SosDensity::normalized(basis, a).map_err(|e| field(&format!("{name}.matrix"), e))
}

pub fn model_from_text(text: &str) -> Result<ModelFile> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.keyword("STM")?;
    let version = parse_usize(&lines, head.first(), "format version")?;
    if version != MODEL_FORMAT as usize {
        return Err(Error::InvalidField {
            field: "version".into(),
            msg: format!("unsupported model format {version}, expected {MODEL_FORMAT}"),
        });
    }
    let refs = lines.keyword("reference")?;
    let maps = refs
        .first()
        .ok_or_else(|| lines.err("missing reference maps"))?
        .split(',')
        .map(MapKind::parse)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| field("reference", e))?;
    let reference = ReferenceMeasure::mapped(maps);
    let mut meta = Vec::new();
    let mut l = lines.next()?;
    while let Some(rest) = l.strip_prefix("meta ") {
        let (k, v) = rest
            .split_once(" = ")
            .ok_or_else(|| lines.err("expected `meta key = value`"))?;
        meta.push((k.to_string(), v.to_string()));
        l = lines.next()?;
    }
    let count = match l.strip_prefix("layers ") {
        Some(n) => n.trim().parse::<usize>().map_err(|_| lines.err("bad layer count"))?,
        None => return Err(lines.err(format!("expected `layers`, found `{l}`"))),
    };
    let mut map = ComposedMap::identity(reference.clone());
    for k in 0..count {
        let name = format!("layer[{}]", k + 1);
        let head = lines.keyword("layer")?;
        let layer = match head.first().copied() {
            Some("full") => {
                let density = read_sos(&mut lines, reference.clone(), &name)?;
                Layer::Full(TriangularMap::from_sos(&density)?)
            }
            Some("lazy") => {
                let r = parse_usize(&lines, head.get(1), "rank")?;
                lines.keyword("subspace")?;
                let u = lines.matrix(reference.dim(), r)?;
                let density = read_sos(&mut lines, ReferenceMeasure::gaussian(r), &name)?;
                let inner = TriangularMap::from_sos(&density)?;
                Layer::Lazy(LazyLayer::new(u, inner).map_err(|e| field(&format!("{name}.subspace"), e))?)
            }
            _ => return Err(lines.err("layer kind must be `full` or `lazy`")),
        };
        map.push(layer).map_err(|e| field(&name, e))?;
    }
    lines.keyword("end")?;
    Ok(ModelFile { map, meta })
}
