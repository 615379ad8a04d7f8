//! Conic reformulation of the discretized objectives.
//!
//! Variables are the upper triangle of the PSD block `A` (row-major, `j ≥ i`)
//! followed by one epigraph scalar `t_i` per sample. Cones act on affine
//! expressions of these variables.
//!
//! Text format, one record per line:
//!
//! ```text
//! CONIC 1
//! ALPHA <alpha>              (or ALPHA kl)
//! PSD <m>
//! SCALARS <n>
//! EXPRS <count>
//! CONST <expr> <value>
//! AFF <expr> <var> <value>
//! POW <p> <expr_x> <expr_y> <expr_z>      x^p y^(1-p) >= |z|
//! RELENT <expr_u> <expr_v> <expr_w>       u >= w ln(w / v)
//! OBJCONST <value>
//! OBJ <var> <value>
//! END
//! ```

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{FitProblem, IntegralMode, ObjectiveKind};
use crate::error::{Error, Result};

pub const CONIC_FORMAT: u32 = 1;

/// Membership tolerance on the power-cone inequality.
const MEMBERSHIP_TOL: f64 = 1e-12;

/// Sparse affine expression `c + Σ v_j x_j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Expr {
    fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    fn var(j: usize) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(j, 1.0)],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(j, v)| v * x[*j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cone {
    /// `x^p y^{1-p} ≥ |z|`, `x, y ≥ 0`.
    Power { p: f64, x: usize, y: usize, z: usize },
    /// `u ≥ w ln(w/v)`, `v, w ≥ 0`.
    RelEntropy { u: usize, v: usize, w: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    /// `None` for the likelihood objective.
    pub alpha: Option<f64>,
    pub psd_size: usize,
    pub scalars: usize,
    pub exprs: Vec<Expr>,
    pub cones: Vec<Cone>,
    pub objective_constant: f64,
    pub objective: Vec<(usize, f64)>,
}

/// `true` iff `x ≥ 0`, `y ≥ 0` and `x^p y^{1-p} ≥ |z| - 1e-12`.
pub fn cone_membership(x: f64, y: f64, z: f64, p: f64) -> Result<bool> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("power cone exponent {p} outside (0, 1)")));
    }
    Ok(x >= 0.0 && y >= 0.0 && x.powf(p) * y.powf(1.0 - p) >= z.abs() - MEMBERSHIP_TOL)
}

/// Tight epigraph value of one sample term for target value `f` and model
/// value `g`: the smallest feasible `t` (largest for `0 < α < 1`).
pub fn minimal_epigraph(alpha: f64, f: f64, g: f64) -> f64 {
    if alpha == 1.0 {
        if f == 0.0 {
            0.0
        } else {
            f * (f / g).ln()
        }
    } else if alpha == 0.0 {
        g * (g / f).ln()
    } else {
        f.powf(alpha) * g.powf(1.0 - alpha)
    }
}

fn upper_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * m - i * (i + 1) / 2 + j
}

impl ConicProgram {
    pub fn psd_vars(&self) -> usize {
        self.psd_size * (self.psd_size + 1) / 2
    }

    pub fn num_vars(&self) -> usize {
        self.psd_vars() + self.scalars
    }

    /// Variable vector from `A` and the epigraph scalars.
    pub fn pack(&self, a: &DMatrix<f64>, t: &[f64]) -> Vec<f64> {
        let m = self.psd_size;
        let mut x = vec![0.0; self.num_vars()];
        for i in 0..m {
            for j in i..m {
                x[upper_index(m, i, j)] = a[(i, j)];
            }
        }
        x[self.psd_vars()..].copy_from_slice(t);
        x
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|(j, v)| v * x[*j]).sum::<f64>()
    }

    /// `(sample, cone)` pairs violated at `x`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<usize> {
        let values: Vec<f64> = self.exprs.iter().map(|e| e.eval(x)).collect();
        self.cones
            .iter()
            .enumerate()
            .filter(|(_, c)| match **c {
                Cone::Power { p, x, y, z } => {
                    let (a, b, c) = (values[x], values[y], values[z]);
                    !(a >= -tol && b >= -tol && a.max(0.0).powf(p) * b.max(0.0).powf(1.0 - p) >= c.abs() - tol)
                }
                Cone::RelEntropy { u, v, w } => {
                    let (a, b, c) = (values[u], values[v], values[w]);
                    let rhs = if c <= 0.0 { 0.0 } else { c * (c / b).ln() };
                    !(b >= -tol && c >= -tol && a >= rhs - tol)
                }
            })
            .map(|(k, _)| k)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "CONIC {CONIC_FORMAT}");
        match self.alpha {
            Some(a) => {
                let _ = writeln!(s, "ALPHA {a:.17e}");
            }
            None => {
                let _ = writeln!(s, "ALPHA kl");
            }
        }
        let _ = writeln!(s, "PSD {}", self.psd_size);
        let _ = writeln!(s, "SCALARS {}", self.scalars);
        let _ = writeln!(s, "EXPRS {}", self.exprs.len());
        for (k, e) in self.exprs.iter().enumerate() {
            if e.constant != 0.0 {
                let _ = writeln!(s, "CONST {k} {:.17e}", e.constant);
            }
            for (j, v) in &e.terms {
                let _ = writeln!(s, "AFF {k} {j} {v:.17e}");
            }
        }
        for c in &self.cones {
            match c {
                Cone::Power { p, x, y, z } => {
                    let _ = writeln!(s, "POW {p:.17e} {x} {y} {z}");
                }
                Cone::RelEntropy { u, v, w } => {
                    let _ = writeln!(s, "RELENT {u} {v} {w}");
                }
            }
        }
        let _ = writeln!(s, "OBJCONST {:.17e}", self.objective_constant);
        for (j, v) in &self.objective {
            let _ = writeln!(s, "OBJ {j} {v:.17e}");
        }
        s.push_str("END\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut prog = ConicProgram {
            alpha: None,
            psd_size: 0,
            scalars: 0,
            exprs: Vec::new(),
            cones: Vec::new(),
            objective_constant: 0.0,
            objective: Vec::new(),
        };
        let mut ended = false;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == format!("CONIC {CONIC_FORMAT}") => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing or unsupported CONIC header".into(),
                })
            }
        }
        for (ln, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: ln + 1,
                msg: msg.to_string(),
            };
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64> {
                tok.get(k)
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| err("expected a number"))
            };
            let idx = |k: usize| -> Result<usize> {
                tok.get(k)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| err("expected an index"))
            };
            let expr = |k: usize, n: usize| -> Result<usize> {
                let e = idx(k)?;
                if e >= n {
                    return Err(err("expression index out of range"));
                }
                Ok(e)
            };
            if ended {
                return Err(err("content after END"));
            }
            match tok[0] {
                "ALPHA" => {
                    prog.alpha = if tok.get(1) == Some(&"kl") {
                        None
                    } else {
                        Some(num(1)?)
                    }
                }
                "PSD" => prog.psd_size = idx(1)?,
                "SCALARS" => prog.scalars = idx(1)?,
                "EXPRS" => prog.exprs = vec![Expr::default(); idx(1)?],
                "CONST" => {
                    let k = expr(1, prog.exprs.len())?;
                    prog.exprs[k].constant = num(2)?;
                }
                "AFF" => {
                    let k = expr(1, prog.exprs.len())?;
                    let j = idx(2)?;
                    if j >= prog.num_vars() {
                        return Err(err("variable index out of range"));
                    }
                    prog.exprs[k].terms.push((j, num(3)?));
                }
                "POW" => {
                    let p = num(1)?;
                    if !(p > 0.0 && p < 1.0) {
                        return Err(err("power cone exponent outside (0, 1)"));
                    }
                    let n = prog.exprs.len();
                    prog.cones.push(Cone::Power {
                        p,
                        x: expr(2, n)?,
                        y: expr(3, n)?,
                        z: expr(4, n)?,
                    });
                }
                "RELENT" => {
                    let n = prog.exprs.len();
                    prog.cones.push(Cone::RelEntropy {
                        u: expr(1, n)?,
                        v: expr(2, n)?,
                        w: expr(3, n)?,
                    });
                }
                "OBJCONST" => prog.objective_constant = num(1)?,
                "OBJ" => {
                    let j = idx(1)?;
                    if j >= prog.num_vars() {
                        return Err(err("variable index out of range"));
                    }
                    prog.objective.push((j, num(2)?));
                }
                "END" => ended = true,
                other => return Err(err(&format!("unknown record `{other}`"))),
            }
        }
        if !ended {
            return Err(Error::Parse {
                line: text.lines().count(),
                msg: "missing END".into(),
            });
        }
        Ok(prog)
    }

    /// Tight epigraph scalars for a given `A`, one per sample.
    pub fn tight_epigraph(&self, problem: &FitProblem, a: &DMatrix<f64>) -> Vec<f64> {
        let q = problem.quadratic_forms(a);
        match self.alpha {
            None => q.iter().map(|v| -v.ln()).collect(),
            Some(alpha) => q
                .iter()
                .zip(problem.ratios())
                .map(|(g, f)| minimal_epigraph(alpha, *f, *g))
                .collect(),
        }
    }
}

/// Encode a fit problem as a conic program.
///
/// For the divergence objective the per-sample term `r^α q^{1-α}` (or its
/// logarithmic limits) is bounded by an epigraph variable `t_i`; the sign of
/// `1/(α(α-1))` decides whether the bound is from above or below, so in
/// both cases minimizing the linear objective drives `t_i` to the boundary.
pub fn encode_conic(problem: &FitProblem) -> Result<ConicProgram> {
    let basis = problem.basis();
    let m = basis.len();
    let n = problem.len();
    let psd_vars = m * (m + 1) / 2;
    let features = problem.features();
    let weights = problem.weights();

    // g_i = Σ_{j≤k} c_jk A_jk Φ_j Φ_k.
    let quad_expr = |i: usize| -> Expr {
        let row = features.row(i);
        let mut terms = Vec::with_capacity(psd_vars);
        for j in 0..m {
            for k in j..m {
                let c = if j == k { 1.0 } else { 2.0 } * row[j] * row[k];
                if c != 0.0 {
                    terms.push((upper_index(m, j, k), c));
                }
            }
        }
        Expr { constant: 0.0, terms }
    };

    let mut exprs = Vec::new();
    let mut cones = Vec::new();
    let mut objective: Vec<(usize, f64)> = Vec::new();
    let mut objective_constant = 0.0;
    let trace_vars: Vec<usize> = (0..m).map(|j| upper_index(m, j, j)).collect();

    let alpha = match problem.kind() {
        ObjectiveKind::KlData => {
            for i in 0..n {
                let t = psd_vars + i;
                let base = exprs.len();
                exprs.push(Expr::var(t));
                exprs.push(quad_expr(i));
                exprs.push(Expr::constant(1.0));
                // t ≥ 1·ln(1/g) ⇔ t ≥ -ln g.
                cones.push(Cone::RelEntropy {
                    u: base,
                    v: base + 1,
                    w: base + 2,
                });
                objective.push((t, weights[i]));
            }
            for &j in &trace_vars {
                objective.push((j, 1.0));
            }
            return Ok(ConicProgram {
                alpha: None,
                psd_size: m,
                scalars: n,
                exprs,
                cones,
                objective_constant,
                objective,
            });
        }
        ObjectiveKind::DivergenceMc { alpha } => alpha,
    };

    let ratios = problem.ratios();
    let bad: Vec<usize> = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < 0.0 || (**r == 0.0 && alpha <= 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Encoding {
            indices: bad,
            reason: format!("target values must be positive for alpha = {alpha}"),
        });
    }

    // Linear part: coefficient of g_i (or of tr A) and of f_i.
    let (g_coef, f_coef) = if alpha == 1.0 {
        (1.0, -1.0)
    } else if alpha == 0.0 {
        (-1.0, 1.0)
    } else {
        (1.0 / alpha, -1.0 / (alpha - 1.0))
    };
    let t_coef = if alpha == 1.0 || alpha == 0.0 {
        1.0
    } else {
        1.0 / (alpha * (alpha - 1.0))
    };

    for i in 0..n {
        let t = psd_vars + i;
        let r = ratios[i];
        let base = exprs.len();
        match alpha {
            a if a == 1.0 => {
                // t ≥ f ln(f/g)
                exprs.push(Expr::var(t));
                exprs.push(quad_expr(i));
                exprs.push(Expr::constant(r));
                cones.push(Cone::RelEntropy { u: base, v: base + 1, w: base + 2 });
            }
            a if a == 0.0 => {
                // t ≥ g ln(g/f)
                exprs.push(Expr::var(t));
                exprs.push(Expr::constant(r));
                exprs.push(quad_expr(i));
                cones.push(Cone::RelEntropy { u: base, v: base + 1, w: base + 2 });
            }
            a if a > 1.0 => {
                // (t, g, f) ∈ K_{1/α}
                exprs.push(Expr::var(t));
                exprs.push(quad_expr(i));
                exprs.push(Expr::constant(r));
                cones.push(Cone::Power { p: 1.0 / a, x: base, y: base + 1, z: base + 2 });
            }
            a if a > 0.0 => {
                // (f, g, t) ∈ K_α, a hypograph since 1/(α(α-1)) < 0
                exprs.push(Expr::constant(r));
                exprs.push(quad_expr(i));
                exprs.push(Expr::var(t));
                cones.push(Cone::Power { p: a, x: base, y: base + 1, z: base + 2 });
            }
            a => {
                // (t, 1, f^{α/(1-α)} g) ∈ K_{1/(1-α)}
                exprs.push(Expr::var(t));
                exprs.push(Expr::constant(1.0));
                let mut e = quad_expr(i);
                let c = r.powf(a / (1.0 - a));
                for term in &mut e.terms {
                    term.1 *= c;
                }
                exprs.push(e);
                cones.push(Cone::Power { p: 1.0 / (1.0 - a), x: base, y: base + 1, z: base + 2 });
            }
        }
        objective.push((t, weights[i] * t_coef));
        objective_constant += weights[i] * f_coef * r;
        if problem.integral() == IntegralMode::Samples {
            for (j, v) in quad_expr(i).terms {
                objective.push((j, weights[i] * g_coef * v));
            }
        }
    }
    if problem.integral() == IntegralMode::Trace {
        for &j in &trace_vars {
            objective.push((j, g_coef));
        }
    }
    Ok(ConicProgram {
        alpha: Some(alpha),
        psd_size: m,
        scalars: n,
        exprs,
        cones,
        objective_constant,
        objective: merge_terms(objective),
    })
}

fn merge_terms(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (j, v) in terms {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}
