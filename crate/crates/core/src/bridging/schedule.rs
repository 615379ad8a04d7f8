use crate::error::{Error, Result};

/// Default free constant of the exponential ladder: `β₁ = 1/16`.
pub const DEFAULT_EXP_RATE: f64 = 2.772_588_722_239_781; // ln 16
pub const DEFAULT_B: f64 = 0.8;
pub const DEFAULT_RHO: f64 = 1.0;
/// Largest diffusion time used for fitting; `t(0) = ∞` is not usable.
pub const DEFAULT_T_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Tempering,
    Diffusion,
}

/// How a schedule was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Explicit,
    Log { c1: f64 },
    Exp { a: f64 },
    TemperingOde { omega: f64 },
    DiffusionTime { b: f64, rho: f64 },
    DiffusionOde { omega: f64 },
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Explicit => "explicit",
            Generator::Log { .. } => "log",
            Generator::Exp { .. } => "exp",
            Generator::TemperingOde { .. } => "ode",
            Generator::DiffusionTime { .. } => "diffusion",
            Generator::DiffusionOde { .. } => "diffusion-ode",
        }
    }
}

/// Tempering exponents `β_1..β_L` or diffusion times `t_1..t_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgingSchedule {
    kind: ScheduleKind,
    values: Vec<f64>,
    generator: Generator,
}

impl BridgingSchedule {
    /// Validates `0 < β₁ ≤ … ≤ β_L = 1` or `t₁ ≥ … ≥ t_L ≥ 0`.
    pub fn new(kind: ScheduleKind, values: Vec<f64>, generator: Generator) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Schedule("schedule has no steps".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schedule("schedule values must be finite".into()));
        }
        match kind {
            ScheduleKind::Tempering => {
                if !(values[0] > 0.0) {
                    return Err(Error::Schedule(format!("first exponent {} is not positive", values[0])));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Schedule("exponents must be nondecreasing".into()));
                }
                if *values.last().unwrap() != 1.0 {
                    return Err(Error::Schedule("last exponent must be exactly 1".into()));
                }
            }
            ScheduleKind::Diffusion => {
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Schedule("diffusion times must be nonincreasing".into()));
                }
                if *values.last().unwrap() < 0.0 {
                    return Err(Error::Schedule("diffusion times must be nonnegative".into()));
                }
            }
        }
        Ok(Self {
            kind,
            values,
            generator,
        })
    }

    pub fn explicit(kind: ScheduleKind, values: Vec<f64>) -> Result<Self> {
        Self::new(kind, values, Generator::Explicit)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Diffusion times clipped to `t_max`.
    pub fn capped(&self, t_max: f64) -> Self {
        let mut out = self.clone();
        if self.kind == ScheduleKind::Diffusion {
            for v in &mut out.values {
                *v = v.min(t_max);
            }
        }
        out
    }
}

/// `β·log_lik(x) + log_prior(x)`.
pub fn tempered_logdensity<L, P>(log_lik: L, log_prior: P, beta: f64, x: &[f64]) -> f64
where
    L: Fn(&[f64]) -> f64,
    P: Fn(&[f64]) -> f64,
{
    let prior = log_prior(x);
    if beta == 0.0 {
        return prior;
    }
    beta * log_lik(x) + prior
}

fn check_steps(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::Schedule("at least one bridge is required".into()));
    }
    Ok(())
}

/// `β(u) = 2 ln(1 + (√C₁ − 1)u) / ln C₁`; uniform when `C₁ = 1`.
pub fn beta_log(c1: f64, u: f64) -> f64 {
    if c1 == 1.0 {
        u
    } else {
        2.0 * (1.0 + (c1.sqrt() - 1.0) * u).ln() / c1.ln()
    }
}

pub fn beta_schedule_log(c1: f64, l: usize) -> Result<BridgingSchedule> {
    check_steps(l)?;
    if !(c1 > 0.0) || !c1.is_finite() {
        return Err(Error::Schedule(format!("C1 must be positive, got {c1}")));
    }
    let mut values: Vec<f64> = (1..=l).map(|k| beta_log(c1, k as f64 / l as f64)).collect();
    values[l - 1] = 1.0;
    BridgingSchedule::new(ScheduleKind::Tempering, values, Generator::Log { c1 })
}

/// `β_ℓ = exp(a(ℓ − L)/L)`.
pub fn beta_schedule_exp(a: f64, l: usize) -> Result<BridgingSchedule> {
    check_steps(l)?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Schedule(format!("rate must be positive, got {a}")));
    }
    let values = (1..=l)
        .map(|k| (a * (k as f64 - l as f64) / l as f64).exp())
        .collect();
    BridgingSchedule::new(ScheduleKind::Tempering, values, Generator::Exp { a })
}

/// Result of the ODE-based tempering scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSchedule {
    /// `β_0 = 0, β_1, …, β_L = 1`.
    pub betas: Vec<f64>,
    pub omega: f64,
}

impl OdeSchedule {
    pub fn schedule(&self) -> Result<BridgingSchedule> {
        BridgingSchedule::new(
            ScheduleKind::Tempering,
            self.betas[1..].to_vec(),
            Generator::TemperingOde { omega: self.omega },
        )
    }
}

const SHOOTING_TOL: f64 = 1e-10;

/// RK4 solution of `β' = Ω C''(β)^{-1/2}`, `β(0) = 0`, on `steps` steps.
/// `C''` is evaluated at `β` clamped to `[0, 1]`.
fn shoot<F>(cpp: &F, omega: f64, steps: usize) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    let h = 1.0 / steps as f64;
    let rhs = |b: f64| -> Result<f64> {
        let b = b.clamp(0.0, 1.0);
        let c = cpp(b);
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Schedule(format!("C''({b}) = {c} is not positive")));
        }
        Ok(omega / c.sqrt())
    };
    let mut path = Vec::with_capacity(steps + 1);
    let mut b = 0.0;
    path.push(b);
    for _ in 0..steps {
        let k1 = rhs(b)?;
        let k2 = rhs(b + 0.5 * h * k1)?;
        let k3 = rhs(b + 0.5 * h * k2)?;
        let k4 = rhs(b + h * k3)?;
        b += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        path.push(b);
    }
    Ok(path)
}

/// Tempering schedule from `β' = Ω C''(β)^{-1/2}` with `Ω` fixed by
/// bisection so that `β(1) = 1`.
pub fn beta_schedule_ode<F>(cpp: F, l: usize) -> Result<OdeSchedule>
where
    F: Fn(f64) -> f64,
{
    check_steps(l)?;
    let steps = 10 * l;
    let end = |omega: f64| -> Result<f64> { Ok(shoot(&cpp, omega, steps)?[steps]) };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut tries = 0;
    while end(hi)? < 1.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Schedule("could not bracket the shooting parameter".into()));
        }
    }
    let mut path = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = end(mid)?;
        if (e - 1.0).abs() <= SHOOTING_TOL {
            path = Some((mid, shoot(&cpp, mid, steps)?));
            break;
        }
        if e < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let Some((omega, p)) = path else {
        return Err(Error::Schedule("shooting did not reach beta(1) = 1".into()));
    };
    let mut betas: Vec<f64> = (0..=l).map(|k| p[10 * k]).collect();
    betas[0] = 0.0;
    betas[l] = 1.0;
    Ok(OdeSchedule { betas, omega })
}

fn check_diffusion(b: f64, rho: f64) -> Result<()> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Argument(format!("B must lie in (0, 1), got {b}")));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Argument(format!("rate must be positive, got {rho}")));
    }
    Ok(())
}

/// `t(u) = (1/ρ) ln(B / (1 − (1−B)^u))`.
pub fn diffusion_time(b: f64, rho: f64, u: f64) -> Result<f64> {
    check_diffusion(b, rho)?;
    if u == 1.0 {
        return Ok(0.0);
    }
    Ok((b.ln() - log_gap(b, u)) / rho)
}

/// `ln(1 − (1−B)^u)` without cancellation at either end.
fn log_gap(b: f64, u: f64) -> f64 {
    let e = u * (1.0 - b).ln();
    let p = e.exp();
    if p < 0.5 {
        (-p).ln_1p()
    } else {
        (-e.exp_m1()).ln()
    }
}

pub fn diffusion_time_schedule(b: f64, rho: f64, l: usize) -> Result<BridgingSchedule> {
    check_steps(l)?;
    check_diffusion(b, rho)?;
    let values = (1..=l)
        .map(|k| diffusion_time(b, rho, k as f64 / l as f64))
        .collect::<Result<Vec<_>>>()?;
    BridgingSchedule::new(ScheduleKind::Diffusion, values, Generator::DiffusionTime { b, rho })
}

/// `t_data(ℓ/L₀) = (1/ρ) ln(1 / (1 − (1−B)^{ℓ/L₀}))`.
pub fn t_data_schedule(b: f64, rho: f64, l0: usize, l: usize) -> Result<f64> {
    check_diffusion(b, rho)?;
    if l0 == 0 || l == 0 {
        return Err(Error::Argument("bridge indices start at 1".into()));
    }
    let u = l as f64 / l0 as f64;
    Ok(-log_gap(b, u) / rho)
}
