//! Bridging densities between the reference and the target, and the
//! schedules that space them.

mod diffusion;
mod schedule;

pub use diffusion::{
    diffuse_samples, diffusion_rate_d, diffusion_schedule_ode, equidivergence_diagnostic,
    DiffusedDataset, DiffusedDensity, EquidivergenceReport, GaussianMixture1d,
};
pub use schedule::{
    beta_log, beta_schedule_exp, beta_schedule_log, beta_schedule_ode, diffusion_time,
    diffusion_time_schedule, t_data_schedule, tempered_logdensity, BridgingSchedule, Generator,
    OdeSchedule, ScheduleKind, DEFAULT_B, DEFAULT_EXP_RATE, DEFAULT_RHO, DEFAULT_T_MAX,
};
