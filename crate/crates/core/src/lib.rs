//! Training-based multiuser MIMO uplink: pilot design, power allocation,
//! throughput bounds and the sweeps that tie them together.
//!
//! The building blocks live in their own modules; the types most callers
//! need are re-exported at the crate root.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod majorization;
pub mod optimizer;
pub mod pilot;
pub mod power;
pub mod quadrature;
pub mod selftest;
pub mod surrogate;
pub mod throughput;

pub use channel::{FadingProfile, NoiseModel, PilotMatrix, PowerSplit, SystemConfig};
pub use error::{Error, Result};
pub use harness::{run_experiment, Design, ExperimentSpec, SweepRow};
pub use optimizer::{
    lower_bound_pipeline, optimal_k_uniform, optimize_uniform, random_pilot_pipeline, select_users,
    upper_bound_pipeline, DesignPoint, PipelineOptions,
};
pub use pilot::{design_pilot, PilotDesignSpec, PilotKind};
pub use power::{
    effective_gains, gamma_highsnr, gamma_uniform_opt, solve_power, solve_power_kgt, solve_power_kleq, tau,
    EffectiveGains, PowerSolution, PowerSolverOptions, Tau,
};
pub use throughput::{
    asymptotic_throughput, evaluate_design, mc_throughput, mp_density, MPSupport, RateMethod, ThroughputReport,
};
