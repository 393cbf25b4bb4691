//! Optimal control of the bilinear Schrödinger equation on an interval,
//!
//! ```text
//! dPsi/dt = i Lap Psi - i u(t) b2(x) Psi + f,   u_m <= u(t) <= u_M,
//! ```
//!
//! with a quadratic tracking cost. The crate provides Crank–Nicolson
//! propagation of the state, its linearization and the Goh-transformed
//! linearization, an exact discrete adjoint (so the reduced gradient equals
//! `dt * Lambda` to round-off), a projected-gradient solver, the second-order
//! quadratic forms `Q` and `Q-hat`, and arc-structure / optimality reports.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod objective;
pub mod optimizer;
pub mod problem;
pub mod sampling;
pub mod scalar;
pub mod second_order;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

pub type SpatialGrid = field::SpatialGrid<f64>;
pub type ComplexField = field::ComplexField<f64>;
pub type Potential = field::Potential<f64>;
pub type TimeGrid = dynamics::TimeGrid<f64>;
pub type Control = dynamics::Control<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type CostateTrajectory = adjoint::CostateTrajectory<f64>;
pub type ProblemSpec = problem::ProblemSpec<f64>;
pub type Bounds = problem::Bounds<f64>;
pub type SourceTerm = problem::SourceTerm<f64>;
pub type TargetTerm = problem::TargetTerm<f64>;
pub type CostBreakdown = objective::CostBreakdown<f64>;
pub type SolverOptions = optimizer::SolverOptions<f64>;
pub type SolveResult = optimizer::SolveResult<f64>;
pub type MultistartResult = optimizer::MultistartResult<f64>;
pub type GohDirection = second_order::GohDirection<f64>;
pub type QuadFormReport = second_order::QuadFormReport<f64>;
pub type ArcStructure = analysis::ArcStructure<f64>;
pub type AnalysisOptions = analysis::AnalysisOptions<f64>;
pub type OptimalityReport = analysis::OptimalityReport<f64>;
