//! Simulation and verification toolkit for one-dimensional damped wave
//! equations with dynamic (Wentzell) boundary conditions.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: physical/control parameters, boundary-condition variants,
//!   the regulation-to-stabilization change of variables and steady profiles.
//! * [`discretize`]: grid, discrete Lagrangian and the assembled mass,
//!   stiffness, dissipation and input/output operators.
//! * [`integrate`]: PI controller, semi-implicit symplectic Euler stepping and
//!   the closed-loop driver.
//! * [`lyapunov`]: energy and Lyapunov functionals, decay fits and
//!   eigenvalue-backed certification of sandwich and decay constants.
//! * [`wellposed`]: resolvent solve and monotonicity pairing of the
//!   generator's monotone part.
//! * [`scenario`]: run configuration, the built-in parameter presets, the
//!   batch driver and its CSV/report outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod quad;
pub mod scenario;
pub mod wellposed;

pub use discretize::{DiscreteSystem, Grid, Spacing, SymBand};
pub use error::{Error, Result};
pub use integrate::{PiController, SimState, Stepper, Trajectory};
pub use lyapunov::{CertificationReport, DecayFit, FunctionalSample};
pub use model::{BoundaryVariant, ContinuousState, ControlParams, PhysicalParams, VariantKind};
pub use scenario::{RunConfig, RunReport};
