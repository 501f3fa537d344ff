//! Simulation and estimation workbench for the three-tank hydraulic benchmark.
//!
//! The crate is organised bottom-up:
//!
//! * [`plant`] – Torricelli flows, mass-balance ODEs and a fixed-step RK4 integrator.
//! * [`linmodel`] – Jacobian linearization about an operating point and exact ZOH
//!   discretization.
//! * [`tracking`] – integrator augmentation, MIMO pole placement and the
//!   `u = -K x_e` tracking law.
//! * [`decoupling`] – Lie-derivative machinery, relative degrees, the decoupling
//!   matrix and the exact linearizing feedback with an outer proportional loop.
//! * [`akf`] – Kalman filter with windowed adaptive process-noise covariance.
//! * [`harness`] – scenario configuration, closed-loop runner, metrics and CSV I/O.

pub mod akf;
pub mod decoupling;
pub mod error;
pub mod harness;
pub mod linmodel;
pub mod plant;
pub mod tracking;

pub use error::{Error, Result};
pub use linmodel::{ContinuousModel, DiscreteModel, OperatingPoint};
pub use plant::{PlantParams, PlantState, PumpInput};

pub use nalgebra;
