//! Numerical toolkit for a two-strain reaction-diffusion system with
//! mutation in a periodic habitat:
//!
//! ```text
//! u_t = u_xx + u (r_u - gamma_u (u + v)) + mu (v - u)
//! v_t = v_xx + v (r_v - gamma_v (u + v)) + mu (u - v)
//! ```
//!
//! The crate computes principal eigenvalues of the linearization, the
//! front-speed dispersion relation, periodic steady states and their
//! bifurcation branch, monotone solutions of the wave-frame strip problem,
//! and time-domain simulations of fronts.

pub mod config;
pub mod fields;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod spectral;
pub mod steady;
pub mod strip;
pub mod frontsim;

pub use config::{ConfigError, ScenarioConfig};
pub use fields::{Bounds, CoefficientField, FieldError, Harmonic, TrigPoly};
pub use grid::{IntervalGrid, PeriodicGrid};
