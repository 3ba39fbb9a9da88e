//! djko: a dual variational solver for Darcy flow with a pressure-dependent
//! source term, advanced by a discrete-in-time minimizing-movements scheme,
//! together with a verification harness asserting the scheme's structural
//! properties (duality, comparison, monotonicity, dissipation, finite-speed
//! propagation via constructed barriers) at desk scale.

pub mod barriers;
pub mod config;
pub mod ctransform;
pub mod dual_solver;
pub mod energy;
pub mod error;
pub mod fields;
pub mod growth;
pub mod harness;
pub mod io;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
