//! Periodic orbits of semilinear evolution problems in a sine basis.

pub mod averaging;
pub mod conley;
pub mod degree;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod linalg;
pub mod matfun;
pub mod nonlinearity;
pub mod poincare;
pub mod problem;
pub mod quadrature;
pub mod resonance;
pub mod scenarios;
pub mod spectral;

pub use error::{LabError, Result};
