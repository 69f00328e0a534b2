//! Parameter estimation for ODE models driven by discontinuous signals.
//!
//! Sampled inputs are held piecewise constant. Fitting alternates between
//! training a smooth surrogate of the input and a Levenberg–Marquardt
//! solve of the model driven by that surrogate.

pub mod error;
pub mod hades;
pub mod models;
pub mod norms;
pub mod optim;
pub mod ode;
pub mod signal;
pub mod smoother;

pub use error::{Error, Result};
