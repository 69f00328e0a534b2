//! Adaptive integration of non-autonomous models and their forward
//! parameter sensitivities.

mod dopri;
mod integrate;
mod model;

pub use dopri::IntegratorOptions;
pub use integrate::{integrate, integrate_with_sensitivities, InputSource, Trajectory};
pub use model::{check_jacobians, FnModel, ModelSpec, OdeModel};
