//! Built-in benchmark models and the name registry.

mod circadian;
mod lotka_volterra;
mod registry;

pub use circadian::Circadian;
pub use lotka_volterra::LotkaVolterra;
pub use registry::ModelRegistry;
