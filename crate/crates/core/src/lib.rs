//! Space-discrete transport chain driven by additive Lévy noise.
//!
//! The chain `a_n' = a_{n-1} - a_{n+1} - nu a_n` (with `a_0 = 0` and the noise
//! injected at shell 1) has an explicit solution in terms of Bessel functions
//! of the first kind. This crate evaluates that solution, checks it against a
//! direct time-stepping scheme, and characterises the stationary laws reached
//! in the pull-back limit, together with the continuum transport analogue.

pub mod bessel_kernel;
pub mod continuum_limit;
mod error;
pub mod euler_oracle;
pub mod exact_solver;
pub mod levy_driver;
pub mod quadrature;
pub mod stationary_analysis;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use levy_driver::{CumulantSpec, JumpComponent, JumpLaw, LevyPath, SecondMoments};
pub use trajectory::Trajectory;
