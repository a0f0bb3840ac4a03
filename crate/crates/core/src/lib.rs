//! Simulation and power-variation estimation for the stochastic heat
//! equation `du = theta u_xx dt + sigma dW(x)` driven by space-only white
//! noise.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod model;
pub mod montecarlo;
pub mod oracle;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{uniform_times, ModelParams, SamplingScheme};
