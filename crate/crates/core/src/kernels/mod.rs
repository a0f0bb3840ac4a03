//! Closed-form covariances, moments and bias factors.

mod bounded;
mod delta;
mod phi;
mod qstat;
pub mod special;
mod split;
mod ux;

pub use bounded::bounded_domain_cov;
pub use delta::{
    delta_u_increment_cov, delta_u_increment_cov_closed_form, delta_u_increment_variance,
    delta_u_increment_variance_blocks, mu_factor, Regime, StencilRegime,
};
pub use phi::{phi_c, phi_pair};
pub use qstat::{q_expectations, IncrementVariant, QExpectations};
pub use special::{gamma_half_integral, rect_integral_5half};
pub use ux::{ux_increment_cov, ux_increment_variance, ux_pointwise_cov};

pub(crate) use qstat::covariance_table;
