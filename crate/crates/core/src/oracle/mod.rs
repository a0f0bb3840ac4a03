//! Brute-force reference values: adaptive quadrature of the raw covariance
//! integrands, kept independent of the closed forms in [`crate::kernels`].

pub mod cubature;
pub mod integrands;
pub mod verify;

pub use cubature::{integrate_1d, integrate_rectangle, QuadResult};
pub use integrands::{
    quad_cov, quad_delta_increment_cov, quad_gamma_half, quad_ux_increment_cov, IntegrandId, QuadParams,
    QuadratureSpec,
};
pub use verify::{verify_closed_forms, FormulaKind, FormulaReport, VerifyReport};
