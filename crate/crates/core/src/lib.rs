//! Multi-year microlevel collective risk model.
//!
//! Claim counts and individual claim amounts of a policyholder over several
//! years are coupled through an elliptical (Gaussian or t) copula whose
//! correlation matrix has a two-factor structure: a shared random effect
//! common to all years and a per-year effect. The crate provides
//!
//! * construction and validation of the structured correlation matrices
//!   ([`dependence`]),
//! * Poisson/Weibull regression marginals ([`marginals`]),
//! * the joint density of a claim history by one-dimensional factor
//!   quadrature, with a brute-force reference path ([`copula_density`]),
//! * portfolio simulation ([`simulate`]),
//! * maximum likelihood with observed-information and delta-method inference
//!   ([`estimate`]),
//! * Monte-Carlo loss prediction and validation metrics ([`validate`]),
//! * CSV/JSON input and report output ([`io`]).

pub mod copula_density;
pub mod dependence;
pub mod error;
pub mod estimate;
pub mod io;
pub mod marginals;
pub mod model;
pub mod portfolio;
pub mod quadrature;
pub mod simulate;
pub mod special;
pub mod validate;

pub use copula_density::{
    log_density, log_density_gaussian, log_density_t, oracle_density, DensityValue,
};
pub use dependence::{
    build_augmented_sigma, build_sigma, check_admissible, is_positive_definite, rho_from_theta,
    schur_complement_factor, FrequencyVector, RhoParams, StructuredCorrMatrix, ThetaParams,
};
pub use error::{CrmError, Result};
pub use model::{CopulaFamily, ModelParams};
pub use portfolio::{PolicyHistory, PolicyYear, Portfolio, YearClaim};
pub use quadrature::QuadratureRule;

/// Name of the constant design column.
pub const INTERCEPT: &str = "(Intercept)";
