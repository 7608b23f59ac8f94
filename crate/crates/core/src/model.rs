//! Full parameter set of the multi-year model.

use serde::{Deserialize, Serialize};

use crate::dependence::{check_admissible, RhoParams, ThetaParams};
use crate::error::{CrmError, Result};
use crate::marginals::{
    FrequencyFamily, FrequencyLaw, FrequencySpec, SeverityFamily, SeverityLaw, SeveritySpec,
};
use crate::portfolio::PolicyYear;

/// Elliptical family of the latent dependence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CopulaFamily {
    #[default]
    Gaussian,
    T {
        nu_df: f64,
    },
}

impl CopulaFamily {
    pub fn nu_df(&self) -> Option<f64> {
        match self {
            CopulaFamily::Gaussian => None,
            CopulaFamily::T { nu_df } => Some(*nu_df),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub frequency: FrequencySpec,
    pub severity: SeveritySpec,
    pub theta: ThetaParams,
    #[serde(default)]
    pub copula: CopulaFamily,
}

impl ModelParams {
    /// Single risk class: Poisson(`lambda`) counts, Weibull(`xi`, `nu_sev`)
    /// severities, Gaussian copula.
    pub fn intercept_only(lambda: f64, xi: f64, nu_sev: f64, theta: ThetaParams) -> Self {
        Self {
            frequency: FrequencySpec {
                family: FrequencyFamily::Poisson,
                coefficients: vec![lambda.ln()],
                covariates: vec![crate::INTERCEPT.into()],
            },
            severity: SeveritySpec {
                family: SeverityFamily::Weibull,
                coefficients: vec![xi.ln()],
                shape: nu_sev,
                covariates: vec![crate::INTERCEPT.into()],
            },
            theta,
            copula: CopulaFamily::Gaussian,
        }
    }

    pub fn with_copula(mut self, copula: CopulaFamily) -> Self {
        self.copula = copula;
        self
    }

    pub fn rho(&self) -> RhoParams {
        self.theta.rho()
    }

    pub fn validate(&self) -> Result<()> {
        if !check_admissible(&self.theta) {
            return Err(CrmError::Inadmissible(self.theta));
        }
        if !(self.severity.shape > 0.0 && self.severity.shape.is_finite()) {
            return Err(CrmError::InvalidArgument(format!(
                "severity shape must be positive, got {}",
                self.severity.shape
            )));
        }
        if let CopulaFamily::T { nu_df } = self.copula {
            if !(nu_df > 0.0) {
                return Err(CrmError::InvalidArgument(format!(
                    "t copula degrees of freedom must be positive, got {nu_df}"
                )));
            }
        }
        if self
            .frequency
            .coefficients
            .iter()
            .chain(&self.severity.coefficients)
            .any(|c| !c.is_finite())
        {
            return Err(CrmError::InvalidArgument("non-finite regression coefficient".into()));
        }
        Ok(())
    }

    /// Marginal laws for one policy-year.
    pub fn year_laws(&self, year: &PolicyYear) -> Result<(FrequencyLaw, SeverityLaw)> {
        Ok((self.frequency.law(&year.x)?, self.severity.law(&year.w)?))
    }
}
