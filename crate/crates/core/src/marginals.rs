//! Frequency and severity marginal laws with log-link regression.
//!
//! Counts follow a Poisson law with mean `exp(x . beta)`; individual claim
//! amounts follow a Weibull law in mean parameterization, mean
//! `exp(w . gamma)` and shape `nu_sev`. Families are looked up by name so
//! other laws can be registered next to these.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{CrmError, Result};

pub trait CountDistribution {
    fn ln_pmf(&self, n: u64) -> f64;
    /// `P(N <= n)`; zero for negative `n`.
    fn cdf(&self, n: i64) -> f64;
    /// Smallest `n >= 0` with `cdf(n) >= u`.
    fn inverse_cdf(&self, u: f64) -> u64;
    fn mean(&self) -> f64;
}

pub trait SeverityDistribution {
    fn ln_pdf(&self, y: f64) -> f64;
    fn cdf(&self, y: f64) -> f64;
    fn sf(&self, y: f64) -> f64;
    fn quantile(&self, u: f64) -> f64;
    /// Quantile at level `1 - upper`, accurate for small `upper`.
    fn quantile_upper(&self, upper: f64) -> f64 {
        self.quantile(1.0 - upper)
    }
    fn mean(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poisson {
    lambda: f64,
}

impl Poisson {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(CrmError::InvalidArgument(format!(
                "Poisson mean must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl CountDistribution for Poisson {
    fn ln_pmf(&self, n: u64) -> f64 {
        let n = n as f64;
        n * self.lambda.ln() - self.lambda - ln_gamma(n + 1.0)
    }

    fn cdf(&self, n: i64) -> f64 {
        if n < 0 {
            return 0.0;
        }
        gamma_ur(n as f64 + 1.0, self.lambda)
    }

    fn inverse_cdf(&self, u: f64) -> u64 {
        if !(u > 0.0) {
            return 0;
        }
        let mut n: i64 = if self.lambda > 50.0 {
            (self.lambda - 10.0 * self.lambda.sqrt()).max(0.0) as i64
        } else {
            0
        };
        while n > 0 && self.cdf(n - 1) >= u {
            n -= 1;
        }
        // The cap guards against u numerically indistinguishable from 1.
        let cap = (self.lambda + 40.0 * self.lambda.sqrt() + 100.0) as i64;
        while self.cdf(n) < u && n < cap {
            n += 1;
        }
        n as u64
    }

    fn mean(&self) -> f64 {
        self.lambda
    }
}

/// Weibull law parameterized by its mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weibull {
    mean: f64,
    shape: f64,
    scale: f64,
}

impl Weibull {
    pub fn new(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(CrmError::InvalidArgument(format!(
                "Weibull mean must be positive and finite, got {mean}"
            )));
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(CrmError::InvalidArgument(format!(
                "Weibull shape must be positive and finite, got {shape}"
            )));
        }
        let scale = mean / ln_gamma(1.0 + 1.0 / shape).exp();
        Ok(Self { mean, shape, scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    fn standardized(&self, y: f64) -> f64 {
        (y / self.scale).powf(self.shape)
    }
}

impl SeverityDistribution for Weibull {
    fn ln_pdf(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return f64::NEG_INFINITY;
        }
        let z = y / self.scale;
        (self.shape / self.scale).ln() + (self.shape - 1.0) * z.ln() - z.powf(self.shape)
    }

    fn cdf(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return 0.0;
        }
        -(-self.standardized(y)).exp_m1()
    }

    fn sf(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return 1.0;
        }
        (-self.standardized(y)).exp()
    }

    fn quantile(&self, u: f64) -> f64 {
        self.scale * (-(-u).ln_1p()).powf(1.0 / self.shape)
    }

    fn quantile_upper(&self, upper: f64) -> f64 {
        self.scale * (-upper.ln()).powf(1.0 / self.shape)
    }

    fn mean(&self) -> f64 {
        self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyFamily {
    #[default]
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityFamily {
    #[default]
    Weibull,
}

/// A frequency law instantiated at a given mean.
#[derive(Debug, Clone, Copy)]
pub enum FrequencyLaw {
    Poisson(Poisson),
}

/// A severity law instantiated at a given mean and shape.
#[derive(Debug, Clone, Copy)]
pub enum SeverityLaw {
    Weibull(Weibull),
}

impl FrequencyFamily {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Self::Poisson),
            other => Err(CrmError::Config(format!("unknown frequency family '{other}'"))),
        }
    }

    pub fn law(self, mean: f64) -> Result<FrequencyLaw> {
        match self {
            Self::Poisson => Poisson::new(mean).map(FrequencyLaw::Poisson),
        }
    }
}

impl SeverityFamily {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "weibull" => Ok(Self::Weibull),
            other => Err(CrmError::Config(format!("unknown severity family '{other}'"))),
        }
    }

    pub fn law(self, mean: f64, shape: f64) -> Result<SeverityLaw> {
        match self {
            Self::Weibull => Weibull::new(mean, shape).map(SeverityLaw::Weibull),
        }
    }
}

impl CountDistribution for FrequencyLaw {
    fn ln_pmf(&self, n: u64) -> f64 {
        match self {
            Self::Poisson(d) => d.ln_pmf(n),
        }
    }
    fn cdf(&self, n: i64) -> f64 {
        match self {
            Self::Poisson(d) => d.cdf(n),
        }
    }
    fn inverse_cdf(&self, u: f64) -> u64 {
        match self {
            Self::Poisson(d) => d.inverse_cdf(u),
        }
    }
    fn mean(&self) -> f64 {
        match self {
            Self::Poisson(d) => d.mean(),
        }
    }
}

impl SeverityDistribution for SeverityLaw {
    fn ln_pdf(&self, y: f64) -> f64 {
        match self {
            Self::Weibull(d) => d.ln_pdf(y),
        }
    }
    fn cdf(&self, y: f64) -> f64 {
        match self {
            Self::Weibull(d) => d.cdf(y),
        }
    }
    fn sf(&self, y: f64) -> f64 {
        match self {
            Self::Weibull(d) => d.sf(y),
        }
    }
    fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Weibull(d) => d.quantile(u),
        }
    }
    fn quantile_upper(&self, upper: f64) -> f64 {
        match self {
            Self::Weibull(d) => d.quantile_upper(upper),
        }
    }
    fn mean(&self) -> f64 {
        match self {
            Self::Weibull(d) => d.mean(),
        }
    }
}

/// Frequency regression: `lambda = exp(x . coefficients)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpec {
    #[serde(default)]
    pub family: FrequencyFamily,
    pub coefficients: Vec<f64>,
    /// Names of the design-row entries, intercept included.
    #[serde(default)]
    pub covariates: Vec<String>,
}

/// Severity regression: `xi = exp(w . coefficients)`, shape `nu_sev`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeveritySpec {
    #[serde(default)]
    pub family: SeverityFamily,
    pub coefficients: Vec<f64>,
    pub shape: f64,
    #[serde(default)]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub frequency: FrequencySpec,
    pub severity: SeveritySpec,
}

fn linear_predictor(coefficients: &[f64], row: &[f64]) -> Result<f64> {
    if coefficients.len() != row.len() {
        return Err(CrmError::LengthMismatch {
            left: coefficients.len(),
            right: row.len(),
        });
    }
    Ok(coefficients.iter().zip(row).map(|(c, x)| c * x).sum())
}

impl FrequencySpec {
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(linear_predictor(&self.coefficients, x)?.exp())
    }

    pub fn law(&self, x: &[f64]) -> Result<FrequencyLaw> {
        self.family.law(self.mean(x)?)
    }
}

impl SeveritySpec {
    pub fn mean(&self, w: &[f64]) -> Result<f64> {
        Ok(linear_predictor(&self.coefficients, w)?.exp())
    }

    pub fn law(&self, w: &[f64]) -> Result<SeverityLaw> {
        self.family.law(self.mean(w)?, self.shape)
    }
}

pub fn freq_pmf(n: u64, lambda: f64) -> Result<f64> {
    Ok(Poisson::new(lambda)?.ln_pmf(n).exp())
}

pub fn freq_cdf(n: i64, lambda: f64) -> Result<f64> {
    Ok(Poisson::new(lambda)?.cdf(n))
}

pub fn freq_inverse_cdf(u: f64, lambda: f64) -> Result<u64> {
    Ok(Poisson::new(lambda)?.inverse_cdf(u))
}

fn positive(name: &str, y: f64) -> Result<f64> {
    if y > 0.0 && y.is_finite() {
        Ok(y)
    } else {
        Err(CrmError::InvalidArgument(format!(
            "{name} must be positive, got {y}"
        )))
    }
}

pub fn sev_pdf(y: f64, xi: f64, nu_sev: f64) -> Result<f64> {
    Ok(Weibull::new(xi, nu_sev)?.ln_pdf(positive("severity", y)?).exp())
}

pub fn sev_cdf(y: f64, xi: f64, nu_sev: f64) -> Result<f64> {
    Ok(Weibull::new(xi, nu_sev)?.cdf(positive("severity", y)?))
}

pub fn sev_quantile(u: f64, xi: f64, nu_sev: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(CrmError::InvalidArgument(format!(
            "quantile level must lie in (0,1), got {u}"
        )));
    }
    Ok(Weibull::new(xi, nu_sev)?.quantile(u))
}
