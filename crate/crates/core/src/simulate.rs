//! Portfolio simulation through the latent two-factor representation.
//!
//! For one policy draw the shared effect `r` and, per year, a year effect
//! `v_t`. The frequency latent is `theta1 r + theta3 v_t + e0` and each
//! severity latent is `theta2 r + theta4 v_t + e_j`, with idiosyncratic noise
//! scaled to unit variance. Severity latents are drawn only for the realized
//! count. For the t copula all latents of a policy share one chi-square
//! mixing draw.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dependence::ThetaParams;
use crate::error::{CrmError, Result};
use crate::marginals::{CountDistribution, SeverityDistribution};
use crate::model::{CopulaFamily, ModelParams};
use crate::portfolio::{PolicyHistory, PolicyYear, Portfolio, YearClaim};
use crate::special::{norm_cdf, StudentT};

/// Settings of a single-risk-class simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub policies: usize,
    pub years: usize,
    pub lambda0: f64,
    pub xi0: f64,
    pub nu_sev: f64,
    pub theta: ThetaParams,
    #[serde(default)]
    pub copula: CopulaFamily,
    #[serde(default)]
    pub seed: u64,
}

/// Loadings of the eight reference scenarios, in order.
pub const SCENARIO_THETAS: [[f64; 4]; 8] = [
    [0.3, 0.3, 0.5, 0.5],
    [0.3, 0.3, 0.0, 0.0],
    [0.3, 0.7, 0.5, 0.5],
    [0.3, 0.7, 0.0, 0.0],
    [0.7, 0.3, 0.5, 0.5],
    [0.7, 0.3, 0.0, 0.0],
    [0.7, 0.7, 0.5, 0.5],
    [0.7, 0.7, 0.0, 0.0],
];

impl ScenarioConfig {
    /// Reference scenario `1..=8`: 500 policies over 3 years, Poisson mean 2,
    /// Weibull mean `exp(8)` and shape 0.7.
    pub fn reference(scenario: usize) -> Result<Self> {
        let theta = SCENARIO_THETAS
            .get(scenario.wrapping_sub(1))
            .ok_or_else(|| CrmError::InvalidArgument(format!("unknown scenario {scenario}")))?;
        Ok(Self {
            policies: 500,
            years: 3,
            lambda0: 2.0,
            xi0: 8f64.exp(),
            nu_sev: 0.7,
            theta: ThetaParams::from_array(*theta),
            copula: CopulaFamily::Gaussian,
            seed: 0,
        })
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams::intercept_only(self.lambda0, self.xi0, self.nu_sev, self.theta)
            .with_copula(self.copula)
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies == 0 || self.years == 0 {
            return Err(CrmError::InvalidArgument(
                "portfolio size and number of years must be at least 1".into(),
            ));
        }
        self.model_params().validate()
    }
}

/// Design rows of one simulated year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearCovariates {
    pub year: i64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl YearCovariates {
    pub fn intercept_only(year: i64) -> Self {
        Self {
            year,
            x: vec![1.0],
            w: vec![1.0],
        }
    }
}

/// Gaussian latents behind one simulated policy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentRecord {
    pub r: f64,
    pub year_effects: Vec<f64>,
    pub frequency: Vec<f64>,
    pub severity: Vec<Vec<f64>>,
    /// Chi-square mixing value, `1` for the Gaussian copula.
    pub mixing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPortfolio {
    pub portfolio: Portfolio,
    pub latents: Option<Vec<LatentRecord>>,
}

/// Independent, counter-addressed random stream for policy `index`.
pub fn policy_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Maps a latent value to `(P(X <= v), P(X > v))` on the copula's scale.
enum Marginalizer {
    Normal,
    T { dist: StudentT, scale: f64 },
}

impl Marginalizer {
    fn probs(&self, v: f64) -> (f64, f64) {
        match self {
            Marginalizer::Normal => (norm_cdf(v), norm_cdf(-v)),
            Marginalizer::T { dist, scale } => {
                let x = v / scale;
                (dist.cdf(x), dist.cdf(-x))
            }
        }
    }
}

/// Simulates one policy history over the years given by `covariates`.
pub fn simulate_policy<R: Rng + ?Sized>(
    params: &ModelParams,
    policy_id: &str,
    covariates: &[YearCovariates],
    rng: &mut R,
) -> Result<(PolicyHistory, LatentRecord)> {
    params.validate()?;
    let ThetaParams {
        theta1,
        theta2,
        theta3,
        theta4,
    } = params.theta;
    let freq_noise = (1.0 - theta1 * theta1 - theta3 * theta3).sqrt();
    let sev_noise = (1.0 - theta2 * theta2 - theta4 * theta4).sqrt();

    let (marginalizer, mixing) = match params.copula {
        CopulaFamily::Gaussian => (Marginalizer::Normal, 1.0),
        CopulaFamily::T { nu_df } => {
            let chi = ChiSquared::new(nu_df)
                .map_err(|e| CrmError::InvalidArgument(format!("chi-square: {e}")))?;
            let w = chi.sample(rng) / nu_df;
            (
                Marginalizer::T {
                    dist: StudentT::new(nu_df),
                    scale: w.sqrt(),
                },
                w,
            )
        }
    };

    let r = normal(rng);
    let mut record = LatentRecord {
        r,
        mixing,
        ..Default::default()
    };
    let mut years = Vec::with_capacity(covariates.len());
    for cov in covariates {
        let year = PolicyYear {
            year: cov.year,
            claim: YearClaim::empty(),
            x: cov.x.clone(),
            w: cov.w.clone(),
        };
        let (freq, sev) = params.year_laws(&year)?;
        let v = normal(rng);
        let a = theta1 * r + theta3 * v + freq_noise * normal(rng);
        let (u, _) = marginalizer.probs(a);
        let n = freq.inverse_cdf(u) as usize;
        let mut latents = Vec::with_capacity(n);
        let mut amounts = Vec::with_capacity(n);
        for _ in 0..n {
            let b = theta2 * r + theta4 * v + sev_noise * normal(rng);
            let (_, upper) = marginalizer.probs(b);
            amounts.push(sev.quantile_upper(upper));
            latents.push(b);
        }
        record.year_effects.push(v);
        record.frequency.push(a);
        record.severity.push(latents);
        years.push(PolicyYear {
            claim: YearClaim::new(amounts),
            ..year
        });
    }
    Ok((
        PolicyHistory {
            policy_id: policy_id.to_string(),
            years,
        },
        record,
    ))
}

/// Simulates `config.policies` independent policies, policy `i` drawing from
/// stream `i` of `config.seed`. Output does not depend on thread scheduling.
pub fn simulate_portfolio(config: &ScenarioConfig, keep_latents: bool) -> Result<SimulatedPortfolio> {
    config.validate()?;
    let params = config.model_params();
    let covariates: Vec<YearCovariates> = (1..=config.years as i64)
        .map(YearCovariates::intercept_only)
        .collect();
    let results: Vec<(PolicyHistory, LatentRecord)> = (0..config.policies)
        .into_par_iter()
        .map(|i| {
            let mut rng = policy_rng(config.seed, i as u64);
            simulate_policy(&params, &(i + 1).to_string(), &covariates, &mut rng)
        })
        .collect::<Result<_>>()?;
    let (policies, latents): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(SimulatedPortfolio {
        portfolio: Portfolio::intercept_only(policies),
        latents: keep_latents.then_some(latents),
    })
}
