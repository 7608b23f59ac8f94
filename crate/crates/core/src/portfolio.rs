//! In-memory claim histories.

use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};

/// Claims of one policy-year: a count and that many positive amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearClaim {
    pub count: usize,
    #[serde(default)]
    pub severities: Vec<f64>,
}

impl YearClaim {
    pub fn new(severities: Vec<f64>) -> Self {
        Self {
            count: severities.len(),
            severities,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.severities.len() != self.count {
            return Err(format!(
                "count {} but {} severities",
                self.count,
                self.severities.len()
            ));
        }
        if let Some(bad) = self.severities.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
            return Err(format!("non-positive severity {bad}"));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.severities.iter().fold(0.0, |acc, y| acc + y)
    }
}

/// One observed year with its design rows.
///
/// `x` feeds the frequency regression and `w` the severity regression; both
/// include the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyYear {
    pub year: i64,
    pub claim: YearClaim,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl PolicyYear {
    pub fn intercept_only(year: i64, claim: YearClaim) -> Self {
        Self {
            year,
            claim,
            x: vec![1.0],
            w: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHistory {
    pub policy_id: String,
    pub years: Vec<PolicyYear>,
}

impl PolicyHistory {
    /// Intercept-only history with years numbered from 1.
    pub fn from_claims(policy_id: impl Into<String>, claims: Vec<YearClaim>) -> Self {
        Self {
            policy_id: policy_id.into(),
            years: claims
                .into_iter()
                .enumerate()
                .map(|(i, c)| PolicyYear::intercept_only(i as i64 + 1, c))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| CrmError::InconsistentHistory {
            policy_id: self.policy_id.clone(),
            message,
        };
        if self.years.is_empty() {
            return Err(fail("history has no years".into()));
        }
        for y in &self.years {
            y.claim
                .validate()
                .map_err(|m| fail(format!("year {}: {m}", y.year)))?;
            if y.x.iter().chain(&y.w).any(|v| !v.is_finite()) {
                return Err(fail(format!("year {}: non-finite covariate", y.year)));
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<usize> {
        self.years.iter().map(|y| y.claim.count).collect()
    }

    /// Restriction to the years satisfying `keep`.
    pub fn filter_years(&self, keep: impl Fn(i64) -> bool) -> Option<PolicyHistory> {
        let years: Vec<PolicyYear> = self.years.iter().filter(|y| keep(y.year)).cloned().collect();
        (!years.is_empty()).then(|| PolicyHistory {
            policy_id: self.policy_id.clone(),
            years,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Portfolio {
    pub policies: Vec<PolicyHistory>,
    /// Design-row names for the frequency regression, intercept first.
    pub frequency_covariates: Vec<String>,
    /// Design-row names for the severity regression, intercept first.
    pub severity_covariates: Vec<String>,
}

impl Portfolio {
    pub fn intercept_only(policies: Vec<PolicyHistory>) -> Self {
        Self {
            policies,
            frequency_covariates: vec![crate::INTERCEPT.to_string()],
            severity_covariates: vec![crate::INTERCEPT.to_string()],
        }
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn total_claims(&self) -> usize {
        self.policies
            .iter()
            .flat_map(|p| &p.years)
            .map(|y| y.claim.count)
            .sum()
    }

    pub fn policy_years(&self) -> usize {
        self.policies.iter().map(|p| p.years.len()).sum()
    }

    pub fn filter_years(&self, keep: impl Fn(i64) -> bool + Copy) -> Portfolio {
        Portfolio {
            policies: self
                .policies
                .iter()
                .filter_map(|p| p.filter_years(keep))
                .collect(),
            frequency_covariates: self.frequency_covariates.clone(),
            severity_covariates: self.severity_covariates.clone(),
        }
    }
}
