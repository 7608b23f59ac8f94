//! Reference density built directly from the full correlation matrix.
//!
//! The severity coordinates are conditioned on by generic matrix algebra and
//! the count coordinates enter through a signed sum of multivariate normal
//! CDF values over the vertices `b_t in {n_t - 1, n_t}`. Each CDF is computed
//! by nested adaptive quadrature. This path shares no code with the factor
//! integration and is meant for small instances only.

use nalgebra::{DMatrix, DVector};

use crate::dependence::{build_sigma, FrequencyVector};
use crate::error::{CrmError, Result};
use crate::marginals::{CountDistribution, SeverityDistribution};
use crate::model::{CopulaFamily, ModelParams};
use crate::portfolio::PolicyHistory;
use crate::quadrature::integrate;
use crate::special::{norm_cdf, norm_ln_pdf, norm_ppf};

pub const ORACLE_MAX_YEARS: usize = 3;
pub const ORACLE_MAX_CLAIMS: usize = 5;

const CDF_TOL: f64 = 1e-13;

/// `P(X <= upper)` for `X ~ N(mean, cov)` by sequential conditioning on the
/// first coordinate.
pub fn mvn_cdf(upper: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let k = upper.len();
    if upper.iter().any(|u| *u == f64::NEG_INFINITY) {
        return 0.0;
    }
    let s11 = cov[(0, 0)];
    let sd1 = s11.sqrt();
    let top = norm_cdf((upper[0] - mean[0]) / sd1);
    if k == 1 {
        return top;
    }
    let rest_cov = cov.view((1, 1), (k - 1, k - 1)) - cov.view((1, 0), (k - 1, 1)) * cov.view((0, 1), (1, k - 1)) / s11;
    let slope: DVector<f64> = cov.view((1, 0), (k - 1, 1)).column(0) / s11;
    let rest_mean = mean.rows(1, k - 1).into_owned();
    let integrand = |p: f64| {
        let x1 = mean[0] + sd1 * norm_ppf(p);
        let m = &rest_mean + &slope * (x1 - mean[0]);
        mvn_cdf(&upper[1..], &m, &rest_cov)
    };
    integrate(integrand, 0.0, top, CDF_TOL, 1e-12)
}

/// Density of a small history by the vertex-sum construction.
pub fn oracle_density(history: &PolicyHistory, params: &ModelParams) -> Result<f64> {
    history.validate()?;
    params.validate()?;
    if params.copula != CopulaFamily::Gaussian {
        return Err(CrmError::InvalidArgument(
            "the reference density is implemented for the Gaussian copula only".into(),
        ));
    }
    let counts = history.counts();
    let total: usize = counts.iter().sum();
    if counts.len() > ORACLE_MAX_YEARS || total > ORACLE_MAX_CLAIMS {
        return Err(CrmError::SizeCap {
            max_years: ORACLE_MAX_YEARS,
            max_claims: ORACLE_MAX_CLAIMS,
        });
    }
    let sigma = build_sigma(&FrequencyVector::new(counts.clone())?, &params.rho()).entries;

    // Split coordinates into frequency and severity indices.
    let mut freq_idx = Vec::new();
    let mut sev_idx = Vec::new();
    let mut scores = Vec::new();
    let mut log_jac = 0.0;
    let mut upper_hi = Vec::new();
    let mut upper_lo = Vec::new();
    let mut pos = 0;
    for year in &history.years {
        let (freq, sev) = params.year_laws(year)?;
        freq_idx.push(pos);
        let n = year.claim.count as i64;
        upper_hi.push(norm_ppf(freq.cdf(n)));
        upper_lo.push(if n == 0 {
            f64::NEG_INFINITY
        } else {
            norm_ppf(freq.cdf(n - 1))
        });
        pos += 1;
        for &y in &year.claim.severities {
            let z = norm_ppf(sev.cdf(y));
            sev_idx.push(pos);
            scores.push(z);
            log_jac += sev.ln_pdf(y) - norm_ln_pdf(z);
            pos += 1;
        }
    }

    let tau = freq_idx.len();
    let m = sev_idx.len();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| sigma[(rows[i], cols[j])])
    };
    let s_ff = pick(&freq_idx, &freq_idx);

    let (cond_mean, cond_cov, sev_density) = if m == 0 {
        (DVector::zeros(tau), s_ff, 1.0)
    } else {
        let s_ss = pick(&sev_idx, &sev_idx);
        let s_fs = pick(&freq_idx, &sev_idx);
        let z = DVector::from_vec(scores);
        let chol = s_ss.clone().cholesky().ok_or_else(|| {
            CrmError::InvalidArgument("severity block is not positive definite".into())
        })?;
        let solved = chol.solve(&z);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_phi = -0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * log_det
            - 0.5 * z.dot(&solved);
        let gain = chol.solve(&s_fs.transpose());
        let mean = &s_fs * solved;
        let cov = &s_ff - &s_fs * gain;
        (mean, cov, (log_phi + log_jac).exp())
    };

    let mut prob = 0.0;
    for mask in 0..(1usize << tau) {
        let upper: Vec<f64> = (0..tau)
            .map(|t| {
                if mask & (1 << t) != 0 {
                    upper_lo[t]
                } else {
                    upper_hi[t]
                }
            })
            .collect();
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        prob += sign * mvn_cdf(&upper, &cond_mean, &cond_cov);
    }
    Ok(sev_density * prob.max(0.0))
}
