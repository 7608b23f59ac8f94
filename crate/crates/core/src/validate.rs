//! Hold-out prediction of aggregate losses and model-comparison metrics.
//!
//! Predictions are unconditional on a policy's own history: each hold-out
//! year is simulated from the fitted model at its covariates and the
//! simulated totals are averaged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};
use crate::estimate::{fit_from_template, FitOptions, FitResult, ModelVariant};
use crate::model::ModelParams;
use crate::portfolio::Portfolio;
use crate::simulate::{policy_rng, simulate_policy, YearCovariates};

pub const DEFAULT_PREDICTION_SAMPLES: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub samples: usize,
    pub seed: u64,
    /// Loadings outside the variant are zeroed before simulating.
    pub variant: ModelVariant,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_PREDICTION_SAMPLES,
            seed: 0,
            variant: ModelVariant::Full,
        }
    }
}

/// Covariates of one hold-out policy-year and its realized loss, if known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    pub policy_id: String,
    pub year: i64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub actual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub policy_id: String,
    pub predicted: f64,
    /// Monte-Carlo standard error of `predicted`.
    pub std_error: f64,
}

/// Splits off the given year as a hold-out set. Policies keep their other
/// years for training; a policy observed only in the hold-out year is
/// predicted but contributes nothing to training.
pub fn split_holdout(data: &Portfolio, test_year: i64) -> (Portfolio, Vec<HoldoutRow>) {
    let train = data.filter_years(|y| y != test_year);
    let holdout = data
        .policies
        .iter()
        .flat_map(|h| {
            h.years.iter().filter(|y| y.year == test_year).map(|y| HoldoutRow {
                policy_id: h.policy_id.clone(),
                year: y.year,
                x: y.x.clone(),
                w: y.w.clone(),
                actual: Some(y.claim.total()),
            })
        })
        .collect();
    (train, holdout)
}

/// Mean simulated one-year aggregate loss per hold-out row. Row `i` uses
/// random stream `i` of `config.seed`.
pub fn predict_aggregate_loss(
    rows: &[HoldoutRow],
    params: &ModelParams,
    config: &PredictionConfig,
) -> Result<Vec<Prediction>> {
    if config.samples == 0 {
        return Err(CrmError::InvalidArgument("prediction needs at least one sample".into()));
    }
    let mut params = params.clone();
    params.theta = config.variant.restrict(params.theta);
    params.validate()?;
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut rng = policy_rng(config.seed, i as u64);
            let cov = [YearCovariates {
                year: row.year,
                x: row.x.clone(),
                w: row.w.clone(),
            }];
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..config.samples {
                let (h, _) = simulate_policy(&params, &row.policy_id, &cov, &mut rng)?;
                let s = h.years[0].claim.total();
                sum += s;
                sum_sq += s * s;
            }
            let n = config.samples as f64;
            let mean = sum / n;
            let var = if config.samples > 1 {
                ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok(Prediction {
                policy_id: row.policy_id.clone(),
                predicted: mean,
                std_error: (var / n).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Gini index of the ordered Lorenz curve, times 100.
    pub gini: f64,
}

/// Error metrics and ordered-Lorenz Gini of predictions against realized
/// losses.
pub fn validation_metrics(actual: &[f64], predicted: &[f64]) -> Result<ValidationReport> {
    if actual.len() != predicted.len() {
        return Err(CrmError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(CrmError::InvalidArgument("no observations to validate".into()));
    }
    let n = actual.len() as f64;
    let mse = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / n;
    let mae = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / n;
    Ok(ValidationReport {
        mse,
        rmse: mse.sqrt(),
        mae,
        gini: 100.0 * gini_index(actual, predicted),
    })
}

/// Twice the area between the diagonal and the ordered Lorenz curve, with
/// policies sorted by ascending score and equal exposure weights.
///
/// Policies with tied scores form one linear piece of the curve, so the
/// value does not depend on input order and a constant score gives zero.
pub fn gini_index(actual: &[f64], score: &[f64]) -> f64 {
    let total: f64 = actual.iter().sum();
    let n = actual.len();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let mut area = 0.0;
    let mut cum_loss = 0.0;
    let mut k = 0;
    while k < n {
        let mut end = k;
        let mut group = 0.0;
        while end < n && score[order[end]] == score[order[k]] {
            group += actual[order[end]];
            end += 1;
        }
        let width = (end - k) as f64 / n as f64;
        let before = cum_loss / total;
        cum_loss += group;
        area += 0.5 * width * (before + cum_loss / total);
        k = end;
    }
    2.0 * (0.5 - area)
}

/// One row of a model-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: ModelVariant,
    pub report: ValidationReport,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub rows: Vec<ComparisonRow>,
    pub fits: Vec<FitResult>,
    pub predictions: Vec<Vec<Prediction>>,
}

/// Fits each variant on `train`, predicts the hold-out rows and scores the
/// predictions. All variants share the prediction seed.
pub fn nested_model_comparison(
    train: &Portfolio,
    holdout: &[HoldoutRow],
    template: &ModelParams,
    variants: &[ModelVariant],
    options: &FitOptions,
    prediction: &PredictionConfig,
) -> Result<ModelComparison> {
    let actual: Vec<f64> = holdout
        .iter()
        .map(|r| {
            r.actual.ok_or_else(|| {
                CrmError::InvalidArgument(format!("hold-out row for '{}' has no realized loss", r.policy_id))
            })
        })
        .collect::<Result<_>>()?;
    let mut out = ModelComparison {
        rows: Vec::new(),
        fits: Vec::new(),
        predictions: Vec::new(),
    };
    for &variant in variants {
        let opts = FitOptions {
            variant,
            ..options.clone()
        };
        let fit = fit_from_template(train, template, &opts)?;
        let cfg = PredictionConfig {
            variant,
            ..prediction.clone()
        };
        let preds = predict_aggregate_loss(holdout, &fit.estimates, &cfg)?;
        let predicted: Vec<f64> = preds.iter().map(|p| p.predicted).collect();
        out.rows.push(ComparisonRow {
            variant,
            report: validation_metrics(&actual, &predicted)?,
            log_likelihood: fit.log_likelihood,
        });
        out.fits.push(fit);
        out.predictions.push(preds);
    }
    Ok(out)
}
