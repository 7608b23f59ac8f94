//! Data files, run configuration and report formatting.
//!
//! Two CSV files describe a portfolio. The policy-year file has the columns
//! `policy_id,year,count` followed by any covariates. The claims file has
//! `policy_id,year,claim_index,amount` with claim indices `1..=count` for
//! every policy-year. Covariates used by the regressions are named in a JSON
//! [`RunConfig`]; categorical columns are one-hot encoded against a declared
//! reference level.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};
use crate::estimate::{FitOptions, FitResult, ModelVariant, OptimizerConfig, ParameterEstimate, RhoInference};
use crate::marginals::{FrequencyFamily, FrequencySpec, SeverityFamily, SeveritySpec};
use crate::model::{CopulaFamily, ModelParams};
use crate::portfolio::{PolicyHistory, PolicyYear, Portfolio, YearClaim};
use crate::quadrature::QuadratureConfig;
use crate::simulate::ScenarioConfig;
use crate::validate::{HoldoutRow, ModelComparison, Prediction, PredictionConfig, DEFAULT_PREDICTION_SAMPLES};
use crate::INTERCEPT;

pub const POLICY_YEAR_KEYS: [&str; 3] = ["policy_id", "year", "count"];
pub const CLAIM_COLUMNS: [&str; 4] = ["policy_id", "year", "claim_index", "amount"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    pub family: FrequencyFamily,
    pub covariates: Vec<String>,
    pub intercept: bool,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self {
            family: FrequencyFamily::Poisson,
            covariates: Vec::new(),
            intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityConfig {
    pub family: SeverityFamily,
    pub covariates: Vec<String>,
    pub intercept: bool,
}

impl Default for SeverityConfig {
    fn default() -> Self {
        Self {
            family: SeverityFamily::Weibull,
            covariates: Vec::new(),
            intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalConfig {
    pub levels: Vec<String>,
    pub reference: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Year held out for prediction; training uses the other years.
    pub test_year: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionSettings {
    pub samples: usize,
}

impl Default for PredictionSettings {
    fn default() -> Self {
        Self {
            samples: DEFAULT_PREDICTION_SAMPLES,
        }
    }
}

/// Settings shared by all commands. Every field has a default, so `{}` is a
/// valid configuration for intercept-only Poisson/Weibull models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub frequency: FrequencyConfig,
    pub severity: SeverityConfig,
    pub categorical: BTreeMap<String, CategoricalConfig>,
    pub copula: CopulaFamily,
    pub variant: ModelVariant,
    pub estimate_nu_df: bool,
    pub compute_standard_errors: bool,
    pub quadrature: QuadratureConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub split: SplitConfig,
    pub prediction: PredictionSettings,
    /// Scenario used by `simulate` when no scenario number is given.
    pub simulation: Option<ScenarioConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frequency: FrequencyConfig::default(),
            severity: SeverityConfig::default(),
            categorical: BTreeMap::new(),
            copula: CopulaFamily::Gaussian,
            variant: ModelVariant::Full,
            estimate_nu_df: false,
            compute_standard_errors: true,
            quadrature: QuadratureConfig::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            split: SplitConfig::default(),
            prediction: PredictionSettings::default(),
            simulation: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CrmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CrmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, cat) in &self.categorical {
            if !cat.levels.contains(&cat.reference) {
                return Err(CrmError::Config(format!(
                    "categorical '{name}': reference level '{}' is not among its levels",
                    cat.reference
                )));
            }
        }
        if self.prediction.samples == 0 {
            return Err(CrmError::Config("prediction.samples must be at least 1".into()));
        }
        if self.quadrature.factor_nodes < 1 || self.quadrature.mixing_nodes < 2 {
            return Err(CrmError::Config("quadrature node counts are too small".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            variant: self.variant,
            optimizer: self.optimizer,
            quadrature: self.quadrature,
            compute_standard_errors: self.compute_standard_errors,
            estimate_nu_df: self.estimate_nu_df,
        }
    }

    pub fn prediction_config(&self) -> PredictionConfig {
        PredictionConfig {
            samples: self.prediction.samples,
            seed: self.seed,
            variant: self.variant,
        }
    }

    /// Model skeleton with zero coefficients for the design of `data`.
    pub fn template(&self, data: &Portfolio) -> ModelParams {
        ModelParams {
            frequency: FrequencySpec {
                family: self.frequency.family,
                coefficients: vec![0.0; data.frequency_covariates.len()],
                covariates: data.frequency_covariates.clone(),
            },
            severity: SeveritySpec {
                family: self.severity.family,
                coefficients: vec![0.0; data.severity_covariates.len()],
                shape: 1.0,
                covariates: data.severity_covariates.clone(),
            },
            theta: crate::dependence::ThetaParams::ZERO,
            copula: self.copula,
        }
    }
}

/// How one design-row entry is computed from a CSV record.
#[derive(Debug, Clone, PartialEq)]
enum DesignColumn {
    Intercept,
    Numeric { column: usize },
    Indicator { column: usize, level: String },
}

#[derive(Debug, Clone)]
struct Design {
    names: Vec<String>,
    columns: Vec<DesignColumn>,
}

impl Design {
    fn build(
        covariates: &[String],
        intercept: bool,
        header: &[String],
        categorical: &BTreeMap<String, CategoricalConfig>,
        role: &str,
    ) -> Result<Self> {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        if intercept {
            names.push(INTERCEPT.to_string());
            columns.push(DesignColumn::Intercept);
        }
        for cov in covariates {
            let column = header
                .iter()
                .position(|h| h == cov)
                .filter(|_| !POLICY_YEAR_KEYS.contains(&cov.as_str()))
                .ok_or_else(|| {
                    CrmError::Config(format!(
                        "{role} covariate '{cov}' is not a column of the policy-year file (columns: {})",
                        header.join(", ")
                    ))
                })?;
            match categorical.get(cov) {
                Some(cat) => {
                    for level in cat.levels.iter().filter(|l| **l != cat.reference) {
                        names.push(format!("{cov}={level}"));
                        columns.push(DesignColumn::Indicator {
                            column,
                            level: level.clone(),
                        });
                    }
                }
                None => {
                    names.push(cov.clone());
                    columns.push(DesignColumn::Numeric { column });
                }
            }
        }
        if names.is_empty() {
            return Err(CrmError::Config(format!("{role} regression has no columns")));
        }
        Ok(Self { names, columns })
    }

    fn row(
        &self,
        record: &csv::StringRecord,
        header: &[String],
        categorical: &BTreeMap<String, CategoricalConfig>,
        fail: &dyn Fn(String) -> CrmError,
    ) -> Result<Vec<f64>> {
        self.columns
            .iter()
            .map(|c| match c {
                DesignColumn::Intercept => Ok(1.0),
                DesignColumn::Numeric { column } => {
                    let raw = record.get(*column).unwrap_or("").trim();
                    raw.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| fail(format!("column '{}': '{raw}' is not a finite number", header[*column])))
                }
                DesignColumn::Indicator { column, level } => {
                    let raw = record.get(*column).unwrap_or("").trim();
                    let cat = &categorical[&header[*column]];
                    if !cat.levels.iter().any(|l| l == raw) {
                        return Err(fail(format!(
                            "column '{}': level '{raw}' is not declared (levels: {})",
                            header[*column],
                            cat.levels.join(", ")
                        )));
                    }
                    Ok(if raw == level { 1.0 } else { 0.0 })
                }
            })
            .collect()
    }
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CrmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn read_header(reader: &mut csv::Reader<std::fs::File>) -> Result<Vec<String>> {
    Ok(reader.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

fn require_columns(header: &[String], required: &[&str], file: &str) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|r| {
            header.iter().position(|h| h == r).ok_or_else(|| CrmError::Data {
                file: file.to_string(),
                row: 1,
                message: format!("missing required column '{r}'"),
            })
        })
        .collect()
}

/// Reads a portfolio from the two CSV files. Policies keep the order of
/// their first appearance in the policy-year file; years are sorted.
/// Row numbers in errors count the header as row 1.
pub fn load_portfolio(
    policy_years: impl AsRef<Path>,
    claims: impl AsRef<Path>,
    config: &RunConfig,
) -> Result<Portfolio> {
    let py_path = policy_years.as_ref();
    let py_file = file_label(py_path);
    let mut reader = open_csv(py_path)?;
    let header = read_header(&mut reader)?;
    let key = require_columns(&header, &POLICY_YEAR_KEYS, &py_file)?;
    let x_design = Design::build(
        &config.frequency.covariates,
        config.frequency.intercept,
        &header,
        &config.categorical,
        "frequency",
    )?;
    let w_design = Design::build(
        &config.severity.covariates,
        config.severity.intercept,
        &header,
        &config.categorical,
        "severity",
    )?;

    let mut order: Vec<String> = Vec::new();
    let mut by_policy: HashMap<String, Vec<PolicyYear>> = HashMap::new();
    let mut seen: HashMap<(String, i64), usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let fail = |message: String| CrmError::Data {
            file: py_file.clone(),
            row,
            message,
        };
        let policy_id = record.get(key[0]).unwrap_or("").trim().to_string();
        if policy_id.is_empty() {
            return Err(fail("empty policy_id".into()));
        }
        let year_raw = record.get(key[1]).unwrap_or("").trim();
        let year: i64 = year_raw
            .parse()
            .map_err(|_| fail(format!("year '{year_raw}' is not an integer")))?;
        let count_raw = record.get(key[2]).unwrap_or("").trim();
        let count: usize = count_raw
            .parse()
            .map_err(|_| fail(format!("count '{count_raw}' is not a non-negative integer")))?;
        if let Some(first) = seen.insert((policy_id.clone(), year), row) {
            return Err(fail(format!(
                "duplicate key (policy_id={policy_id}, year={year}); first seen at row {first}"
            )));
        }
        let x = x_design.row(&record, &header, &config.categorical, &fail)?;
        let w = w_design.row(&record, &header, &config.categorical, &fail)?;
        if !by_policy.contains_key(&policy_id) {
            order.push(policy_id.clone());
        }
        by_policy.entry(policy_id).or_default().push(PolicyYear {
            year,
            claim: YearClaim {
                count,
                severities: Vec::new(),
            },
            x,
            w,
        });
    }

    let cl_path = claims.as_ref();
    let cl_file = file_label(cl_path);
    let mut reader = open_csv(cl_path)?;
    let header = read_header(&mut reader)?;
    let key = require_columns(&header, &CLAIM_COLUMNS, &cl_file)?;
    let mut amounts: HashMap<(String, i64), BTreeMap<usize, (f64, usize)>> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let fail = |message: String| CrmError::Data {
            file: cl_file.clone(),
            row,
            message,
        };
        let policy_id = record.get(key[0]).unwrap_or("").trim().to_string();
        let year_raw = record.get(key[1]).unwrap_or("").trim();
        let year: i64 = year_raw
            .parse()
            .map_err(|_| fail(format!("year '{year_raw}' is not an integer")))?;
        let idx_raw = record.get(key[2]).unwrap_or("").trim();
        let index: usize = idx_raw
            .parse()
            .ok()
            .filter(|v| *v >= 1)
            .ok_or_else(|| fail(format!("claim_index '{idx_raw}' is not a positive integer")))?;
        let amt_raw = record.get(key[3]).unwrap_or("").trim();
        let amount: f64 = amt_raw
            .parse()
            .ok()
            .filter(|v: &f64| *v > 0.0 && v.is_finite())
            .ok_or_else(|| fail(format!("amount '{amt_raw}' is not a positive number")))?;
        let Some(&py_row) = seen.get(&(policy_id.clone(), year)) else {
            return Err(fail(format!(
                "orphan claim: no policy-year row for (policy_id={policy_id}, year={year})"
            )));
        };
        let count = by_policy[&policy_id]
            .iter()
            .find(|y| y.year == year)
            .map(|y| y.claim.count)
            .unwrap_or(0);
        if index > count {
            return Err(fail(format!(
                "claim_index {index} exceeds count {count} of (policy_id={policy_id}, year={year}) at {py_file} row {py_row}"
            )));
        }
        let slot = amounts.entry((policy_id.clone(), year)).or_default();
        if let Some((_, first)) = slot.insert(index, (amount, row)) {
            return Err(fail(format!(
                "duplicate claim (policy_id={policy_id}, year={year}, claim_index={index}); first seen at row {first}"
            )));
        }
    }

    let mut policies = Vec::with_capacity(order.len());
    for policy_id in order {
        let mut years = by_policy.remove(&policy_id).unwrap_or_default();
        years.sort_by_key(|y| y.year);
        for y in &mut years {
            let slot = amounts.remove(&(policy_id.clone(), y.year)).unwrap_or_default();
            if slot.len() != y.claim.count {
                let row = seen[&(policy_id.clone(), y.year)];
                return Err(CrmError::Data {
                    file: py_file.clone(),
                    row,
                    message: format!(
                        "count/claims mismatch for (policy_id={policy_id}, year={}): count {} but {} claim rows",
                        y.year,
                        y.claim.count,
                        slot.len()
                    ),
                });
            }
            y.claim.severities = slot.into_values().map(|(a, _)| a).collect();
        }
        policies.push(PolicyHistory { policy_id, years });
    }
    Ok(Portfolio {
        policies,
        frequency_covariates: x_design.names,
        severity_covariates: w_design.names,
    })
}

/// Shortest decimal text that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes a portfolio in the two-file layout. Design columns other than the
/// intercept are written as numeric covariates.
pub fn write_portfolio(data: &Portfolio, policy_years: impl AsRef<Path>, claims: impl AsRef<Path>) -> Result<()> {
    let mut extra: Vec<(String, bool, usize)> = Vec::new();
    for (i, name) in data.frequency_covariates.iter().enumerate() {
        if name != INTERCEPT {
            extra.push((name.clone(), true, i));
        }
    }
    for (i, name) in data.severity_covariates.iter().enumerate() {
        if name != INTERCEPT && !extra.iter().any(|(n, _, _)| n == name) {
            extra.push((name.clone(), false, i));
        }
    }
    let mut py = csv::Writer::from_path(policy_years)?;
    let mut head: Vec<String> = POLICY_YEAR_KEYS.iter().map(|s| s.to_string()).collect();
    head.extend(extra.iter().map(|(n, _, _)| n.clone()));
    py.write_record(&head)?;
    let mut cl = csv::Writer::from_path(claims)?;
    cl.write_record(CLAIM_COLUMNS)?;
    for h in &data.policies {
        for y in &h.years {
            let mut rec = vec![h.policy_id.clone(), y.year.to_string(), y.claim.count.to_string()];
            for (_, in_x, i) in &extra {
                rec.push(num(if *in_x { y.x[*i] } else { y.w[*i] }));
            }
            py.write_record(&rec)?;
            for (j, amount) in y.claim.severities.iter().enumerate() {
                cl.write_record([
                    h.policy_id.clone(),
                    y.year.to_string(),
                    (j + 1).to_string(),
                    num(*amount),
                ])?;
            }
        }
    }
    py.flush()?;
    cl.flush()?;
    Ok(())
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CrmError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| CrmError::InvalidArgument(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn fixed(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-4 && v.abs() < 1e6) {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

fn fixed_opt(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_else(|| "NA".into())
}

/// Plain-text estimation table: parameter, estimate, standard error, t
/// value, p-value and a `*` for p < 0.05.
pub fn format_estimates(title: &str, rows: &[ParameterEstimate]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(
        s,
        "{:<width$} {:>12} {:>12} {:>10} {:>10}  sig",
        "parameter", "est", "std.error", "t", "p-value"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$} {:>12} {:>12} {:>10} {:>10}  {}",
            r.name,
            fixed(r.estimate),
            fixed_opt(r.std_error),
            fixed_opt(r.t_value),
            fixed_opt(r.p_value),
            if r.significant() { "*" } else { "" }
        );
    }
    s
}

pub fn estimates_csv(rows: &[ParameterEstimate]) -> Result<String> {
    csv_string(
        &["parameter", "estimate", "std_error", "t_value", "p_value", "significant"],
        rows.iter().map(|r| {
            vec![
                r.name.clone(),
                num(r.estimate),
                opt(r.std_error),
                opt(r.t_value),
                opt(r.p_value),
                r.significant().to_string(),
            ]
        }),
    )
}

pub fn fit_report(fit: &FitResult) -> String {
    let mut s = format_estimates(&format!("Estimation result ({} model)", fit.variant.name()), &fit.parameters);
    let d = &fit.diagnostics;
    let _ = writeln!(s);
    let _ = writeln!(s, "copula: {}", copula_label(&fit.estimates.copula));
    let _ = writeln!(s, "policies: {}", fit.policies);
    let _ = writeln!(s, "log-likelihood: {:.6}", fit.log_likelihood);
    let _ = writeln!(
        s,
        "iterations: {}  function evaluations: {}  gradient norm: {:.3e}",
        d.iterations, d.function_evaluations, d.gradient_norm
    );
    let _ = writeln!(
        s,
        "clamped cdf values: {}  floored variances: {}  floored eigenvalues: {}",
        d.clamped_cdfs, d.floored_variances, d.floored_eigenvalues
    );
    if !d.boundary_parameters.is_empty() {
        let _ = writeln!(s, "near admissibility boundary: {}", d.boundary_parameters.join(", "));
    }
    s
}

fn copula_label(c: &CopulaFamily) -> String {
    match c {
        CopulaFamily::Gaussian => "gaussian".into(),
        CopulaFamily::T { nu_df } => format!("t (nu_df = {nu_df})"),
    }
}

pub fn rho_report(inf: &RhoInference) -> String {
    format_estimates("Latent correlations (delta-method standard errors)", &inf.rows)
}

/// Table with one row per model variant: MSE, RMSE, MAE and Gini.
pub fn comparison_report(cmp: &ModelComparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>14} {:>12} {:>12} {:>8} {:>16}",
        "model", "MSE", "RMSE", "MAE", "Gini", "log-likelihood"
    );
    for r in &cmp.rows {
        let _ = writeln!(
            s,
            "{:<28} {:>14.6e} {:>12.4} {:>12.4} {:>8.3} {:>16.4}",
            r.variant.label(),
            r.report.mse,
            r.report.rmse,
            r.report.mae,
            r.report.gini,
            r.log_likelihood
        );
    }
    s
}

pub fn comparison_csv(cmp: &ModelComparison) -> Result<String> {
    csv_string(
        &["model", "mse", "rmse", "mae", "gini", "log_likelihood"],
        cmp.rows.iter().map(|r| {
            vec![
                r.variant.name().to_string(),
                num(r.report.mse),
                num(r.report.rmse),
                num(r.report.mae),
                num(r.report.gini),
                num(r.log_likelihood),
            ]
        }),
    )
}

/// `policy_id,actual,predicted` rows; `actual` is empty when unknown.
pub fn predictions_csv(rows: &[HoldoutRow], predictions: &[Prediction]) -> Result<String> {
    csv_string(
        &["policy_id", "actual", "predicted"],
        rows.iter().zip(predictions).map(|(r, p)| vec![r.policy_id.clone(), opt(r.actual), num(p.predicted)]),
    )
}

/// Observation counts by claim frequency and year, and claim amounts by
/// frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub years: Vec<i64>,
    /// `by_year[n][k]`: policy-years with `n` claims in `years[k]`.
    pub by_year: Vec<Vec<usize>>,
    pub severity: Vec<SeverityRow>,
    pub policy_years: usize,
    pub claims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeverityRow {
    pub count: usize,
    pub policy_years: usize,
    pub claims: usize,
    pub average_severity: f64,
}

pub fn summarize(data: &Portfolio) -> Summary {
    let mut years: Vec<i64> = data.policies.iter().flat_map(|h| h.years.iter().map(|y| y.year)).collect();
    years.sort_unstable();
    years.dedup();
    let max_count = data
        .policies
        .iter()
        .flat_map(|h| &h.years)
        .map(|y| y.claim.count)
        .max()
        .unwrap_or(0);
    let mut by_year = vec![vec![0usize; years.len()]; max_count + 1];
    let mut sev: Vec<(usize, usize, f64)> = vec![(0, 0, 0.0); max_count + 1];
    for y in data.policies.iter().flat_map(|h| &h.years) {
        let k = years.binary_search(&y.year).unwrap_or(0);
        by_year[y.claim.count][k] += 1;
        let e = &mut sev[y.claim.count];
        e.0 += 1;
        e.1 += y.claim.count;
        e.2 += y.claim.total();
    }
    let severity = sev
        .into_iter()
        .enumerate()
        .filter(|(n, (py, _, _))| *n > 0 && *py > 0)
        .map(|(count, (policy_years, claims, total))| SeverityRow {
            count,
            policy_years,
            claims,
            average_severity: total / claims as f64,
        })
        .collect();
    Summary {
        years,
        by_year,
        severity,
        policy_years: data.policy_years(),
        claims: data.total_claims(),
    }
}

pub fn summary_report(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Number of observations by frequency and year");
    let _ = write!(out, "{:>10}", "count");
    for y in &s.years {
        let _ = write!(out, " {:>8}", y);
    }
    let _ = writeln!(out, " {:>8}", "total");
    for (n, row) in s.by_year.iter().enumerate() {
        let _ = write!(out, "{n:>10}");
        for c in row {
            let _ = write!(out, " {c:>8}");
        }
        let _ = writeln!(out, " {:>8}", row.iter().sum::<usize>());
    }
    let _ = write!(out, "{:>10}", "total");
    for k in 0..s.years.len() {
        let _ = write!(out, " {:>8}", s.by_year.iter().map(|r| r[k]).sum::<usize>());
    }
    let _ = writeln!(out, " {:>8}", s.policy_years);
    let _ = writeln!(out);
    let _ = writeln!(out, "Average severity by frequency");
    let _ = writeln!(out, "{:>10} {:>12} {:>8} {:>16}", "count", "policy-years", "claims", "avg severity");
    for r in &s.severity {
        let _ = writeln!(
            out,
            "{:>10} {:>12} {:>8} {:>16.2}",
            r.count, r.policy_years, r.claims, r.average_severity
        );
    }
    let _ = writeln!(out, "{:>10} {:>12} {:>8}", "total", "", s.claims);
    out
}

pub fn summary_by_year_csv(s: &Summary) -> Result<String> {
    let mut header = vec!["count".to_string()];
    header.extend(s.years.iter().map(|y| y.to_string()));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(
        &header_ref,
        s.by_year.iter().enumerate().map(|(n, row)| {
            std::iter::once(n.to_string())
                .chain(row.iter().map(|c| c.to_string()))
                .collect()
        }),
    )
}

pub fn summary_severity_csv(s: &Summary) -> Result<String> {
    csv_string(
        &["count", "policy_years", "claims", "average_severity"],
        s.severity.iter().map(|r| {
            vec![
                r.count.to_string(),
                r.policy_years.to_string(),
                r.claims.to_string(),
                num(r.average_severity),
            ]
        }),
    )
}
