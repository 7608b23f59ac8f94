//! C interface to `crm-core`.
//!
//! Models and portfolios are opaque handles created by `*_from_*` or
//! `*_load` functions and released with the matching `*_free`. Every
//! fallible call returns a [`CrmStatus`]; on failure a description is
//! available from [`crm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crm_core::copula_density::DensityEvaluator;
use crm_core::dependence::{build_sigma, is_positive_definite, FrequencyVector, ThetaParams};
use crm_core::estimate::neg_log_likelihood;
use crm_core::io::{load_portfolio, RunConfig};
use crm_core::model::{CopulaFamily, ModelParams};
use crm_core::portfolio::{PolicyHistory, PolicyYear, Portfolio, YearClaim};
use crm_core::quadrature::QuadratureRule;
use crm_core::validate::validation_metrics;
use crm_core::CrmError;

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrmStatus {
    Ok = 0,
    InvalidArgument = 1,
    Numerical = 2,
    NullPointer = 3,
    Panic = 4,
}

/// Model parameters with their quadrature rule.
pub struct CrmModel {
    params: ModelParams,
    quad: QuadratureRule,
}

/// A loaded portfolio.
pub struct CrmPortfolio {
    data: Portfolio,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(CrmStatus, String);

impl From<CrmError> for Failure {
    fn from(e: CrmError) -> Self {
        let status = if e.is_numerical() {
            CrmStatus::Numerical
        } else {
            CrmStatus::InvalidArgument
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(CrmStatus::NullPointer, format!("{name} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(CrmStatus::InvalidArgument, message.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CrmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            CrmStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {message}"));
            CrmStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn theta_arg(theta: *const f64) -> Result<ThetaParams, Failure> {
    let t = slice(theta, 4, "theta")?;
    Ok(ThetaParams::new(t[0], t[1], t[2], t[3]))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn crm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Writes the five latent correlations of `theta[4]` to `rho_out[5]`.
///
/// # Safety
/// `theta` must point to 4 doubles and `rho_out` to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn crm_rho_from_theta(theta: *const f64, rho_out: *mut f64) -> CrmStatus {
    guard(|| {
        let rho = theta_arg(theta)?.rho().to_array();
        if rho_out.is_null() {
            return Err(null("rho_out"));
        }
        ptr::copy_nonoverlapping(rho.as_ptr(), rho_out, 5);
        Ok(())
    })
}

/// # Safety
/// `theta` must point to 4 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_check_admissible(theta: *const f64, out: *mut bool) -> CrmStatus {
    guard(|| write_out(out, theta_arg(theta)?.is_admissible(), "out"))
}

/// Positive definiteness of the correlation matrix for `theta[4]` and the
/// yearly claim counts `counts[years]`.
///
/// # Safety
/// `theta` must point to 4 doubles, `counts` to `years` values; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_is_positive_definite(
    theta: *const f64,
    counts: *const usize,
    years: usize,
    out: *mut bool,
) -> CrmStatus {
    guard(|| {
        let theta = theta_arg(theta)?;
        let n = FrequencyVector::new(slice(counts, years, "counts")?.to_vec())?;
        write_out(out, is_positive_definite(&build_sigma(&n, &theta.rho())), "out")
    })
}

fn new_model(params: ModelParams) -> Result<*mut CrmModel, Failure> {
    params.validate()?;
    Ok(Box::into_raw(Box::new(CrmModel {
        params,
        quad: QuadratureRule::default(),
    })))
}

/// Model from a JSON parameter object (the `params` layout of the CLI).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_model_from_json(json: *const c_char, out: *mut *mut CrmModel) -> CrmStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let params: ModelParams = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        write_out(out, new_model(params)?, "out")
    })
}

/// Single-risk-class model. `nu_df <= 0` selects the Gaussian copula,
/// otherwise a t copula with `nu_df` degrees of freedom.
///
/// # Safety
/// `theta` must point to 4 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_model_intercept_only(
    lambda: f64,
    xi: f64,
    nu_sev: f64,
    theta: *const f64,
    nu_df: f64,
    out: *mut *mut CrmModel,
) -> CrmStatus {
    guard(|| {
        if !(lambda > 0.0 && xi > 0.0) {
            return Err(invalid("lambda and xi must be positive"));
        }
        let mut params = ModelParams::intercept_only(lambda, xi, nu_sev, theta_arg(theta)?);
        if nu_df > 0.0 {
            params = params.with_copula(CopulaFamily::T { nu_df });
        }
        write_out(out, new_model(params)?, "out")
    })
}

/// Sets the node counts of the factor and mixing quadratures.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn crm_model_set_quadrature(
    model: *mut CrmModel,
    factor_nodes: usize,
    mixing_nodes: usize,
) -> CrmStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        if factor_nodes < 1 || mixing_nodes < 2 {
            return Err(invalid("need at least 1 factor node and 2 mixing nodes"));
        }
        m.quad = QuadratureRule::new(factor_nodes, mixing_nodes);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crm_model_free(model: *mut CrmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Log density of one history. Year `t` has `counts[t]` claims whose
/// amounts are consecutive in `severities`. `x` (`years * p`, row-major)
/// and `w` (`years * q`) hold design rows; pass null for an intercept-only
/// model.
///
/// # Safety
/// Arrays must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_log_density(
    model: *const CrmModel,
    counts: *const usize,
    years: usize,
    severities: *const f64,
    n_severities: usize,
    x: *const f64,
    w: *const f64,
    out: *mut f64,
) -> CrmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let counts = slice(counts, years, "counts")?;
        let sev = slice(severities, n_severities, "severities")?;
        if counts.iter().sum::<usize>() != sev.len() {
            return Err(invalid(format!(
                "counts sum to {} but {} severities were given",
                counts.iter().sum::<usize>(),
                sev.len()
            )));
        }
        let p = m.params.frequency.coefficients.len();
        let q = m.params.severity.coefficients.len();
        let xs = if x.is_null() { None } else { Some(slice(x, years * p, "x")?) };
        let ws = if w.is_null() { None } else { Some(slice(w, years * q, "w")?) };
        let mut offset = 0;
        let mut rows = Vec::with_capacity(years);
        for (t, &n) in counts.iter().enumerate() {
            rows.push(PolicyYear {
                year: t as i64 + 1,
                claim: YearClaim::new(sev[offset..offset + n].to_vec()),
                x: xs.map_or_else(|| vec![1.0], |v| v[t * p..(t + 1) * p].to_vec()),
                w: ws.map_or_else(|| vec![1.0], |v| v[t * q..(t + 1) * q].to_vec()),
            });
            offset += n;
        }
        let history = PolicyHistory {
            policy_id: "ffi".into(),
            years: rows,
        };
        let value = DensityEvaluator::new(&m.params, &m.quad)?.log_density(&history)?;
        write_out(out, value.log_density, "out")
    })
}

/// Loads a portfolio from the policy-year and claims CSV files. `config_json`
/// may be null for an intercept-only design.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_portfolio_load(
    policy_years_path: *const c_char,
    claims_path: *const c_char,
    config_json: *const c_char,
    out: *mut *mut CrmPortfolio,
) -> CrmStatus {
    guard(|| {
        let py = str_arg(policy_years_path, "policy_years_path")?;
        let cl = str_arg(claims_path, "claims_path")?;
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json(str_arg(config_json, "config_json")?)?
        };
        let data = load_portfolio(py, cl, &cfg)?;
        write_out(out, Box::into_raw(Box::new(CrmPortfolio { data })), "out")
    })
}

/// Number of policies, or 0 for a null handle.
///
/// # Safety
/// `portfolio` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crm_portfolio_len(portfolio: *const CrmPortfolio) -> usize {
    portfolio.as_ref().map_or(0, |p| p.data.len())
}

/// # Safety
/// `portfolio` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crm_portfolio_free(portfolio: *mut CrmPortfolio) {
    if !portfolio.is_null() {
        drop(Box::from_raw(portfolio));
    }
}

/// Negative log-likelihood of a portfolio.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crm_neg_log_likelihood(
    model: *const CrmModel,
    portfolio: *const CrmPortfolio,
    out: *mut f64,
) -> CrmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let p = portfolio.as_ref().ok_or_else(|| null("portfolio"))?;
        write_out(out, neg_log_likelihood(&m.params, &p.data, &m.quad)?, "out")
    })
}

/// Writes `(MSE, RMSE, MAE, Gini)` to `out[4]`.
///
/// # Safety
/// `actual` and `predicted` must point to `n` doubles, `out` to 4.
#[no_mangle]
pub unsafe extern "C" fn crm_validation_metrics(
    actual: *const f64,
    predicted: *const f64,
    n: usize,
    out: *mut f64,
) -> CrmStatus {
    guard(|| {
        let r = validation_metrics(slice(actual, n, "actual")?, slice(predicted, n, "predicted")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping([r.mse, r.rmse, r.mae, r.gini].as_ptr(), out, 4);
        Ok(())
    })
}
