//! Maximum likelihood for the marginal and dependence parameters.
//!
//! The optimizer works on an unconstrained scale: the severity shape enters
//! as `ln(nu_sev)` and each loading pair `(theta1, theta3)`, `(theta2, theta4)`
//! is written as `(tanh a, tanh b * sqrt(1 - tanh(a)^2))`, which keeps every
//! iterate strictly admissible. Standard errors come from a finite-difference
//! Hessian on the natural scale.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula_density::{DensityEvaluator, EvalDiagnostics};
use crate::dependence::{rho_jacobian, ThetaParams};
use crate::error::{CrmError, Result};
use crate::model::{CopulaFamily, ModelParams};
use crate::portfolio::Portfolio;
use crate::quadrature::{QuadratureConfig, QuadratureRule};

/// Mapped loadings beyond this magnitude are reported as boundary-adjacent.
pub const BOUNDARY_FLAG: f64 = 0.999;
const EIGEN_FLOOR: f64 = 1e-10;

/// Which loadings are free; the others are held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    #[default]
    Full,
    /// `theta3 = theta4 = 0`: dependence through the shared effect only.
    NoWithinYear,
    /// `theta1 = theta2 = 0`: within-year dependence only.
    NoShared,
    /// All loadings zero.
    Independent,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Full,
        ModelVariant::NoWithinYear,
        ModelVariant::NoShared,
        ModelVariant::Independent,
    ];

    /// Indices into `[theta1, theta2, theta3, theta4]` that are estimated.
    pub fn free_thetas(self) -> &'static [usize] {
        match self {
            ModelVariant::Full => &[0, 1, 2, 3],
            ModelVariant::NoWithinYear => &[0, 1],
            ModelVariant::NoShared => &[2, 3],
            ModelVariant::Independent => &[],
        }
    }

    pub fn restrict(self, theta: ThetaParams) -> ThetaParams {
        let mut v = [0.0; 4];
        let src = theta.to_array();
        for &i in self.free_thetas() {
            v[i] = src[i];
        }
        ThetaParams::from_array(v)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::NoWithinYear => "no_within_year",
            ModelVariant::NoShared => "no_shared",
            ModelVariant::Independent => "independent",
        }
    }

    /// Row label used in model-comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::Full => "Full model",
            ModelVariant::NoWithinYear => "Nested 1 (theta3=theta4=0)",
            ModelVariant::NoShared => "Nested 2 (theta1=theta2=0)",
            ModelVariant::Independent => "Nested 3 (all theta=0)",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| CrmError::Config(format!("unknown model variant '{name}'")))
    }
}

/// Quasi-Newton settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Convergence when `max|grad| < gradient_tol * (1 + |f|)`.
    pub gradient_tol: f64,
    /// Relative central-difference step for gradients.
    pub gradient_step: f64,
    /// Relative central-difference step for the Hessian.
    pub hessian_step: f64,
    /// Largest coordinate move of a single line-search trial.
    pub max_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-4,
            gradient_step: 1e-6,
            hessian_step: 1e-4,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub variant: ModelVariant,
    pub optimizer: OptimizerConfig,
    pub quadrature: QuadratureConfig,
    /// Skip the Hessian and leave standard errors empty.
    pub compute_standard_errors: bool,
    /// Treat the t copula's degrees of freedom as a free parameter.
    pub estimate_nu_df: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Full,
            optimizer: OptimizerConfig::default(),
            quadrature: QuadratureConfig::default(),
            compute_standard_errors: true,
            estimate_nu_df: false,
        }
    }
}

/// One row of an estimation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub t_value: Option<f64>,
    pub p_value: Option<f64>,
}

impl ParameterEstimate {
    pub fn new(name: impl Into<String>, estimate: f64, std_error: Option<f64>) -> Self {
        let std_error = std_error.filter(|s| s.is_finite());
        let t_value = std_error.map(|s| estimate / s).filter(|t| t.is_finite());
        let p_value = t_value.map(two_sided_p);
        Self {
            name: name.into(),
            estimate,
            std_error,
            t_value,
            p_value,
        }
    }

    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < 0.05)
    }
}

/// Two-sided p-value of a normal test statistic.
pub fn two_sided_p(t: f64) -> f64 {
    libm::erfc(t.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub function_evaluations: usize,
    /// Infinity norm of the gradient on the unconstrained scale.
    pub gradient_norm: f64,
    pub clamped_cdfs: usize,
    pub floored_variances: usize,
    /// Loadings whose magnitude exceeds [`BOUNDARY_FLAG`].
    pub boundary_parameters: Vec<String>,
    /// Hessian eigenvalues raised to the floor before inversion.
    pub floored_eigenvalues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: ModelVariant,
    pub estimates: ModelParams,
    /// Free parameters on the natural scale, in covariance order.
    pub parameters: Vec<ParameterEstimate>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
    pub policies: usize,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Covariance of `(theta1..theta4)` with zero rows for fixed loadings.
    pub fn theta_covariance(&self) -> Option<[[f64; 4]; 4]> {
        let cov = self.covariance.as_ref()?;
        let idx: Vec<Option<usize>> = THETA_NAMES
            .iter()
            .map(|n| self.parameters.iter().position(|p| p.name == *n))
            .collect();
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                if let (Some(a), Some(b)) = (idx[i], idx[j]) {
                    out[i][j] = cov[a][b];
                }
            }
        }
        Some(out)
    }
}

/// Delta-method inference for the latent correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoInference {
    pub rows: Vec<ParameterEstimate>,
    pub covariance: [[f64; 5]; 5],
}

pub const THETA_NAMES: [&str; 4] = ["theta1", "theta2", "theta3", "theta4"];
pub const RHO_NAMES: [&str; 5] = ["rho1", "rho2", "rho3", "rho4", "rho5"];

/// `(x, y) = (tanh a, tanh b * sqrt(1 - tanh(a)^2))`, so `x^2 + y^2 < 1`.
pub fn pair_from_unconstrained(a: f64, b: f64) -> (f64, f64) {
    let x = a.tanh();
    (x, b.tanh() / a.cosh())
}

pub fn pair_to_unconstrained(x: f64, y: f64) -> (f64, f64) {
    let a = x.atanh();
    (a, (y / (1.0 - x * x).sqrt()).atanh())
}

/// Unconstrained coordinates `(a1, a2, b1, b2)` of admissible loadings.
pub fn theta_to_unconstrained(theta: &ThetaParams) -> [f64; 4] {
    let (a1, b1) = pair_to_unconstrained(theta.theta1, theta.theta3);
    let (a2, b2) = pair_to_unconstrained(theta.theta2, theta.theta4);
    [a1, a2, b1, b2]
}

pub fn theta_from_unconstrained(u: [f64; 4]) -> ThetaParams {
    let (t1, t3) = pair_from_unconstrained(u[0], u[2]);
    let (t2, t4) = pair_from_unconstrained(u[1], u[3]);
    ThetaParams::new(t1, t2, t3, t4)
}

/// Maps between [`ModelParams`] and flat parameter vectors.
#[derive(Debug, Clone)]
struct Layout {
    template: ModelParams,
    variant: ModelVariant,
    fit_nu_df: bool,
}

impl Layout {
    fn new(template: &ModelParams, variant: ModelVariant, estimate_nu_df: bool) -> Self {
        let fit_nu_df = estimate_nu_df && matches!(template.copula, CopulaFamily::T { .. });
        let mut template = template.clone();
        template.theta = variant.restrict(template.theta);
        Self {
            template,
            variant,
            fit_nu_df,
        }
    }

    fn p(&self) -> usize {
        self.template.frequency.coefficients.len()
    }

    fn q(&self) -> usize {
        self.template.severity.coefficients.len()
    }

    fn names(&self) -> Vec<String> {
        let label = |prefix: &str, fallback: &str, covariates: &[String], k: usize| {
            (0..k)
                .map(|i| match covariates.get(i) {
                    Some(c) => format!("{prefix}:{c}"),
                    None => format!("{prefix}:{fallback}{}", i + 1),
                })
                .collect::<Vec<_>>()
        };
        let mut names = label("frequency", "x", &self.template.frequency.covariates, self.p());
        let sev = label("severity", "w", &self.template.severity.covariates, self.q());
        names.extend(sev);
        names.push("nu_sev".into());
        names.extend(self.variant.free_thetas().iter().map(|&i| THETA_NAMES[i].to_string()));
        if self.fit_nu_df {
            names.push("nu_df".into());
        }
        names
    }

    fn head(&self, params: &ModelParams) -> Vec<f64> {
        let mut v = params.frequency.coefficients.clone();
        v.extend_from_slice(&params.severity.coefficients);
        v
    }

    fn to_unconstrained(&self, params: &ModelParams) -> Vec<f64> {
        let mut v = self.head(params);
        v.push(params.severity.shape.ln());
        let u = theta_to_unconstrained(&self.variant.restrict(params.theta));
        v.extend(self.variant.free_thetas().iter().map(|&i| u[i]));
        if self.fit_nu_df {
            v.push(params.copula.nu_df().unwrap_or(30.0).ln());
        }
        v
    }

    fn from_unconstrained(&self, v: &[f64]) -> ModelParams {
        let (p, q) = (self.p(), self.q());
        let mut out = self.template.clone();
        out.frequency.coefficients = v[..p].to_vec();
        out.severity.coefficients = v[p..p + q].to_vec();
        out.severity.shape = v[p + q].exp();
        let free = self.variant.free_thetas();
        let mut u = [0.0; 4];
        for (k, &i) in free.iter().enumerate() {
            u[i] = v[p + q + 1 + k];
        }
        out.theta = self.variant.restrict(theta_from_unconstrained(u));
        if self.fit_nu_df {
            out.copula = CopulaFamily::T {
                nu_df: v[p + q + 1 + free.len()].exp(),
            };
        }
        out
    }

    fn to_natural(&self, params: &ModelParams) -> Vec<f64> {
        let mut v = self.head(params);
        v.push(params.severity.shape);
        let t = params.theta.to_array();
        v.extend(self.variant.free_thetas().iter().map(|&i| t[i]));
        if self.fit_nu_df {
            v.push(params.copula.nu_df().unwrap_or(f64::NAN));
        }
        v
    }

    fn from_natural(&self, v: &[f64]) -> ModelParams {
        let (p, q) = (self.p(), self.q());
        let mut out = self.template.clone();
        out.frequency.coefficients = v[..p].to_vec();
        out.severity.coefficients = v[p..p + q].to_vec();
        out.severity.shape = v[p + q];
        let free = self.variant.free_thetas();
        let mut t = [0.0; 4];
        for (k, &i) in free.iter().enumerate() {
            t[i] = v[p + q + 1 + k];
        }
        out.theta = ThetaParams::from_array(t);
        if self.fit_nu_df {
            out.copula = CopulaFamily::T {
                nu_df: v[p + q + 1 + free.len()],
            };
        }
        out
    }
}

/// Sum of per-policy log densities with merged diagnostics.
///
/// Terms are evaluated in parallel and summed in policy order, so the value
/// does not depend on the thread count.
pub fn log_likelihood_detail(
    params: &ModelParams,
    data: &Portfolio,
    quad: &QuadratureRule,
) -> Result<(f64, EvalDiagnostics)> {
    params.validate()?;
    let evaluator = DensityEvaluator::new(params, quad)?;
    let terms: Vec<Result<(f64, EvalDiagnostics)>> = data
        .policies
        .par_iter()
        .map(|h| {
            if h.years.is_empty() {
                return Err(CrmError::InconsistentHistory {
                    policy_id: h.policy_id.clone(),
                    message: "policy has no observed years".into(),
                });
            }
            let v = evaluator.log_density(h)?;
            if !v.log_density.is_finite() {
                return Err(CrmError::NonFinite {
                    policy_id: h.policy_id.clone(),
                });
            }
            Ok((v.log_density, v.diagnostics))
        })
        .collect();
    let mut total = 0.0;
    let mut diag = EvalDiagnostics::default();
    for t in terms {
        let (v, d) = t?;
        total += v;
        diag.merge(d);
    }
    Ok((total, diag))
}

/// `-sum_i log f(history_i; params)`.
pub fn neg_log_likelihood(params: &ModelParams, data: &Portfolio, quad: &QuadratureRule) -> Result<f64> {
    log_likelihood_detail(params, data, quad).map(|(v, _)| -v)
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], fx: f64, rel: f64, evals: &mut usize) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        *evals += 2;
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS with backtracking Armijo line search and central-difference
/// gradients. `f` may return `+inf` outside its domain.
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], cfg: &OptimizerConfig) -> Minimum {
    let n = x0.len();
    let mut evals = 1;
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if n == 0 {
        return Minimum {
            x,
            value: fx,
            gradient_norm: 0.0,
            iterations: 0,
            evaluations: evals,
            converged: fx.is_finite(),
        };
    }
    let mut g = central_gradient(f, &x, fx, cfg.gradient_step, &mut evals);
    let identity = DMatrix::<f64>::identity(n, n);
    let mut h_inv = identity.clone();
    let mut fresh = true;
    let mut iterations = 0;
    let converged_at = |g: &[f64], fx: f64| inf_norm(g) < cfg.gradient_tol * (1.0 + fx.abs());

    while iterations < cfg.max_iterations && !converged_at(&g, fx) && fx.is_finite() {
        iterations += 1;
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut d = -(&h_inv * &gv);
        let mut slope = gv.dot(&d);
        if !(slope < 0.0) {
            h_inv = identity.clone();
            fresh = true;
            d = -gv.clone();
            slope = gv.dot(&d);
        }
        let longest = inf_norm(d.as_slice());
        let mut alpha = if longest > cfg.max_step { cfg.max_step / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(xi, di)| xi + alpha * di).collect();
            let ft = f(&trial);
            evals += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            h_inv = identity.clone();
            fresh = true;
            continue;
        };
        let g_new = central_gradient(f, &x_new, f_new, cfg.gradient_step, &mut evals);
        let s = nalgebra::DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = nalgebra::DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                // Scale the first approximation to the observed curvature.
                h_inv = &identity * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let left = &identity - &s * y.transpose() * rho;
            let right = &identity - &y * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
            fresh = false;
        }
        let stalled = (fx - f_new).abs() <= 1e-15 * (1.0 + fx.abs());
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled && fresh {
            break;
        }
    }
    Minimum {
        gradient_norm: inf_norm(&g),
        converged: fx.is_finite() && converged_at(&g, fx),
        x,
        value: fx,
        iterations,
        evaluations: evals,
    }
}

fn check_data(data: &Portfolio, template: &ModelParams) -> Result<()> {
    if data.is_empty() {
        return Err(CrmError::InvalidArgument("portfolio is empty".into()));
    }
    for h in &data.policies {
        h.validate()?;
        if h.years.is_empty() {
            return Err(CrmError::InconsistentHistory {
                policy_id: h.policy_id.clone(),
                message: "policy has no observed years".into(),
            });
        }
        for y in &h.years {
            if y.x.len() != template.frequency.coefficients.len() {
                return Err(CrmError::LengthMismatch {
                    left: y.x.len(),
                    right: template.frequency.coefficients.len(),
                });
            }
            if y.w.len() != template.severity.coefficients.len() {
                return Err(CrmError::LengthMismatch {
                    left: y.w.len(),
                    right: template.severity.coefficients.len(),
                });
            }
        }
    }
    if data.total_claims() == 0 {
        return Err(CrmError::Unidentifiable);
    }
    Ok(())
}

/// Starting values: the intercepts at the log mean count and log mean claim
/// amount, other coefficients zero, loadings zero. The shape starts at the
/// Weibull log-moment estimate `pi / (sqrt(6) sd(ln y))`.
pub fn crude_start(data: &Portfolio, template: &ModelParams) -> ModelParams {
    let mut out = template.clone();
    let years = data.policy_years().max(1) as f64;
    let claims = data.total_claims();
    let mean_count = (claims as f64 / years).max(1e-3);
    let amount: f64 = data
        .policies
        .iter()
        .flat_map(|h| &h.years)
        .map(|y| y.claim.total())
        .sum();
    let mean_amount = if claims > 0 { amount / claims as f64 } else { 1.0 };
    let set = |coef: &mut Vec<f64>, names: &[String], value: f64| {
        coef.iter_mut().for_each(|c| *c = 0.0);
        let idx = names.iter().position(|n| n == crate::INTERCEPT).unwrap_or(0);
        if let Some(c) = coef.get_mut(idx) {
            *c = value;
        }
    };
    set(&mut out.frequency.coefficients, &template.frequency.covariates, mean_count.ln());
    set(&mut out.severity.coefficients, &template.severity.covariates, mean_amount.ln());
    let logs: Vec<f64> = data
        .policies
        .iter()
        .flat_map(|h| &h.years)
        .flat_map(|y| y.claim.severities.iter().map(|v| v.ln()))
        .collect();
    out.severity.shape = 1.0;
    if logs.len() > 1 {
        let m = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
        let shape = std::f64::consts::PI / (6.0 * var).sqrt();
        if shape.is_finite() {
            out.severity.shape = shape.clamp(0.05, 20.0);
        }
    }
    out.theta = ThetaParams::ZERO;
    out
}

/// Marginal estimates from the independence fit with the variant's free
/// loadings set to 0.1.
pub fn initial_params(
    data: &Portfolio,
    template: &ModelParams,
    variant: ModelVariant,
    options: &FitOptions,
) -> Result<ModelParams> {
    check_data(data, template)?;
    let independent = FitOptions {
        variant: ModelVariant::Independent,
        compute_standard_errors: false,
        estimate_nu_df: false,
        ..options.clone()
    };
    let start = crude_start(data, template).with_copula(CopulaFamily::Gaussian);
    let marginal = fit(data, &start, &independent)?;
    let mut out = marginal.estimates.with_copula(template.copula);
    let mut t = [0.0; 4];
    for &i in variant.free_thetas() {
        t[i] = 0.1;
    }
    out.theta = ThetaParams::from_array(t);
    Ok(out)
}

/// Initialization followed by [`fit`].
pub fn fit_from_template(data: &Portfolio, template: &ModelParams, options: &FitOptions) -> Result<FitResult> {
    let init = initial_params(data, template, options.variant, options)?;
    fit(data, &init, options)
}

/// Maximizes the likelihood starting at `init`. Loadings outside the
/// variant are held at zero.
pub fn fit(data: &Portfolio, init: &ModelParams, options: &FitOptions) -> Result<FitResult> {
    check_data(data, init)?;
    let layout = Layout::new(init, options.variant, options.estimate_nu_df);
    layout.template.validate()?;
    let quad = QuadratureRule::from_config(&options.quadrature);
    let objective = |u: &[f64]| -> f64 {
        let params = layout.from_unconstrained(u);
        match neg_log_likelihood(&params, data, &quad) {
            Ok(v) => v,
            Err(_) => f64::INFINITY,
        }
    };
    let start = layout.to_unconstrained(&layout.template);
    if !objective(&start).is_finite() {
        // Surface the offending policy.
        neg_log_likelihood(&layout.from_unconstrained(&start), data, &quad)?;
    }
    let min = minimize(&objective, &start, &options.optimizer);
    if !min.converged {
        return Err(CrmError::NonConvergence {
            iterations: min.iterations,
            gradient_norm: min.gradient_norm,
        });
    }
    let estimates = layout.from_unconstrained(&min.x);
    let (loglik, eval_diag) = log_likelihood_detail(&estimates, data, &quad)?;
    let names = layout.names();
    let natural = layout.to_natural(&estimates);

    let mut diagnostics = FitDiagnostics {
        converged: true,
        iterations: min.iterations,
        function_evaluations: min.evaluations,
        gradient_norm: min.gradient_norm,
        clamped_cdfs: eval_diag.clamped,
        floored_variances: eval_diag.sigma_floored,
        ..Default::default()
    };
    for (i, t) in estimates.theta.to_array().into_iter().enumerate() {
        if t.abs() > BOUNDARY_FLAG {
            warn!("{} = {t} is adjacent to the admissibility boundary", THETA_NAMES[i]);
            diagnostics.boundary_parameters.push(THETA_NAMES[i].into());
        }
    }

    let covariance = if options.compute_standard_errors {
        let nll = |v: &[f64]| neg_log_likelihood(&layout.from_natural(v), data, &quad);
        let hessian = fd_hessian(&nll, &natural, options.optimizer.hessian_step)?;
        let (cov, floored) = invert_psd(&hessian);
        if floored > 0 {
            warn!("observed information had {floored} eigenvalue(s) below {EIGEN_FLOOR}; floored before inversion");
        }
        diagnostics.floored_eigenvalues = floored;
        Some(cov)
    } else {
        None
    };
    let parameters = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let se = covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt());
            ParameterEstimate::new(name.clone(), natural[i], se)
        })
        .collect();
    Ok(FitResult {
        variant: options.variant,
        estimates,
        parameters,
        covariance: covariance.map(|c| (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect()),
        log_likelihood: loglik,
        policies: data.len(),
        diagnostics,
    })
}

/// Central-difference Hessian with step `rel * (1 + |x_i|)`. The step is
/// halved while a perturbed point leaves the parameter domain.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], rel: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let f0 = f(x)?;
    let mut h: Vec<f64> = x.iter().map(|v| rel * (1.0 + v.abs())).collect();
    let eval = |dx: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, d) in dx {
            p[i] += d;
        }
        f(&p)
    };
    // Shrink steps that leave the domain.
    for i in 0..n {
        for _ in 0..20 {
            if eval(&[(i, h[i])]).is_ok() && eval(&[(i, -h[i])]).is_ok() {
                break;
            }
            h[i] *= 0.5;
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = eval(&[(i, h[i])])?;
        let fm = eval(&[(i, -h[i])])?;
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(&[(i, h[i]), (j, h[j])])?;
            let fpm = eval(&[(i, h[i]), (j, -h[j])])?;
            let fmp = eval(&[(i, -h[i]), (j, h[j])])?;
            let fmm = eval(&[(i, -h[i]), (j, -h[j])])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Inverse of a symmetric matrix through its eigen-decomposition, with
/// eigenvalues raised to a small floor. Returns the number floored.
pub fn invert_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut floored = 0;
    let inv_vals = eig.eigenvalues.map(|l| {
        if l < EIGEN_FLOOR || !l.is_finite() {
            floored += 1;
            1.0 / EIGEN_FLOOR
        } else {
            1.0 / l
        }
    });
    let v = &eig.eigenvectors;
    let inv = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    ((&inv + inv.transpose()) * 0.5, floored)
}

/// Latent correlations at `theta` with covariance `J cov J^T`.
pub fn rho_inference_from(theta: &ThetaParams, cov: &[[f64; 4]; 4]) -> RhoInference {
    let rho = theta.rho().to_array();
    let jac = rho_jacobian(theta);
    let mut out = [[0.0; 5]; 5];
    for a in 0..5 {
        for b in 0..5 {
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += jac[a][i] * cov[i][j] * jac[b][j];
                }
            }
            out[a][b] = s;
        }
    }
    let rows = (0..5)
        .map(|k| ParameterEstimate::new(RHO_NAMES[k], rho[k], Some(out[k][k].max(0.0).sqrt())))
        .collect();
    RhoInference { rows, covariance: out }
}

pub fn rho_inference(fit: &FitResult) -> Result<RhoInference> {
    let cov = fit.theta_covariance().ok_or_else(|| {
        CrmError::InvalidArgument("fit has no covariance matrix; refit with standard errors".into())
    })?;
    Ok(rho_inference_from(&fit.estimates.theta, &cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::{PolicyHistory, YearClaim};

    #[test]
    fn pair_map_round_trip() {
        for (x, y) in [(0.0, 0.0), (0.3, 0.5), (-0.7, 0.7), (0.99, -0.1), (0.2, -0.97)] {
            let (a, b) = pair_to_unconstrained(x, y);
            let (x2, y2) = pair_from_unconstrained(a, b);
            assert!((x - x2).abs() < 1e-12 && (y - y2).abs() < 1e-12);
        }
        let (x, y) = pair_from_unconstrained(5.0, -7.0);
        assert!(x * x + y * y < 1.0);
    }

    #[test]
    fn variants_restrict() {
        let t = ThetaParams::new(0.1, 0.2, 0.3, 0.4);
        assert_eq!(ModelVariant::NoWithinYear.restrict(t), ThetaParams::new(0.1, 0.2, 0.0, 0.0));
        assert_eq!(ModelVariant::NoShared.restrict(t), ThetaParams::new(0.0, 0.0, 0.3, 0.4));
        assert_eq!(ModelVariant::Independent.restrict(t), ThetaParams::ZERO);
        for v in ModelVariant::ALL {
            assert_eq!(ModelVariant::from_name(v.name()).unwrap(), v);
        }
    }

    #[test]
    fn layout_round_trip() {
        let p = ModelParams::intercept_only(2.0, 100.0, 0.7, ThetaParams::new(0.3, 0.7, 0.5, 0.5))
            .with_copula(CopulaFamily::T { nu_df: 6.0 });
        let layout = Layout::new(&p, ModelVariant::Full, true);
        let back = layout.from_unconstrained(&layout.to_unconstrained(&p));
        let (a, b) = (layout.to_natural(&p), layout.to_natural(&back));
        assert_eq!(a.len(), 8);
        assert_eq!(layout.names().len(), 8);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(layout.from_natural(&a).theta, p.theta);
    }

    #[test]
    fn minimize_quadratic_and_rosenbrock() {
        let q = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let m = minimize(&q, &[0.0, 0.0], &OptimizerConfig::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] + 2.0).abs() < 1e-4);
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let cfg = OptimizerConfig {
            gradient_tol: 1e-8,
            ..Default::default()
        };
        let m = minimize(&rosen, &[-1.2, 1.0], &cfg);
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn minimize_respects_infinite_region() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() };
        let m = minimize(&f, &[5.0], &OptimizerConfig::default());
        assert!(m.converged && (m.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| Ok(3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1]);
        let h = fd_hessian(&f, &[0.4, -1.0], 1e-4).unwrap();
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn psd_inverse_floors() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, -1.0]);
        let (inv, floored) = invert_psd(&m);
        assert_eq!(floored, 1);
        assert!((inv[(0, 0)] - 0.25).abs() < 1e-12);
        assert!(inv[(1, 1)] > 0.0);
    }

    #[test]
    fn single_zero_year_nll_is_lambda() {
        let data = Portfolio::intercept_only(vec![PolicyHistory::from_claims("a", vec![YearClaim::empty()])]);
        let p = ModelParams::intercept_only(1.7, 50.0, 1.2, ThetaParams::new(0.4, 0.2, 0.3, 0.1));
        let v = neg_log_likelihood(&p, &data, &QuadratureRule::default()).unwrap();
        assert!((v - 1.7).abs() < 1e-10);
    }

    #[test]
    fn all_zero_counts_unidentifiable() {
        let data = Portfolio::intercept_only(vec![
            PolicyHistory::from_claims("a", vec![YearClaim::empty(); 3]),
            PolicyHistory::from_claims("b", vec![YearClaim::empty(); 2]),
        ]);
        let p = ModelParams::intercept_only(1.0, 10.0, 1.0, ThetaParams::ZERO);
        assert!(matches!(
            fit_from_template(&data, &p, &FitOptions::default()),
            Err(CrmError::Unidentifiable)
        ));
    }

    #[test]
    fn rho_inference_at_origin_is_zero() {
        let cov = [[0.3, 0.1, 0.0, 0.0], [0.1, 0.2, 0.0, 0.0], [0.0, 0.0, 0.5, 0.1], [0.0, 0.0, 0.1, 0.4]];
        let inf = rho_inference_from(&ThetaParams::ZERO, &cov);
        for r in &inf.rows {
            assert_eq!(r.estimate, 0.0);
            assert_eq!(r.std_error, Some(0.0));
            assert_eq!(r.t_value, None);
        }
    }

    #[test]
    fn p_values() {
        assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
        assert_eq!(two_sided_p(0.0), 1.0);
        let e = ParameterEstimate::new("x", 2.0, Some(0.5));
        assert_eq!(e.t_value, Some(4.0));
        assert!(e.significant());
    }
}
