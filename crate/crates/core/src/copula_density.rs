//! Joint density of a multi-year claim history.
//!
//! Conditional on the shared factor `R = r` the years are independent, so
//! the density is a one-dimensional integral over `r` of a product of per-year
//! terms. Each year contributes the conditional density of its severity
//! scores and the conditional probability of its count given those scores.
//! The t copula adds an integral over the chi-square mixing variable.

use crate::dependence::ThetaParams;
use crate::error::{CrmError, Result};
use crate::marginals::{CountDistribution, FrequencyLaw, SeverityDistribution, SeverityLaw};
use crate::model::{CopulaFamily, ModelParams};
use crate::portfolio::{PolicyHistory, YearClaim};
use crate::quadrature::{MixingRule, QuadratureRule};
use crate::special::{log_sum_exp, norm_interval, norm_ln_pdf, norm_ppf, StudentT, LN_SQRT_2PI};

/// Bounds applied to marginal CDF values before mapping to latent scores.
pub const CDF_CLAMP: f64 = 1e-12;
/// Conditional frequency variances below this value are floored.
pub const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalDiagnostics {
    /// Marginal CDF values that hit the clamp bounds.
    pub clamped: usize,
    /// Conditional frequency variances that were floored.
    pub sigma_floored: usize,
}

impl EvalDiagnostics {
    pub fn merge(&mut self, other: EvalDiagnostics) {
        self.clamped += other.clamped;
        self.sigma_floored += other.sigma_floored;
    }

    pub fn is_clean(&self) -> bool {
        self.clamped == 0 && self.sigma_floored == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub log_density: f64,
    pub diagnostics: EvalDiagnostics,
}

/// Conditional law of a year's frequency score given `R = r` and the
/// severity scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalFrequencyLaw {
    pub mu: f64,
    pub sigma: f64,
}

/// Correlation quantities entering the per-year conditional laws.
#[derive(Debug, Clone, Copy)]
struct WithinYear {
    theta1: f64,
    theta2: f64,
    /// Residual severity variance `1 - rho2`.
    resid: f64,
    /// Residual severity covariance `rho2 - theta2^2`.
    common: f64,
    /// Residual frequency/severity covariance `rho1 - theta1 theta2`.
    cross: f64,
}

impl WithinYear {
    fn new(theta: &ThetaParams) -> Self {
        let rho = theta.rho();
        Self {
            theta1: theta.theta1,
            theta2: theta.theta2,
            resid: 1.0 - rho.rho2,
            common: rho.rho2 - theta.theta2 * theta.theta2,
            cross: rho.rho1 - theta.theta1 * theta.theta2,
        }
    }
}

/// Latent scores of one year, summarized by what the closed forms need.
#[derive(Debug, Clone, Copy)]
struct YearScores {
    n: usize,
    sum: f64,
    sum_sq: f64,
    /// `sum_j [ln g(y_j) - ln f_latent(z_j)]`
    log_jac: f64,
    q_hi: f64,
    q_lo: f64,
    /// A severity CDF value was clamped: the density is reported as zero.
    degenerate: bool,
}

impl YearScores {
    /// Scores under the scale mixture at `W = w`: `z = sqrt(w) x`.
    fn scaled(&self, w: f64) -> Self {
        let sw = w.sqrt();
        Self {
            n: self.n,
            sum: self.sum * sw,
            sum_sq: self.sum_sq * w,
            log_jac: self.log_jac + 0.5 * self.n as f64 * w.ln(),
            q_hi: self.q_hi * sw,
            q_lo: self.q_lo * sw,
            degenerate: self.degenerate,
        }
    }
}

fn clamp_cdf(u: f64, diag: &mut EvalDiagnostics) -> (f64, bool) {
    if u < CDF_CLAMP {
        diag.clamped += 1;
        (CDF_CLAMP, true)
    } else if u > 1.0 - CDF_CLAMP {
        diag.clamped += 1;
        (1.0 - CDF_CLAMP, true)
    } else {
        (u, false)
    }
}

/// Maps probabilities to latent scores: the standard normal or a Student-t.
enum LatentScale<'a> {
    Normal,
    T(&'a StudentT),
}

impl LatentScale<'_> {
    fn ppf(&self, p: f64) -> f64 {
        match self {
            LatentScale::Normal => norm_ppf(p),
            LatentScale::T(t) => t.ppf(p),
        }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            LatentScale::Normal => norm_ln_pdf(x),
            LatentScale::T(t) => t.ln_pdf(x),
        }
    }
}

fn year_scores(
    claim: &YearClaim,
    freq: &FrequencyLaw,
    sev: &SeverityLaw,
    scale: &LatentScale,
    diag: &mut EvalDiagnostics,
) -> YearScores {
    let n = claim.count;
    let (u_hi, _) = clamp_cdf(freq.cdf(n as i64), diag);
    let q_hi = scale.ppf(u_hi);
    let q_lo = if n == 0 {
        f64::NEG_INFINITY
    } else {
        let (u_lo, _) = clamp_cdf(freq.cdf(n as i64 - 1), diag);
        scale.ppf(u_lo)
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut log_jac = 0.0;
    let mut degenerate = false;
    for &y in &claim.severities {
        // Scores above the median come from the survival function, which
        // keeps their precision for large claims.
        let lower = sev.cdf(y);
        let z = if lower <= 0.5 {
            let (u, hit) = clamp_cdf(lower, diag);
            degenerate |= hit;
            scale.ppf(u)
        } else {
            let (v, hit) = clamp_cdf(sev.sf(y), diag);
            degenerate |= hit;
            -scale.ppf(v)
        };
        sum += z;
        sum_sq += z * z;
        log_jac += sev.ln_pdf(y) - scale.ln_pdf(z);
    }
    YearScores {
        n: claim.severities.len(),
        sum,
        sum_sq,
        log_jac,
        q_hi,
        q_lo,
        degenerate,
    }
}

/// Log-density of the severity scores given `r`, without Jacobian.
fn sev_score_log_density(s: &YearScores, r: f64, dep: &WithinYear) -> f64 {
    let n = s.n as f64;
    let shift = r * dep.theta2;
    let sd = s.sum - n * shift;
    let sdd = s.sum_sq - 2.0 * shift * s.sum + n * shift * shift;
    let denom = dep.resid + n * dep.common;
    let quad = (sdd - dep.common * sd * sd / denom) / dep.resid;
    let log_det = (n - 1.0) * dep.resid.ln() + denom.ln();
    -n * LN_SQRT_2PI - 0.5 * log_det - 0.5 * quad
}

fn freq_conditional(
    s: &YearScores,
    r: f64,
    dep: &WithinYear,
    diag: &mut EvalDiagnostics,
) -> ConditionalFrequencyLaw {
    let base = 1.0 - dep.theta1 * dep.theta1;
    let (mu, mut var) = if s.n == 0 {
        (dep.theta1 * r, base)
    } else {
        let n = s.n as f64;
        let denom = dep.resid + n * dep.common;
        let sd = s.sum - n * r * dep.theta2;
        (
            dep.theta1 * r + dep.cross * sd / denom,
            base - n * dep.cross * dep.cross / denom,
        )
    };
    if !(var >= SIGMA2_FLOOR) {
        diag.sigma_floored += 1;
        var = SIGMA2_FLOOR;
    }
    ConditionalFrequencyLaw {
        mu,
        sigma: var.sqrt(),
    }
}

fn year_log_term(s: &YearScores, r: f64, dep: &WithinYear, diag: &mut EvalDiagnostics) -> f64 {
    if s.degenerate {
        return f64::NEG_INFINITY;
    }
    let law = freq_conditional(s, r, dep, diag);
    let p = norm_interval((s.q_lo - law.mu) / law.sigma, (s.q_hi - law.mu) / law.sigma);
    let sev = if s.n == 0 {
        0.0
    } else {
        sev_score_log_density(s, r, dep) + s.log_jac
    };
    sev + p.ln()
}

fn ensure_admissible(theta: &ThetaParams) -> Result<()> {
    if theta.is_admissible() {
        Ok(())
    } else {
        Err(CrmError::Inadmissible(*theta))
    }
}

/// Conditional log-density of a year's severities given `R = r`.
///
/// Returns `-inf` when a severity CDF value had to be clamped.
pub fn cond_sev_logdensity(
    severities: &[f64],
    r: f64,
    sev: &SeverityLaw,
    theta: &ThetaParams,
) -> Result<f64> {
    ensure_admissible(theta)?;
    if severities.is_empty() {
        return Err(CrmError::InvalidArgument(
            "conditional severity density needs at least one claim".into(),
        ));
    }
    let mut diag = EvalDiagnostics::default();
    let claim = YearClaim::new(severities.to_vec());
    let dummy = FrequencyLaw::Poisson(crate::marginals::Poisson::new(1.0)?);
    let s = year_scores(&claim, &dummy, sev, &LatentScale::Normal, &mut diag);
    if s.degenerate {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(sev_score_log_density(&s, r, &WithinYear::new(theta)) + s.log_jac)
}

/// Conditional law `(mu_t, sigma_t)` of a year's frequency score.
pub fn cond_freq_law(
    claim: &YearClaim,
    r: f64,
    sev: &SeverityLaw,
    theta: &ThetaParams,
) -> Result<ConditionalFrequencyLaw> {
    ensure_admissible(theta)?;
    let mut diag = EvalDiagnostics::default();
    let dummy = FrequencyLaw::Poisson(crate::marginals::Poisson::new(1.0)?);
    let s = year_scores(claim, &dummy, sev, &LatentScale::Normal, &mut diag);
    Ok(freq_conditional(&s, r, &WithinYear::new(theta), &mut diag))
}

/// Conditional probability of the observed count given `R = r` and the
/// year's severities.
pub fn cond_freq_prob(
    claim: &YearClaim,
    r: f64,
    freq: &FrequencyLaw,
    sev: &SeverityLaw,
    theta: &ThetaParams,
) -> Result<f64> {
    ensure_admissible(theta)?;
    let mut diag = EvalDiagnostics::default();
    let s = year_scores(claim, freq, sev, &LatentScale::Normal, &mut diag);
    let law = freq_conditional(&s, r, &WithinYear::new(theta), &mut diag);
    Ok(norm_interval(
        (s.q_lo - law.mu) / law.sigma,
        (s.q_hi - law.mu) / law.sigma,
    ))
}

/// Conditional log-density given `R = r` of a year with `claim.count`
/// claims of which only the leading `claim.severities.len()` amounts are
/// observed. With every amount observed this is the year's integrand term.
pub fn cond_year_log_density(
    claim: &YearClaim,
    r: f64,
    freq: &FrequencyLaw,
    sev: &SeverityLaw,
    theta: &ThetaParams,
) -> Result<f64> {
    ensure_admissible(theta)?;
    if claim.severities.len() > claim.count {
        return Err(CrmError::InvalidArgument(format!(
            "{} severities observed for a count of {}",
            claim.severities.len(),
            claim.count
        )));
    }
    let mut diag = EvalDiagnostics::default();
    let s = year_scores(claim, freq, sev, &LatentScale::Normal, &mut diag);
    Ok(year_log_term(&s, r, &WithinYear::new(theta), &mut diag))
}

fn prepare(
    history: &PolicyHistory,
    params: &ModelParams,
    scale: &LatentScale,
    diag: &mut EvalDiagnostics,
) -> Result<Vec<YearScores>> {
    history.validate()?;
    ensure_admissible(&params.theta)?;
    history
        .years
        .iter()
        .map(|year| {
            let (freq, sev) = params.year_laws(year)?;
            Ok(year_scores(&year.claim, &freq, &sev, scale, diag))
        })
        .collect()
}

fn integrate_factor(
    scores: &[YearScores],
    dep: &WithinYear,
    quad: &QuadratureRule,
    diag: &mut EvalDiagnostics,
    buf: &mut Vec<f64>,
) -> f64 {
    if dep.theta1 == 0.0 && dep.theta2 == 0.0 {
        // The integrand does not depend on r.
        return scores.iter().map(|s| year_log_term(s, 0.0, dep, diag)).sum();
    }
    if scores.iter().any(|s| s.degenerate) {
        return f64::NEG_INFINITY;
    }
    let (center, scale) = locate_mode(|r| {
        let mut scratch = EvalDiagnostics::default();
        norm_ln_pdf(r) + scores.iter().map(|s| year_log_term(s, r, dep, &mut scratch)).sum::<f64>()
    });
    // Nodes are recentred on the mode of the integrand and rescaled to its
    // curvature; the normal weight is divided back out.
    buf.clear();
    for (t, lw) in quad.factor.nodes.iter().zip(&quad.factor.log_weights) {
        let r = center + scale * t;
        let term: f64 = scores.iter().map(|s| year_log_term(s, r, dep, diag)).sum();
        buf.push(lw + scale.ln() - norm_ln_pdf(*t) + norm_ln_pdf(r) + term);
    }
    log_sum_exp(buf)
}

/// Mode and curvature scale `1/sqrt(-L'')` of a concave log-integrand `L`,
/// by damped Newton steps on finite differences. Falls back to the standard
/// normal rule when the curvature is not usable.
fn locate_mode(log_f: impl Fn(f64) -> f64) -> (f64, f64) {
    const H: f64 = 1e-3;
    let curvature = |r: f64, fr: f64| {
        let (fp, fm) = (log_f(r + H), log_f(r - H));
        ((fp - fm) / (2.0 * H), (fp - 2.0 * fr + fm) / (H * H))
    };
    let mut r = 0.0;
    let mut fr = log_f(r);
    let (mut d1, mut d2) = curvature(r, fr);
    for _ in 0..50 {
        if !(d2 < 0.0 && d1.is_finite() && fr.is_finite()) {
            return (0.0, 1.0);
        }
        let mut step = (-d1 / d2).clamp(-2.0, 2.0);
        let mut next = log_f(r + step);
        while !(next >= fr) && step.abs() > 1e-12 {
            step *= 0.5;
            next = log_f(r + step);
        }
        if !(next >= fr) {
            break;
        }
        r += step;
        fr = next;
        (d1, d2) = curvature(r, fr);
        if step.abs() < 1e-10 {
            break;
        }
    }
    if !(d2 < 0.0) || !r.is_finite() {
        return (0.0, 1.0);
    }
    (r, (-1.0 / d2).sqrt().clamp(1e-3, 10.0))
}

/// Log-density of a history under the Gaussian copula. With all loadings
/// zero the copula is the independence copula and the marginal densities
/// are used directly, so extreme severities never reach the score clamp.
pub fn log_density_gaussian(
    history: &PolicyHistory,
    params: &ModelParams,
    quad: &QuadratureRule,
) -> Result<DensityValue> {
    if params.theta == ThetaParams::ZERO {
        return Ok(DensityValue {
            log_density: log_density_independent(history, params)?,
            diagnostics: EvalDiagnostics::default(),
        });
    }
    let mut diag = EvalDiagnostics::default();
    let scores = prepare(history, params, &LatentScale::Normal, &mut diag)?;
    let dep = WithinYear::new(&params.theta);
    let mut buf = Vec::with_capacity(quad.factor.len());
    let log_density = integrate_factor(&scores, &dep, quad, &mut diag, &mut buf);
    Ok(DensityValue {
        log_density,
        diagnostics: diag,
    })
}

/// Log-density of a history under the t copula with `nu_df` degrees of
/// freedom.
pub fn log_density_t(
    history: &PolicyHistory,
    params: &ModelParams,
    nu_df: f64,
    quad: &QuadratureRule,
) -> Result<DensityValue> {
    if !(nu_df > 0.0 && nu_df.is_finite()) {
        return Err(CrmError::InvalidArgument(format!(
            "t copula degrees of freedom must be positive, got {nu_df}"
        )));
    }
    let t = StudentT::new(nu_df);
    let mixing = MixingRule::new(nu_df, quad.mixing_nodes.max(2));
    log_density_t_with(history, params, &t, &mixing, quad)
}

fn log_density_t_with(
    history: &PolicyHistory,
    params: &ModelParams,
    t: &StudentT,
    mixing: &MixingRule,
    quad: &QuadratureRule,
) -> Result<DensityValue> {
    let mut diag = EvalDiagnostics::default();
    let base = prepare(history, params, &LatentScale::T(t), &mut diag)?;
    let dep = WithinYear::new(&params.theta);
    let mut buf = Vec::with_capacity(quad.factor.len());
    let mut outer = Vec::with_capacity(mixing.nodes.len());
    let mut scaled = Vec::with_capacity(base.len());
    for (w, pw) in mixing.nodes.iter().zip(&mixing.weights) {
        scaled.clear();
        scaled.extend(base.iter().map(|s| s.scaled(*w)));
        outer.push(pw.ln() + integrate_factor(&scaled, &dep, quad, &mut diag, &mut buf));
    }
    Ok(DensityValue {
        log_density: log_sum_exp(&outer),
        diagnostics: diag,
    })
}

/// Reusable evaluator for the family stored in `params`.
///
/// Builds the Student-t and mixing rule once so repeated evaluations over a
/// portfolio do not redo that work.
pub struct DensityEvaluator<'a> {
    params: &'a ModelParams,
    quad: &'a QuadratureRule,
    t: Option<(StudentT, MixingRule)>,
}

impl<'a> DensityEvaluator<'a> {
    pub fn new(params: &'a ModelParams, quad: &'a QuadratureRule) -> Result<Self> {
        params.validate()?;
        let t = match params.copula {
            CopulaFamily::Gaussian => None,
            CopulaFamily::T { nu_df } => Some((
                StudentT::new(nu_df),
                MixingRule::new(nu_df, quad.mixing_nodes.max(2)),
            )),
        };
        Ok(Self { params, quad, t })
    }

    pub fn log_density(&self, history: &PolicyHistory) -> Result<DensityValue> {
        match &self.t {
            None => log_density_gaussian(history, self.params, self.quad),
            Some((t, mixing)) => log_density_t_with(history, self.params, t, mixing, self.quad),
        }
    }
}

/// Log-density under the copula family stored in `params`.
pub fn log_density(
    history: &PolicyHistory,
    params: &ModelParams,
    quad: &QuadratureRule,
) -> Result<DensityValue> {
    DensityEvaluator::new(params, quad)?.log_density(history)
}

/// Log-density under independence: sum of marginal log-pmfs and log-pdfs.
pub fn log_density_independent(history: &PolicyHistory, params: &ModelParams) -> Result<f64> {
    history.validate()?;
    let mut total = 0.0;
    for year in &history.years {
        let (freq, sev) = params.year_laws(year)?;
        total += freq.ln_pmf(year.claim.count as u64);
        total += year.claim.severities.iter().map(|y| sev.ln_pdf(*y)).sum::<f64>();
    }
    Ok(total)
}

pub mod oracle;

pub use oracle::oracle_density;
