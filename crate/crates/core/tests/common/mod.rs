#![allow(dead_code)]

use crm_core::copula_density::{cond_freq_prob, log_density_gaussian, oracle_density};
use crm_core::marginals::{FrequencyLaw, Poisson, SeverityDistribution, SeverityLaw, Weibull};
use crm_core::quadrature::integrate;
use crm_core::special::{norm_cdf, norm_ln_pdf};
use crm_core::{ModelParams, PolicyHistory, QuadratureRule, ThetaParams, YearClaim};

pub fn laws(lambda: f64, xi: f64, nu_sev: f64) -> (FrequencyLaw, SeverityLaw) {
    (
        FrequencyLaw::Poisson(Poisson::new(lambda).unwrap()),
        SeverityLaw::Weibull(Weibull::new(xi, nu_sev).unwrap()),
    )
}

/// Severity whose normal score is `z`, computed from whichever tail is
/// more accurate.
pub fn severity_at_score(sev: &SeverityLaw, z: f64) -> f64 {
    if z <= 0.0 {
        sev.quantile(norm_cdf(z))
    } else {
        sev.quantile_upper(norm_cdf(-z))
    }
}

/// `int exp(log_f(y)) dy` over the positive axis, after substituting
/// `y = G^{-1}(Phi(z))`.
pub fn integrate_severity(
    sev: &SeverityLaw,
    log_f: impl Fn(f64) -> f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    integrate(
        |z| {
            let y = severity_at_score(sev, z);
            let v = log_f(y) - sev.ln_pdf(y) + norm_ln_pdf(z);
            if v.is_finite() {
                v.exp()
            } else {
                0.0
            }
        },
        -7.0,
        7.0,
        abs_tol,
        rel_tol,
    )
}

pub fn single_year(claim: YearClaim) -> PolicyHistory {
    PolicyHistory::from_claims("p", vec![claim])
}

/// `P(N = n)` of a single year by integrating the joint density over all
/// `n` severities. Inner integrals run a thousand times tighter than the
/// one enclosing them so their error does not look like roughness.
pub fn count_mass_direct(n: usize, params: &ModelParams, quad: &QuadratureRule, tol: f64) -> f64 {
    let (_, sev) = laws(
        params.frequency.coefficients[0].exp(),
        params.severity.coefficients[0].exp(),
        params.severity.shape,
    );
    fn go(
        fixed: &mut Vec<f64>,
        n: usize,
        sev: &SeverityLaw,
        params: &ModelParams,
        quad: &QuadratureRule,
        tol: f64,
        rel: f64,
    ) -> f64 {
        if fixed.len() == n {
            let h = single_year(YearClaim::new(fixed.clone()));
            return log_density_gaussian(&h, params, quad).unwrap().log_density.exp();
        }
        // Inner integrals return a density in the outer coordinates; the
        // outer substitution applies the matching Jacobian.
        let cell = std::cell::RefCell::new(fixed.clone());
        integrate_severity(
            sev,
            |y| {
                let mut f = cell.borrow_mut();
                f.push(y);
                let v = go(&mut f, n, sev, params, quad, tol * 1e-3, rel * 1e-3);
                f.pop();
                v.ln()
            },
            tol,
            rel,
        )
    }
    go(&mut Vec::new(), n, &sev, params, quad, tol, 1e-9)
}

/// `P(N = n)` of a single year using that, given `R = r`, the count term
/// depends on the severity scores only through their sum `S`, which is
/// normal with mean `n r theta2` and variance `n(1 - rho2) + n^2(rho2 - theta2^2)`.
pub fn count_mass_reduced(n: usize, lambda: f64, xi: f64, nu_sev: f64, theta: &ThetaParams) -> f64 {
    let (freq, sev) = laws(lambda, xi, nu_sev);
    if n == 0 {
        let claim = YearClaim::empty();
        return integrate(
            |r| norm_ln_pdf(r).exp() * cond_freq_prob(&claim, r, &freq, &sev, theta).unwrap(),
            -9.0,
            9.0,
            1e-13,
            1e-11,
        );
    }
    let rho2 = theta.rho().rho2;
    let nf = n as f64;
    let sd = (nf * (1.0 - rho2) + nf * nf * (rho2 - theta.theta2 * theta.theta2)).sqrt();
    let outer = |r: f64| {
        let mean = nf * r * theta.theta2;
        let inner = |s: f64| {
            let y = severity_at_score(&sev, s / nf);
            let claim = YearClaim::new(vec![y; n]);
            let p = cond_freq_prob(&claim, r, &freq, &sev, theta).unwrap();
            p * norm_ln_pdf((s - mean) / sd).exp() / sd
        };
        // Keep the implied per-claim score inside the CDF clamp.
        let lo = (mean - 9.0 * sd).max(-6.5 * nf);
        let hi = (mean + 9.0 * sd).min(6.5 * nf);
        if lo >= hi {
            return 0.0;
        }
        norm_ln_pdf(r).exp() * integrate(inner, lo, hi, 1e-15, 1e-13)
    };
    integrate(outer, -9.0, 9.0, 1e-12, 1e-10)
}

/// Fixed grid of small histories for comparing the factor density with
/// the vertex-sum reference: five dependence settings and twelve count
/// patterns with at most two years and two claims per year.
pub fn oracle_grid() -> Vec<(PolicyHistory, ModelParams)> {
    let settings = [
        (ThetaParams::new(0.3, 0.3, 0.5, 0.5), 2.0, 8f64.exp(), 0.7),
        (ThetaParams::new(0.7, 0.7, 0.5, 0.5), 0.7, 500.0, 1.3),
        (ThetaParams::new(0.5, -0.4, 0.6, 0.7), 1.5, 3000.0, 0.9),
        (ThetaParams::new(0.8, 0.2, -0.3, 0.6), 3.0, 40.0, 2.0),
        (ThetaParams::new(0.0, 0.0, 0.6, 0.6), 1.0, 1.0, 0.5),
    ];
    let patterns: [&[usize]; 12] = [
        &[0],
        &[1],
        &[2],
        &[0, 0],
        &[0, 1],
        &[1, 0],
        &[1, 1],
        &[2, 0],
        &[0, 2],
        &[2, 1],
        &[1, 2],
        &[2, 2],
    ];
    let probs = [0.2, 0.75, 0.5, 0.93, 0.05, 0.6];
    let mut out = Vec::new();
    for (theta, lambda, xi, nu) in settings {
        let params = ModelParams::intercept_only(lambda, xi, nu, theta);
        let (_, sev) = laws(lambda, xi, nu);
        let mut k = 0;
        for counts in patterns {
            let years = counts
                .iter()
                .map(|&n| {
                    YearClaim::new(
                        (0..n)
                            .map(|_| {
                                k += 1;
                                sev.quantile(probs[k % probs.len()])
                            })
                            .collect(),
                    )
                })
                .collect();
            out.push((PolicyHistory::from_claims("g", years), params.clone()));
        }
    }
    out
}

/// Largest relative difference between the factor density and the
/// reference density over the grid.
pub fn oracle_max_relative_error() -> (usize, f64) {
    let quad = QuadratureRule::default();
    let grid = oracle_grid();
    let worst = grid
        .iter()
        .map(|(h, p)| {
            let fast = log_density_gaussian(h, p, &quad).unwrap().log_density.exp();
            let slow = oracle_density(h, p).unwrap();
            ((fast - slow) / slow).abs()
        })
        .fold(0.0, f64::max);
    (grid.len(), worst)
}
