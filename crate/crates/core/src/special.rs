//! Normal and Student-t helpers shared by the density and simulation code.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf;
use statrs::function::gamma::ln_gamma;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal quantile. Returns +-infinity at 0 and 1.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // One Newton step on the lower tail polishes the rational approximation.
    let lower = p.min(1.0 - p);
    let mut x = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * lower);
    let step = (norm_cdf(x) - lower) / norm_ln_pdf(x).exp();
    if step.is_finite() {
        x -= step;
    }
    if p > 0.5 {
        -x
    } else {
        x
    }
}

/// `P(lo < Z <= hi)` for a standard normal `Z`, computed on the tail that
/// avoids cancellation.
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let p = if lo > 0.0 {
        norm_cdf(-lo) - norm_cdf(-hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    };
    p.clamp(0.0, 1.0)
}

/// Student-t with `nu` degrees of freedom, unit scale.
#[derive(Debug, Clone)]
pub struct StudentT {
    nu: f64,
    log_norm: f64,
    dist: StudentsT,
}

impl StudentT {
    pub fn new(nu: f64) -> Self {
        let log_norm = ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (nu * std::f64::consts::PI).ln();
        Self {
            nu,
            log_norm,
            dist: StudentsT::new(0.0, 1.0, nu).expect("degrees of freedom must be positive"),
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.log_norm - 0.5 * (self.nu + 1.0) * (x * x / self.nu).ln_1p()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        self.dist.cdf(x)
    }

    pub fn ppf(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        // Symmetric evaluation keeps the upper tail accurate.
        if p > 0.5 {
            -self.dist.inverse_cdf(1.0 - p)
        } else {
            self.dist.inverse_cdf(p)
        }
    }
}

/// Numerically stable `ln(sum(exp(v)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
