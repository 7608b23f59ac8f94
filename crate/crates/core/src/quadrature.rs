//! Quadrature rules for the latent factor and the t mixing variable, plus an
//! adaptive Gauss-Kronrod integrator used by the reference density path.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub const DEFAULT_FACTOR_NODES: usize = 64;
pub const DEFAULT_MIXING_NODES: usize = 32;

/// Node/weight pairs for `E[f(R)]` with `R ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl GaussHermite {
    /// Physicists' Gauss-Hermite rule mapped to the standard normal through
    /// `r = sqrt(2) x`, weights divided by `sqrt(pi)`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let (x, w) = hermite_physicists(n);
        let norm = std::f64::consts::PI.sqrt();
        let nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights: Vec<f64> = w.iter().map(|v| v / norm).collect();
        let log_weights = weights.iter().map(|v| v.ln()).collect();
        Self {
            nodes,
            weights,
            log_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Rule for `E[f(W)]` with `W ~ chi^2_nu / nu`.
///
/// Trapezoid nodes on `s = ln w`, where the log-density of `s` is smooth and
/// unimodal; weights are normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixingRule {
    pub fn new(nu: f64, n: usize) -> Self {
        assert!(nu > 0.0 && n >= 2);
        let a = 0.5 * nu;
        // Trapezoid in t with s = ln(W) = c sinh(t): nodes cluster near the
        // mode and the slowly decaying left tail of small-a laws is compressed.
        let c = a.sqrt().recip().min(1.0);
        let log_norm = a * a.ln() - ln_gamma(a);
        // log density in t, relative to the mode
        let rel = |t: f64| {
            let s = c * t.sinh();
            a * s - a * s.exp_m1() + t.cosh().ln()
        };
        let cutoff = -40.0;
        let find = |mut inside: f64, mut outside: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if rel(mid) > cutoff {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            0.5 * (inside + outside)
        };
        let mut lo_out = -1.0;
        while rel(lo_out) > cutoff {
            lo_out *= 2.0;
        }
        let mut hi_out = 1.0;
        while rel(hi_out) > cutoff {
            hi_out *= 2.0;
        }
        let lo = find(0.0, lo_out);
        let hi = find(0.0, hi_out);
        let h = (hi - lo) / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            let t = lo + h * k as f64;
            let s = c * t.sinh();
            // density of s = ln(W) where a W ~ Gamma(a, 1), times ds/dt
            let ln_p = log_norm + a * s - a * s.exp() + (c * t.cosh()).ln();
            nodes.push(s.exp());
            weights.push(h * ln_p.exp());
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { nodes, weights }
    }
}

/// Node counts used by the density routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    #[serde(default = "default_factor_nodes")]
    pub factor_nodes: usize,
    #[serde(default = "default_mixing_nodes")]
    pub mixing_nodes: usize,
}

fn default_factor_nodes() -> usize {
    DEFAULT_FACTOR_NODES
}

fn default_mixing_nodes() -> usize {
    DEFAULT_MIXING_NODES
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            factor_nodes: DEFAULT_FACTOR_NODES,
            mixing_nodes: DEFAULT_MIXING_NODES,
        }
    }
}

/// Immutable quadrature data shared by all density evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub factor: GaussHermite,
    pub mixing_nodes: usize,
}

impl QuadratureRule {
    pub fn new(factor_nodes: usize, mixing_nodes: usize) -> Self {
        Self {
            factor: GaussHermite::new(factor_nodes),
            mixing_nodes,
        }
    }

    pub fn from_config(cfg: &QuadratureConfig) -> Self {
        Self::new(cfg.factor_nodes, cfg.mixing_nodes)
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::new(DEFAULT_FACTOR_NODES, DEFAULT_MIXING_NODES)
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, rel: f64, depth: u32) -> f64 {
    let (k, err) = kronrod15(f, a, b);
    if err <= tol.max(rel * k.abs()) || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, rel, depth - 1) + adapt(f, m, b, 0.5 * tol, rel, depth - 1)
}

/// Adaptive 15-point Gauss-Kronrod integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, abs_tol, rel_tol);
    }
    adapt(&f, a, b, abs_tol, rel_tol, 40)
}
