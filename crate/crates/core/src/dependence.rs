//! Structured correlation matrices for multi-year frequency/severity data.
//!
//! A policyholder observed for `tau` years with counts `n_1..n_tau` is mapped
//! to a latent Gaussian vector of dimension `tau + sum(n_t)`: one frequency
//! coordinate per year followed by that year's severity coordinates. The
//! correlation between coordinates is described by five numbers `rho1..rho5`,
//! which in the factor representation are generated from four loadings
//! `theta1..theta4` on a shared random effect and a per-year effect.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};

/// Relative pivot tolerance used by [`is_positive_definite`].
pub const PD_PIVOT_TOLERANCE: f64 = 1e-10;

/// Factor loadings.
///
/// `theta1`/`theta2` load the frequency/severity latents on the shared random
/// effect; `theta3`/`theta4` load them on the per-year effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
}

impl ThetaParams {
    pub const ZERO: ThetaParams = ThetaParams::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Self {
        Self {
            theta1,
            theta2,
            theta3,
            theta4,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta1, self.theta2, self.theta3, self.theta4]
    }

    pub fn is_admissible(&self) -> bool {
        check_admissible(self)
    }

    pub fn rho(&self) -> RhoParams {
        rho_from_theta(self)
    }
}

/// Latent-scale correlations.
///
/// * `rho1`: frequency vs severity, same year
/// * `rho2`: severity vs severity, same year
/// * `rho3`: frequency vs frequency, different years
/// * `rho4`: frequency vs severity, different years
/// * `rho5`: severity vs severity, different years
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub rho4: f64,
    pub rho5: f64,
}

impl RhoParams {
    pub const fn new(rho1: f64, rho2: f64, rho3: f64, rho4: f64, rho5: f64) -> Self {
        Self {
            rho1,
            rho2,
            rho3,
            rho4,
            rho5,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.rho1, self.rho2, self.rho3, self.rho4, self.rho5]
    }
}

/// Yearly claim counts `n_1..n_tau`, `tau >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyVector(Vec<usize>);

impl FrequencyVector {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(CrmError::EmptyFrequencyVector);
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn years(&self) -> usize {
        self.0.len()
    }

    pub fn total_claims(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Dense correlation matrix together with its year-block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredCorrMatrix {
    pub entries: DMatrix<f64>,
    /// Size of each year block, `n_t + 1`.
    pub block_layout: Vec<usize>,
    /// Whether row/column 0 holds the shared factor.
    pub augmented: bool,
}

impl StructuredCorrMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Offset of the first non-factor coordinate.
    fn base(&self) -> usize {
        usize::from(self.augmented)
    }

    /// Index ranges of the year blocks within `entries`.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = self.base();
        self.block_layout
            .iter()
            .map(|&size| {
                let r = start..start + size;
                start += size;
                r
            })
            .collect()
    }

    /// Largest absolute entry over all off-diagonal year blocks.
    pub fn max_off_block_abs(&self) -> f64 {
        let ranges = self.block_ranges();
        let mut worst = 0.0_f64;
        for (i, ri) in ranges.iter().enumerate() {
            for (j, rj) in ranges.iter().enumerate() {
                if i == j {
                    continue;
                }
                for a in ri.clone() {
                    for b in rj.clone() {
                        worst = worst.max(self.entries[(a, b)].abs());
                    }
                }
            }
        }
        worst
    }
}

/// Maps factor loadings to latent correlations.
pub fn rho_from_theta(theta: &ThetaParams) -> RhoParams {
    let ThetaParams {
        theta1: t1,
        theta2: t2,
        theta3: t3,
        theta4: t4,
    } = *theta;
    RhoParams {
        rho1: t1 * t2 + t3 * t4,
        rho2: t2 * t2 + t4 * t4,
        rho3: t1 * t1,
        rho4: t1 * t2,
        rho5: t2 * t2,
    }
}

/// Jacobian of [`rho_from_theta`]; row `i` holds the partials of `rho_{i+1}`.
pub fn rho_jacobian(theta: &ThetaParams) -> [[f64; 4]; 5] {
    let [t1, t2, t3, t4] = theta.to_array();
    [
        [t2, t1, t4, t3],
        [0.0, 2.0 * t2, 0.0, 2.0 * t4],
        [2.0 * t1, 0.0, 0.0, 0.0],
        [t2, t1, 0.0, 0.0],
        [0.0, 2.0 * t2, 0.0, 0.0],
    ]
}

pub fn check_admissible(theta: &ThetaParams) -> bool {
    let all_finite = theta.to_array().iter().all(|v| v.is_finite());
    all_finite
        && theta.theta1 * theta.theta1 + theta.theta3 * theta.theta3 < 1.0
        && theta.theta2 * theta.theta2 + theta.theta4 * theta.theta4 < 1.0
}

fn fill_sigma(out: &mut DMatrix<f64>, base: usize, n: &[usize], rho: &RhoParams) {
    let mut offsets = Vec::with_capacity(n.len());
    let mut acc = base;
    for &nt in n {
        offsets.push(acc);
        acc += nt + 1;
    }
    for (t, (&nt, &ot)) in n.iter().zip(&offsets).enumerate() {
        for (s, (&ns, &os)) in n.iter().zip(&offsets).enumerate() {
            for l in 0..=nt {
                for m in 0..=ns {
                    let value = if t == s {
                        if l == m {
                            1.0
                        } else if l.min(m) >= 1 {
                            rho.rho2
                        } else {
                            rho.rho1
                        }
                    } else if l == 0 && m == 0 {
                        rho.rho3
                    } else if l.min(m) >= 1 {
                        rho.rho5
                    } else {
                        rho.rho4
                    };
                    out[(ot + l, os + m)] = value;
                }
            }
        }
    }
}

/// Correlation matrix of the latent vector `(N_1, Y_1.., .., N_tau, Y_tau..)`.
pub fn build_sigma(n: &FrequencyVector, rho: &RhoParams) -> StructuredCorrMatrix {
    let counts = n.counts();
    let dim = n.years() + n.total_claims();
    let mut entries = DMatrix::zeros(dim, dim);
    fill_sigma(&mut entries, 0, counts, rho);
    StructuredCorrMatrix {
        entries,
        block_layout: counts.iter().map(|c| c + 1).collect(),
        augmented: false,
    }
}

/// [`build_sigma`] with a leading row/column for the shared factor `R`.
pub fn build_augmented_sigma(
    n: &FrequencyVector,
    rho: &RhoParams,
    theta1: f64,
    theta2: f64,
) -> StructuredCorrMatrix {
    let counts = n.counts();
    let dim = 1 + n.years() + n.total_claims();
    let mut entries = DMatrix::zeros(dim, dim);
    fill_sigma(&mut entries, 1, counts, rho);
    entries[(0, 0)] = 1.0;
    let mut idx = 1;
    for &nt in counts {
        for l in 0..=nt {
            let loading = if l == 0 { theta1 } else { theta2 };
            entries[(0, idx)] = loading;
            entries[(idx, 0)] = loading;
            idx += 1;
        }
    }
    StructuredCorrMatrix {
        entries,
        block_layout: counts.iter().map(|c| c + 1).collect(),
        augmented: true,
    }
}

/// Schur complement of the factor block: `Sigma - Omega^T Omega`.
///
/// Non-augmented input is returned unchanged.
pub fn schur_complement_factor(m: &StructuredCorrMatrix) -> StructuredCorrMatrix {
    if !m.augmented {
        return m.clone();
    }
    let d = m.dim() - 1;
    let pivot = m.entries[(0, 0)];
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] =
                m.entries[(i + 1, j + 1)] - m.entries[(i + 1, 0)] * m.entries[(0, j + 1)] / pivot;
        }
    }
    StructuredCorrMatrix {
        entries: out,
        block_layout: m.block_layout.clone(),
        augmented: false,
    }
}

/// Positive-definiteness via an in-place Cholesky factorization.
///
/// A pivot at or below `PD_PIVOT_TOLERANCE` times the largest diagonal entry
/// counts as failure.
pub fn is_positive_definite(m: &StructuredCorrMatrix) -> bool {
    is_positive_definite_dense(&m.entries)
}

pub fn is_positive_definite_dense(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n != a.ncols() {
        return false;
    }
    if n == 0 {
        return true;
    }
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) {
        return false;
    }
    let tol = PD_PIVOT_TOLERANCE * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > tol) {
            return false;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    true
}
