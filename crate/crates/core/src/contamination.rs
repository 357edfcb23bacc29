//! Per-class contamination parameters: Bernoulli rates `p_gj` and Laplace
//! scales `α_gj`, estimated from the outlier flags of the training cases.
//!
//! Missing cells are neither outliers nor trials: they leave both the flag
//! count and the effective column size.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{DataSet, FlagMatrix};
use crate::special::normal_quantile;

/// Lower bound on `p̂`, equal to the tail mass left by the flagging cutoff.
pub const P_FLOOR: f64 = 0.01;

/// `max(0.01, m/n)`, kept below one by capping at `1 − 1/(2n)`.
pub fn estimate_p(m: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("contamination rate of an empty column".into()));
    }
    if m > n {
        return Err(Error::Domain(alloc::format!("{m} flags in a column of {n} cells")));
    }
    let cap = 1.0 - 0.5 / n as f64;
    Ok((m as f64 / n as f64).max(P_FLOOR).min(cap))
}

/// `z_{0.995} / ln 100`, about 0.5593.
pub fn alpha_factor() -> f64 {
    normal_quantile(0.995).expect("valid probability") / libm::log(100.0)
}

/// Default Laplace scale from the conditional standard deviation
/// `1/√(Σ⁻¹)_jj`.
pub fn alpha_default_from_precision(precision_jj: f64) -> f64 {
    alpha_factor() * libm::sqrt(1.0 / precision_jj)
}

pub fn alpha_default(sigma: &crate::linalg::Matrix, j: usize) -> Result<f64> {
    let prec = crate::linalg::Cholesky::new(sigma)?.inverse();
    Ok(alpha_default_from_precision(prec[(j, j)]))
}

/// `τ = min(1, n/100)`.
pub fn tau(n: usize) -> f64 {
    (n as f64 / 100.0).min(1.0)
}

/// Shrinks the maximum-likelihood scale `S/m` toward `α⁽⁰⁾` with weight
/// `τ/(τ + m)`.
pub fn estimate_alpha(m: usize, s: f64, n: usize, alpha0: f64) -> f64 {
    if m == 0 {
        return alpha0;
    }
    let t = tau(n);
    (t * alpha0 + s) / (t + m as f64)
}

/// Contamination parameters for `G` classes, indexed `[g − 1][j]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContaminationEstimate {
    pub p: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub m_counts: Vec<Vec<usize>>,
    pub s_sums: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
}

impl ContaminationEstimate {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the estimates of one class. `data` and `mu` must be on the
    /// scale the Laplace scales are wanted on; `precision_diag` is the
    /// diagonal of `Σ̂⁻¹` on that scale.
    pub fn push_class(&mut self, data: &DataSet, flags: &FlagMatrix, mu: &[f64], precision_diag: &[f64]) -> Result<()> {
        let d = data.n_cols();
        if flags.n_rows() != data.n_rows() || flags.n_cols() != d || mu.len() != d || precision_diag.len() != d {
            return Err(Error::Dimension("contamination inputs disagree in shape".into()));
        }
        let n = data.n_rows();
        let m = flags.outlier_counts();
        let na = flags.na_counts();
        let mut s = alloc::vec![0.0; d];
        for i in 0..n {
            let row = data.row(i);
            let w = flags.row(i);
            for j in 0..d {
                if w.is_outlier(j) {
                    s[j] += libm::fabs(row[j] - mu[j]);
                }
            }
        }
        let mut p = Vec::with_capacity(d);
        let mut alpha = Vec::with_capacity(d);
        for j in 0..d {
            p.push(estimate_p(m[j], n - na[j])?);
            alpha.push(estimate_alpha(m[j], s[j], n, alpha_default_from_precision(precision_diag[j])));
        }
        self.p.push(p);
        self.alpha.push(alpha);
        self.m_counts.push(m);
        self.s_sums.push(s);
        self.tau.push(tau(n));
        Ok(())
    }
}
