//! Gaussian computations on coordinate subsets: partial Mahalanobis
//! distances, sub-log-determinants, conditional moments and subset normal
//! log-densities.
//!
//! Empty subsets follow fixed conventions: log-determinant and log-density
//! are 0. [`partial_md2`] alone treats an empty subset as an error so callers
//! decide explicitly.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::model::FlagVector;

pub use crate::special::{chi2_cdf, chi2_quantile};

/// Cholesky factor of a principal submatrix `Σ^(o)`.
#[derive(Debug, Clone)]
pub struct SubsetWorkspace {
    o: Vec<usize>,
    chol: Cholesky,
    logdet: f64,
}

impl SubsetWorkspace {
    pub fn new(sigma: &Matrix, o: &[usize]) -> Result<Self> {
        if o.is_empty() {
            return Err(Error::EmptySubset);
        }
        let chol = Cholesky::new(&sigma.principal(o))?;
        let logdet = chol.logdet();
        Ok(SubsetWorkspace { o: o.to_vec(), chol, logdet })
    }

    pub fn indices(&self) -> &[usize] {
        &self.o
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Residual `x^(o) - μ^(o)`.
    pub fn residual(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        self.o.iter().map(|&j| x[j] - mu[j]).collect()
    }

    pub fn md2(&self, x: &[f64], mu: &[f64]) -> f64 {
        self.chol.quad_form(&self.residual(x, mu))
    }

    /// `(Σ^(o))⁻¹`.
    pub fn precision(&self) -> Matrix {
        self.chol.inverse()
    }
}

fn check_dims(x: &[f64], mu: &[f64], sigma: &Matrix) -> Result<()> {
    let d = mu.len();
    if x.len() != d || sigma.rows() != d || sigma.cols() != d {
        return Err(Error::Dimension(alloc::format!(
            "x has {}, mu {} entries; sigma is {}x{}",
            x.len(),
            d,
            sigma.rows(),
            sigma.cols()
        )));
    }
    Ok(())
}

/// `(x^(o) − μ^(o))ᵀ (Σ^(o))⁻¹ (x^(o) − μ^(o))` over the clean cells of `w`.
pub fn partial_md2(x: &[f64], w: &FlagVector, mu: &[f64], sigma: &Matrix) -> Result<f64> {
    check_dims(x, mu, sigma)?;
    let o = w.clean();
    Ok(SubsetWorkspace::new(sigma, &o)?.md2(x, mu))
}

/// `log |Σ^(o)|`; 0 for an empty subset.
pub fn subset_logdet(sigma: &Matrix, o: &[usize]) -> Result<f64> {
    if o.is_empty() {
        return Ok(0.0);
    }
    Ok(SubsetWorkspace::new(sigma, o)?.logdet())
}

/// Conditional mean and variance of cell `j` given the cells in `given`.
pub fn conditional_moments(
    j: usize,
    given: &[usize],
    mu: &[f64],
    sigma: &Matrix,
    x: &[f64],
) -> Result<(f64, f64)> {
    check_dims(x, mu, sigma)?;
    if given.contains(&j) {
        return Err(Error::Domain(alloc::format!("cell {j} conditions on itself")));
    }
    if given.is_empty() {
        return Ok((mu[j], sigma[(j, j)]));
    }
    let ws = SubsetWorkspace::new(sigma, given)?;
    let cross: Vec<f64> = given.iter().map(|&k| sigma[(j, k)]).collect();
    let a = ws.chol.solve_lower(&cross);
    let b = ws.chol.solve_lower(&ws.residual(x, mu));
    let mean = mu[j] + a.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>();
    let var = sigma[(j, j)] - a.iter().map(|u| u * u).sum::<f64>();
    if !(var > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((mean, var))
}

/// Leave-one-out conditionals for every `j ∈ o`: the mean and variance of
/// cell `j` given `o \ {j}`, read off the precision matrix of `Σ^(o)`.
pub fn loo_conditionals(
    x: &[f64],
    o: &[usize],
    mu: &[f64],
    sigma: &Matrix,
) -> Result<Vec<(f64, f64)>> {
    check_dims(x, mu, sigma)?;
    if o.is_empty() {
        return Ok(Vec::new());
    }
    let ws = SubsetWorkspace::new(sigma, o)?;
    Ok(loo_from_precision(x, o, mu, &ws.precision()))
}

pub(crate) fn loo_from_precision(x: &[f64], o: &[usize], mu: &[f64], prec: &Matrix) -> Vec<(f64, f64)> {
    let r: Vec<f64> = o.iter().map(|&j| x[j] - mu[j]).collect();
    let pr = prec.matvec(&r);
    o.iter()
        .enumerate()
        .map(|(a, &j)| {
            let paa = prec[(a, a)];
            (x[j] - pr[a] / paa, 1.0 / paa)
        })
        .collect()
}

/// `log φ(x^(o) | μ^(o), Σ^(o))` over the clean cells of `w`; 0 when no cell
/// is clean.
pub fn subset_normal_logpdf(x: &[f64], w: &FlagVector, mu: &[f64], sigma: &Matrix) -> Result<f64> {
    check_dims(x, mu, sigma)?;
    let o = w.clean();
    if o.is_empty() {
        return Ok(0.0);
    }
    let ws = SubsetWorkspace::new(sigma, &o)?;
    Ok(-0.5 * (ws.logdet() + o.len() as f64 * crate::special::ln_2pi() + ws.md2(x, mu)))
}
