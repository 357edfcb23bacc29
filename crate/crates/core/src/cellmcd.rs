//! Cellwise minimum covariance determinant estimation.
//!
//! For one class the estimator minimizes
//!
//! ```text
//! Σ_i [ log|Σ^(o_i)| + |o_i| log 2π + MD²(x_i, w_i, μ, Σ) ] + Σ_j q_j · #outlier flags in column j
//! ```
//!
//! subject to `λ_min(Σ) ≥ a` and at most `n − h` outlier flags per column.
//! The fit runs on columns standardized by median and MAD and alternates two
//! steps that each cannot increase the objective:
//!
//! * a flag step that revisits one column at a time and picks its flags
//!   exactly, given the other columns, `μ` and `Σ`;
//! * one EM update of `(μ, Σ)` treating flagged and missing cells as missing,
//!   followed by raising eigenvalues below `a` to `a`.
//!
//! Penalties `q_j` are set once from the initial scatter so the objective is
//! fixed during the alternation; a step that would increase it is rejected
//! and ends the fit.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::SubsetWorkspace;
use crate::linalg::{clamp_eigenvalues, Cholesky, Matrix};
use crate::model::{cell_penalties, DataSet, FlagMatrix, FlagVector, Standardizer};
use crate::special::{chi2_quantile, ln_2pi};

/// Smallest class the estimator accepts.
pub const MIN_ROWS: usize = 5;
const INIT_EM_STEPS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMcdConfig {
    /// `h = ⌈h_fraction · n⌉` cells of every column stay unflagged.
    pub h_fraction: f64,
    /// Eigenvalue floor `a` on the standardized scale.
    pub eig_floor: f64,
    pub cutoff_prob: f64,
    pub max_iter: usize,
    /// Relative objective change that ends the alternation.
    pub tol: f64,
}

impl Default for CellMcdConfig {
    fn default() -> Self {
        CellMcdConfig { h_fraction: 0.75, eig_floor: 1e-4, cutoff_prob: 0.99, max_iter: 100, tol: 1e-6 }
    }
}

impl CellMcdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.h_fraction > 0.5 && self.h_fraction <= 1.0) {
            return Err(Error::Domain(alloc::format!("h fraction {} outside (0.5, 1]", self.h_fraction)));
        }
        if !(self.cutoff_prob > 0.0 && self.cutoff_prob < 1.0) {
            return Err(Error::Domain(alloc::format!("cutoff {} outside (0, 1)", self.cutoff_prob)));
        }
        if !(self.eig_floor > 0.0) {
            return Err(Error::Domain("eigenvalue floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CellMcdFit {
    pub standardizer: Standardizer,
    /// Center and scatter on the standardized scale.
    pub mu_std: Vec<f64>,
    pub sigma_std: Matrix,
    /// Center and scatter on the data scale.
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    /// One row per input row; rows that are entirely missing stay all-NA.
    pub flags: FlagMatrix,
    /// Fixed penalties `q_j` used by the fit.
    pub penalty: Vec<f64>,
    /// Objective after initialization and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub h: usize,
    /// Data with flagged and missing cells replaced by their conditional
    /// expectations given the clean cells of the row (data scale).
    pub predicted_cells: Matrix,
    /// `(x − x̂)/√C` for flagged cells, 0 elsewhere.
    pub standardized_residuals: Matrix,
}

/// Penalized cellMCD objective for given flags and parameters. Rows that
/// are entirely missing are skipped; any other row needs a clean cell.
pub fn objective(data: &DataSet, flags: &FlagMatrix, mu: &[f64], sigma: &Matrix, q: &[f64]) -> Result<f64> {
    let d = data.n_cols();
    if flags.n_rows() != data.n_rows() || flags.n_cols() != d || mu.len() != d || q.len() != d {
        return Err(Error::Dimension("objective inputs disagree in shape".into()));
    }
    let mut cache = PatternCache::new(sigma);
    let mut total = 0.0;
    for i in 0..data.n_rows() {
        if data.row_all_na(i) {
            continue;
        }
        let w = flags.row(i);
        if w.n_clean() == 0 {
            return Err(Error::EmptySubset);
        }
        let info = cache.get(w.w())?;
        total += row_loss(info, data.row(i), mu);
        total += (0..d).filter(|&j| w.is_outlier(j)).map(|j| q[j]).sum::<f64>();
    }
    Ok(total)
}

fn row_loss(info: &Pattern, x: &[f64], mu: &[f64]) -> f64 {
    let o = &info.o;
    if o.is_empty() {
        return 0.0;
    }
    let r: Vec<f64> = o.iter().map(|&j| x[j] - mu[j]).collect();
    info.logdet + o.len() as f64 * ln_2pi() + info.chol.as_ref().expect("factor").quad_form(&r)
}

/// Factorization of `Σ^(o)` for one clean-cell pattern.
struct Pattern {
    o: Vec<usize>,
    chol: Option<Cholesky>,
    logdet: f64,
}

struct PatternCache<'a> {
    sigma: &'a Matrix,
    map: BTreeMap<Vec<bool>, Pattern>,
}

impl<'a> PatternCache<'a> {
    fn new(sigma: &'a Matrix) -> Self {
        PatternCache { sigma, map: BTreeMap::new() }
    }

    fn get(&mut self, w: &[bool]) -> Result<&Pattern> {
        if !self.map.contains_key(w) {
            let o: Vec<usize> = (0..w.len()).filter(|&j| w[j]).collect();
            let pattern = if o.is_empty() {
                Pattern { o, chol: None, logdet: 0.0 }
            } else {
                let ws = SubsetWorkspace::new(self.sigma, &o)?;
                Pattern { o, logdet: ws.logdet(), chol: Some(ws.cholesky().clone()) }
            };
            self.map.insert(w.to_vec(), pattern);
        }
        Ok(&self.map[w])
    }
}

/// Regression of the missing block on the observed block of one pattern.
struct Imputation {
    o: Vec<usize>,
    m: Vec<usize>,
    /// `Σ_mo Σ_oo⁻¹`, `|m| × |o|`.
    coef: Matrix,
    /// `Σ_mm − Σ_mo Σ_oo⁻¹ Σ_om`.
    cond_cov: Matrix,
}

fn imputation(sigma: &Matrix, w: &[bool]) -> Result<Imputation> {
    let d = w.len();
    let o: Vec<usize> = (0..d).filter(|&j| w[j]).collect();
    let m: Vec<usize> = (0..d).filter(|&j| !w[j]).collect();
    if o.is_empty() {
        return Ok(Imputation {
            coef: Matrix::zeros(m.len(), 0),
            cond_cov: sigma.principal(&m),
            o,
            m,
        });
    }
    let chol = Cholesky::new(&sigma.principal(&o))?;
    let mut coef = Matrix::zeros(m.len(), o.len());
    for (a, &j) in m.iter().enumerate() {
        let cross: Vec<f64> = o.iter().map(|&k| sigma[(j, k)]).collect();
        let beta = chol.solve(&cross);
        coef.row_mut(a).copy_from_slice(&beta);
    }
    let cond_cov = Matrix::from_fn(m.len(), m.len(), |a, b| {
        let s: f64 = o.iter().enumerate().map(|(c, &k)| coef[(a, c)] * sigma[(k, m[b])]).sum();
        sigma[(m[a], m[b])] - s
    });
    Ok(Imputation { o, m, coef, cond_cov })
}

/// Working state of one fit on standardized data.
struct Problem<'a> {
    /// Standardized rows that are not entirely missing.
    z: Vec<&'a [f64]>,
    na: Vec<&'a [bool]>,
    d: usize,
    cap: usize,
    floor: f64,
    pinned_center: bool,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.z.len()
    }

    fn objective(&self, w: &[FlagVector], mu: &[f64], sigma: &Matrix, q: &[f64]) -> Result<f64> {
        let mut cache = PatternCache::new(sigma);
        let mut total = 0.0;
        for (i, wi) in w.iter().enumerate() {
            total += row_loss(cache.get(wi.w())?, self.z[i], mu);
            total += (0..self.d).filter(|&j| wi.is_outlier(j)).map(|j| q[j]).sum::<f64>();
        }
        Ok(total)
    }

    /// One EM update of `(μ, Σ)` with flagged and missing cells unobserved.
    fn em_step(&self, w: &[FlagVector], mu: &[f64], sigma: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let d = self.d;
        let n = self.n() as f64;
        let mut cache: BTreeMap<Vec<bool>, Imputation> = BTreeMap::new();
        let mut filled: Vec<Vec<f64>> = Vec::with_capacity(self.n());
        let mut extra = Matrix::zeros(d, d);
        for (i, wi) in w.iter().enumerate() {
            if !cache.contains_key(wi.w()) {
                cache.insert(wi.w().to_vec(), imputation(sigma, wi.w())?);
            }
            let imp = &cache[wi.w()];
            let zi = self.z[i];
            let mut row = zi.to_vec();
            if !imp.m.is_empty() {
                let r: Vec<f64> = imp.o.iter().map(|&k| zi[k] - mu[k]).collect();
                let pred = imp.coef.matvec(&r);
                for (a, &j) in imp.m.iter().enumerate() {
                    row[j] = mu[j] + pred[a];
                    for (b, &k) in imp.m.iter().enumerate() {
                        extra[(j, k)] += imp.cond_cov[(a, b)];
                    }
                }
            }
            filled.push(row);
        }
        let mu_new: Vec<f64> = if self.pinned_center {
            vec![0.0; d]
        } else {
            (0..d).map(|j| filled.iter().map(|r| r[j]).sum::<f64>() / n).collect()
        };
        let mut scatter = extra;
        for row in &filled {
            for a in 0..d {
                let ra = row[a] - mu_new[a];
                for b in a..d {
                    scatter[(a, b)] += ra * (row[b] - mu_new[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = scatter[(a, b)] / n;
                scatter[(a, b)] = v;
                scatter[(b, a)] = v;
            }
        }
        Ok((mu_new, clamp_eigenvalues(&scatter, self.floor)?))
    }

    /// Exact column-by-column update of the flags for fixed `(μ, Σ)`.
    fn flag_step(&self, w: &mut [FlagVector], mu: &[f64], sigma: &Matrix, q: &[f64]) -> Result<()> {
        // (pattern of conditioning cells, target column) -> (indices, coefficients, variance)
        let mut cache: BTreeMap<(Vec<bool>, usize), (Vec<usize>, Vec<f64>, f64)> = BTreeMap::new();
        for j in 0..self.d {
            let mut gains: Vec<(usize, f64)> = Vec::new();
            for (i, wi) in w.iter_mut().enumerate() {
                if wi.is_na(j) {
                    continue;
                }
                let mut key = wi.w().to_vec();
                key[j] = false;
                if key.iter().all(|&c| !c) {
                    // the only usable cell of the row stays clean
                    wi.set_clean(j);
                    continue;
                }
                let entry = match cache.get(&(key.clone(), j)) {
                    Some(e) => e,
                    None => {
                        let given: Vec<usize> = (0..self.d).filter(|&k| key[k]).collect();
                        let chol = Cholesky::new(&sigma.principal(&given))?;
                        let cross: Vec<f64> = given.iter().map(|&k| sigma[(j, k)]).collect();
                        let beta = chol.solve(&cross);
                        let var = sigma[(j, j)] - beta.iter().zip(&cross).map(|(b, c)| b * c).sum::<f64>();
                        if !(var > 0.0) {
                            return Err(Error::NotPositiveDefinite);
                        }
                        cache.entry((key, j)).or_insert((given, beta, var))
                    }
                };
                let (given, beta, var) = entry;
                let zi = self.z[i];
                let xhat = mu[j] + given.iter().zip(beta.iter()).map(|(&k, b)| b * (zi[k] - mu[k])).sum::<f64>();
                let r = zi[j] - xhat;
                let gain = libm::log(*var) + ln_2pi() + r * r / var - q[j];
                if gain > 0.0 {
                    gains.push((i, gain));
                }
                wi.set_clean(j);
            }
            // largest gains first; equal gains keep the lower row index
            gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(i, _) in gains.iter().take(self.cap) {
                w[i].set_flag(j);
            }
        }
        Ok(())
    }
}

/// Fits one class.
pub fn fit_class(data: &DataSet, cfg: &CellMcdConfig) -> Result<CellMcdFit> {
    let standardizer = Standardizer::median_mad(data, None)?;
    fit_standardized(data, standardizer, false, cfg)
}

/// Fits a shared scatter with the center pinned at zero, for residuals
/// `x − μ̂_g` stacked over all classes.
pub fn fit_pooled(residuals: &DataSet, cfg: &CellMcdConfig) -> Result<CellMcdFit> {
    let zeros = vec![0.0; residuals.n_cols()];
    let standardizer = Standardizer::median_mad(residuals, Some(&zeros))?;
    fit_standardized(residuals, standardizer, true, cfg)
}

fn fit_standardized(
    data: &DataSet,
    standardizer: Standardizer,
    pinned_center: bool,
    cfg: &CellMcdConfig,
) -> Result<CellMcdFit> {
    cfg.validate()?;
    let d = data.n_cols();
    let zdata = standardizer.transform(data);
    let keep: Vec<usize> = (0..data.n_rows()).filter(|&i| !data.row_all_na(i)).collect();
    if keep.len() < MIN_ROWS {
        return Err(Error::ClassTooSmall { class: 0, rows: keep.len() });
    }
    let n = keep.len();
    let h = libm::ceil(cfg.h_fraction * n as f64) as usize;
    let problem = Problem {
        z: keep.iter().map(|&i| zdata.row(i)).collect(),
        na: keep.iter().map(|&i| zdata.na_row(i)).collect(),
        d,
        cap: n - h.min(n),
        floor: cfg.eig_floor,
        pinned_center,
    };

    let mut w = initial_flags(&problem, cfg.cutoff_prob)?;
    let (mut mu, mut sigma) = initial_moments(&problem, &w)?;
    for _ in 0..INIT_EM_STEPS {
        let (m, s) = problem.em_step(&w, &mu, &sigma)?;
        let change = s.max_abs_diff(&sigma).max(max_abs(&m, &mu));
        mu = m;
        sigma = s;
        if change < 1e-8 {
            break;
        }
    }
    let precision_diag = Cholesky::new(&sigma)?.inverse().diag();
    let penalty = cell_penalties(&precision_diag, cfg.cutoff_prob)?;

    let mut current = problem.objective(&w, &mu, &sigma, &penalty)?;
    let mut trace = vec![current];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let mut w_next = w.clone();
        problem.flag_step(&mut w_next, &mu, &sigma, &penalty)?;
        let (mu_next, sigma_next) = problem.em_step(&w_next, &mu, &sigma)?;
        let next = problem.objective(&w_next, &mu_next, &sigma_next, &penalty)?;
        if next > current {
            break;
        }
        iterations += 1;
        w = w_next;
        mu = mu_next;
        sigma = sigma_next;
        trace.push(next);
        let rel = (current - next) / libm::fabs(current).max(1.0);
        current = next;
        if rel < cfg.tol {
            break;
        }
    }

    // map flags back onto all input rows
    let mut rows: Vec<FlagVector> = (0..data.n_rows())
        .map(|i| FlagVector::clean_except_na(data.na_row(i)))
        .collect();
    for (k, &i) in keep.iter().enumerate() {
        rows[i] = w[k].clone();
    }
    let flags = FlagMatrix::new(rows, d)?;
    let (predicted_cells, standardized_residuals) = residuals(&zdata, &flags, &mu, &sigma, &standardizer)?;

    let mu_raw: Vec<f64> = (0..d).map(|j| standardizer.invert(j, mu[j])).collect();
    let sigma_raw = sigma.scale_sym(&standardizer.scale);
    Ok(CellMcdFit {
        standardizer,
        mu_std: mu,
        sigma_std: sigma,
        mu: mu_raw,
        sigma: sigma_raw,
        flags,
        penalty,
        objective_trace: trace,
        iterations,
        h,
        predicted_cells,
        standardized_residuals,
    })
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| libm::fabs(x - y)).fold(0.0, f64::max)
}

/// Univariate flags `|z| > √χ²_{1,cutoff}`, at most `cap` per column (the
/// largest `|z|` win) and never the last usable cell of a row.
fn initial_flags(problem: &Problem<'_>, cutoff: f64) -> Result<Vec<FlagVector>> {
    let bound = libm::sqrt(chi2_quantile(cutoff, 1)?);
    let mut w: Vec<FlagVector> = problem.na.iter().map(|na| FlagVector::clean_except_na(na)).collect();
    for j in 0..problem.d {
        let mut cand: Vec<(usize, f64)> = (0..problem.n())
            .filter(|&i| !problem.na[i][j])
            .map(|i| (i, libm::fabs(problem.z[i][j])))
            .filter(|&(_, a)| a > bound)
            .collect();
        cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(i, _) in cand.iter().take(problem.cap) {
            w[i].set_flag(j);
        }
    }
    for (i, wi) in w.iter_mut().enumerate() {
        if wi.n_clean() == 0 {
            let best = (0..problem.d)
                .filter(|&j| !wi.is_na(j))
                .min_by(|&a, &b| libm::fabs(problem.z[i][a]).total_cmp(&libm::fabs(problem.z[i][b])))
                .expect("row has a non-missing cell");
            wi.set_clean(best);
        }
    }
    Ok(w)
}

/// Means and variances of the clean cells; starting point for EM.
fn initial_moments(problem: &Problem<'_>, w: &[FlagVector]) -> Result<(Vec<f64>, Matrix)> {
    let d = problem.d;
    let mut mu = vec![0.0; d];
    let mut var = vec![1.0; d];
    for j in 0..d {
        let vals: Vec<f64> = (0..problem.n()).filter(|&i| w[i].is_clean(j)).map(|i| problem.z[i][j]).collect();
        if vals.len() >= 2 {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            if !problem.pinned_center {
                mu[j] = m;
            }
            var[j] = v.max(problem.floor);
        }
    }
    Ok((mu, Matrix::from_diag(&var)))
}

fn residuals(
    zdata: &DataSet,
    flags: &FlagMatrix,
    mu: &[f64],
    sigma: &Matrix,
    standardizer: &Standardizer,
) -> Result<(Matrix, Matrix)> {
    let (n, d) = (zdata.n_rows(), zdata.n_cols());
    let mut predicted = Matrix::zeros(n, d);
    let mut stdres = Matrix::zeros(n, d);
    let mut cache: BTreeMap<Vec<bool>, Imputation> = BTreeMap::new();
    for i in 0..n {
        let w = flags.row(i);
        if !cache.contains_key(w.w()) {
            cache.insert(w.w().to_vec(), imputation(sigma, w.w())?);
        }
        let imp = &cache[w.w()];
        let z = zdata.row(i);
        let r: Vec<f64> = imp.o.iter().map(|&k| z[k] - mu[k]).collect();
        let pred = imp.coef.matvec(&r);
        for j in 0..d {
            predicted[(i, j)] = standardizer.invert(j, z[j]);
        }
        for (a, &j) in imp.m.iter().enumerate() {
            let zhat = mu[j] + pred[a];
            predicted[(i, j)] = standardizer.invert(j, zhat);
            if w.is_outlier(j) {
                stdres[(i, j)] = (z[j] - zhat) / libm::sqrt(imp.cond_cov[(a, a)]);
            }
        }
    }
    Ok((predicted, stdres))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    #[test]
    fn objective_bookkeeping() {
        let d = 3;
        let data = DataSet::from_rows(&[vec![0.0; 3]]).unwrap();
        let flags = FlagMatrix::new(vec![FlagVector::all_clean(d)], d).unwrap();
        let q = [5.0, 1.0, 1.0];
        let v = objective(&data, &flags, &[0.0; 3], &Matrix::identity(d), &q).unwrap();
        assert!((v - 3.0 * ln_2pi()).abs() < 1e-12);
        let one = FlagVector::new(vec![false, true, true], vec![false; 3]).unwrap();
        let flags = FlagMatrix::new(vec![one], d).unwrap();
        let v = objective(&data, &flags, &[0.0; 3], &Matrix::identity(d), &q).unwrap();
        assert!((v - (2.0 * ln_2pi() + 5.0)).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_row_without_clean_cells() {
        let data = DataSet::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let none = FlagVector::new(vec![false, false], vec![false, false]).unwrap();
        let flags = FlagMatrix::new(vec![none], 2).unwrap();
        assert!(objective(&data, &flags, &[0.0; 2], &Matrix::identity(2), &[1.0; 2]).is_err());
    }

    #[test]
    fn tiny_class_is_rejected() {
        let data = DataSet::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 3.0]]).unwrap();
        assert!(matches!(
            fit_class(&data, &CellMcdConfig::default()),
            Err(Error::ClassTooSmall { rows: 3, .. })
        ));
    }

    #[test]
    fn constant_column_is_reported() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 4.0]).collect();
        let data = DataSet::from_rows(&rows).unwrap();
        assert_eq!(
            fit_class(&data, &CellMcdConfig::default()).unwrap_err(),
            Error::ConstantColumn(String::from("V2"))
        );
    }
}
