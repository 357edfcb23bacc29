//! Training and prediction for cellQDA and cellLDA, plus the classical
//! QDA/LDA baselines.
//!
//! The discriminant of class `g` for a case `x` with flags `w` is
//!
//! ```text
//! δ_g = log π_g + log φ(x^(o) | μ_g^(o), Σ_g^(o))
//!     + Σ_j [ w_j log(1 − p_gj) + (1 − w_j) log p_gj ]
//!     + Σ_{flagged j} [ −|x_j − μ_gj| / α_gj − log 2α_gj ]
//! ```
//!
//! with missing coordinates dropped from both sums. Each class is stored on
//! its own standardized scale; the log-Jacobian of that map is added so the
//! values are comparable across classes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cellmcd::{self, CellMcdFit};
use crate::contamination::ContaminationEstimate;
use crate::error::{Error, Result};
use crate::flagger::{flag_case, reflag_training};
use crate::kernels::subset_normal_logpdf;
use crate::linalg::{Cholesky, Matrix};
use crate::model::{
    priors, split_by_class, ClassModel, DaConfig, DataSet, DiscriminantModel, FitReport, FlagVector, Mode,
    Standardizer,
};
use crate::special::chi2_quantile;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// Final label, `0` for a casewise outlier.
    pub label: usize,
    /// Class with the largest discriminant.
    pub raw_label: usize,
    pub delta: Vec<f64>,
    /// Flags against each class model, indexed by `g − 1`.
    pub flags: Vec<FlagVector>,
    /// Partial MD² of the case under the winning class and its flags.
    pub md2_winner: f64,
    /// Probability of the alternative class, when a given label is known.
    pub pac: Option<f64>,
}

pub fn train_cellqda(data: &DataSet, cfg: &DaConfig) -> Result<DiscriminantModel> {
    train_cellqda_with_report(data, cfg).map(|(m, _)| m)
}

pub fn train_celllda(data: &DataSet, cfg: &DaConfig) -> Result<DiscriminantModel> {
    train_celllda_with_report(data, cfg).map(|(m, _)| m)
}

fn fit_numbered(class_data: &DataSet, g: usize, cfg: &DaConfig) -> Result<CellMcdFit> {
    cellmcd::fit_class(class_data, &cfg.mcd()).map_err(|e| match e {
        Error::ClassTooSmall { rows, .. } => Error::ClassTooSmall { class: g, rows },
        other => other,
    })
}

/// Re-flags one class with a provisional model, then estimates its
/// contamination parameters and builds the final model.
fn finish_class(
    class_data: &DataSet,
    standardizer: Standardizer,
    mu: Vec<f64>,
    sigma: Arc<Matrix>,
    prior: f64,
    cfg: &DaConfig,
) -> Result<(ClassModel, Vec<usize>)> {
    let d = mu.len();
    let provisional = ClassModel::new(
        standardizer.clone(),
        mu.clone(),
        sigma.clone(),
        prior,
        vec![0.01; d],
        vec![1.0; d],
        cfg.cell_cutoff,
    )?;
    let (flags, _) = reflag_training(&provisional, class_data)?;
    let mut est = ContaminationEstimate::new();
    let z = standardizer.transform(class_data);
    est.push_class(&z, &flags, &mu, provisional.precision_diag())?;
    let model = ClassModel::new(
        standardizer,
        mu,
        sigma,
        prior,
        est.p.pop().expect("one class"),
        est.alpha.pop().expect("one class"),
        cfg.cell_cutoff,
    )?;
    Ok((model, flags.outlier_counts()))
}

fn class_names(data: &DataSet) -> Vec<alloc::string::String> {
    data.labels().map(|l| l.names().to_vec()).unwrap_or_default()
}

/// cellQDA training with per-class estimation diagnostics.
pub fn train_cellqda_with_report(data: &DataSet, cfg: &DaConfig) -> Result<(DiscriminantModel, Vec<FitReport>)> {
    cfg.validate()?;
    let parts = split_by_class(data)?;
    let pri = priors(data)?;
    let mut classes = Vec::with_capacity(parts.len());
    let mut reports = Vec::with_capacity(parts.len());
    for (k, part) in parts.iter().enumerate() {
        let g = k + 1;
        let fit = fit_numbered(part, g, cfg)?;
        let (model, counts) =
            finish_class(part, fit.standardizer.clone(), fit.mu_std.clone(), Arc::new(fit.sigma_std.clone()), pri[k], cfg)?;
        reports.push(FitReport {
            class: g,
            n_rows: part.n_rows(),
            iterations: fit.iterations,
            objective_trace: fit.objective_trace,
            flag_counts: counts,
        });
        classes.push(model);
    }
    let model = DiscriminantModel::new(classes, Mode::Qda, *cfg, class_names(data), data.col_names().to_vec())?;
    Ok((model, reports))
}

/// cellLDA training. Centers come from per-class cellMCD fits; the shared
/// scatter is a zero-centered cellMCD fit of the stacked residuals
/// `x − μ̂_g`. Every class uses the pooled residual scale, so all classes
/// hold the same standardized scatter. The returned reports hold the
/// per-class fits followed by the pooled fit (reported as class 0).
pub fn train_celllda_with_report(data: &DataSet, cfg: &DaConfig) -> Result<(DiscriminantModel, Vec<FitReport>)> {
    cfg.validate()?;
    let parts = split_by_class(data)?;
    let pri = priors(data)?;
    let d = data.n_cols();
    let mut centers = Vec::with_capacity(parts.len());
    let mut reports = Vec::with_capacity(parts.len() + 1);
    for (k, part) in parts.iter().enumerate() {
        let fit = fit_numbered(part, k + 1, cfg)?;
        reports.push(FitReport {
            class: k + 1,
            n_rows: part.n_rows(),
            iterations: fit.iterations,
            objective_trace: fit.objective_trace.clone(),
            flag_counts: fit.flags.outlier_counts(),
        });
        centers.push(fit.mu);
    }

    let mut stacked = Vec::with_capacity(data.n_rows() * d);
    let mut na = Vec::with_capacity(data.n_rows() * d);
    for (part, mu) in parts.iter().zip(&centers) {
        for i in 0..part.n_rows() {
            stacked.extend(part.row(i).iter().zip(mu).map(|(x, m)| x - m));
            na.extend_from_slice(part.na_row(i));
        }
    }
    let residuals = DataSet::new(Matrix::from_row_major(na.len() / d.max(1), d, stacked)?, na, data.col_names().to_vec())?;
    let pooled = cellmcd::fit_pooled(&residuals, &cfg.mcd())?;
    let scale = pooled.standardizer.scale.clone();
    let sigma = Arc::new(pooled.sigma_std.clone());
    reports.push(FitReport {
        class: 0,
        n_rows: residuals.n_rows(),
        iterations: pooled.iterations,
        objective_trace: pooled.objective_trace.clone(),
        flag_counts: pooled.flags.outlier_counts(),
    });

    let mut classes = Vec::with_capacity(parts.len());
    for (k, (part, mu)) in parts.iter().zip(centers).enumerate() {
        let standardizer = Standardizer::new(mu, scale.clone())?;
        let (model, counts) = finish_class(part, standardizer, vec![0.0; d], sigma.clone(), pri[k], cfg)?;
        reports[k].flag_counts = counts;
        classes.push(model);
    }
    let model = DiscriminantModel::new(classes, Mode::Lda, *cfg, class_names(data), data.col_names().to_vec())?;
    Ok((model, reports))
}

/// `δ_g(x, w)` for a raw-scale case; `w` marks missing cells through its NA
/// mask.
pub fn robust_discriminant(x: &[f64], w: &FlagVector, g: usize, model: &DiscriminantModel) -> Result<f64> {
    if g == 0 || g > model.n_classes() {
        return Err(Error::Domain(alloc::format!("class {g} outside 1..={}", model.n_classes())));
    }
    class_discriminant(x, w, model.class(g))
}

/// `δ` for a single class model; see [`robust_discriminant`].
pub fn class_discriminant(x: &[f64], w: &FlagVector, class: &ClassModel) -> Result<f64> {
    let d = class.dim();
    if x.len() != d || w.len() != d {
        return Err(Error::Dimension("case length differs from model dimension".into()));
    }
    let std = class.standardizer();
    let z = std.apply_row(x);
    let mu = class.mu();
    let mut delta = libm::log(class.prior()) + subset_normal_logpdf(&z, w, mu, class.sigma())?;
    for j in 0..d {
        if w.is_na(j) {
            continue;
        }
        let p = class.p()[j];
        if w.is_clean(j) {
            delta += libm::log1p(-p);
        } else {
            let a = class.alpha()[j];
            delta += libm::log(p) - libm::fabs(z[j] - mu[j]) / a - libm::log(2.0 * a);
        }
        delta -= libm::log(std.scale[j]);
    }
    Ok(delta)
}

/// Probability of the best alternative class, `p̃ / (p̂_given + p̃)` with
/// `p̂_g ∝ exp δ_g`, evaluated without overflow.
pub fn pac_from_deltas(delta: &[f64], given: usize) -> Result<f64> {
    if given == 0 || given > delta.len() || delta.len() < 2 {
        return Err(Error::Domain(alloc::format!("given label {given} outside 1..={}", delta.len())));
    }
    let alt = delta
        .iter()
        .enumerate()
        .filter(|&(k, _)| k + 1 != given)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let t = delta[given - 1] - alt;
    Ok(if t >= 0.0 {
        let e = libm::exp(-t);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(t))
    })
}

/// PAC of a raw-scale case for the given label.
pub fn pac(x: &[f64], na: &[bool], given: usize, model: &DiscriminantModel) -> Result<f64> {
    let r = predict(x, na, model)?;
    pac_from_deltas(&r.delta, given)
}

/// Classifies one raw-scale case. Missing cells are marked in `na`.
pub fn predict(x: &[f64], na: &[bool], model: &DiscriminantModel) -> Result<PredictionResult> {
    predict_given(x, na, None, model)
}

/// [`predict`] that also reports the PAC for a known label.
pub fn predict_given(x: &[f64], na: &[bool], given: Option<usize>, model: &DiscriminantModel) -> Result<PredictionResult> {
    let d = model.dim();
    if x.len() != d || na.len() != d {
        return Err(Error::Dimension(alloc::format!("case has {} values, model expects {d}", x.len())));
    }
    let mut delta = Vec::with_capacity(model.n_classes());
    let mut flags = Vec::with_capacity(model.n_classes());
    let mut md2 = Vec::with_capacity(model.n_classes());
    for class in model.classes() {
        let (w, trace) = flag_case(x, na, class)?;
        delta.push(class_discriminant(x, &w, class)?);
        md2.push(trace.final_md2);
        flags.push(w);
    }
    let mut best = 0;
    for k in 1..delta.len() {
        if delta[k] > delta[best] {
            best = k;
        }
    }
    let raw_label = best + 1;
    let w = &flags[best];
    let cfg = model.config();
    let mut label = raw_label;
    if cfg.class0 {
        let n_m = if cfg.casewise_counts_na { w.n_flagged() } else { w.n_outliers() };
        let many_flags = 2 * n_m >= d;
        let n_clean = w.n_clean();
        let far = n_clean > 0 && md2[best] > chi2_quantile(cfg.case_cutoff, n_clean)?;
        if many_flags || far {
            label = 0;
        }
    }
    let pac = given.map(|g| pac_from_deltas(&delta, g)).transpose()?;
    Ok(PredictionResult { label, raw_label, delta, md2_winner: md2[best], flags, pac })
}

/// Labels for every row of `data`.
pub fn predict_all(data: &DataSet, model: &DiscriminantModel) -> Result<Vec<PredictionResult>> {
    (0..data.n_rows())
        .map(|i| predict_given(data.row(i), data.na_row(i), data.label(i), model))
        .collect()
}

/// Classical Gaussian discriminant analysis with empirical moments.
#[derive(Debug, Clone)]
pub struct ClassicalModel {
    mode: Mode,
    means: Vec<Vec<f64>>,
    covariances: Vec<Matrix>,
    priors: Vec<f64>,
    factors: Vec<Cholesky>,
}

fn class_moments(part: &DataSet) -> Result<(Vec<f64>, Matrix)> {
    let (n, d) = (part.n_rows(), part.n_cols());
    if n < 2 {
        return Err(Error::ClassTooSmall { class: 0, rows: n });
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| part.row(i)[j]).sum::<f64>() / n as f64).collect();
    let mut cov = Matrix::zeros(d, d);
    for i in 0..n {
        let r = part.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    Ok((mean, cov))
}

impl ClassicalModel {
    fn train(data: &DataSet, mode: Mode) -> Result<Self> {
        if data.has_missing() {
            return Err(Error::MissingValues);
        }
        let parts = split_by_class(data)?;
        let pri = priors(data)?;
        let mut means = Vec::with_capacity(parts.len());
        let mut scatters = Vec::with_capacity(parts.len());
        for (k, part) in parts.iter().enumerate() {
            let (m, s) = class_moments(part).map_err(|e| match e {
                Error::ClassTooSmall { rows, .. } => Error::ClassTooSmall { class: k + 1, rows },
                other => other,
            })?;
            means.push(m);
            scatters.push(s);
        }
        let d = data.n_cols();
        let covariances: Vec<Matrix> = match mode {
            Mode::Qda => scatters
                .iter()
                .zip(&parts)
                .map(|(s, p)| Matrix::from_fn(d, d, |a, b| s[(a, b)] / (p.n_rows() - 1) as f64))
                .collect(),
            Mode::Lda => {
                let denom = (data.n_rows() - parts.len()) as f64;
                let pooled = Matrix::from_fn(d, d, |a, b| scatters.iter().map(|s| s[(a, b)]).sum::<f64>() / denom);
                vec![pooled; parts.len()]
            }
        };
        let factors = covariances.iter().map(Cholesky::new).collect::<Result<Vec<_>>>()?;
        Ok(ClassicalModel { mode, means, covariances, priors: pri, factors })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Matrix] {
        &self.covariances
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Discriminant scores of every class. QDA uses
    /// `−½ log|Σ_g| − ½ MD²_g + log π_g`; LDA the linear form
    /// `μ_gᵀ Σ⁻¹ x − ½ μ_gᵀ Σ⁻¹ μ_g + log π_g`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.means[0].len();
        if x.len() != d {
            return Err(Error::Dimension(alloc::format!("case has {} values, model expects {d}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValues);
        }
        Ok(self
            .means
            .iter()
            .zip(&self.factors)
            .zip(&self.priors)
            .map(|((mu, chol), &pi)| match self.mode {
                Mode::Qda => {
                    let r: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
                    -0.5 * chol.logdet() - 0.5 * chol.quad_form(&r) + libm::log(pi)
                }
                Mode::Lda => {
                    let a = chol.solve(mu);
                    let lin: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
                    let quad: f64 = a.iter().zip(mu).map(|(u, v)| u * v).sum();
                    lin - 0.5 * quad + libm::log(pi)
                }
            })
            .collect())
    }

    /// Class with the largest score; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let s = self.scores(x)?;
        let mut best = 0;
        for k in 1..s.len() {
            if s[k] > s[best] {
                best = k;
            }
        }
        Ok(best + 1)
    }
}

pub fn classical_qda_train(data: &DataSet) -> Result<ClassicalModel> {
    ClassicalModel::train(data, Mode::Qda)
}

pub fn classical_lda_train(data: &DataSet) -> Result<ClassicalModel> {
    ClassicalModel::train(data, Mode::Lda)
}

pub fn classical_predict(x: &[f64], model: &ClassicalModel) -> Result<usize> {
    model.predict(x)
}
