//! Shared data model: data sets with missing cells, flag vectors, fitted
//! class models and the trained discriminant bundle.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::special;

/// Dense class labels `1..=G` with the dictionary of original names.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    ids: Vec<usize>,
    names: Vec<String>,
}

impl Labels {
    /// `ids` are 1-based indices into `names`.
    pub fn new(ids: Vec<usize>, names: Vec<String>) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&g| g == 0 || g > names.len()) {
            return Err(Error::Domain(alloc::format!(
                "label {bad} outside 1..={}",
                names.len()
            )));
        }
        Ok(Labels { ids, names })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_classes(&self) -> usize {
        self.names.len()
    }
}

/// An `n × d` numeric matrix with an explicit missingness mask.
///
/// Masked cells are stored as NaN and never read by any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    values: Matrix,
    na: Vec<bool>,
    labels: Option<Labels>,
    col_names: Vec<String>,
}

impl DataSet {
    /// Non-finite values are treated as missing in addition to `na`.
    pub fn new(values: Matrix, na: Vec<bool>, col_names: Vec<String>) -> Result<Self> {
        let (n, d) = (values.rows(), values.cols());
        if na.len() != n * d {
            return Err(Error::Dimension(alloc::format!(
                "mask has {} entries for a {n}x{d} data matrix",
                na.len()
            )));
        }
        if col_names.len() != d {
            return Err(Error::Dimension(alloc::format!(
                "{} column names for {d} columns",
                col_names.len()
            )));
        }
        let mut values = values;
        let mut na = na;
        for i in 0..n {
            for j in 0..d {
                let k = i * d + j;
                if na[k] || !values[(i, j)].is_finite() {
                    na[k] = true;
                    values[(i, j)] = f64::NAN;
                }
            }
        }
        Ok(DataSet { values, na, labels: None, col_names })
    }

    /// Complete data with default column names `V1..Vd`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Matrix::from_row_major(rows.len(), d, data)?;
        let names = (1..=d).map(|j| alloc::format!("V{j}")).collect();
        DataSet::new(values, vec![false; rows.len() * d], names)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.ids.len() != self.n_rows() {
            return Err(Error::Dimension(alloc::format!(
                "{} labels for {} rows",
                labels.ids.len(),
                self.n_rows()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l.ids[i])
    }

    /// Raw row values; masked entries are NaN.
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn na_row(&self, i: usize) -> &[bool] {
        let d = self.n_cols();
        &self.na[i * d..(i + 1) * d]
    }

    pub fn is_na(&self, i: usize, j: usize) -> bool {
        self.na[i * self.n_cols() + j]
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        if self.is_na(i, j) {
            None
        } else {
            Some(self.values[(i, j)])
        }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn na_mask(&self) -> &[bool] {
        &self.na
    }

    pub fn has_missing(&self) -> bool {
        self.na.iter().any(|&m| m)
    }

    pub fn row_all_na(&self, i: usize) -> bool {
        self.na_row(i).iter().all(|&m| m)
    }

    /// Rows `idx` in the given order; labels and dictionary are carried over.
    pub fn select_rows(&self, idx: &[usize]) -> DataSet {
        let d = self.n_cols();
        let mut data = Vec::with_capacity(idx.len() * d);
        let mut na = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
            na.extend_from_slice(self.na_row(i));
        }
        let values = Matrix::from_row_major(idx.len(), d, data).expect("row selection shape");
        let labels = self.labels.as_ref().map(|l| Labels {
            ids: idx.iter().map(|&i| l.ids[i]).collect(),
            names: l.names.clone(),
        });
        DataSet { values, na, labels, col_names: self.col_names.clone() }
    }

    /// Returns a copy with additional cells masked.
    pub fn with_extra_na(&self, mask: &[bool]) -> Result<DataSet> {
        if mask.len() != self.na.len() {
            return Err(Error::Dimension("mask size".into()));
        }
        let na: Vec<bool> = self.na.iter().zip(mask).map(|(a, b)| *a || *b).collect();
        let mut out = DataSet::new(self.values.clone(), na, self.col_names.clone())?;
        out.labels = self.labels.clone();
        Ok(out)
    }

    /// Applies `x ↦ scale[j]·x + shift[j]` to every column.
    pub fn affine_columns(&self, scale: &[f64], shift: &[f64]) -> DataSet {
        let d = self.n_cols();
        let values = Matrix::from_fn(self.n_rows(), d, |i, j| self.values[(i, j)] * scale[j] + shift[j]);
        DataSet { values, na: self.na.clone(), labels: self.labels.clone(), col_names: self.col_names.clone() }
    }
}

/// Splits a labeled data set into one data set per class, preserving row
/// order inside each class.
pub fn split_by_class(data: &DataSet) -> Result<Vec<DataSet>> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let g_count = labels.n_classes();
    if g_count < 2 {
        return Err(Error::TooFewClasses(g_count));
    }
    let mut idx: Vec<Vec<usize>> = vec![Vec::new(); g_count];
    for (i, &g) in labels.ids().iter().enumerate() {
        idx[g - 1].push(i);
    }
    if let Some(g) = idx.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(g + 1));
    }
    Ok(idx.iter().map(|rows| data.select_rows(rows)).collect())
}

/// Empirical class frequencies `n_g / n`.
pub fn priors(data: &DataSet) -> Result<Vec<f64>> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let g_count = labels.n_classes();
    if g_count < 2 {
        return Err(Error::TooFewClasses(g_count));
    }
    let mut counts = vec![0usize; g_count];
    for &g in labels.ids() {
        counts[g - 1] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(g + 1));
    }
    let n = labels.ids().len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / n).collect())
}

/// Per-case cell status. `w[j]` is true for clean cells; missing cells are
/// always `w[j] = false` with `na[j] = true`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlagVector {
    w: Vec<bool>,
    na: Vec<bool>,
}

impl FlagVector {
    pub fn new(w: Vec<bool>, na: Vec<bool>) -> Result<Self> {
        if w.len() != na.len() {
            return Err(Error::Dimension("flag and NA vectors differ in length".into()));
        }
        if w.iter().zip(&na).any(|(&w, &na)| w && na) {
            return Err(Error::Domain("a missing cell cannot be marked clean".into()));
        }
        Ok(FlagVector { w, na })
    }

    /// Everything clean except the missing cells.
    pub fn clean_except_na(na: &[bool]) -> Self {
        FlagVector { w: na.iter().map(|&m| !m).collect(), na: na.to_vec() }
    }

    pub fn all_clean(d: usize) -> Self {
        FlagVector { w: vec![true; d], na: vec![false; d] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    pub fn na(&self) -> &[bool] {
        &self.na
    }

    pub fn is_clean(&self, j: usize) -> bool {
        self.w[j]
    }

    pub fn is_na(&self, j: usize) -> bool {
        self.na[j]
    }

    /// Flagged as outlying (not missing).
    pub fn is_outlier(&self, j: usize) -> bool {
        !self.w[j] && !self.na[j]
    }

    /// `o(w)`: indices of clean cells in increasing order.
    pub fn clean(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.w[j]).collect()
    }

    /// `m(w)`: indices of flagged or missing cells.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.w[j]).collect()
    }

    pub fn n_clean(&self) -> usize {
        self.w.iter().filter(|&&w| w).count()
    }

    pub fn n_flagged(&self) -> usize {
        self.len() - self.n_clean()
    }

    pub fn n_na(&self) -> usize {
        self.na.iter().filter(|&&m| m).count()
    }

    pub fn n_outliers(&self) -> usize {
        self.n_flagged() - self.n_na()
    }

    pub(crate) fn set_flag(&mut self, j: usize) {
        self.w[j] = false;
    }

    pub(crate) fn set_clean(&mut self, j: usize) {
        debug_assert!(!self.na[j]);
        self.w[j] = true;
    }
}

/// One `FlagVector` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagMatrix {
    rows: Vec<FlagVector>,
    d: usize,
}

impl FlagMatrix {
    pub fn new(rows: Vec<FlagVector>, d: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("flag rows differ in length".into()));
        }
        Ok(FlagMatrix { rows, d })
    }

    pub fn rows(&self) -> &[FlagVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &FlagVector {
        &self.rows[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    /// Outlier flags per column, missing cells excluded.
    pub fn outlier_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.d];
        for r in &self.rows {
            for (j, cnt) in c.iter_mut().enumerate() {
                if r.is_outlier(j) {
                    *cnt += 1;
                }
            }
        }
        c
    }

    pub fn na_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.d];
        for r in &self.rows {
            for (j, cnt) in c.iter_mut().enumerate() {
                if r.is_na(j) {
                    *cnt += 1;
                }
            }
        }
        c
    }

    pub fn n_outliers(&self) -> usize {
        self.outlier_counts().iter().sum()
    }
}

/// Per-column location and scale. Values are mapped to `(x - location) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

/// MAD consistency factor for the normal distribution.
pub const MAD_CONSISTENCY: f64 = 1.4826;

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl Standardizer {
    pub fn new(location: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if location.len() != scale.len() {
            return Err(Error::Dimension("standardizer location/scale lengths differ".into()));
        }
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("standardizer scales must be positive".into()));
        }
        Ok(Standardizer { location, scale })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer { location: vec![0.0; d], scale: vec![1.0; d] }
    }

    /// Column medians and `1.4826 · MAD` over the non-missing cells. When
    /// `center` is given, the location is pinned to it and only the scale is
    /// estimated (still around the column median).
    pub fn median_mad(data: &DataSet, center: Option<&[f64]>) -> Result<Self> {
        let d = data.n_cols();
        let mut location = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let mut col: Vec<f64> = (0..data.n_rows()).filter_map(|i| data.value(i, j)).collect();
            if col.is_empty() {
                return Err(Error::ConstantColumn(data.col_names()[j].clone()));
            }
            let med = median(&mut col);
            let mut dev: Vec<f64> = col.iter().map(|v| libm::fabs(v - med)).collect();
            let mad = MAD_CONSISTENCY * median(&mut dev);
            if !(mad > 0.0) || !mad.is_finite() {
                return Err(Error::ConstantColumn(data.col_names()[j].clone()));
            }
            location.push(center.map_or(med, |c| c[j]));
            scale.push(mad);
        }
        Ok(Standardizer { location, scale })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    #[inline]
    pub fn apply(&self, j: usize, x: f64) -> f64 {
        (x - self.location[j]) / self.scale[j]
    }

    #[inline]
    pub fn invert(&self, j: usize, z: f64) -> f64 {
        z * self.scale[j] + self.location[j]
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.apply(j, v)).collect()
    }

    /// Standardized copy of `data`.
    pub fn transform(&self, data: &DataSet) -> DataSet {
        let d = data.n_cols();
        let values = Matrix::from_fn(data.n_rows(), d, |i, j| self.apply(j, data.values()[(i, j)]));
        DataSet {
            values,
            na: data.na.clone(),
            labels: data.labels.clone(),
            col_names: data.col_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Qda,
    Lda,
}

/// Thresholds and estimation settings for cellQDA/cellLDA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaConfig {
    /// Coverage of the per-cell tolerance interval used by the flagger.
    pub cell_cutoff: f64,
    /// Probability of the chi-squared quantile in the casewise rule.
    pub case_cutoff: f64,
    /// Eigenvalue floor `a` on the standardized scale.
    pub eig_floor: f64,
    pub h_fraction: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Assign casewise outliers to class 0 at prediction time.
    pub class0: bool,
    /// Count missing cells in the `|m(w)| >= d/2` clause.
    pub casewise_counts_na: bool,
}

impl Default for DaConfig {
    fn default() -> Self {
        DaConfig {
            cell_cutoff: 0.99,
            case_cutoff: 0.99,
            eig_floor: 1e-4,
            h_fraction: 0.75,
            max_iter: 100,
            tol: 1e-6,
            class0: true,
            casewise_counts_na: true,
        }
    }
}

impl DaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("cell cutoff", self.cell_cutoff), ("case cutoff", self.case_cutoff)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Domain(alloc::format!("{name} {p} outside (0, 1)")));
            }
        }
        if !(self.h_fraction > 0.5 && self.h_fraction <= 1.0) {
            return Err(Error::Domain(alloc::format!("h fraction {} outside (0.5, 1]", self.h_fraction)));
        }
        if !(self.eig_floor > 0.0) {
            return Err(Error::Domain("eigenvalue floor must be positive".into()));
        }
        Ok(())
    }

    pub fn mcd(&self) -> crate::cellmcd::CellMcdConfig {
        crate::cellmcd::CellMcdConfig {
            h_fraction: self.h_fraction,
            eig_floor: self.eig_floor,
            cutoff_prob: self.cell_cutoff,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

/// Fitted parameters of one class.
///
/// Center, scatter and Laplace scales are held on the class's standardized
/// scale; [`ClassModel::mu_raw`] and [`ClassModel::sigma_raw`] map them back.
#[derive(Debug, Clone)]
pub struct ClassModel {
    standardizer: Standardizer,
    mu: Vec<f64>,
    sigma: Arc<Matrix>,
    prior: f64,
    p: Vec<f64>,
    alpha: Vec<f64>,
    penalty: Vec<f64>,
    precision_diag: Vec<f64>,
}

impl ClassModel {
    pub fn new(
        standardizer: Standardizer,
        mu: Vec<f64>,
        sigma: Arc<Matrix>,
        prior: f64,
        p: Vec<f64>,
        alpha: Vec<f64>,
        cell_cutoff: f64,
    ) -> Result<Self> {
        let d = mu.len();
        if sigma.rows() != d || !sigma.is_square() || p.len() != d || alpha.len() != d || standardizer.dim() != d {
            return Err(Error::Dimension("class model component lengths differ".into()));
        }
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(Error::Domain(alloc::format!("prior {prior} outside (0, 1]")));
        }
        if p.iter().any(|&v| !(0.0..1.0).contains(&v)) {
            return Err(Error::Domain("contamination probabilities must lie in [0, 1)".into()));
        }
        if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Domain("Laplace scales must be positive".into()));
        }
        let precision_diag = Cholesky::new(&sigma)?.inverse().diag();
        let penalty = cell_penalties(&precision_diag, cell_cutoff)?;
        Ok(ClassModel { standardizer, mu, sigma, prior, p, alpha, penalty, precision_diag })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Center on the standardized scale.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Scatter on the standardized scale.
    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn sigma_arc(&self) -> &Arc<Matrix> {
        &self.sigma
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Laplace scales on the standardized scale.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Flagging penalties `q_j`.
    pub fn penalty(&self) -> &[f64] {
        &self.penalty
    }

    pub fn precision_diag(&self) -> &[f64] {
        &self.precision_diag
    }

    pub fn mu_raw(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.standardizer.invert(j, self.mu[j])).collect()
    }

    pub fn sigma_raw(&self) -> Matrix {
        self.sigma.scale_sym(&self.standardizer.scale)
    }

    pub fn alpha_raw(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.standardizer.scale).map(|(a, s)| a * s).collect()
    }
}

/// `q_j = χ²_{1,cutoff} + log 2π + log C_j` with `C_j = 1 / (Σ⁻¹)_jj`, the
/// variance of cell `j` conditional on all other cells.
pub fn cell_penalties(precision_diag: &[f64], cutoff: f64) -> Result<Vec<f64>> {
    let chi = special::chi2_quantile(cutoff, 1)?;
    Ok(precision_diag
        .iter()
        .map(|&pjj| chi + special::ln_2pi() - libm::log(pjj))
        .collect())
}

/// Estimation diagnostics for one class (or the pooled LDA scatter).
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub class: usize,
    pub n_rows: usize,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    /// Outlier flags per column after re-flagging the training cases.
    pub flag_counts: Vec<usize>,
}

/// A trained cellQDA or cellLDA classifier.
#[derive(Debug, Clone)]
pub struct DiscriminantModel {
    classes: Vec<ClassModel>,
    mode: Mode,
    config: DaConfig,
    class_names: Vec<String>,
    col_names: Vec<String>,
}

impl DiscriminantModel {
    pub fn new(
        classes: Vec<ClassModel>,
        mode: Mode,
        config: DaConfig,
        class_names: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        config.validate()?;
        if classes.len() < 2 {
            return Err(Error::TooFewClasses(classes.len()));
        }
        if class_names.len() != classes.len() {
            return Err(Error::Dimension("class names do not match classes".into()));
        }
        let d = classes[0].dim();
        if classes.iter().any(|c| c.dim() != d) || col_names.len() != d {
            return Err(Error::Dimension("classes differ in dimension".into()));
        }
        let total: f64 = classes.iter().map(ClassModel::prior).sum();
        if libm::fabs(total - 1.0) > 1e-12 {
            return Err(Error::Domain(alloc::format!("priors sum to {total}")));
        }
        if mode == Mode::Lda {
            let first = classes[0].sigma_arc();
            if classes.iter().any(|c| !Arc::ptr_eq(first, c.sigma_arc())) {
                return Err(Error::Domain("LDA classes must share one scatter matrix".into()));
            }
        }
        Ok(DiscriminantModel { classes, mode, config, class_names, col_names })
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn class(&self, g: usize) -> &ClassModel {
        &self.classes[g - 1]
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.col_names.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &DaConfig {
        &self.config
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    /// Same model with different prediction-time switches (class 0 and the
    /// NA counting rule). Estimation settings are left untouched.
    pub fn with_prediction_switches(mut self, class0: bool, casewise_counts_na: bool) -> Self {
        self.config.class0 = class0;
        self.config.casewise_counts_na = casewise_counts_na;
        self
    }

    pub fn with_case_cutoff(mut self, case_cutoff: f64) -> Result<Self> {
        self.config.case_cutoff = case_cutoff;
        self.config.validate()?;
        Ok(self)
    }
}
