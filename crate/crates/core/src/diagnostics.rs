//! Tables behind the class map and the cell map.

use alloc::vec::Vec;

use crate::classifier::predict_given;
use crate::error::{Error, Result};
use crate::flagger::flag_case;
use crate::model::{DataSet, DiscriminantModel};
use crate::special::{chi2_cdf, normal_quantile};

/// Right end of the class-map distance axis.
pub const AXIS_MAX: f64 = 4.0;
/// Cumulative probability at which the class map draws its cutoff line.
pub const CUTOFF_PROB: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassmapRow {
    /// Row index in the input data.
    pub case: usize,
    pub given: usize,
    /// Predicted label (0 for a casewise outlier).
    pub predicted: usize,
    /// At least one cell flagged as outlying against the given class.
    pub flagged_any: bool,
    /// Partial Mahalanobis distance to the given class.
    pub md: f64,
    pub axis_coord: f64,
    pub pac: f64,
}

/// `min(Φ⁻¹((1 + p)/2), 4)` with `p` the χ²_d CDF at `md²`.
pub fn axis_coord(md2: f64, d: usize) -> Result<f64> {
    let p = chi2_cdf(md2, d)?;
    if p >= 1.0 {
        return Ok(AXIS_MAX);
    }
    Ok(normal_quantile(0.5 * (1.0 + p))?.min(AXIS_MAX))
}

/// Axis position of the cutoff line.
pub fn cutoff_coord() -> f64 {
    normal_quantile(0.5 * (1.0 + CUTOFF_PROB)).expect("valid probability")
}

/// One row per labeled case, in input order.
pub fn classmap_data(model: &DiscriminantModel, data: &DataSet) -> Result<Vec<ClassmapRow>> {
    let d = model.dim();
    let mut out = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        let given = data.label(i).ok_or(Error::MissingLabels)?;
        if given > model.n_classes() {
            return Err(Error::Domain(alloc::format!("label {given} unknown to the model")));
        }
        let r = predict_given(data.row(i), data.na_row(i), Some(given), model)?;
        let (w, trace) = flag_case(data.row(i), data.na_row(i), model.class(given))?;
        out.push(ClassmapRow {
            case: i,
            given,
            predicted: r.label,
            flagged_any: w.n_outliers() > 0,
            md: libm::sqrt(trace.final_md2),
            axis_coord: axis_coord(trace.final_md2, d)?,
            pac: r.pac.expect("given label supplied"),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Clean,
    High,
    Low,
    Na,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Clean => "clean",
            CellStatus::High => "high",
            CellStatus::Low => "low",
            CellStatus::Na => "na",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellmapRow {
    pub row: usize,
    pub col: usize,
    pub status: CellStatus,
    /// `(x_j − x̂_j)/√C_j` at the moment the cell was flagged; 0 otherwise.
    pub stdres: f64,
}

/// Flags every row of `data` against class `g` and reports each cell,
/// row-major.
pub fn cellmap_data(model: &DiscriminantModel, data: &DataSet, g: usize) -> Result<Vec<CellmapRow>> {
    if g == 0 || g > model.n_classes() {
        return Err(Error::Domain(alloc::format!("class {g} outside 1..={}", model.n_classes())));
    }
    let d = model.dim();
    if data.n_cols() != d {
        return Err(Error::Dimension(alloc::format!("data has {} columns, model {d}", data.n_cols())));
    }
    let mut out = Vec::with_capacity(data.n_rows() * d);
    for i in 0..data.n_rows() {
        let (w, trace) = flag_case(data.row(i), data.na_row(i), model.class(g))?;
        for j in 0..d {
            let (status, stdres) = if w.is_na(j) {
                (CellStatus::Na, 0.0)
            } else if w.is_clean(j) {
                (CellStatus::Clean, 0.0)
            } else {
                let s = trace.residuals.iter().find(|r| r.col == j).map_or(0.0, |r| r.stdres);
                (if s > 0.0 { CellStatus::High } else { CellStatus::Low }, s)
            };
            out.push(CellmapRow { row: i, col: j, status, stdres });
        }
    }
    Ok(out)
}
