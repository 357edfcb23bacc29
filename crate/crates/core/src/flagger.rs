//! Greedy per-case cell flagging against one class model.
//!
//! For a case `x` the flagger minimizes
//! `Q(w) = log|Σ^(o)| + |o| log 2π + MD²(x, w, μ, Σ) + Σ_{j ∈ m} q_j`
//! by repeatedly flagging the clean cell whose removal lowers `Q` the most,
//! as long as that decrease `Δ_j` is non-negative. Missing cells start (and
//! stay) flagged and carry no penalty.

use alloc::vec::Vec;

use crate::error::Result;
use crate::kernels::{self, SubsetWorkspace};
use crate::linalg::Matrix;
use crate::model::{ClassModel, DataSet, FlagMatrix, FlagVector};
use crate::special::ln_2pi;

/// Residual of a flagged cell at the moment it was flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResidual {
    pub col: usize,
    /// Conditional expectation of the cell, on the data scale.
    pub predicted: f64,
    /// Conditional variance on the standardized scale.
    pub variance: f64,
    pub stdres: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlagTrace {
    /// `(j, Δ_j)` in the order cells were flagged.
    pub flagged_order: Vec<(usize, f64)>,
    /// `Δ_j` of every cell left clean at termination (all negative).
    pub terminal_deltas: Vec<(usize, f64)>,
    /// Partial MD² over the final clean set (0 when it is empty).
    pub final_md2: f64,
    pub residuals: Vec<CellResidual>,
}

/// Decrease of `Q` from flagging the clean cell `j` of `w`:
/// `log C_j + log 2π + (x_j − x̂_j)² / C_j − q_j`, with `(x̂_j, C_j)` the
/// conditional moments of cell `j` given the other clean cells.
pub fn delta(x: &[f64], w: &FlagVector, j: usize, mu: &[f64], sigma: &Matrix, q_j: f64) -> Result<f64> {
    debug_assert!(w.is_clean(j));
    let given: Vec<usize> = w.clean().into_iter().filter(|&k| k != j).collect();
    let (xhat, c) = kernels::conditional_moments(j, &given, mu, sigma, x)?;
    Ok(delta_from_moments(x[j], xhat, c, q_j))
}

#[inline]
fn delta_from_moments(xj: f64, xhat: f64, c: f64, q_j: f64) -> f64 {
    let r = xj - xhat;
    libm::log(c) + ln_2pi() + r * r / c - q_j
}

/// Single-case penalized objective `Q(w)`.
pub fn single_case_objective(x: &[f64], w: &FlagVector, mu: &[f64], sigma: &Matrix, q: &[f64]) -> Result<f64> {
    let o = w.clean();
    let mut value = 0.0;
    if !o.is_empty() {
        let ws = SubsetWorkspace::new(sigma, &o)?;
        value += ws.logdet() + o.len() as f64 * ln_2pi() + ws.md2(x, mu);
    }
    value += (0..w.len()).filter(|&j| w.is_outlier(j)).map(|j| q[j]).sum::<f64>();
    Ok(value)
}

/// Greedy flagging of one case given a center, scatter and penalties that
/// all live on the same scale. Ties in `Δ` go to the smallest column.
pub fn flag_case_with(
    x: &[f64],
    na: &[bool],
    mu: &[f64],
    sigma: &Matrix,
    q: &[f64],
) -> Result<(FlagVector, FlagTrace)> {
    let mut w = FlagVector::clean_except_na(na);
    let mut trace = FlagTrace::default();
    loop {
        let o = w.clean();
        if o.is_empty() {
            trace.final_md2 = 0.0;
            return Ok((w, trace));
        }
        let ws = SubsetWorkspace::new(sigma, &o)?;
        let loo = kernels::loo_from_precision(x, &o, mu, &ws.precision());
        let mut best: Option<(usize, f64, f64, f64)> = None;
        let mut deltas = Vec::with_capacity(o.len());
        for (&j, &(xhat, c)) in o.iter().zip(&loo) {
            let dj = delta_from_moments(x[j], xhat, c, q[j]);
            deltas.push((j, dj));
            if best.is_none_or(|(_, bd, _, _)| dj > bd) {
                best = Some((j, dj, xhat, c));
            }
        }
        let (j, dj, xhat, c) = best.expect("non-empty clean set");
        if dj >= 0.0 {
            w.set_flag(j);
            trace.flagged_order.push((j, dj));
            trace.residuals.push(CellResidual {
                col: j,
                predicted: xhat,
                variance: c,
                stdres: (x[j] - xhat) / libm::sqrt(c),
            });
        } else {
            trace.terminal_deltas = deltas;
            trace.final_md2 = ws.md2(x, mu);
            return Ok((w, trace));
        }
    }
}

/// Flags a raw-scale case against a fitted class model.
pub fn flag_case(x: &[f64], na: &[bool], model: &ClassModel) -> Result<(FlagVector, FlagTrace)> {
    let std = model.standardizer();
    let z = std.apply_row(x);
    let (w, mut trace) = flag_case_with(&z, na, model.mu(), model.sigma(), model.penalty())?;
    for r in &mut trace.residuals {
        r.predicted = std.invert(r.col, r.predicted);
    }
    Ok((w, trace))
}

/// Re-flags every row of one class's training data against its fitted
/// model, so training and prediction use the same flagging rule.
pub fn reflag_training(model: &ClassModel, class_data: &DataSet) -> Result<(FlagMatrix, Vec<FlagTrace>)> {
    let mut rows = Vec::with_capacity(class_data.n_rows());
    let mut traces = Vec::with_capacity(class_data.n_rows());
    for i in 0..class_data.n_rows() {
        let (w, t) = flag_case(class_data.row(i), class_data.na_row(i), model)?;
        rows.push(w);
        traces.push(t);
    }
    Ok((FlagMatrix::new(rows, class_data.n_cols())?, traces))
}
