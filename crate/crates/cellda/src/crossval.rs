//! Stratified k-fold cross-validation, replicated with seeded shuffles.
//! Every fold retrains the full estimator on its training part.

use cellda_core::classifier::{classical_lda_train, classical_qda_train, predict_all, train_celllda, train_cellqda};
use cellda_core::{DaConfig, DataSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::sim::{substream, Method};

/// Fold index of every row. Rows of each class are shuffled and dealt out
/// round-robin, continuing the deal across classes, so every fold gets
/// `⌊n_g/k⌋` or `⌈n_g/k⌉` cases of class `g`.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(CliError::Usage(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for g in 1..=n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, g as u64));
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRow {
    pub method: String,
    pub rep: usize,
    pub fold: usize,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldRow>,
    /// Accuracy of each replication over all its folds.
    pub rep_accuracy: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub reps: usize,
    pub seed: u64,
    /// Fraction of test cells masked at random before prediction.
    pub missing_rate: f64,
}

fn predict_fold(method: Method, train: &DataSet, test: &DataSet, cfg: &DaConfig) -> Result<Vec<usize>> {
    match method {
        Method::CellQda | Method::CellLda => {
            let model = if method == Method::CellQda { train_cellqda(train, cfg)? } else { train_celllda(train, cfg)? };
            Ok(predict_all(test, &model)?.into_iter().map(|r| r.label).collect())
        }
        Method::Cqda | Method::Clda => {
            let model = if method == Method::Cqda { classical_qda_train(train)? } else { classical_lda_train(train)? };
            (0..test.n_rows()).map(|i| Ok(model.predict(test.row(i))?)).collect()
        }
    }
}

/// Replicated stratified cross-validation of one method. Predictions of
/// class 0 count as errors.
pub fn crossval(data: &DataSet, method: Method, cfg: &DaConfig, opts: &CvOptions) -> Result<CvReport> {
    let labels = data.labels().ok_or_else(|| CliError::Data("cross-validation needs class labels".into()))?;
    if !(0.0..1.0).contains(&opts.missing_rate) {
        return Err(CliError::Usage(format!("missing rate {} outside [0, 1)", opts.missing_rate)));
    }
    if opts.reps == 0 {
        return Err(CliError::Usage("need at least one replication".into()));
    }
    let ids = labels.ids().to_vec();
    let jobs: Vec<(usize, usize)> = (0..opts.reps).flat_map(|r| (0..opts.folds).map(move |f| (r, f))).collect();
    let assignments: Vec<Vec<usize>> = (0..opts.reps)
        .map(|r| stratified_folds(&ids, opts.folds, substream(opts.seed, r as u64)))
        .collect::<Result<_>>()?;
    let rows: Vec<Result<FoldRow>> = jobs
        .par_iter()
        .map(|&(rep, fold)| {
            let assign = &assignments[rep];
            let train_idx: Vec<usize> = (0..ids.len()).filter(|&i| assign[i] != fold).collect();
            let test_idx: Vec<usize> = (0..ids.len()).filter(|&i| assign[i] == fold).collect();
            let train = data.select_rows(&train_idx);
            let mut test = data.select_rows(&test_idx);
            if opts.missing_rate > 0.0 {
                let tag = (rep as u64) << 32 | fold as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(substream(opts.seed ^ 0x6d69_7373, tag));
                let mask: Vec<bool> = (0..test.n_rows() * test.n_cols()).map(|_| rng.gen::<f64>() < opts.missing_rate).collect();
                test = test.with_extra_na(&mask)?;
            }
            let pred = predict_fold(method, &train, &test, cfg)?;
            let correct = pred.iter().zip(&test_idx).filter(|&(&p, &i)| p == ids[i]).count();
            Ok(FoldRow {
                method: method.name().to_string(),
                rep,
                fold,
                n_test: test_idx.len(),
                correct,
                accuracy: correct as f64 / test_idx.len().max(1) as f64,
            })
        })
        .collect();
    let folds = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let rep_accuracy: Vec<f64> = (0..opts.reps)
        .map(|r| {
            let (c, n) = folds.iter().filter(|f| f.rep == r).fold((0, 0), |(c, n), f| (c + f.correct, n + f.n_test));
            c as f64 / n as f64
        })
        .collect();
    let m = rep_accuracy.len() as f64;
    let mean = rep_accuracy.iter().sum::<f64>() / m;
    let sd = if rep_accuracy.len() > 1 {
        (rep_accuracy.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(CvReport { folds, rep_accuracy, mean, sd })
}
