//! Simulation engine: Gaussian class mixtures with decaying-correlation
//! scatters, cellwise/casewise contamination, and the γ sweep.

use cellda_core::classifier::{
    classical_lda_train, classical_qda_train, predict_all, train_celllda, train_cellqda,
};
use cellda_core::linalg::Cholesky;
use cellda_core::{DaConfig, DataSet, Labels, Matrix, Mode};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Correlation {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Contamination {
    None,
    Cell,
    Case,
    Mixed,
}

impl Contamination {
    fn name(self) -> &'static str {
        match self {
            Contamination::None => "none",
            Contamination::Cell => "cell",
            Contamination::Case => "case",
            Contamination::Mixed => "mixed",
        }
    }

    fn has_cases(self) -> bool {
        matches!(self, Contamination::Case | Contamination::Mixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub d: usize,
    /// Cases per class, in each of the training and test sets.
    pub n_per_class: usize,
    pub mode: Mode,
    pub correlation: Correlation,
    /// Contamination of the training set.
    pub contamination: Contamination,
    /// Contamination of the test set.
    pub test_contamination: Contamination,
    pub gamma: f64,
    /// Fraction of cells replaced under cellwise contamination (halved
    /// under mixed contamination).
    pub eps_cell: f64,
    /// Fraction of cases replaced under casewise contamination (halved
    /// under mixed contamination).
    pub eps_case: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(d: usize, n_per_class: usize, mode: Mode, correlation: Correlation, contamination: Contamination, gamma: f64, seed: u64) -> Self {
        Scenario {
            d,
            n_per_class,
            mode,
            correlation,
            contamination,
            test_contamination: Contamination::None,
            gamma,
            eps_cell: 0.10,
            eps_case: 0.10,
            seed,
        }
    }

    pub fn with_test(mut self, test: Contamination) -> Self {
        self.test_contamination = test;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_per_class == 0 {
            return Err(CliError::Usage("scenario needs d >= 1 and n >= 1".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(CliError::Usage(format!("gamma {} must be nonnegative", self.gamma)));
        }
        if !(self.eps_cell >= 0.0 && self.eps_case >= 0.0 && self.eps_cell + self.eps_case <= 0.5) {
            return Err(CliError::Usage("contamination fractions must be nonnegative and sum to at most 0.5".into()));
        }
        Ok(())
    }

    /// Stable identifier of the scenario without its seed and γ.
    pub fn id(&self) -> String {
        format!(
            "{}-{}-train_{}-test_{}-d{}-n{}",
            match self.mode {
                Mode::Qda => "qda",
                Mode::Lda => "lda",
            },
            match self.correlation {
                Correlation::High => "high",
                Correlation::Low => "low",
            },
            self.contamination.name(),
            self.test_contamination.name(),
            self.d,
            self.n_per_class
        )
    }

    /// `(cell fraction, case fraction)` for a contamination kind.
    fn fractions(&self, kind: Contamination) -> (f64, f64) {
        if self.gamma == 0.0 {
            return (0.0, 0.0);
        }
        match kind {
            Contamination::None => (0.0, 0.0),
            Contamination::Cell => (self.eps_cell, 0.0),
            Contamination::Case => (0.0, self.eps_case),
            Contamination::Mixed => (0.5 * self.eps_cell, 0.5 * self.eps_case),
        }
    }

    /// Scatter coefficients `c` of the three classes.
    pub fn scatter_coefficients(&self) -> [f64; N_CLASSES] {
        match (self.mode, self.correlation) {
            (Mode::Qda, Correlation::High) => [0.9, 0.8, 0.7],
            (Mode::Qda, Correlation::Low) => [0.6, 0.4, 0.2],
            (Mode::Lda, Correlation::High) => [0.9; 3],
            (Mode::Lda, Correlation::Low) => [0.6; 3],
        }
    }
}

/// Correlation matrix with entries `(−c)^{|i−j|}`.
pub fn a_matrix(c: f64, d: usize) -> Result<Matrix> {
    if !(c > 0.0 && c < 1.0) {
        return Err(CliError::Usage(format!("correlation coefficient {c} outside (0, 1)")));
    }
    Ok(Matrix::from_fn(d, d, |i, j| (-c).powi(i.abs_diff(j) as i32)))
}

/// `(0, 1_d, (2, −2, 2, …))`.
pub fn class_means(d: usize) -> [Vec<f64>; N_CLASSES] {
    [
        vec![0.0; d],
        vec![1.0; d],
        (0..d).map(|j| if j % 2 == 0 { 2.0 } else { -2.0 }).collect(),
    ]
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent stream derived from a parent seed and a tag.
pub fn substream(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn stream(seed: u64, class: usize, split: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(substream(seed, class as u64), split as u64 + 100))
}

/// One simulated data set split with its contamination ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub train: DataSet,
    pub test: DataSet,
    /// Class of origin of each test case, or 0 for a casewise outlier.
    pub test_truth: Vec<usize>,
    /// Row-major masks of replaced cells.
    pub train_cells: Vec<bool>,
    pub test_cells: Vec<bool>,
    /// Rows drawn as casewise outliers.
    pub train_cases: Vec<bool>,
    pub test_cases: Vec<bool>,
}

struct Split {
    data: Vec<f64>,
    labels: Vec<usize>,
    cells: Vec<bool>,
    cases: Vec<bool>,
}

fn draw(rng: &mut ChaCha8Rng, mean: &[f64], chol: &Cholesky) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let l = chol.factor();
    (0..d).map(|i| mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>()).collect()
}

fn generate_split(scn: &Scenario, split: usize, kind: Contamination) -> Result<Split> {
    let (d, n) = (scn.d, scn.n_per_class);
    let means = class_means(d);
    let (eps_cell, eps_case) = scn.fractions(kind);
    let mut out = Split { data: Vec::new(), labels: Vec::new(), cells: Vec::new(), cases: Vec::new() };
    for (g, &c) in scn.scatter_coefficients().iter().enumerate() {
        let sigma = a_matrix(c, d)?;
        let chol = Cholesky::new(&sigma)?;
        let mut rng = stream(scn.seed, g, split);
        let mut rows: Vec<Vec<f64>> = (0..n).map(|_| draw(&mut rng, &means[g], &chol)).collect();

        let mut cases = vec![false; n];
        let n_cases = (eps_case * n as f64).round() as usize;
        if n_cases > 0 {
            let target = &means[(g + 1) % N_CLASSES];
            let shifted: Vec<f64> = means[g].iter().zip(target).map(|(a, b)| a + 0.5 * scn.gamma * (b - a)).collect();
            let mut picked = sample(&mut rng, n, n_cases).into_vec();
            picked.sort_unstable();
            for i in picked {
                rows[i] = draw(&mut rng, &shifted, &chol);
                cases[i] = true;
            }
        }

        let mut cells = vec![false; n * d];
        let n_cells = (eps_cell * (n * d) as f64).round() as usize;
        if n_cells > 0 {
            for k in sample(&mut rng, n * d, n_cells).into_iter() {
                let (i, j) = (k / d, k % d);
                rows[i][j] = means[g][j] + scn.gamma * sigma[(j, j)].sqrt();
                cells[k] = true;
            }
        }

        for (i, row) in rows.into_iter().enumerate() {
            out.data.extend(row);
            out.labels.push(g + 1);
            out.cases.push(cases[i]);
        }
        out.cells.extend(cells);
    }
    Ok(out)
}

fn to_dataset(split: &Split, d: usize) -> Result<DataSet> {
    let n = split.labels.len();
    let values = Matrix::from_row_major(n, d, split.data.clone())?;
    let names = (1..=d).map(|j| format!("V{j}")).collect();
    let labels = Labels::new(split.labels.clone(), (1..=N_CLASSES).map(|g| g.to_string()).collect())?;
    Ok(DataSet::new(values, vec![false; n * d], names)?.with_labels(labels)?)
}

/// Draws the training and test sets of a scenario. Deterministic in the
/// scenario (including its seed).
pub fn generate(scn: &Scenario) -> Result<Generated> {
    scn.validate()?;
    let train = generate_split(scn, 0, scn.contamination)?;
    let test = generate_split(scn, 1, scn.test_contamination)?;
    let test_truth = test.labels.iter().zip(&test.cases).map(|(&g, &c)| if c { 0 } else { g }).collect();
    Ok(Generated {
        train: to_dataset(&train, scn.d)?,
        test: to_dataset(&test, scn.d)?,
        test_truth,
        train_cells: train.cells,
        test_cells: test.cells,
        train_cases: train.cases,
        test_cases: test.cases,
    })
}

/// Fraction of correct labels. Without class 0, cases whose true label is
/// 0 are left out.
pub fn accuracy(pred: &[usize], truth: &[usize], with_class0: bool) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(CliError::Usage(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        if !with_class0 && t == 0 {
            continue;
        }
        total += 1;
        hit += usize::from(p == t);
    }
    if total == 0 {
        return Err(CliError::Data("no cases to score".into()));
    }
    Ok(hit as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    CellQda,
    CellLda,
    Cqda,
    Clda,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CellQda, Method::CellLda, Method::Cqda, Method::Clda];

    pub fn name(self) -> &'static str {
        match self {
            Method::CellQda => "cellQDA",
            Method::CellLda => "cellLDA",
            Method::Cqda => "CQDA",
            Method::Clda => "CLDA",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Trains `method` on the training set and returns predicted test labels.
/// Cellwise methods use class 0 only when the test set holds casewise
/// outliers.
pub fn run_method(method: Method, gen: &Generated, class0: bool) -> Result<Vec<usize>> {
    let cfg = DaConfig { class0, ..DaConfig::default() };
    match method {
        Method::CellQda | Method::CellLda => {
            let model = if method == Method::CellQda {
                train_cellqda(&gen.train, &cfg)?
            } else {
                train_celllda(&gen.train, &cfg)?
            };
            Ok(predict_all(&gen.test, &model)?.into_iter().map(|r| r.label).collect())
        }
        Method::Cqda | Method::Clda => {
            let model = if method == Method::Cqda {
                classical_qda_train(&gen.train)?
            } else {
                classical_lda_train(&gen.train)?
            };
            (0..gen.test.n_rows()).map(|i| Ok(model.predict(gen.test.row(i))?)).collect()
        }
    }
}

/// Accuracy of one method on one generated data set.
pub fn evaluate(method: Method, scn: &Scenario, gen: &Generated) -> Result<f64> {
    let class0 = scn.test_contamination.has_cases();
    let pred = run_method(method, gen, class0)?;
    accuracy(&pred, &gen.test_truth, class0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub scenario_id: String,
    pub gamma: f64,
    pub rep: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub method: String,
    pub scenario_id: String,
    pub gamma: f64,
    pub reps: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Seed of replication `rep` under a master seed.
pub fn rep_seed(master: u64, rep: usize) -> u64 {
    substream(master, rep as u64)
}

/// Runs every method on every scenario for `reps` replications. The
/// scenario seeds act as master seeds; replication `r` uses
/// [`rep_seed`]. Rows come out ordered by scenario, replication and
/// method regardless of scheduling.
pub fn run_sweep(grid: &[Scenario], methods: &[Method], reps: usize) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|s| (0..reps).map(move |r| (s, r))).collect();
    let chunks: Vec<Result<Vec<SweepRow>>> = jobs
        .par_iter()
        .map(|&(s, rep)| {
            let scn = Scenario { seed: rep_seed(grid[s].seed, rep), ..grid[s] };
            let gen = generate(&scn)?;
            methods
                .iter()
                .map(|&m| {
                    Ok(SweepRow {
                        method: m.name().to_string(),
                        scenario_id: scn.id(),
                        gamma: scn.gamma,
                        rep,
                        accuracy: evaluate(m, &scn, &gen)?,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * methods.len());
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

/// Mean and sample standard deviation per (method, scenario, γ), in order of
/// first appearance.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(String, String, f64)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.scenario_id.clone(), r.gamma);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, scenario_id, gamma)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.scenario_id == scenario_id && r.gamma == gamma)
                .map(|r| r.accuracy)
                .collect();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let sd = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepSummary { method, scenario_id, gamma, reps: acc.len(), mean, sd }
        })
        .collect()
}

/// The desk-scale grid: d = 5, 100 cases per class, γ ∈ {0, 4, 8}, both
/// correlation settings and all three training contamination types, with
/// the test set contaminated as given. `full` switches to d = 20,
/// 200 cases per class and γ ∈ {0, 1, …, 10}.
pub fn standard_grid(mode: Mode, test: Contamination, full: bool, seed: u64) -> Vec<Scenario> {
    let (d, n, gammas): (usize, usize, Vec<f64>) =
        if full { (20, 200, (0..=10).map(f64::from).collect()) } else { (5, 100, vec![0.0, 4.0, 8.0]) };
    let mut grid = Vec::new();
    for corr in [Correlation::High, Correlation::Low] {
        for kind in [Contamination::Cell, Contamination::Case, Contamination::Mixed] {
            for &gamma in &gammas {
                grid.push(Scenario::new(d, n, mode, corr, kind, gamma, seed).with_test(test));
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_matrix_entries() {
        let a = a_matrix(0.9, 4).unwrap();
        assert!((a[(0, 1)] + 0.9).abs() < 1e-15);
        assert!((a[(0, 2)] - 0.81).abs() < 1e-15);
        assert!((0..4).all(|i| a[(i, i)] == 1.0));
        assert!(a_matrix(1.0, 3).is_err());
    }

    #[test]
    fn means() {
        let [m1, m2, m3] = class_means(5);
        assert_eq!(m1, vec![0.0; 5]);
        assert_eq!(m2, vec![1.0; 5]);
        assert_eq!(m3, vec![2.0, -2.0, 2.0, -2.0, 2.0]);
        assert_eq!(class_means(1)[2], vec![2.0]);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3], false).unwrap(), 1.0);
        assert!((accuracy(&[0, 1, 2], &[0, 1, 3], true).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&[1], &[1, 2], true).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
    }
}
