//! End-to-end acceptance suite. Prints one `criterion N: PASS|FAIL|SKIP`
//! line per criterion and exits non-zero when any criterion fails.
//!
//! Criterion 8 needs the sweets data: set `CELLDA_SWEETS_CSV` to its path
//! and, if the class column is not the last one, `CELLDA_SWEETS_LABEL`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cellda::crossval::{crossval, CvOptions};
use cellda::io::{model_from_json, model_to_json, read_csv, DEFAULT_NA_TOKENS};
use cellda::sim::{a_matrix, class_means, generate, run_sweep, summarize, Contamination, Correlation, Method, Scenario};
use cellda_core::cellmcd::{fit_class, CellMcdConfig};
use cellda_core::classifier::{pac_from_deltas, predict, predict_all, train_celllda, train_cellqda};
use cellda_core::flagger::{delta, flag_case_with, reflag_training, single_case_objective};
use cellda_core::kernels::{conditional_moments, subset_normal_logpdf};
use cellda_core::linalg::Cholesky;
use cellda_core::model::{cell_penalties, split_by_class};
use cellda_core::special::{chi2_cdf, chi2_quantile};
use cellda_core::{DaConfig, DataSet, FlagVector, Matrix, Mode};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn random_spd(r: &mut ChaCha8Rng, d: usize) -> Matrix {
    let b: Vec<f64> = (0..d * d).map(|_| normal(r)).collect();
    let scale: Vec<f64> = (0..d).map(|_| r.gen_range(0.5..3.0)).collect();
    Matrix::from_fn(d, d, |i, j| {
        let s: f64 = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>() / d as f64;
        (s + if i == j { 0.2 } else { 0.0 }) * scale[i] * scale[j]
    })
}

fn draw(r: &mut ChaCha8Rng, mu: &[f64], chol: &Cholesky) -> Vec<f64> {
    let z: Vec<f64> = (0..mu.len()).map(|_| normal(r)).collect();
    let l = chol.factor();
    (0..mu.len()).map(|i| mu[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>()).collect()
}

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn penalties(sigma: &Matrix) -> Vec<f64> {
    cell_penalties(&Cholesky::new(sigma).unwrap().inverse().diag(), 0.99).unwrap()
}

fn criterion_1() -> Outcome {
    let d = 5;
    let trials = 500;
    let (mut matched, mut below, mut terminal_ok) = (0, 0, 0);
    for t in 0..trials {
        let mut r = rng(10_000 + t);
        let sigma = random_spd(&mut r, d);
        let mu: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
        let mut x = draw(&mut r, &mu, &Cholesky::new(&sigma).unwrap());
        for j in 0..d {
            if r.gen_bool(0.3) {
                let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                x[j] += sign * r.gen_range(2.0..8.0) * sigma[(j, j)].sqrt();
            }
        }
        let q = penalties(&sigma);
        let na = vec![false; d];
        let (w, trace) = flag_case_with(&x, &na, &mu, &sigma, &q).unwrap();
        let greedy = single_case_objective(&x, &w, &mu, &sigma, &q).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << d) {
            let wv: Vec<bool> = (0..d).map(|j| mask & (1 << j) != 0).collect();
            let fv = FlagVector::new(wv, na.clone()).unwrap();
            best = best.min(single_case_objective(&x, &fv, &mu, &sigma, &q).unwrap());
        }
        if greedy < best - 1e-9 {
            below += 1;
        }
        if greedy - best <= 1e-9 {
            matched += 1;
        }
        if trace.terminal_deltas.iter().all(|&(_, dl)| dl < 0.0) {
            terminal_ok += 1;
        }
    }
    let rate = matched as f64 / trials as f64;
    verdict(
        rate >= 0.9 && below == 0 && terminal_ok == trials,
        format!("exhaustive optimum reached in {matched}/{trials} ({rate:.3}), below optimum {below}, terminal delta < 0 in {terminal_ok}/{trials}"),
    )
}

fn criterion_2() -> Outcome {
    let d = 5;
    let n = 2000;
    let sigma = a_matrix(0.7, d).unwrap();
    let mu = class_means(d)[2].clone();
    let chol = Cholesky::new(&sigma).unwrap();
    let q = penalties(&sigma);
    let mut r = rng(2);
    let mut flagged = 0;
    for _ in 0..n {
        let x = draw(&mut r, &mu, &chol);
        let (w, _) = flag_case_with(&x, &[false; 5], &mu, &sigma, &q).unwrap();
        flagged += w.n_outliers();
    }
    let frac = flagged as f64 / (n * d) as f64;
    verdict((0.005..=0.02).contains(&frac), format!("flagged fraction {frac:.4} (target [0.005, 0.02])"))
}

fn criterion_3() -> Outcome {
    let d = 5;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for fit in 0..50u64 {
        let mut r = rng(300 + fit);
        let sigma = random_spd(&mut r, d);
        let mu: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
        let chol = Cholesky::new(&sigma).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..100).map(|_| draw(&mut r, &mu, &chol)).collect();
        if fit % 2 == 1 {
            let gamma = r.gen_range(2.0..10.0);
            for row in rows.iter_mut() {
                for j in 0..d {
                    if r.gen_bool(0.1) {
                        row[j] = mu[j] + gamma * sigma[(j, j)].sqrt();
                    }
                }
            }
        }
        let data = DataSet::from_rows(&rows).unwrap();
        let fit = fit_class(&data, &CellMcdConfig::default()).unwrap();
        for pair in fit.objective_trace.windows(2) {
            let rise = pair[1] - pair[0];
            worst = worst.max(rise);
            if rise > 1e-9 {
                failures += 1;
            }
        }
    }
    verdict(failures == 0, format!("50 fits, largest step change {worst:.3e}, increases above 1e-9: {failures}"))
}

fn mean_accuracy(grid: &[Scenario], methods: &[Method], reps: usize) -> Vec<(String, String, f64, f64)> {
    let rows = run_sweep(grid, methods, reps).unwrap();
    summarize(&rows).into_iter().map(|s| (s.method, s.scenario_id, s.gamma, s.mean)).collect()
}

fn lookup(table: &[(String, String, f64, f64)], method: Method, scn: &Scenario) -> f64 {
    table.iter().find(|(m, id, g, _)| m == method.name() && *id == scn.id() && *g == scn.gamma).unwrap().3
}

const REPS: usize = 5;

fn scenario(mode: Mode, corr: Correlation, train: Contamination, test: Contamination, gamma: f64) -> Scenario {
    Scenario::new(5, 100, mode, corr, train, gamma, 2024).with_test(test)
}

fn criterion_4() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for corr in [Correlation::High, Correlation::Low] {
        let mut grid = Vec::new();
        for gamma in [0.0, 4.0, 8.0] {
            grid.push(scenario(Mode::Qda, corr, Contamination::Cell, Contamination::None, gamma));
            grid.push(scenario(Mode::Lda, corr, Contamination::Cell, Contamination::None, gamma));
        }
        let table = mean_accuracy(&grid, &Method::ALL, REPS);
        let q0 = scenario(Mode::Qda, corr, Contamination::Cell, Contamination::None, 0.0);
        let l0 = scenario(Mode::Lda, corr, Contamination::Cell, Contamination::None, 0.0);
        let at0 = [
            lookup(&table, Method::CellQda, &q0),
            lookup(&table, Method::Cqda, &q0),
            lookup(&table, Method::CellLda, &l0),
            lookup(&table, Method::Clda, &l0),
        ];
        let spread = at0.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - at0.iter().cloned().fold(f64::INFINITY, f64::min);
        let q8 = scenario(Mode::Qda, corr, Contamination::Cell, Contamination::None, 8.0);
        let (cell8, classic8) = (lookup(&table, Method::CellQda, &q8), lookup(&table, Method::Cqda, &q8));
        ok &= spread <= 0.05 && cell8 >= classic8 + 0.10;
        notes.push(format!(
            "{corr:?}: gamma=0 accuracies {:.3}/{:.3}/{:.3}/{:.3} spread {spread:.3}; gamma=8 cellQDA {cell8:.3} vs CQDA {classic8:.3}",
            at0[0], at0[1], at0[2], at0[3]
        ));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for corr in [Correlation::High, Correlation::Low] {
        let grid: Vec<Scenario> =
            [0.0, 4.0, 8.0].iter().map(|&g| scenario(Mode::Qda, corr, Contamination::Cell, Contamination::Cell, g)).collect();
        let table = mean_accuracy(&grid, &[Method::CellQda, Method::Cqda], REPS);
        let (cell8, classic8) = (lookup(&table, Method::CellQda, &grid[2]), lookup(&table, Method::Cqda, &grid[2]));
        ok &= cell8 >= 0.80 && cell8 >= classic8 + 0.20;
        notes.push(format!("{corr:?}: gamma=8 cellQDA {cell8:.3} vs CQDA {classic8:.3}"));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for corr in [Correlation::High, Correlation::Low] {
        let grid: Vec<Scenario> =
            [0.0, 4.0, 8.0].iter().map(|&g| scenario(Mode::Qda, corr, Contamination::Case, Contamination::Case, g)).collect();
        let table = mean_accuracy(&grid, &[Method::CellQda], REPS);
        let cell8 = lookup(&table, Method::CellQda, &grid[2]);
        ok &= cell8 >= 0.75;
        notes.push(format!("{corr:?}: gamma=8 cellQDA accuracy over classes 0..3 {cell8:.3}"));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_7() -> Outcome {
    let cfg = DaConfig { class0: true, casewise_counts_na: false, ..DaConfig::default() };
    let (mut full, mut masked) = (0.0, 0.0);
    for rep in 0..REPS as u64 {
        let s = Scenario::new(9, 100, Mode::Qda, Correlation::High, Contamination::None, 0.0, 700 + rep);
        let g = generate(&s).unwrap();
        let model = train_cellqda(&g.train, &cfg).unwrap();
        let mut r = rng(7_000 + rep);
        let mask: Vec<bool> = (0..g.test.n_rows() * 9).map(|_| r.gen_bool(0.2)).collect();
        let holed = g.test.with_extra_na(&mask).unwrap();
        let acc = |data: &DataSet| {
            let pred = predict_all(data, &model).unwrap();
            pred.iter().zip(&g.test_truth).filter(|(p, &t)| p.label == t).count() as f64 / pred.len() as f64
        };
        full += acc(&g.test) / REPS as f64;
        masked += acc(&holed) / REPS as f64;
    }
    let drop = full - masked;
    verdict(drop <= 0.05, format!("cellQDA accuracy {full:.3} with no missing cells, {masked:.3} with 20% masked (drop {drop:.3})"))
}

fn criterion_8() -> Outcome {
    let Ok(path) = std::env::var("CELLDA_SWEETS_CSV") else {
        return Outcome::Skip("CELLDA_SWEETS_CSV not set; sweets data unavailable".into());
    };
    if !std::path::Path::new(&path).exists() {
        return Outcome::Skip(format!("{path} does not exist"));
    }
    let label = match std::env::var("CELLDA_SWEETS_LABEL") {
        Ok(l) => l,
        Err(_) => {
            let mut rdr = match csv::Reader::from_path(&path) {
                Ok(r) => r,
                Err(e) => return Outcome::Fail(format!("cannot read {path}: {e}")),
            };
            match rdr.headers() {
                Ok(h) => h.iter().next_back().unwrap_or_default().to_string(),
                Err(e) => return Outcome::Fail(format!("cannot read header of {path}: {e}")),
            }
        }
    };
    let tokens: Vec<String> = DEFAULT_NA_TOKENS.iter().map(|s| s.to_string()).collect();
    let data = match read_csv(&path, Some(&label), &tokens) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot load {path}: {e}")),
    };
    let opts = CvOptions { folds: 5, reps: 10, seed: 1, missing_rate: 0.0 };
    let cfg = DaConfig::default();
    let run = |m: Method| crossval(&data, m, &cfg, &opts).map(|r| r.mean);
    match (run(Method::CellQda), run(Method::Cqda)) {
        (Ok(cell), Ok(classic)) => verdict(
            (cell - 0.832).abs() <= 0.03 && (classic - 0.569).abs() <= 0.05,
            format!("cellQDA {cell:.3} (target 0.832 +/- 0.03), CQDA {classic:.3} (target 0.569 +/- 0.05)"),
        ),
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(format!("cross-validation failed: {e}")),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let (mut moments_bad, mut logpdf_bad, mut chi_bad, mut delta_bad) = (0, 0, 0, 0);
    for _ in 0..200 {
        let d = r.gen_range(2..=8);
        let sigma = random_spd(&mut r, d);
        let s = dense(&sigma);
        let mu: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
        let x: Vec<f64> = (0..d).map(|_| 3.0 * normal(&mut r)).collect();

        let j = r.gen_range(0..d);
        let given: Vec<usize> = (0..d).filter(|&k| k != j && r.gen_bool(0.7)).collect();
        let (m, v) = conditional_moments(j, &given, &mu, &sigma, &x).unwrap();
        let (em, ev) = if given.is_empty() {
            (mu[j], s[(j, j)])
        } else {
            let inv = DMatrix::from_fn(given.len(), given.len(), |a, b| s[(given[a], given[b])]).try_inverse().unwrap();
            let cross = DMatrix::from_fn(1, given.len(), |_, b| s[(j, given[b])]);
            let res = DVector::from_iterator(given.len(), given.iter().map(|&k| x[k] - mu[k]));
            ((&cross * &inv * res)[0] + mu[j], s[(j, j)] - (&cross * &inv * cross.transpose())[0])
        };
        if !(rel_close(m, em, 1e-10) && rel_close(v, ev, 1e-10)) {
            moments_bad += 1;
        }

        let mut wv: Vec<bool> = (0..d).map(|_| r.gen_bool(0.6)).collect();
        wv[r.gen_range(0..d)] = true;
        let o: Vec<usize> = (0..d).filter(|&k| wv[k]).collect();
        let so = DMatrix::from_fn(o.len(), o.len(), |a, b| s[(o[a], o[b])]);
        let res = DVector::from_iterator(o.len(), o.iter().map(|&k| x[k] - mu[k]));
        let md2 = (res.transpose() * so.clone().try_inverse().unwrap() * &res)[0];
        let expect = -0.5 * (so.determinant().ln() + o.len() as f64 * (2.0 * std::f64::consts::PI).ln() + md2);
        let w = FlagVector::new(wv.clone(), vec![false; d]).unwrap();
        if !rel_close(subset_normal_logpdf(&x, &w, &mu, &sigma).unwrap(), expect, 1e-10) {
            logpdf_bad += 1;
        }

        let q = penalties(&sigma);
        for &k in &o {
            let mut flagged = wv.clone();
            flagged[k] = false;
            let wf = FlagVector::new(flagged, vec![false; d]).unwrap();
            let explicit = single_case_objective(&x, &w, &mu, &sigma, &q).unwrap() - single_case_objective(&x, &wf, &mu, &sigma, &q).unwrap();
            if (delta(&x, &w, k, &mu, &sigma, q[k]).unwrap() - explicit).abs() >= 1e-8 {
                delta_bad += 1;
            }
        }
    }
    for k in 1..=100 {
        for p in [1e-6, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999999] {
            let q = chi2_quantile(p, k).unwrap();
            if (chi2_cdf(q, k).unwrap() - p).abs() >= 1e-9 {
                chi_bad += 1;
            }
        }
    }
    verdict(
        moments_bad + logpdf_bad + chi_bad + delta_bad == 0,
        format!(
            "mismatches: conditional moments {moments_bad}/200, subset log-pdf {logpdf_bad}/200, chi2 round trip {chi_bad}/700, delta {delta_bad}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut problems = Vec::new();
    for seed in 0..4u64 {
        let s = Scenario::new(5, 80, Mode::Qda, Correlation::High, Contamination::Mixed, 6.0, 1000 + seed).with_test(Contamination::Mixed);
        let g = generate(&s).unwrap();
        let cfg = DaConfig::default();
        let mut r = rng(seed);
        let scale: Vec<f64> = (0..5).map(|_| (r.gen_range(-4.0..4.0f64)).exp()).collect();
        let shift: Vec<f64> = (0..5).map(|_| r.gen_range(-100.0..100.0)).collect();
        let (t_train, t_test) = (g.train.affine_columns(&scale, &shift), g.test.affine_columns(&scale, &shift));
        for mode in [Mode::Qda, Mode::Lda] {
            let train = |d: &DataSet| if mode == Mode::Qda { train_cellqda(d, &cfg) } else { train_celllda(d, &cfg) };
            let model = train(&g.train).unwrap();
            let moved = train(&t_train).unwrap();
            let a = predict_all(&g.test, &model).unwrap();
            let b = predict_all(&t_test, &moved).unwrap();
            if a.iter().zip(&b).any(|(x, y)| x.label != y.label) {
                problems.push(format!("seed {seed} {mode:?}: labels changed under affine map"));
            }

            let parts = split_by_class(&g.train).unwrap();
            for (k, part) in parts.iter().enumerate() {
                let (flags, _) = reflag_training(model.class(k + 1), part).unwrap();
                for i in 0..part.n_rows() {
                    if predict(part.row(i), part.na_row(i), &model).unwrap().flags[k] != *flags.row(i) {
                        problems.push(format!("seed {seed} {mode:?}: class {} row {i} flags differ", k + 1));
                    }
                }
            }

            for res in &a {
                for given in 1..=3 {
                    let p = pac_from_deltas(&res.delta, given).unwrap();
                    if p != 0.5 && (p < 0.5) != (res.raw_label == given) {
                        problems.push(format!("seed {seed} {mode:?}: PAC {p} incoherent with prediction"));
                    }
                }
            }

            let back = model_from_json(&model_to_json(&model)).unwrap();
            let c = predict_all(&g.test, &back).unwrap();
            let same = a.iter().zip(&c).all(|(x, y)| {
                x.label == y.label && x.flags == y.flags && x.delta.iter().zip(&y.delta).all(|(u, v)| u.to_bits() == v.to_bits())
            });
            if !same {
                problems.push(format!("seed {seed} {mode:?}: reloaded model predicts differently"));
            }
        }
    }
    let n = problems.len();
    verdict(
        n == 0,
        if n == 0 {
            "affine invariance, flag identity, PAC coherence and model-file round trip hold on 4 seeds x 2 modes".into()
        } else {
            format!("{n} violations, first: {}", problems[0])
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(fn() -> Outcome, Duration); 10] = [
        (criterion_1, Duration::from_secs(10)),
        (criterion_2, Duration::from_secs(5)),
        (criterion_3, Duration::from_secs(60)),
        (criterion_4, Duration::from_secs(300)),
        (criterion_5, Duration::from_secs(300)),
        (criterion_6, Duration::from_secs(300)),
        (criterion_7, Duration::from_secs(120)),
        (criterion_8, Duration::from_secs(3600)),
        (criterion_9, Duration::from_secs(60)),
        (criterion_10, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (k, (run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let over = took > *limit;
        let line = match outcome {
            Outcome::Pass(d) if !over => format!("PASS ({:.2}s) {d}", took.as_secs_f64()),
            Outcome::Pass(d) => format!("FAIL ({:.2}s, limit {}s) {d}", took.as_secs_f64(), limit.as_secs()),
            Outcome::Fail(d) => format!("FAIL ({:.2}s) {d}", took.as_secs_f64()),
            Outcome::Skip(d) => format!("SKIP {d}"),
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("criterion {}: {line}", k + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
