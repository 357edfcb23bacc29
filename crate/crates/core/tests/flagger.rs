mod common;

use cellda_core::flagger::{delta, flag_case_with, single_case_objective};
use cellda_core::linalg::Cholesky;
use cellda_core::model::cell_penalties;
use cellda_core::{FlagVector, Matrix};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn penalties(sigma: &Matrix) -> Vec<f64> {
    cell_penalties(&Cholesky::new(sigma).unwrap().inverse().diag(), 0.99).unwrap()
}

/// Minimum of the single-case objective over every flag pattern.
fn exhaustive_min(x: &[f64], na: &[bool], mu: &[f64], sigma: &Matrix, q: &[f64]) -> f64 {
    let d = x.len();
    let free: Vec<usize> = (0..d).filter(|&j| !na[j]).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << free.len()) {
        let mut w = vec![false; d];
        for (b, &j) in free.iter().enumerate() {
            w[j] = mask & (1 << b) != 0;
        }
        let fv = FlagVector::new(w, na.to_vec()).unwrap();
        best = best.min(single_case_objective(x, &fv, mu, sigma, q).unwrap());
    }
    best
}

struct Instance {
    x: Vec<f64>,
    na: Vec<bool>,
    mu: Vec<f64>,
    sigma: Matrix,
    q: Vec<f64>,
}

fn instance(seed: u64, d: usize, perturb: f64, na_rate: f64) -> Instance {
    let mut r = rng(seed);
    let sigma = random_spd(&mut r, d);
    let mu: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
    let mut x = mvn(&mut r, &mu, &sigma, 1).remove(0);
    for j in 0..d {
        if r.gen_bool(perturb) {
            let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            x[j] += sign * r.gen_range(2.0..8.0) * sigma[(j, j)].sqrt();
        }
    }
    let na: Vec<bool> = (0..d).map(|_| r.gen_bool(na_rate)).collect();
    for j in 0..d {
        if na[j] {
            x[j] = f64::NAN;
        }
    }
    let q = penalties(&sigma);
    Instance { x, na, mu, sigma, q }
}

#[test]
fn greedy_versus_exhaustive() {
    let mut matched = 0;
    let trials = 500;
    for t in 0..trials {
        let d = 3 + t % 6;
        let inst = instance(1000 + t as u64, d, 0.3, 0.0);
        let (w, trace) = flag_case_with(&inst.x, &inst.na, &inst.mu, &inst.sigma, &inst.q).unwrap();
        let greedy = single_case_objective(&inst.x, &w, &inst.mu, &inst.sigma, &inst.q).unwrap();
        let best = exhaustive_min(&inst.x, &inst.na, &inst.mu, &inst.sigma, &inst.q);
        assert!(greedy >= best - 1e-9, "greedy {greedy} below exhaustive {best}");
        if greedy - best <= 1e-9 {
            matched += 1;
        }
        assert!(trace.terminal_deltas.iter().all(|&(_, dl)| dl < 0.0));
    }
    assert!(matched as f64 >= 0.9 * trials as f64, "matched {matched}/{trials}");
}

#[test]
fn clean_data_flag_rate_near_nominal() {
    let d = 5;
    let mut r = rng(77);
    let sigma = a_matrix(0.6, d);
    let mu = vec![0.5; d];
    let q = penalties(&sigma);
    let rows = mvn(&mut r, &mu, &sigma, 2000);
    let mut per_col = vec![0usize; d];
    for x in &rows {
        let (w, _) = flag_case_with(x, &[false; 5], &mu, &sigma, &q).unwrap();
        for (j, c) in per_col.iter_mut().enumerate() {
            *c += usize::from(w.is_outlier(j));
        }
    }
    for c in per_col {
        let rate = c as f64 / 2000.0;
        assert!((0.005..=0.02).contains(&rate), "column rate {rate}");
    }
}

fn strategy() -> impl Strategy<Value = (u64, usize, f64)> {
    (any::<u64>(), 2usize..7, 0.0f64..0.4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_is_consistent((seed, d, na_rate) in strategy()) {
        let inst = instance(seed, d, 0.3, na_rate);
        let (w, trace) = flag_case_with(&inst.x, &inst.na, &inst.mu, &inst.sigma, &inst.q).unwrap();
        // missing cells stay unflagged-as-outlier and never clean
        for j in 0..d {
            prop_assert!(!inst.na[j] || (w.is_na(j) && !w.is_clean(j)));
        }
        prop_assert!(trace.flagged_order.iter().all(|&(_, dl)| dl >= 0.0));
        prop_assert_eq!(trace.flagged_order.len(), w.n_outliers());
        prop_assert_eq!(trace.terminal_deltas.len(), if w.n_clean() > 0 { w.n_clean() } else { 0 });
        for &(j, dl) in &trace.terminal_deltas {
            prop_assert!(dl < 0.0);
            let fresh = delta(&inst.x, &w, j, &inst.mu, &inst.sigma, inst.q[j]).unwrap();
            prop_assert!((fresh - dl).abs() < 1e-8);
        }
    }

    #[test]
    fn flags_are_affine_invariant((seed, d, na_rate) in strategy(), shift in -50.0f64..50.0, log_scale in -3.0f64..3.0) {
        let inst = instance(seed, d, 0.3, na_rate);
        let c: Vec<f64> = (0..d).map(|j| (log_scale * (j as f64 + 1.0) / d as f64).exp()).collect();
        let x2: Vec<f64> = (0..d).map(|j| c[j] * inst.x[j] + shift).collect();
        let mu2: Vec<f64> = (0..d).map(|j| c[j] * inst.mu[j] + shift).collect();
        let sigma2 = inst.sigma.scale_sym(&c);
        let q2 = penalties(&sigma2);
        let (w1, _) = flag_case_with(&inst.x, &inst.na, &inst.mu, &inst.sigma, &inst.q).unwrap();
        let (w2, _) = flag_case_with(&x2, &inst.na, &mu2, &sigma2, &q2).unwrap();
        prop_assert_eq!(w1, w2);
    }
}
