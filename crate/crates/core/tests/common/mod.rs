#![allow(dead_code)]

use cellda_core::linalg::Cholesky;
use cellda_core::{DataSet, Labels, Matrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `B Bᵀ / d + 0.2 I` with Gaussian `B`, then rescaled to random variances.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let b: Vec<f64> = (0..d * d).map(|_| normal(rng)).collect();
    let scale: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..3.0)).collect();
    Matrix::from_fn(d, d, |i, j| {
        let s: f64 = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>() / d as f64;
        (s + if i == j { 0.2 } else { 0.0 }) * scale[i] * scale[j]
    })
}

pub fn draw(rng: &mut ChaCha8Rng, mu: &[f64], chol: &Cholesky) -> Vec<f64> {
    let d = mu.len();
    let z: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let l = chol.factor();
    (0..d).map(|i| mu[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>()).collect()
}

pub fn mvn(rng: &mut ChaCha8Rng, mu: &[f64], sigma: &Matrix, n: usize) -> Vec<Vec<f64>> {
    let chol = Cholesky::new(sigma).unwrap();
    (0..n).map(|_| draw(rng, mu, &chol)).collect()
}

pub fn na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `(−c)^{|i−j|}`.
pub fn a_matrix(c: f64, d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| (-c).powi(i.abs_diff(j) as i32))
}

pub fn labeled(rows: &[Vec<f64>], ids: Vec<usize>) -> DataSet {
    let g = ids.iter().copied().max().unwrap();
    let names = (1..=g).map(|k| format!("c{k}")).collect();
    DataSet::from_rows(rows).unwrap().with_labels(Labels::new(ids, names).unwrap()).unwrap()
}

/// Gaussian classes with the given centers and scatters, `n` rows each.
pub fn classes(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], scatters: &[Matrix], n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (g, (mu, s)) in centers.iter().zip(scatters).enumerate() {
        rows.extend(mvn(rng, mu, s, n));
        ids.extend(std::iter::repeat_n(g + 1, n));
    }
    (rows, ids)
}

/// Replaces a fraction `eps` of the cells of `rows` by `mu_j + gamma·√Σ_jj`
/// and returns the replaced positions.
pub fn contaminate(rng: &mut ChaCha8Rng, rows: &mut [Vec<f64>], mu: &[f64], sigma: &Matrix, eps: f64, gamma: f64) -> Vec<(usize, usize)> {
    let n = rows.len();
    let d = mu.len();
    let k = (eps * (n * d) as f64).round() as usize;
    let picked = rand::seq::index::sample(rng, n * d, k);
    let mut out = Vec::with_capacity(k);
    for c in picked.into_iter() {
        let (i, j) = (c / d, c % d);
        rows[i][j] = mu[j] + gamma * sigma[(j, j)].sqrt();
        out.push((i, j));
    }
    out
}
