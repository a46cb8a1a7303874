#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::Side;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn gaussian_vector(len: usize, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.sample(StandardNormal))
}

/// `M^T M / n + I`: eigenvalues roughly in `[1, 5]`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let m = gaussian_matrix(n, n, rng);
    m.t().dot(&m) / n as f64 + Array2::<f64>::eye(n)
}

/// Orthonormal DCT-II matrix built entry by entry, `C[k, n]`.
pub fn dense_dct_matrix(len: usize) -> Array2<f64> {
    let d = len as f64;
    Array2::from_shape_fn((len, len), |(k, n)| {
        let scale = if k == 0 {
            (1.0 / d).sqrt()
        } else {
            (2.0 / d).sqrt()
        };
        scale * (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / d).cos()
    })
}

/// Direct dense SPD solve through faer's Cholesky.
pub fn direct_solve(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let af = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]);
    let mut x = faer::Mat::<f64>::from_fn(b.nrows(), b.ncols(), |i, j| b[[i, j]]);
    af.llt(Side::Lower).expect("SPD").solve_in_place(x.as_mut());
    Array2::from_shape_fn(b.dim(), |(i, j)| x[(i, j)])
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_error(estimate: &Array2<f64>, truth: &Array2<f64>) -> f64 {
    frobenius(&(estimate - truth)) / frobenius(truth)
}

pub fn rel_error_1d(estimate: &Array1<f64>, truth: &Array1<f64>) -> f64 {
    let diff = estimate - truth;
    diff.dot(&diff).sqrt() / truth.dot(truth).sqrt()
}
