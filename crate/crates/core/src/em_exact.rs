//! Exact EM with an explicit posterior covariance.
//!
//! This is the `O(D^3)` time, `O(D^2)` memory reference path. It serves as
//! the correctness oracle for covariance-free EM and as the timing baseline.

use std::time::Instant;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::cofem::{check_em_inputs, precision_update, CofemTrace, PrecisionState};
use crate::error::{Result, SblError};
use crate::operators::LinearOperator;
use crate::simulate::nrmse;

/// Largest dimension the dense paths will densify.
pub const DEFAULT_MAX_DIM: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
}

impl ExactPosterior {
    pub fn sigma_diagonal(&self) -> Array1<f64> {
        self.sigma.diag().to_owned()
    }
}

#[derive(Debug, Clone)]
pub struct ExactEmOutcome {
    pub state: PrecisionState,
    pub posterior: ExactPosterior,
    pub trace: CofemTrace,
}

fn guard(what: &str, n: usize, max_dim: usize) -> Result<()> {
    if n > max_dim {
        return Err(SblError::InvalidInput(format!(
            "exact EM refuses to densify {what} = {n} (limit {max_dim})"
        )));
    }
    Ok(())
}

fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Precomputed pieces shared by every E-step on one data set:
/// `beta * Phi^T Phi` and `beta * Phi^T y`.
struct DenseModel {
    scaled_gram: Array2<f64>,
    scaled_phi_t_y: Array1<f64>,
}

impl DenseModel {
    fn new<O: LinearOperator + ?Sized>(
        phi: &O,
        beta: f64,
        y: ArrayView1<'_, f64>,
        max_dim: usize,
    ) -> Result<Self> {
        guard("D", phi.cols(), max_dim)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SblError::InvalidInput(format!(
                "noise precision beta must be positive and finite, got {beta}"
            )));
        }
        check_em_inputs(phi, y, None)?;
        let dense = phi.to_dense()?;
        let mut scaled_gram = dense.t().dot(&dense);
        scaled_gram.mapv_inplace(|x| beta * x);
        let scaled_phi_t_y = dense.t().dot(&y) * beta;
        Ok(Self {
            scaled_gram,
            scaled_phi_t_y,
        })
    }

    fn posterior(
        &self,
        alpha: ArrayView1<'_, f64>,
        iteration: Option<usize>,
    ) -> Result<ExactPosterior> {
        let dim = self.scaled_gram.nrows();
        if alpha.len() != dim {
            return Err(SblError::DimensionMismatch {
                context: "exact posterior alpha",
                expected: dim,
                found: alpha.len(),
            });
        }
        if let Some(i) = alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(SblError::InvalidInput(format!(
                "alpha[{i}] = {} is not positive and finite",
                alpha[i]
            )));
        }
        let mut precision = to_faer(&self.scaled_gram);
        for (i, &a) in alpha.iter().enumerate() {
            precision[(i, i)] += a;
        }
        let llt = precision.llt(Side::Lower).map_err(|e| match e {
            faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index } => {
                SblError::Factorization {
                    iteration,
                    pivot: index,
                }
            }
        })?;

        let mut rhs = Mat::from_fn(dim, 1, |i, _| self.scaled_phi_t_y[i]);
        llt.solve_in_place(rhs.as_mut());
        let mu = Array1::from_shape_fn(dim, |i| rhs[(i, 0)]);

        let inv = llt.inverse();
        let sigma = Array2::from_shape_fn((dim, dim), |(i, j)| inv[(i, j)]);
        Ok(ExactPosterior { mu, sigma })
    }
}

/// `mu = beta Sigma Phi^T y`, `Sigma = (beta Phi^T Phi + diag(alpha))^-1`,
/// computed through a Cholesky factorization of the precision matrix.
pub fn exact_posterior<O: LinearOperator + ?Sized>(
    phi: &O,
    beta: f64,
    alpha: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<ExactPosterior> {
    DenseModel::new(phi, beta, y, DEFAULT_MAX_DIM)?.posterior(alpha, None)
}

/// Classic EM for `t_em` iterations from `alpha = 1`, using the same floor
/// and clamp as the covariance-free M-step.
pub fn em_exact_run<O: LinearOperator + ?Sized>(
    y: ArrayView1<'_, f64>,
    phi: &O,
    beta: f64,
    t_em: usize,
    truth: Option<ArrayView1<'_, f64>>,
) -> Result<ExactEmOutcome> {
    em_exact_run_with_limit(y, phi, beta, t_em, truth, DEFAULT_MAX_DIM)
}

pub fn em_exact_run_with_limit<O: LinearOperator + ?Sized>(
    y: ArrayView1<'_, f64>,
    phi: &O,
    beta: f64,
    t_em: usize,
    truth: Option<ArrayView1<'_, f64>>,
    max_dim: usize,
) -> Result<ExactEmOutcome> {
    if t_em == 0 {
        return Err(SblError::InvalidInput("T_em must be at least 1".into()));
    }
    check_em_inputs(phi, y, truth)?;
    // The Gram product is part of the algorithm's cost, so it is timed with
    // the first iteration.
    let start = Instant::now();
    let model = DenseModel::new(phi, beta, y, max_dim)?;
    let mut setup = start.elapsed().as_secs_f64();

    let mut state = PrecisionState::initial(phi.cols());
    let mut trace = CofemTrace::default();
    let mut last = None;
    for t in 1..=t_em {
        let start = Instant::now();
        let posterior = model.posterior(state.alpha.view(), Some(t))?;
        state = PrecisionState {
            alpha: precision_update(posterior.mu.view(), posterior.sigma.diag()),
            iteration: state.iteration + 1,
        };
        let elapsed = start.elapsed().as_secs_f64() + setup;
        setup = 0.0;
        let err = truth.map(|z| nrmse(posterior.mu.view(), z)).transpose()?;
        trace.push(t, &state.alpha, elapsed, err, None);
        last = Some(posterior);
    }
    Ok(ExactEmOutcome {
        state,
        posterior: last.expect("t_em >= 1"),
        trace,
    })
}

/// `log p(y | alpha)` for `y ~ N(0, C)`, `C = I / beta + Phi diag(alpha)^-1 Phi^T`.
pub fn log_evidence<O: LinearOperator + ?Sized>(
    y: ArrayView1<'_, f64>,
    phi: &O,
    beta: f64,
    alpha: ArrayView1<'_, f64>,
) -> Result<f64> {
    let n = phi.rows();
    guard("N", n, DEFAULT_MAX_DIM)?;
    check_em_inputs(phi, y, None)?;
    if alpha.len() != phi.cols() {
        return Err(SblError::DimensionMismatch {
            context: "log evidence alpha",
            expected: phi.cols(),
            found: alpha.len(),
        });
    }
    if !(beta > 0.0 && beta.is_finite()) || alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(SblError::InvalidInput(
            "beta and alpha must be positive and finite".into(),
        ));
    }
    let dense = phi.to_dense()?;
    let mut scaled = dense.clone();
    for (mut col, &a) in scaled.axis_iter_mut(Axis(1)).zip(alpha.iter()) {
        col /= a;
    }
    let mut cov = scaled.dot(&dense.t());
    for i in 0..n {
        cov[[i, i]] += 1.0 / beta;
    }
    let llt = to_faer(&cov).llt(Side::Lower).map_err(|e| match e {
        faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index } => {
            SblError::Factorization {
                iteration: None,
                pivot: index,
            }
        }
    })?;
    let l = llt.L();
    let log_det: f64 = (0..n).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let mut solved = Mat::from_fn(n, 1, |i, _| y[i]);
    llt.solve_in_place(solved.as_mut());
    let quad: f64 = (0..n).map(|i| y[i] * solved[(i, 0)]).sum();
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}
