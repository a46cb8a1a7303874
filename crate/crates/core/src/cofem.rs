//! Covariance-free EM.
//!
//! Each E-step solves `A [x_1 .. x_K | mu] = [p_1 .. p_K | beta Phi^T y]`
//! with `A = beta Phi^T Phi + diag(alpha)` by batched CG. The last column is
//! the posterior mean; the probe columns give `x_k = Sigma p_k`, from which
//! the Rademacher rule estimates `diag(Sigma)`. The M-step then sets
//! `alpha = 1 / (mu^2 + s)`. `Sigma` is never formed.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, Axis, ShapeBuilder};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::operators::{GramOperator, LinearOperator};
use crate::probe::{draw_probes, estimate_diagonal_rademacher};
use crate::simulate::nrmse;
use crate::solver::{cg_solve, CgReport, CgSettings};

/// Upper clamp on prior precisions. Coefficients that reach it are
/// numerically pruned.
pub const ALPHA_MAX: f64 = 1e12;

/// Floor on `mu_i^2 + s_i` before inversion; `s_i` can be slightly negative
/// from estimation noise.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// The prior precisions being optimized, with the number of M-steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionState {
    pub alpha: Array1<f64>,
    pub iteration: usize,
}

impl PrecisionState {
    /// `alpha = 1`, the starting point of EM.
    pub fn initial(dim: usize) -> Self {
        Self {
            alpha: Array1::ones(dim),
            iteration: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mu: Array1<f64>,
    pub diag_estimate: Array1<f64>,
    pub cg_report: CgReport,
}

/// One EM iteration as seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// NRMSE (percent) of this iteration's posterior mean, when the truth is known.
    pub nrmse_pct: Option<f64>,
    pub cg_iterations: usize,
    pub cg_converged: bool,
    pub cg_relative_residual: f64,
    /// E-step plus M-step time.
    pub wall_time_s: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Number of coefficients whose precision sits at [`ALPHA_MAX`].
    pub pruned: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CofemTrace {
    pub records: Vec<IterationRecord>,
}

impl CofemTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_time_s(&self) -> f64 {
        self.records.iter().map(|r| r.wall_time_s).sum()
    }

    pub fn total_cg_iterations(&self) -> usize {
        self.records.iter().map(|r| r.cg_iterations).sum()
    }

    pub fn nrmse_curve(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.nrmse_pct).collect()
    }

    pub(crate) fn push(
        &mut self,
        iteration: usize,
        alpha: &Array1<f64>,
        wall_time_s: f64,
        nrmse_pct: Option<f64>,
        cg: Option<&CgReport>,
    ) {
        let alpha_min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        let alpha_max = alpha.iter().copied().fold(0.0, f64::max);
        self.records.push(IterationRecord {
            iteration,
            nrmse_pct,
            cg_iterations: cg.map_or(0, |c| c.iterations_used),
            cg_converged: cg.is_none_or(|c| c.converged),
            cg_relative_residual: cg.map_or(0.0, |c| c.final_relative_residual),
            wall_time_s,
            alpha_min,
            alpha_max,
            pruned: alpha.iter().filter(|&&a| a >= ALPHA_MAX).count(),
        });
    }
}

/// Output of a full CoFEM run: final precisions, the last E-step, and the trace.
#[derive(Debug, Clone)]
pub struct CofemOutcome {
    pub state: PrecisionState,
    pub posterior: PosteriorSummary,
    pub trace: CofemTrace,
}

/// `alpha_i = min(1 / max(mu_i^2 + v_i, floor), ALPHA_MAX)`.
pub fn precision_update(mu: ArrayView1<'_, f64>, variance: ArrayView1<'_, f64>) -> Array1<f64> {
    ndarray::Zip::from(mu)
        .and(variance)
        .map_collect(|&m, &v| (1.0 / (m * m + v).max(DENOMINATOR_FLOOR)).min(ALPHA_MAX))
}

pub(crate) fn check_em_inputs<O: LinearOperator + ?Sized>(
    phi: &O,
    y: ArrayView1<'_, f64>,
    truth: Option<ArrayView1<'_, f64>>,
) -> Result<()> {
    if y.len() != phi.rows() {
        return Err(SblError::DimensionMismatch {
            context: "observations",
            expected: phi.rows(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SblError::InvalidInput(
            "observations contain non-finite values".into(),
        ));
    }
    if let Some(t) = truth {
        if t.len() != phi.cols() {
            return Err(SblError::DimensionMismatch {
                context: "ground truth",
                expected: phi.cols(),
                found: t.len(),
            });
        }
    }
    Ok(())
}

/// Simplified E-step: draws `k` fresh probes and solves the `k + 1` systems.
///
/// A CG run that hits its iteration cap is not an error; the report in the
/// returned summary records it.
pub fn cofem_e_step<O, R>(
    phi: &O,
    beta: f64,
    state: &PrecisionState,
    y: ArrayView1<'_, f64>,
    k: usize,
    settings: &CgSettings,
    rng: &mut R,
) -> Result<PosteriorSummary>
where
    O: LinearOperator + ?Sized,
    R: Rng + ?Sized,
{
    check_em_inputs(phi, y, None)?;
    let gram = GramOperator::new(phi, beta, state.alpha.view())?;
    let dim = gram.dim();
    let probes = draw_probes(dim, k, rng)?;

    let mut rhs = Array2::<f64>::zeros((dim, k + 1).f());
    rhs.slice_mut(s![.., ..k]).assign(probes.probes());
    let phi_t_y = phi.apply_transpose(y.insert_axis(Axis(1)))?;
    rhs.column_mut(k)
        .assign(&(phi_t_y.column(0).to_owned() * beta));

    let (solution, cg_report) = cg_solve(|v| gram.apply(v), rhs.view(), settings)?;

    let mu = solution.column(k).to_owned();
    let diag_estimate = estimate_diagonal_rademacher(&probes, solution.slice(s![.., ..k]))?;
    Ok(PosteriorSummary {
        mu,
        diag_estimate,
        cg_report,
    })
}

/// Covariance-free M-step: `alpha_new = 1 / (mu^2 + s)` with floor and clamp.
pub fn cofem_m_step(summary: &PosteriorSummary, previous: &PrecisionState) -> PrecisionState {
    PrecisionState {
        alpha: precision_update(summary.mu.view(), summary.diag_estimate.view()),
        iteration: previous.iteration + 1,
    }
}

/// Runs exactly `t_em` E/M iterations from `alpha = 1`.
///
/// The returned posterior is the one computed by the last E-step, i.e. it was
/// produced under the precisions before the final M-step.
#[allow(clippy::too_many_arguments)]
pub fn cofem_run<O, R>(
    y: ArrayView1<'_, f64>,
    phi: &O,
    beta: f64,
    t_em: usize,
    k: usize,
    settings: &CgSettings,
    rng: &mut R,
    truth: Option<ArrayView1<'_, f64>>,
) -> Result<CofemOutcome>
where
    O: LinearOperator + ?Sized,
    R: Rng + ?Sized,
{
    if t_em == 0 {
        return Err(SblError::InvalidInput("T_em must be at least 1".into()));
    }
    check_em_inputs(phi, y, truth)?;
    let mut state = PrecisionState::initial(phi.cols());
    let mut trace = CofemTrace::default();
    let mut last = None;
    for t in 1..=t_em {
        let start = Instant::now();
        let summary = cofem_e_step(phi, beta, &state, y, k, settings, rng)?;
        state = cofem_m_step(&summary, &state);
        let elapsed = start.elapsed().as_secs_f64();
        let err = truth.map(|z| nrmse(summary.mu.view(), z)).transpose()?;
        trace.push(t, &state.alpha, elapsed, err, Some(&summary.cg_report));
        last = Some(summary);
    }
    Ok(CofemOutcome {
        state,
        posterior: last.expect("t_em >= 1"),
        trace,
    })
}
