//! Batched conjugate gradient for symmetric positive-definite systems.
//!
//! Solves `A X = B` for all columns of `B` at once. The operator is only ever
//! applied to matrices, so a matrix-free `A` pays one batched application per
//! iteration. Each column runs its own CG recurrence; a column is frozen once
//! its relative residual drops to the tolerance and leaves the batch.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// Stopping rule: relative residual tolerance and an iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl CgSettings {
    pub fn new(tolerance: f64, max_iterations: usize) -> Result<Self> {
        let settings = Self {
            tolerance,
            max_iterations,
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(SblError::InvalidInput(format!(
                "CG tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(SblError::InvalidInput(
                "CG max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub iterations_used: usize,
    /// Largest per-column relative residual `||r_j|| / ||b_j||`.
    pub final_relative_residual: f64,
    /// `||A X - B||_F / ||B||_F`, never larger than `final_relative_residual`.
    pub frobenius_relative_residual: f64,
    pub converged: bool,
    /// Iterations each column ran before it was frozen.
    pub column_iterations: Vec<usize>,
}

/// Runs CG from a zero initial guess on every column of `b`.
///
/// `apply_a` receives a `D x a` batch holding the search directions of the
/// `a` still-active columns and must return `A` applied to it. Residuals are
/// the recurrence residuals. When the iteration cap is hit the last iterate is
/// returned, which is also the best one in the `A`-norm.
pub fn cg_solve<F>(
    mut apply_a: F,
    b: ArrayView2<'_, f64>,
    settings: &CgSettings,
) -> Result<(Array2<f64>, CgReport)>
where
    F: FnMut(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
{
    settings.validate()?;
    let (dim, width) = b.dim();
    let tolerances = vec![settings.tolerance; width];
    let max_iterations = settings.max_iterations;
    if dim == 0 || width == 0 {
        return Err(SblError::InvalidInput(
            "right-hand side must be non-empty".into(),
        ));
    }
    if let Some(((i, j), _)) = b.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(SblError::NumericalBreakdown {
            column: j,
            iteration: 0,
            reason: format!("non-finite right-hand side entry at row {i}"),
        });
    }

    let b_norms: Array1<f64> = b
        .axis_iter(Axis(1))
        .map(|col| col.dot(&col).sqrt())
        .collect();
    let b_frob = b_norms.dot(&b_norms).sqrt();

    let mut x = Array2::<f64>::zeros((dim, width).f());
    if b_frob == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations_used: 0,
                final_relative_residual: 0.0,
                frobenius_relative_residual: 0.0,
                converged: true,
                column_iterations: vec![0; width],
            },
        ));
    }

    let mut r = Array2::<f64>::zeros((dim, width).f());
    r.assign(&b);
    let mut p = r.clone();
    let mut rr: Array1<f64> = &b_norms * &b_norms;
    let mut column_iterations = vec![0usize; width];

    let mut active: Vec<usize> = (0..width)
        .filter(|&j| rr[j].sqrt() > tolerances[j] * b_norms[j])
        .collect();

    let mut iterations_used = 0;
    while !active.is_empty() && iterations_used < max_iterations {
        iterations_used += 1;
        let ap = if active.len() == width {
            apply_a(p.view())?
        } else {
            apply_a(p.select(Axis(1), &active).view())?
        };
        if ap.dim() != (dim, active.len()) {
            return Err(SblError::DimensionMismatch {
                context: "cg operator output",
                expected: dim * active.len(),
                found: ap.len(),
            });
        }

        let mut still_active = Vec::with_capacity(active.len());
        for (slot, &j) in active.iter().enumerate() {
            let ap_j = ap.column(slot);
            let pap = p.column(j).dot(&ap_j);
            if !pap.is_finite() || pap <= 0.0 {
                return Err(SblError::NumericalBreakdown {
                    column: j,
                    iteration: iterations_used,
                    reason: format!("curvature p^T A p = {pap} is not positive and finite"),
                });
            }
            let step = rr[j] / pap;
            x.column_mut(j).scaled_add(step, &p.column(j));
            r.column_mut(j).scaled_add(-step, &ap_j);
            let rr_new = r.column(j).dot(&r.column(j));
            if !rr_new.is_finite() {
                return Err(SblError::NumericalBreakdown {
                    column: j,
                    iteration: iterations_used,
                    reason: "non-finite residual".into(),
                });
            }
            column_iterations[j] = iterations_used;
            if rr_new.sqrt() <= tolerances[j] * b_norms[j] {
                rr[j] = rr_new;
                continue;
            }
            let beta = rr_new / rr[j];
            rr[j] = rr_new;
            let (r_j, mut p_j) = (r.column(j), p.column_mut(j));
            p_j.zip_mut_with(&r_j, |pv, &rv| *pv = rv + beta * *pv);
            still_active.push(j);
        }
        active = still_active;
    }

    let rel: Vec<f64> = (0..width)
        .map(|j| {
            if b_norms[j] == 0.0 {
                0.0
            } else {
                rr[j].sqrt() / b_norms[j]
            }
        })
        .collect();
    let final_relative_residual = rel.iter().copied().fold(0.0, f64::max);
    let converged = rel.iter().zip(&tolerances).all(|(r, t)| r <= t);
    let frobenius_relative_residual = rr.sum().sqrt() / b_frob;

    Ok((
        x,
        CgReport {
            iterations_used,
            final_relative_residual,
            frobenius_relative_residual,
            converged,
            column_iterations,
        },
    ))
}
