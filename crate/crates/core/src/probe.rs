//! Rademacher probes and stochastic diagonal estimation.
//!
//! For any square `M` and probes `p_k` with iid zero-mean entries,
//! `(sum_k p_k * M p_k) / (sum_k p_k * p_k)` (elementwise) is an unbiased
//! estimate of `diag(M)`. With `+-1` entries the denominator is exactly `K`.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SblError};

/// `D x K` matrix of iid fair `+-1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBatch {
    probes: Array2<f64>,
    seed: Option<u64>,
}

impl ProbeBatch {
    pub fn probes(&self) -> &Array2<f64> {
        &self.probes
    }

    pub fn dim(&self) -> usize {
        self.probes.nrows()
    }

    pub fn count(&self) -> usize {
        self.probes.ncols()
    }

    /// Seed the batch was drawn from, when drawn via [`ProbeBatch::from_seed`].
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn from_seed(dim: usize, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = draw_probes(dim, count, &mut rng)?;
        batch.seed = Some(seed);
        Ok(batch)
    }
}

/// Draws `count` Rademacher probes of length `dim`, column by column.
pub fn draw_probes<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Result<ProbeBatch> {
    if dim == 0 {
        return Err(SblError::InvalidInput(
            "probe dimension must be positive".into(),
        ));
    }
    if count == 0 {
        return Err(SblError::InvalidInput(
            "probe count K must be positive".into(),
        ));
    }
    let mut probes = Array2::<f64>::zeros((dim, count).f());
    let mut bits = 0u64;
    let mut left = 0u32;
    for mut col in probes.axis_iter_mut(Axis(1)) {
        for v in col.iter_mut() {
            if left == 0 {
                bits = rng.next_u64();
                left = 64;
            }
            *v = if bits & 1 == 1 { 1.0 } else { -1.0 };
            bits >>= 1;
            left -= 1;
        }
    }
    Ok(ProbeBatch { probes, seed: None })
}

/// `s = (1/K) sum_k p_k * x_k` where `x_k = M p_k`.
pub fn estimate_diagonal_rademacher(
    batch: &ProbeBatch,
    products: ArrayView2<'_, f64>,
) -> Result<Array1<f64>> {
    let p = batch.probes();
    if products.dim() != p.dim() {
        return Err(SblError::DimensionMismatch {
            context: "rademacher diagonal estimate",
            expected: p.len(),
            found: products.len(),
        });
    }
    let mut s = Array1::<f64>::zeros(p.nrows());
    for (pk, xk) in p.axis_iter(Axis(1)).zip(products.axis_iter(Axis(1))) {
        Zip::from(&mut s)
            .and(&pk)
            .and(&xk)
            .for_each(|s, &p, &x| *s += p * x);
    }
    s /= p.ncols() as f64;
    Ok(s)
}

/// General form of the estimator for arbitrary probe distributions:
/// `(sum_k p_k * (M p_k)) / (sum_k p_k * p_k)`, elementwise.
pub fn estimate_diagonal_general(
    probes: ArrayView2<'_, f64>,
    products: ArrayView2<'_, f64>,
) -> Result<Array1<f64>> {
    if probes.dim() != products.dim() {
        return Err(SblError::DimensionMismatch {
            context: "general diagonal estimate",
            expected: probes.len(),
            found: products.len(),
        });
    }
    if probes.ncols() == 0 {
        return Err(SblError::InvalidInput(
            "at least one probe is required".into(),
        ));
    }
    let num = (&probes * &products).sum_axis(Axis(1));
    let den = (&probes * &probes).sum_axis(Axis(1));
    if let Some(index) = den.iter().position(|&d| d == 0.0) {
        return Err(SblError::DegenerateProbe { index });
    }
    Ok(num / den)
}
