//! Synthetic compressed-sensing problems and the NRMSE metric.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SblError};
use crate::operators::{DctUndersampled, DenseDictionary, LinearOperator};

/// A sparse ground-truth coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub z_star: Array1<f64>,
    /// Sorted indices of the nonzero entries.
    pub support: Vec<usize>,
}

impl GroundTruth {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SblError::InvalidInput(format!(
                "noise standard deviation must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Number of nonzeros for a sparsity fraction: `fraction * dim` rounded to
/// the nearest integer, at least one.
pub fn sparsity_count(dim: usize, fraction: f64) -> usize {
    ((fraction * dim as f64).round() as usize).clamp(1, dim.max(1))
}

fn random_support<R: Rng + ?Sized>(dim: usize, nnz: usize, rng: &mut R) -> Result<Vec<usize>> {
    if nnz == 0 || nnz > dim {
        return Err(SblError::InvalidInput(format!(
            "sparsity must satisfy 1 <= d <= D, got d = {nnz}, D = {dim}"
        )));
    }
    let mut support = index::sample(rng, dim, nnz).into_vec();
    support.sort_unstable();
    Ok(support)
}

fn signal_with<R, F>(dim: usize, nnz: usize, rng: &mut R, mut value: F) -> Result<GroundTruth>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    let support = random_support(dim, nnz, rng)?;
    let mut z_star = Array1::zeros(dim);
    for &i in &support {
        z_star[i] = value(rng);
    }
    Ok(GroundTruth { z_star, support })
}

/// `nnz` spikes of value `+-1` with equal probability on a uniform random support.
pub fn gen_spike_signal<R: Rng + ?Sized>(
    dim: usize,
    nnz: usize,
    rng: &mut R,
) -> Result<GroundTruth> {
    signal_with(
        dim,
        nnz,
        rng,
        |r| if r.random_bool(0.5) { 1.0 } else { -1.0 },
    )
}

/// `nnz` standard-normal coefficients on a uniform random support.
pub fn gen_dct_coeff_signal<R: Rng + ?Sized>(
    dim: usize,
    nnz: usize,
    rng: &mut R,
) -> Result<GroundTruth> {
    signal_with(dim, nnz, rng, |r| r.sample(StandardNormal))
}

/// `rows x cols` dictionary with iid standard-normal entries.
pub fn gen_dense_dictionary<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<DenseDictionary> {
    if rows == 0 || cols == 0 {
        return Err(SblError::InvalidInput(
            "dictionary dimensions must be positive".into(),
        ));
    }
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let matrix = Array2::from_shape_vec((rows, cols), data).expect("shape matches length");
    DenseDictionary::new(matrix)
}

/// Undersampled inverse DCT observing `rows` of `cols` coordinates, chosen
/// uniformly without replacement.
pub fn gen_dct_dictionary<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<DctUndersampled> {
    if rows == 0 || rows > cols {
        return Err(SblError::InvalidInput(format!(
            "DCT mask must select 1..={cols} coordinates, got {rows}"
        )));
    }
    DctUndersampled::new(cols, index::sample(rng, cols, rows).into_vec())
}

/// `Phi z*` without noise.
pub fn noiseless_observations<O: LinearOperator + ?Sized>(
    phi: &O,
    truth: &GroundTruth,
) -> Result<Array1<f64>> {
    let y = phi.apply(truth.z_star.view().insert_axis(Axis(1)))?;
    Ok(y.column(0).to_owned())
}

/// `y = Phi z* + eps`, `eps ~ N(0, sigma^2 I)`.
pub fn gen_observations<O: LinearOperator + ?Sized, R: Rng + ?Sized>(
    phi: &O,
    truth: &GroundTruth,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let mut y = noiseless_observations(phi, truth)?;
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += noise.sigma() * e;
    }
    Ok(y)
}

/// `||estimate - truth|| / ||truth|| * 100`.
pub fn nrmse(estimate: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(SblError::DimensionMismatch {
            context: "nrmse",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let truth_norm = truth.dot(&truth).sqrt();
    if truth_norm == 0.0 {
        return Err(SblError::InvalidInput(
            "NRMSE undefined for a zero ground truth".into(),
        ));
    }
    let diff = &estimate - &truth;
    Ok(diff.dot(&diff).sqrt() / truth_norm * 100.0)
}
