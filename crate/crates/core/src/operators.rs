//! Matrix-free dictionaries and the regularized Gram operator.
//!
//! A dictionary maps sparse coefficients in `R^D` to observations in `R^N`.
//! Every operator acts on batches: a `D x m` matrix whose columns are
//! independent vectors. Two concrete dictionaries are provided, a dense
//! Gaussian matrix and an undersampled orthonormal inverse DCT.

use std::fmt;
use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder, Zip};
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Result, SblError};

/// A linear map `Phi: R^cols -> R^rows` that can be applied forward and
/// transposed to column batches.
pub trait LinearOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `Phi * V` for a `cols x m` batch.
    fn apply(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// `Phi^T * W` for a `rows x m` batch.
    fn apply_transpose(&self, w: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Materializes the operator as a dense `rows x cols` matrix.
    fn to_dense(&self) -> Result<Array2<f64>> {
        self.apply(Array2::eye(self.cols()).view())
    }
}

fn check_rows(context: &'static str, expected: usize, v: &ArrayView2<'_, f64>) -> Result<()> {
    if v.nrows() != expected {
        return Err(SblError::DimensionMismatch {
            context,
            expected,
            found: v.nrows(),
        });
    }
    if v.ncols() == 0 {
        return Err(SblError::InvalidInput(format!(
            "{context}: batch must have at least one column"
        )));
    }
    Ok(())
}

/// Explicit `N x D` dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDictionary {
    matrix: Array2<f64>,
}

impl DenseDictionary {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(SblError::InvalidInput(
                "dense dictionary must have at least one row and one column".into(),
            ));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(SblError::InvalidInput(
                "dense dictionary contains non-finite entries".into(),
            ));
        }
        let matrix = if matrix.is_standard_layout() {
            matrix
        } else {
            matrix.as_standard_layout().into_owned()
        };
        Ok(Self { matrix })
    }

    fn faer_view(&self) -> MatRef<'_, f64> {
        let slice = self.matrix.as_slice().expect("stored in row-major layout");
        MatRef::from_row_major_slice(slice, self.matrix.nrows(), self.matrix.ncols())
    }

    /// The all-zero `rows x cols` dictionary.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(Array2::eye(dim))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// `lhs * rhs` as a column-major array.
fn faer_product(lhs: MatRef<'_, f64>, rhs: ArrayView2<'_, f64>) -> Array2<f64> {
    let (inner, width) = rhs.dim();
    let rhs_owned;
    let rhs_slice = match rhs.as_slice_memory_order() {
        Some(slice) if rhs.t().is_standard_layout() => slice,
        _ => {
            rhs_owned = rhs.t().as_standard_layout().into_owned();
            rhs_owned.as_slice().expect("freshly laid out")
        }
    };
    let rhs = MatRef::from_column_major_slice(rhs_slice, inner, width);
    let mut out = vec![0.0; lhs.nrows() * width];
    matmul(
        MatMut::from_column_major_slice_mut(&mut out, lhs.nrows(), width),
        Accum::Replace,
        lhs,
        rhs,
        1.0,
        Par::Seq,
    );
    Array2::from_shape_vec((lhs.nrows(), width).f(), out).expect("shape matches buffer")
}

impl LinearOperator for DenseDictionary {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_rows("dense apply", self.cols(), &v)?;
        Ok(faer_product(self.faer_view(), v))
    }

    fn apply_transpose(&self, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_rows("dense apply_transpose", self.rows(), &w)?;
        Ok(faer_product(self.faer_view().transpose(), w))
    }

    fn to_dense(&self) -> Result<Array2<f64>> {
        Ok(self.matrix.clone())
    }
}

/// Inverse orthonormal DCT-II followed by selection of the masked
/// coordinates. With the orthonormal convention the rows of this operator
/// are orthonormal, so `Phi * Phi^T = I_N`.
#[derive(Clone)]
pub struct DctUndersampled {
    len: usize,
    mask: Vec<usize>,
    dct: Arc<dyn TransformType2And3<f64>>,
}

impl fmt::Debug for DctUndersampled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DctUndersampled")
            .field("len", &self.len)
            .field("mask", &self.mask)
            .finish()
    }
}

impl PartialEq for DctUndersampled {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.mask == other.mask
    }
}

impl DctUndersampled {
    /// `mask` must hold distinct indices in `[0, len)`; it is sorted here.
    pub fn new(len: usize, mut mask: Vec<usize>) -> Result<Self> {
        if len == 0 {
            return Err(SblError::InvalidInput("DCT length must be positive".into()));
        }
        if mask.is_empty() || mask.len() > len {
            return Err(SblError::InvalidInput(format!(
                "observation mask must select between 1 and {len} coordinates, got {}",
                mask.len()
            )));
        }
        mask.sort_unstable();
        if let Some(&bad) = mask.iter().find(|&&i| i >= len) {
            return Err(SblError::InvalidInput(format!(
                "mask index {bad} out of range for length {len}"
            )));
        }
        if mask.windows(2).any(|w| w[0] == w[1]) {
            return Err(SblError::InvalidInput(
                "mask indices must be distinct".into(),
            ));
        }
        let dct = DctPlanner::new().plan_dct2(len);
        Ok(Self { len, mask, dct })
    }

    /// Full mask: the square orthonormal inverse DCT.
    pub fn full(len: usize) -> Result<Self> {
        Self::new(len, (0..len).collect())
    }

    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn scale(&self, k: usize) -> f64 {
        let n = self.len as f64;
        if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        }
    }

    /// In-place orthonormal DCT-II.
    pub fn forward_in_place(&self, buf: &mut [f64], scratch: &mut [f64]) {
        self.dct.process_dct2_with_scratch(buf, scratch);
        for (k, x) in buf.iter_mut().enumerate() {
            *x *= self.scale(k);
        }
    }

    /// In-place orthonormal inverse DCT-II (a scaled DCT-III).
    pub fn inverse_in_place(&self, buf: &mut [f64], scratch: &mut [f64]) {
        for (k, x) in buf.iter_mut().enumerate() {
            *x *= self.scale(k);
        }
        // DCT-III as implemented halves the zeroth term.
        buf[0] *= 2.0;
        self.dct.process_dct3_with_scratch(buf, scratch);
    }
}

impl LinearOperator for DctUndersampled {
    fn rows(&self) -> usize {
        self.mask.len()
    }

    fn cols(&self) -> usize {
        self.len
    }

    fn apply(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_rows("dct apply", self.cols(), &v)?;
        let m = v.ncols();
        let mut out = Array2::zeros((self.rows(), m).f());
        let mut buf = vec![0.0; self.len];
        let mut scratch = vec![0.0; self.dct.get_scratch_len()];
        for (col, mut dst) in v.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
            buf.iter_mut().zip(col.iter()).for_each(|(b, &x)| *b = x);
            self.inverse_in_place(&mut buf, &mut scratch);
            for (d, &idx) in dst.iter_mut().zip(&self.mask) {
                *d = buf[idx];
            }
        }
        Ok(out)
    }

    fn apply_transpose(&self, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_rows("dct apply_transpose", self.rows(), &w)?;
        let m = w.ncols();
        let mut out = Array2::zeros((self.cols(), m).f());
        let mut buf = vec![0.0; self.len];
        let mut scratch = vec![0.0; self.dct.get_scratch_len()];
        for (col, mut dst) in w.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
            buf.fill(0.0);
            for (&x, &idx) in col.iter().zip(&self.mask) {
                buf[idx] = x;
            }
            self.forward_in_place(&mut buf, &mut scratch);
            dst.iter_mut().zip(&buf).for_each(|(d, &b)| *d = b);
        }
        Ok(out)
    }
}

/// The dictionary kinds used by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Dictionary {
    Dense(DenseDictionary),
    DctUndersampled(DctUndersampled),
}

impl Dictionary {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Dictionary::Dense(_) => "dense",
            Dictionary::DctUndersampled(_) => "dct",
        }
    }

    fn inner(&self) -> &dyn LinearOperator {
        match self {
            Dictionary::Dense(d) => d,
            Dictionary::DctUndersampled(d) => d,
        }
    }
}

impl From<DenseDictionary> for Dictionary {
    fn from(d: DenseDictionary) -> Self {
        Dictionary::Dense(d)
    }
}

impl From<DctUndersampled> for Dictionary {
    fn from(d: DctUndersampled) -> Self {
        Dictionary::DctUndersampled(d)
    }
}

impl LinearOperator for Dictionary {
    fn rows(&self) -> usize {
        self.inner().rows()
    }

    fn cols(&self) -> usize {
        self.inner().cols()
    }

    fn apply(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.inner().apply(v)
    }

    fn apply_transpose(&self, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.inner().apply_transpose(w)
    }

    fn to_dense(&self) -> Result<Array2<f64>> {
        self.inner().to_dense()
    }
}

/// `A = beta * Phi^T Phi + diag(alpha)`, applied without forming `A`.
///
/// With `beta > 0` and every `alpha_i > 0` this is symmetric positive
/// definite, which is what the CG solver requires.
#[derive(Clone, Copy)]
pub struct GramOperator<'a, O: LinearOperator + ?Sized> {
    base: &'a O,
    beta: f64,
    alpha: ArrayView1<'a, f64>,
}

impl<'a, O: LinearOperator + ?Sized> GramOperator<'a, O> {
    pub fn new(base: &'a O, beta: f64, alpha: ArrayView1<'a, f64>) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SblError::InvalidInput(format!(
                "noise precision beta must be positive and finite, got {beta}"
            )));
        }
        if alpha.len() != base.cols() {
            return Err(SblError::DimensionMismatch {
                context: "gram operator alpha",
                expected: base.cols(),
                found: alpha.len(),
            });
        }
        if let Some(i) = alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(SblError::InvalidInput(format!(
                "alpha[{i}] = {} is not positive and finite",
                alpha[i]
            )));
        }
        Ok(Self { base, beta, alpha })
    }

    pub fn dim(&self) -> usize {
        self.base.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> ArrayView1<'a, f64> {
        self.alpha
    }

    /// `A * V`, using one forward and one transposed application of the base.
    pub fn apply(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_rows("gram apply", self.dim(), &v)?;
        let phi_v = self.base.apply(v)?;
        let mut out = self.base.apply_transpose(phi_v.view())?;
        let beta = self.beta;
        for (mut out_col, v_col) in out.axis_iter_mut(Axis(1)).zip(v.axis_iter(Axis(1))) {
            Zip::from(&mut out_col)
                .and(&v_col)
                .and(&self.alpha)
                .for_each(|o, &x, &a| *o = beta * *o + a * x);
        }
        Ok(out)
    }

    /// Dense `D x D` assembly of `A`. Intended for small problems and tests.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        let phi = self.base.to_dense()?;
        let mut a = phi.t().dot(&phi);
        a.mapv_inplace(|x| self.beta * x);
        for (i, &ai) in self.alpha.iter().enumerate() {
            a[[i, i]] += ai;
        }
        Ok(a)
    }
}
