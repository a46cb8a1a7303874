mod common;

use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2, Axis};
use proptest::prelude::*;

use cofem::simulate::gen_dct_dictionary;
use cofem::{DctUndersampled, DenseDictionary, Dictionary, GramOperator, LinearOperator};

use common::*;

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn dense_two_by_three_product() {
    let phi = DenseDictionary::new(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
    let out = phi.apply(array![[1.0], [1.0], [1.0]].view()).unwrap();
    assert_eq!(out, array![[6.0], [15.0]]);
}

#[test]
fn full_mask_spike_gives_inverse_dct_column() {
    let phi = DctUndersampled::full(8).unwrap();
    let oracle = dense_dct_matrix(8);
    for j in 0..8 {
        let mut v = Array2::zeros((8, 1));
        v[[j, 0]] = 1.0;
        let out = phi.apply(v.view()).unwrap();
        // The inverse of an orthonormal transform is its transpose.
        for i in 0..8 {
            assert_abs_diff_eq!(out[[i, 0]], oracle[[j, i]], epsilon = 1e-12);
        }
    }
}

#[test]
fn fast_dct_matches_dense_matrix() {
    for len in [1, 2, 3, 7, 8, 31, 64, 100, 256] {
        let phi = DctUndersampled::full(len).unwrap();
        let forward = phi.apply_transpose(Array2::eye(len).view()).unwrap();
        assert!(
            max_abs(&(forward - dense_dct_matrix(len))) < 1e-10,
            "len {len}"
        );
    }
}

#[test]
fn full_dct_is_orthogonal() {
    let phi = DctUndersampled::full(48).unwrap();
    let m = phi.to_dense().unwrap();
    assert!(max_abs(&(m.t().dot(&m) - Array2::<f64>::eye(48))) < 1e-12);
    assert!(max_abs(&(m.dot(&m.t()) - Array2::<f64>::eye(48))) < 1e-12);
}

#[test]
fn undersampled_dct_rows_are_orthonormal() {
    let phi = DctUndersampled::new(8, vec![6, 1, 3, 4]).unwrap();
    let mut r = rng(1);
    let w = gaussian_matrix(4, 5, &mut r);
    let back = phi
        .apply(phi.apply_transpose(w.view()).unwrap().view())
        .unwrap();
    assert!(max_abs(&(back - &w)) < 1e-12);
}

#[test]
fn gram_identity_doubles() {
    let phi = DenseDictionary::identity(5).unwrap();
    let alpha = Array1::ones(5);
    let gram = GramOperator::new(&phi, 1.0, alpha.view()).unwrap();
    let v = gaussian_matrix(5, 2, &mut rng(2));
    assert!(max_abs(&(gram.apply(v.view()).unwrap() - 2.0 * &v)) < 1e-15);
}

#[test]
fn gram_matches_assembly_on_small_dense() {
    let mut r = rng(3);
    let phi = DenseDictionary::new(gaussian_matrix(4, 6, &mut r)).unwrap();
    let alpha = array![0.3, 1.0, 2.5, 7.0, 0.01, 4.0];
    let gram = GramOperator::new(&phi, 0.5, alpha.view()).unwrap();
    let mut assembled = 0.5 * phi.matrix().t().dot(phi.matrix());
    for i in 0..6 {
        assembled[[i, i]] += alpha[i];
    }
    assert!(max_abs(&(gram.to_dense().unwrap() - &assembled)) < 1e-12);
    let v = gaussian_matrix(6, 3, &mut r);
    assert!(rel_error(&gram.apply(v.view()).unwrap(), &assembled.dot(&v)) < 1e-12);
}

#[test]
fn dictionary_enum_forwards() {
    let dct: Dictionary = DctUndersampled::new(16, vec![0, 5, 9]).unwrap().into();
    let dense: Dictionary = DenseDictionary::identity(3).unwrap().into();
    assert_eq!((dct.rows(), dct.cols()), (3, 16));
    assert_eq!(dense.kind_name(), "dense");
    assert_eq!(dct.kind_name(), "dct");
}

fn dense_strategy() -> impl Strategy<Value = (DenseDictionary, u64)> {
    (1usize..12, 1usize..12, any::<u64>()).prop_map(|(rows, cols, seed)| {
        let mut r = rng(seed);
        (
            DenseDictionary::new(gaussian_matrix(rows, cols, &mut r)).unwrap(),
            seed,
        )
    })
}

fn dct_strategy() -> impl Strategy<Value = (DctUndersampled, u64)> {
    (1usize..80, any::<u64>()).prop_flat_map(|(len, seed)| {
        (1..=len).prop_map(move |rows| {
            let mut r = rng(seed);
            (gen_dct_dictionary(rows, len, &mut r).unwrap(), seed)
        })
    })
}

fn adjoint_gap(phi: &dyn LinearOperator, seed: u64) -> f64 {
    let mut r = rng(seed ^ 0xA5A5);
    let x = gaussian_matrix(phi.cols(), 1, &mut r);
    let y = gaussian_matrix(phi.rows(), 1, &mut r);
    let lhs = phi.apply(x.view()).unwrap().column(0).dot(&y.column(0));
    let rhs = x
        .column(0)
        .dot(&phi.apply_transpose(y.view()).unwrap().column(0));
    (lhs - rhs).abs() / (1.0 + lhs.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dense_adjoint_identity((phi, seed) in dense_strategy()) {
        prop_assert!(adjoint_gap(&phi, seed) < 1e-10);
    }

    #[test]
    fn dct_adjoint_identity((phi, seed) in dct_strategy()) {
        prop_assert!(adjoint_gap(&phi, seed) < 1e-10);
    }

    #[test]
    fn dct_rows_orthonormal((phi, _seed) in dct_strategy()) {
        let n = phi.rows();
        let ppt = phi.apply(phi.apply_transpose(Array2::eye(n).view()).unwrap().view()).unwrap();
        prop_assert!(max_abs(&(ppt - Array2::<f64>::eye(n))) < 1e-10);
    }

    #[test]
    fn batch_equals_columnwise((phi, seed) in dct_strategy()) {
        let v = gaussian_matrix(phi.cols(), 3, &mut rng(seed));
        let batch = phi.apply(v.view()).unwrap();
        for (j, col) in v.axis_iter(Axis(1)).enumerate() {
            let single = phi.apply(col.insert_axis(Axis(1))).unwrap();
            for i in 0..phi.rows() {
                prop_assert!((single[[i, 0]] - batch[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_is_linear((phi, seed) in dense_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let u = gaussian_matrix(phi.cols(), 2, &mut r);
        let v = gaussian_matrix(phi.cols(), 2, &mut r);
        let combined = phi.apply((a * &u + b * &v).view()).unwrap();
        let separate = a * phi.apply(u.view()).unwrap() + b * phi.apply(v.view()).unwrap();
        prop_assert!(max_abs(&(combined - separate)) < 1e-9 * (1.0 + max_abs(&u) + max_abs(&v)));
    }

    #[test]
    fn gram_matches_dense_assembly(
        (phi, seed) in dct_strategy(),
        beta in 0.01f64..100.0,
    ) {
        let dim = phi.cols();
        let mut r = rng(seed);
        let alpha = gaussian_vector(dim, &mut r).mapv(|x| x.abs() + 0.1);
        let gram = GramOperator::new(&phi, beta, alpha.view()).unwrap();
        let m = phi.to_dense().unwrap();
        let mut assembled = beta * m.t().dot(&m);
        for i in 0..dim {
            assembled[[i, i]] += alpha[i];
        }
        let v = gaussian_matrix(dim, 2, &mut r);
        prop_assert!(rel_error(&gram.apply(v.view()).unwrap(), &assembled.dot(&v)) < 1e-10);
    }
}
