mod common;

use ndarray::{Array2, Axis};
use proptest::prelude::*;

use cofem::{cg_solve, CgSettings, SblError};

use common::*;

fn matrix_op(
    a: &Array2<f64>,
) -> impl FnMut(ndarray::ArrayView2<'_, f64>) -> cofem::Result<Array2<f64>> + '_ {
    move |v| Ok(a.dot(&v))
}

#[test]
fn random_spd_eight_by_eight() {
    let mut r = rng(11);
    let m = gaussian_matrix(8, 8, &mut r);
    let a = m.t().dot(&m) + Array2::<f64>::eye(8);
    let b = gaussian_matrix(8, 3, &mut r);
    let settings = CgSettings::new(1e-10, 64).unwrap();
    let (x, report) = cg_solve(matrix_op(&a), b.view(), &settings).unwrap();
    assert!(report.converged);
    assert!(report.iterations_used <= 64);
    assert!(rel_error(&x, &direct_solve(&a, &b)) < 1e-8);
}

#[test]
fn a_norm_error_is_non_increasing() {
    let mut r = rng(12);
    let m = gaussian_matrix(30, 30, &mut r);
    let a = m.t().dot(&m) + 0.1 * Array2::<f64>::eye(30);
    let b = gaussian_matrix(30, 1, &mut r);
    let exact = direct_solve(&a, &b);
    let a_norm = |x: &Array2<f64>| {
        let e = x - &exact;
        e.column(0).dot(&a.dot(&e).column(0)).sqrt()
    };
    let mut previous = a_norm(&Array2::zeros((30, 1)));
    for cap in 1..=30 {
        // Zero starts make the capped runs successive iterates of one recurrence.
        let settings = CgSettings::new(1e-15, cap).unwrap();
        let (x, _) = cg_solve(matrix_op(&a), b.view(), &settings).unwrap();
        let current = a_norm(&x);
        assert!(
            current <= previous * (1.0 + 1e-10),
            "iteration {cap}: {current} > {previous}"
        );
        previous = current;
    }
}

#[test]
fn report_is_consistent() {
    let mut r = rng(13);
    let a = random_spd(20, &mut r);
    let b = gaussian_matrix(20, 4, &mut r);
    let settings = CgSettings::new(1e-9, 100).unwrap();
    let (x, report) = cg_solve(matrix_op(&a), b.view(), &settings).unwrap();
    assert_eq!(
        report.converged,
        report.final_relative_residual <= settings.tolerance
    );
    assert!(report.frobenius_relative_residual <= report.final_relative_residual);
    assert_eq!(
        report.iterations_used,
        *report.column_iterations.iter().max().unwrap()
    );
    let true_residual = rel_error(&a.dot(&x), &b);
    assert!(true_residual < 1e-8);
}

#[test]
fn breakdown_names_column() {
    let a = ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
    let b = ndarray::array![[1.0, 1.0], [1.0, 0.0], [0.0, 0.0]];
    assert!(cg_solve(matrix_op(&a), b.view(), &CgSettings::default()).is_ok());
    let b = ndarray::array![[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
    let err = cg_solve(matrix_op(&a), b.view(), &CgSettings::default()).unwrap_err();
    assert!(
        matches!(err, SblError::NumericalBreakdown { column: 1, .. }),
        "{err:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_direct_solve(dim in 1usize..=64, width in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_spd(dim, &mut r);
        let b = gaussian_matrix(dim, width, &mut r);
        let settings = CgSettings::new(1e-12, dim).unwrap();
        let (x, _) = cg_solve(matrix_op(&a), b.view(), &settings).unwrap();
        prop_assert!(rel_error(&x, &direct_solve(&a, &b)) < 1e-8);
    }

    #[test]
    fn column_permutation_permutes_solution(
        dim in 2usize..=24,
        perm in Just(vec![3usize, 0, 4, 1, 2]).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let a = random_spd(dim, &mut r);
        let b = gaussian_matrix(dim, 5, &mut r);
        let settings = CgSettings::new(1e-10, 200).unwrap();
        let (x, _) = cg_solve(matrix_op(&a), b.view(), &settings).unwrap();
        let (xp, _) = cg_solve(matrix_op(&a), b.select(Axis(1), &perm).view(), &settings).unwrap();
        prop_assert!(rel_error(&xp, &x.select(Axis(1), &perm)) < 1e-12);
    }

    #[test]
    fn scaling_rhs_scales_solution(dim in 1usize..=16, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_spd(dim, &mut r);
        let b = gaussian_matrix(dim, 2, &mut r);
        let settings = CgSettings::new(1e-12, 4 * dim).unwrap();
        let (x, _) = cg_solve(matrix_op(&a), b.view(), &settings).unwrap();
        let (xs, _) = cg_solve(matrix_op(&a), (scale * &b).view(), &settings).unwrap();
        prop_assert!(rel_error(&xs, &(scale * &x)) < 1e-9);
    }
}
