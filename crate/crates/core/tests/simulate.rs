mod common;

use ndarray::Array1;
use proptest::prelude::*;

use cofem::simulate::{
    gen_dct_coeff_signal, gen_dct_dictionary, gen_dense_dictionary, gen_observations,
    gen_spike_signal, noiseless_observations, nrmse, sparsity_count, NoiseSpec,
};
use cofem::{DenseDictionary, LinearOperator};

use common::*;

#[test]
fn protocol_sparsity_at_1024() {
    assert_eq!(sparsity_count(1024, 0.04), 41);
    let truth = gen_spike_signal(1024, 41, &mut rng(1)).unwrap();
    assert_eq!(truth.sparsity(), 41);
    assert!(truth.support.iter().all(|&i| truth.z_star[i].abs() == 1.0));
    assert_eq!(truth.z_star.iter().filter(|&&v| v != 0.0).count(), 41);
}

#[test]
fn full_support_and_zero_rejected() {
    let truth = gen_spike_signal(9, 9, &mut rng(2)).unwrap();
    assert!(truth.z_star.iter().all(|&v| v == 1.0 || v == -1.0));
    assert!(gen_spike_signal(9, 0, &mut rng(2)).is_err());
    assert!(gen_dct_coeff_signal(9, 10, &mut rng(2)).is_err());
}

#[test]
fn gaussian_coefficients_have_unit_variance() {
    let mut r = rng(3);
    let mut values = Vec::new();
    while values.len() < 10_000 {
        let truth = gen_dct_coeff_signal(512, 100, &mut r).unwrap();
        values.extend(truth.support.iter().map(|&i| truth.z_star[i]));
    }
    let v = Array1::from_vec(values);
    let var = v.var(1.0);
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn dense_entries_are_standard_normal() {
    let phi = gen_dense_dictionary(200, 300, &mut rng(4)).unwrap();
    let n: f64 = 60_000.0;
    let mean = phi.matrix().mean().unwrap();
    let var = phi.matrix().var(1.0);
    // Three standard errors of the sample mean and variance.
    assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "variance {var}");
}

#[test]
fn dct_mask_is_distinct_and_in_range() {
    let phi = gen_dct_dictionary(64, 256, &mut rng(5)).unwrap();
    let mask = phi.mask();
    assert_eq!(mask.len(), 64);
    assert!(mask.windows(2).all(|w| w[0] < w[1]));
    assert!(mask.iter().all(|&i| i < 256));
    assert!(gen_dct_dictionary(0, 8, &mut rng(5)).is_err());
    assert!(gen_dct_dictionary(9, 8, &mut rng(5)).is_err());
}

#[test]
fn identity_observation_of_a_spike() {
    let phi = DenseDictionary::identity(8).unwrap();
    let mut truth = gen_spike_signal(8, 1, &mut rng(6)).unwrap();
    truth.z_star.fill(0.0);
    truth.z_star[0] = 1.0;
    truth.support = vec![0];
    let y = gen_observations(&phi, &truth, NoiseSpec::new(0.005).unwrap(), &mut rng(7)).unwrap();
    for (i, v) in y.iter().enumerate() {
        let target = if i == 0 { 1.0 } else { 0.0 };
        assert!((v - target).abs() < 0.03);
    }
    assert_eq!(noiseless_observations(&phi, &truth).unwrap(), truth.z_star);
}

#[test]
fn noise_has_requested_spread() {
    let phi = gen_dense_dictionary(100_000, 1, &mut rng(8)).unwrap();
    let truth = gen_spike_signal(1, 1, &mut rng(9)).unwrap();
    let sigma = 0.005;
    let y = gen_observations(&phi, &truth, NoiseSpec::new(sigma).unwrap(), &mut rng(10)).unwrap();
    let residual = &y - &noiseless_observations(&phi, &truth).unwrap();
    let std = residual.std(1.0);
    assert!((std / sigma - 1.0).abs() < 0.01, "std {std}");
    assert_eq!(phi.rows(), residual.len());
}

#[test]
fn nrmse_reference_points() {
    let z = Array1::from_vec(vec![1.0, 0.0, -2.0]);
    assert_eq!(nrmse(z.view(), z.view()).unwrap(), 0.0);
    assert_eq!(nrmse(Array1::zeros(3).view(), z.view()).unwrap(), 100.0);
    assert_eq!(nrmse((2.0 * &z).view(), z.view()).unwrap(), 100.0);
    assert!(nrmse(z.view(), Array1::zeros(3).view()).is_err());
    assert!(NoiseSpec::new(0.0).is_err());
}

proptest! {
    #[test]
    fn sparsity_count_is_bounded(dim in 1usize..5000, fraction in 0.0f64..1.0) {
        let d = sparsity_count(dim, fraction);
        prop_assert!((1..=dim).contains(&d));
        prop_assert!((d as f64 - fraction * dim as f64).abs() <= 0.5 || d == 1);
    }

    #[test]
    fn generation_is_reproducible(dim in 1usize..200, seed in any::<u64>()) {
        let nnz = 1 + dim / 10;
        prop_assert_eq!(
            gen_spike_signal(dim, nnz, &mut rng(seed)).unwrap(),
            gen_spike_signal(dim, nnz, &mut rng(seed)).unwrap()
        );
        prop_assert_eq!(
            gen_dense_dictionary(3, dim, &mut rng(seed)).unwrap(),
            gen_dense_dictionary(3, dim, &mut rng(seed)).unwrap()
        );
    }
}
