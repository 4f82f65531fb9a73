mod common;

use common::*;
use nalgebra::DVector;
use prefdens_core::gaussian::{nw_log_marginal_likelihood, GaussianStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn nw_marginal_matches_chain_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let m = 1 + case % 4;
        let prior = random_nw(&mut rng, m);
        let n = rng.random_range(1..8);
        let data: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(m, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let batch = nw_log_marginal_likelihood(&prior, &GaussianStats::from_data(m, &data)).unwrap();
        let chain = chain_rule_log_marginal(&prior, &data);
        assert!((batch - chain).abs() <= 1e-8, "case {case}: {batch} vs {chain}");
    }
}

#[test]
fn nw_marginal_three_points_one_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prior = random_nw(&mut rng, 1);
    let data: Vec<DVector<f64>> = [0.3, -1.2, 2.5].iter().map(|&x| DVector::from_element(1, x)).collect();
    let batch = nw_log_marginal_likelihood(&prior, &GaussianStats::from_data(1, &data)).unwrap();
    assert!((batch - chain_rule_log_marginal(&prior, &data)).abs() <= 1e-8);
    let mut permuted = data.clone();
    permuted.rotate_left(1);
    let again = nw_log_marginal_likelihood(&prior, &GaussianStats::from_data(1, &permuted)).unwrap();
    assert!((batch - again).abs() <= 1e-10);
}

#[test]
fn student_t_oracle_is_a_density() {
    // crude 1-D normalization check of the oracle itself
    let loc = DVector::from_element(1, 0.4);
    let scale = nalgebra::DMatrix::from_element(1, 1, 0.7);
    let h = 1e-3;
    let total: f64 = (-60_000..60_000)
        .map(|i| {
            let x = DVector::from_element(1, i as f64 * h);
            student_t_log_density(&x, &loc, &scale, 5.0).exp() * h
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}
