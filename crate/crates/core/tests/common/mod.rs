#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use prefdens_core::basis::{ClusterStructure, Domain};
use prefdens_core::gaussian::{nw_update, GaussianStats, NormalWishart};
use prefdens_core::projection::TypeParams;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

/// Random domain with at most `max_vars` variables of arity 2..=`max_arity`.
pub fn random_domain(rng: &mut impl Rng, max_vars: usize, max_arity: usize) -> Domain {
    let n = rng.random_range(1..=max_vars);
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let spec: Vec<(&str, usize)> = names
        .iter()
        .map(|s| (s.as_str(), rng.random_range(2..=max_arity)))
        .collect();
    Domain::with_arities(&spec).unwrap()
}

pub fn random_structure(rng: &mut impl Rng, num_vars: usize) -> ClusterStructure {
    let k = rng.random_range(0..=num_vars + 1);
    let clusters: Vec<Vec<usize>> = (0..k)
        .map(|_| (0..num_vars).filter(|_| rng.random_bool(0.5)).collect())
        .collect();
    ClusterStructure::new(clusters)
}

pub fn random_spd(rng: &mut impl Rng, m: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&b * b.transpose()) * (scale / m as f64) + DMatrix::identity(m, m) * (0.1 * scale)
}

pub fn random_params(rng: &mut impl Rng, m: usize) -> TypeParams {
    TypeParams {
        mean: DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)),
        cov: random_spd(rng, m, 1.0),
        noise_var: rng.random_range(0.01..1.0),
    }
}

/// Log density of a multivariate Student-t with `dof` degrees of freedom.
pub fn student_t_log_density(x: &DVector<f64>, loc: &DVector<f64>, scale: &DMatrix<f64>, dof: f64) -> f64 {
    let d = x.len() as f64;
    let chol = scale.clone().cholesky().unwrap();
    let diff = x - loc;
    let maha = diff.dot(&chol.solve(&diff));
    let ld = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    ln_gamma((dof + d) / 2.0)
        - ln_gamma(dof / 2.0)
        - 0.5 * d * (dof * std::f64::consts::PI).ln()
        - 0.5 * ld
        - 0.5 * (dof + d) * (1.0 + maha / dof).ln()
}

/// Sum of one-step-ahead posterior predictive log densities: the log marginal
/// likelihood by the chain rule.
pub fn chain_rule_log_marginal(prior: &NormalWishart, data: &[DVector<f64>]) -> f64 {
    let m = prior.lambda.len() as f64;
    let mut post = prior.clone();
    let mut total = 0.0;
    for y in data {
        let dof = post.beta - m + 1.0;
        let scale = &post.r * ((post.nu + 1.0) / (post.nu * dof));
        total += student_t_log_density(y, &post.lambda, &scale, dof);
        post = nw_update(&post, &GaussianStats::from_data(y.len(), std::slice::from_ref(y))).unwrap();
    }
    total
}

pub fn random_nw(rng: &mut impl Rng, m: usize) -> NormalWishart {
    NormalWishart {
        r: random_spd(rng, m, 1.0),
        beta: m as f64 + rng.random_range(0.5..4.0),
        lambda: DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)),
        nu: rng.random_range(0.2..3.0),
    }
}
