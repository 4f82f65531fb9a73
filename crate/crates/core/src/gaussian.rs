//! Multivariate Gaussians and the conjugate priors used for learning them.
//!
//! The Normal-Wishart is parameterized by an accumulated scatter matrix `r`
//! (the inverse scale of the Wishart over the precision), degrees of freedom
//! `beta`, a location `lambda` and a pseudo-count `nu`. The scalar Wishart over
//! the observation noise uses the same layout with `(rho, gamma, eta)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let chol = linalg::cholesky(&self.cov, "gaussian covariance")?;
        Ok(linalg::gaussian_log_density(&chol, &(x - &self.mean)))
    }

    pub fn marginal(&self, indices: &[usize]) -> Gaussian {
        Gaussian {
            mean: DVector::from_fn(indices.len(), |i, _| self.mean[indices[i]]),
            cov: DMatrix::from_fn(indices.len(), indices.len(), |i, j| self.cov[(indices[i], indices[j])]),
        }
    }

    /// Condition on `x[i] = v` for every `(i, v)` in `observed`.
    ///
    /// Returns the Gaussian over the remaining coordinates (in increasing index
    /// order) and the log density of the observed values under their marginal.
    pub fn condition(&self, observed: &[(usize, f64)]) -> Result<(Gaussian, f64)> {
        let d = self.dim();
        let mut is_obs = vec![false; d];
        for &(i, _) in observed {
            if i >= d {
                return Err(Error::OutcomeOutOfRange { index: i, size: d });
            }
            if is_obs[i] {
                return Err(Error::Malformed(format!("coordinate {i} observed twice")));
            }
            is_obs[i] = true;
        }
        if observed.is_empty() {
            return Ok((self.clone(), 0.0));
        }
        let obs: Vec<usize> = observed.iter().map(|&(i, _)| i).collect();
        let hidden: Vec<usize> = (0..d).filter(|&i| !is_obs[i]).collect();
        let values = DVector::from_iterator(obs.len(), observed.iter().map(|&(_, v)| v));

        let s_oo = self.marginal(&obs);
        let chol = linalg::cholesky(&s_oo.cov, &format!("observed block {obs:?}"))?;
        let residual = &values - &s_oo.mean;
        let log_evidence = linalg::gaussian_log_density(&chol, &residual);

        let s_ho = DMatrix::from_fn(hidden.len(), obs.len(), |i, j| self.cov[(hidden[i], obs[j])]);
        // gain = S_ho S_oo^{-1}
        let gain = chol.solve(&s_ho.transpose()).transpose();
        let prior = self.marginal(&hidden);
        let mean = prior.mean + &gain * residual;
        let mut cov = prior.cov - &gain * s_ho.transpose();
        linalg::symmetrize(&mut cov);
        Ok((Gaussian { mean, cov }, log_evidence))
    }
}

/// Summary statistics of (possibly fractionally weighted) vector data:
/// total weight, weighted mean, and weighted scatter about that mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub count: f64,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

impl GaussianStats {
    pub fn empty(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_data(dim: usize, data: &[DVector<f64>]) -> Self {
        if data.is_empty() {
            return Self::empty(dim);
        }
        let n = data.len() as f64;
        let mean = data.iter().fold(DVector::zeros(dim), |acc, y| acc + y) / n;
        let scatter = data.iter().fold(DMatrix::zeros(dim, dim), |acc, y| {
            let d = y - &mean;
            acc + &d * d.transpose()
        });
        Self {
            count: n,
            mean,
            scatter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalWishart {
    pub r: DMatrix<f64>,
    pub beta: f64,
    pub lambda: DVector<f64>,
    pub nu: f64,
}

impl NormalWishart {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Weak default: `lambda = 0, nu = 1, beta = m + 2, R = scale * I`.
    pub fn weak(dim: usize, scale: f64) -> Self {
        Self {
            r: DMatrix::identity(dim, dim) * scale,
            beta: dim as f64 + 2.0,
            lambda: DVector::zeros(dim),
            nu: 1.0,
        }
    }

    fn check(&self, stats: &GaussianStats) -> Result<()> {
        let m = self.dim();
        if self.r.nrows() != m || self.r.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.r.nrows(),
            });
        }
        if stats.mean.len() != m || stats.scatter.nrows() != m || stats.scatter.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: stats.mean.len(),
            });
        }
        if !(stats.count >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!("negative count {}", stats.count)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidHyperparameter(format!("nu = {}", self.nu)));
        }
        Ok(())
    }
}

pub fn nw_update(prior: &NormalWishart, stats: &GaussianStats) -> Result<NormalWishart> {
    prior.check(stats)?;
    let l = stats.count;
    if l == 0.0 {
        return Ok(prior.clone());
    }
    let nu = prior.nu + l;
    let lambda = (&prior.lambda * prior.nu + &stats.mean * l) / nu;
    let diff = &prior.lambda - &stats.mean;
    let mut r = &prior.r + &stats.scatter + (&diff * diff.transpose()) * (prior.nu * l / nu);
    linalg::symmetrize(&mut r);
    Ok(NormalWishart {
        r,
        beta: prior.beta + l,
        lambda,
        nu,
    })
}

/// Gaussian approximation to the predictive: mean `lambda`, covariance
/// `(nu + 1) / (nu (beta - m - 1)) R`.
pub fn nw_marginalize(nw: &NormalWishart) -> Result<Gaussian> {
    let m = nw.dim() as f64;
    if !(nw.beta > m + 1.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "beta = {} must exceed m + 1 = {}",
            nw.beta,
            m + 1.0
        )));
    }
    let scale = (nw.nu + 1.0) / (nw.nu * (nw.beta - m - 1.0));
    Gaussian::new(nw.lambda.clone(), &nw.r * scale)
}

/// Closed-form marginal likelihood of the summarized data under the prior.
pub fn nw_log_marginal_likelihood(prior: &NormalWishart, stats: &GaussianStats) -> Result<f64> {
    prior.check(stats)?;
    let m = prior.dim();
    let mf = m as f64;
    if !(prior.beta > mf - 1.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "beta = {} must exceed m - 1",
            prior.beta
        )));
    }
    if stats.count == 0.0 {
        return Ok(0.0);
    }
    let post = nw_update(prior, stats)?;
    let ld0 = linalg::log_det(&linalg::cholesky(&prior.r, "prior R")?);
    let ld = linalg::log_det(&linalg::cholesky(&post.r, "posterior R")?);
    Ok(-0.5 * stats.count * mf * std::f64::consts::PI.ln()
        + 0.5 * mf * (prior.nu / post.nu).ln()
        + linalg::ln_multigamma(m, post.beta / 2.0)
        - linalg::ln_multigamma(m, prior.beta / 2.0)
        + 0.5 * prior.beta * ld0
        - 0.5 * post.beta * ld)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WishartScalar {
    pub rho: f64,
    pub gamma: f64,
    pub eta: f64,
}

/// Scalar statistics for the noise prior: effective count, scatter, and the
/// squared-deviation term weighted by `eta0 * count / (eta0 + count)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarStats {
    pub count: f64,
    pub scatter: f64,
    pub cross: f64,
}

impl WishartScalar {
    fn check(&self, stats: &ScalarStats) -> Result<()> {
        if !(stats.count >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!("negative count {}", stats.count)));
        }
        if !(self.rho > 0.0 && self.eta > 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "rho = {}, eta = {}",
                self.rho, self.eta
            )));
        }
        Ok(())
    }
}

pub fn wishart_scalar_update(prior: &WishartScalar, stats: &ScalarStats) -> Result<WishartScalar> {
    prior.check(stats)?;
    let n = stats.count;
    if n == 0.0 {
        return Ok(*prior);
    }
    Ok(WishartScalar {
        rho: prior.rho + stats.scatter + prior.eta * n / (prior.eta + n) * stats.cross,
        gamma: prior.gamma + n,
        eta: prior.eta + n,
    })
}

/// `sigma^2 = (eta + 1) / (eta (gamma - 2)) rho`.
pub fn wishart_scalar_marginalize(w: &WishartScalar) -> Result<f64> {
    if !(w.gamma > 2.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "gamma = {} must exceed 2",
            w.gamma
        )));
    }
    Ok((w.eta + 1.0) / (w.eta * (w.gamma - 2.0)) * w.rho)
}

/// One-dimensional analogue of [`nw_log_marginal_likelihood`].
pub fn wishart_scalar_log_marginal(prior: &WishartScalar, stats: &ScalarStats) -> Result<f64> {
    prior.check(stats)?;
    if !(prior.gamma > 0.0) {
        return Err(Error::InvalidHyperparameter(format!("gamma = {}", prior.gamma)));
    }
    if stats.count == 0.0 {
        return Ok(0.0);
    }
    let post = wishart_scalar_update(prior, stats)?;
    Ok(
        -0.5 * stats.count * std::f64::consts::PI.ln() + 0.5 * (prior.eta / post.eta).ln() + ln_gamma(post.gamma / 2.0)
            - ln_gamma(prior.gamma / 2.0)
            + 0.5 * prior.gamma * prior.rho.ln()
            - 0.5 * post.gamma * post.rho.ln(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dirichlet {
    pub alpha: Vec<f64>,
}

impl Dirichlet {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidHyperparameter(format!("dirichlet alpha {alpha:?}")));
        }
        Ok(Self { alpha })
    }

    pub fn symmetric(k: usize, a: f64) -> Result<Self> {
        Self::new(vec![a; k])
    }

    fn check_counts(&self, counts: &[f64]) -> Result<()> {
        if counts.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                got: counts.len(),
            });
        }
        if counts.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidHyperparameter(format!("counts {counts:?}")));
        }
        Ok(())
    }
}

pub fn dirichlet_mean(d: &Dirichlet) -> Vec<f64> {
    let total: f64 = d.alpha.iter().sum();
    d.alpha.iter().map(|a| a / total).collect()
}

pub fn dirichlet_update(d: &Dirichlet, counts: &[f64]) -> Result<Dirichlet> {
    d.check_counts(counts)?;
    Dirichlet::new(d.alpha.iter().zip(counts).map(|(a, c)| a + c).collect())
}

pub fn dirichlet_log_marginal(d: &Dirichlet, counts: &[f64]) -> Result<f64> {
    d.check_counts(counts)?;
    let a0: f64 = d.alpha.iter().sum();
    let c0: f64 = counts.iter().sum();
    Ok(ln_gamma(a0) - ln_gamma(a0 + c0)
        + d.alpha
            .iter()
            .zip(counts)
            .map(|(a, c)| ln_gamma(a + c) - ln_gamma(*a))
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn one_d_prior() -> NormalWishart {
        NormalWishart {
            r: DMatrix::from_element(1, 1, 1.0),
            beta: 3.0,
            lambda: DVector::from_element(1, 0.0),
            nu: 1.0,
        }
    }

    #[test]
    fn condition_bivariate() {
        let g = Gaussian::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let (post, ev) = g.condition(&[(1, 1.0)]).unwrap();
        assert_abs_diff_eq!(post.mean[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(post.cov[(0, 0)], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(ev, -0.5 * (2.0 * PI).ln() - 0.5, epsilon = 1e-14);
    }

    /// Numerically integrate the joint density ratio p(x1, x2=1)/p(x2=1).
    #[test]
    fn condition_matches_quadrature() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let g = Gaussian::new(DVector::zeros(2), cov).unwrap();
        let h = 1e-3;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        let mut x = -10.0;
        while x <= 10.0 {
            let p = g.log_density(&DVector::from_row_slice(&[x, 1.0])).unwrap().exp();
            z += p * h;
            m1 += x * p * h;
            m2 += x * x * p * h;
            x += h;
        }
        let mean = m1 / z;
        let var = m2 / z - mean * mean;
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(var, 0.75, epsilon = 1e-6);
        let (_, ev) = g.condition(&[(1, 1.0)]).unwrap();
        assert_abs_diff_eq!(ev, z.ln(), epsilon = 1e-6);
    }

    #[test]
    fn condition_trivial_cases() {
        let g = Gaussian::new(
            DVector::from_row_slice(&[1.0, 2.0, 3.0]),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0, 3.0])),
        )
        .unwrap();
        let (post, ev) = g.condition(&[]).unwrap();
        assert_eq!(post, g);
        assert_eq!(ev, 0.0);
        let (post, _) = g.condition(&[(1, 7.0)]).unwrap();
        assert_eq!(post.mean.as_slice(), &[1.0, 3.0]);
        assert_eq!(post.cov[(1, 1)], 3.0);
        assert_eq!(post.cov[(0, 1)], 0.0);
    }

    #[test]
    fn condition_singular_block_reports_indices() {
        let g = Gaussian::new(DVector::zeros(2), DMatrix::from_element(2, 2, 0.0)).unwrap();
        match g.condition(&[(0, 1.0), (1, 1.0)]) {
            Err(Error::NotPositiveDefinite(msg)) => assert!(msg.contains("[0, 1]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sequential_conditioning_is_joint_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = 4;
            let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let cov = &b * b.transpose() + DMatrix::identity(d, d) * 0.1;
            let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let g = Gaussian::new(mean, cov).unwrap();
            let (x, y) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (joint, ev_joint) = g.condition(&[(2, x), (3, y)]).unwrap();
            let (step, ev1) = g.condition(&[(2, x)]).unwrap();
            // coordinate 3 is now at position 2 of the remaining vector
            let (seq, ev2) = step.condition(&[(2, y)]).unwrap();
            assert!((&joint.mean - &seq.mean).amax() <= 1e-10);
            assert!((&joint.cov - &seq.cov).amax() <= 1e-10);
            assert_abs_diff_eq!(ev_joint, ev1 + ev2, epsilon = 1e-10);
        }
    }

    #[test]
    fn nw_update_by_substitution() {
        let stats = GaussianStats {
            count: 1.0,
            mean: DVector::from_element(1, 2.0),
            scatter: DMatrix::zeros(1, 1),
        };
        let post = nw_update(&one_d_prior(), &stats).unwrap();
        assert_eq!(post.lambda[0], 1.0);
        assert_eq!(post.nu, 2.0);
        assert_eq!(post.r[(0, 0)], 3.0);
        assert_eq!(post.beta, 4.0);
        let g = nw_marginalize(&post).unwrap();
        assert_eq!(g.mean[0], 1.0);
        assert_abs_diff_eq!(g.cov[(0, 0)], 2.25, epsilon = 1e-15);
        assert_eq!(
            nw_update(&one_d_prior(), &GaussianStats::empty(1)).unwrap(),
            one_d_prior()
        );
    }

    #[test]
    fn nw_errors() {
        let bad = GaussianStats {
            count: -1.0,
            ..GaussianStats::empty(1)
        };
        assert!(nw_update(&one_d_prior(), &bad).is_err());
        assert!(nw_update(&one_d_prior(), &GaussianStats::empty(2)).is_err());
        let mut p = one_d_prior();
        p.beta = 2.0;
        assert!(nw_marginalize(&p).is_err());
    }

    #[test]
    fn marginalize_limits_and_scaling() {
        let m = 3;
        let nw = NormalWishart {
            r: DMatrix::identity(m, m),
            beta: m as f64 + 2.0,
            lambda: DVector::zeros(m),
            nu: 1e12,
        };
        let g = nw_marginalize(&nw).unwrap();
        assert!((g.cov - DMatrix::<f64>::identity(m, m)).amax() < 1e-10);
        let scaled = NormalWishart {
            r: &nw.r * 4.0,
            ..nw.clone()
        };
        let g1 = nw_marginalize(&nw).unwrap();
        let g4 = nw_marginalize(&scaled).unwrap();
        assert!((g1.cov * 4.0 - g4.cov).amax() < 1e-12);
    }

    #[test]
    fn batch_update_equals_sufficient_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 3;
        let data: Vec<_> = (0..7)
            .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let prior = NormalWishart::weak(d, 0.5);
        let batch = nw_update(&prior, &GaussianStats::from_data(d, &data)).unwrap();
        let seq = data.iter().fold(prior.clone(), |p, y| {
            nw_update(&p, &GaussianStats::from_data(d, std::slice::from_ref(y))).unwrap()
        });
        assert!((&batch.r - &seq.r).amax() < 1e-10);
        assert!((&batch.lambda - &seq.lambda).amax() < 1e-12);
        assert_abs_diff_eq!(batch.beta, seq.beta);
        assert_abs_diff_eq!(batch.nu, seq.nu);
    }

    #[test]
    fn scalar_wishart_by_substitution() {
        let prior = WishartScalar {
            rho: 1.0,
            gamma: 3.0,
            eta: 1.0,
        };
        assert_eq!(wishart_scalar_update(&prior, &ScalarStats::default()).unwrap(), prior);
        let post = wishart_scalar_update(
            &prior,
            &ScalarStats {
                count: 1.0,
                scatter: 0.0,
                cross: 4.0,
            },
        )
        .unwrap();
        assert_eq!((post.rho, post.gamma, post.eta), (3.0, 4.0, 2.0));
        assert_abs_diff_eq!(wishart_scalar_marginalize(&post).unwrap(), 2.25, epsilon = 1e-15);
        let mut last = 0.0;
        for s in [0.0, 0.5, 1.0, 2.0] {
            let p = wishart_scalar_update(
                &prior,
                &ScalarStats {
                    count: 3.0,
                    scatter: s,
                    cross: 0.1,
                },
            )
            .unwrap();
            let v = wishart_scalar_marginalize(&p).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(wishart_scalar_marginalize(&WishartScalar { gamma: 2.0, ..prior }).is_err());
    }

    #[test]
    fn scalar_marginal_is_one_dimensional_nw() {
        let prior = WishartScalar {
            rho: 0.3,
            gamma: 3.5,
            eta: 2.0,
        };
        let nw = NormalWishart {
            r: DMatrix::from_element(1, 1, prior.rho),
            beta: prior.gamma,
            lambda: DVector::zeros(1),
            nu: prior.eta,
        };
        let ys = [0.3, -0.2, 0.9, 0.1];
        let stats = GaussianStats::from_data(1, &ys.iter().map(|&y| DVector::from_element(1, y)).collect::<Vec<_>>());
        let scalar = ScalarStats {
            count: stats.count,
            scatter: stats.scatter[(0, 0)],
            cross: stats.mean[0].powi(2),
        };
        assert_abs_diff_eq!(
            wishart_scalar_log_marginal(&prior, &scalar).unwrap(),
            nw_log_marginal_likelihood(&nw, &stats).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dirichlet_operations() {
        let d = Dirichlet::symmetric(2, 1.0).unwrap();
        assert_eq!(dirichlet_mean(&d), vec![0.5, 0.5]);
        assert_eq!(dirichlet_log_marginal(&d, &[0.0, 0.0]).unwrap(), 0.0);
        let up = dirichlet_update(&d, &[2.0, 0.0]).unwrap();
        assert_eq!(dirichlet_mean(&up), vec![0.75, 0.25]);
        assert_abs_diff_eq!(
            dirichlet_log_marginal(&d, &[1.0, 0.0]).unwrap(),
            0.5f64.ln(),
            epsilon = 1e-14
        );
        assert!(Dirichlet::new(vec![1.0, 0.0]).is_err());
        assert!(dirichlet_update(&d, &[1.0]).is_err());
    }
}
