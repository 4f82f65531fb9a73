//! Small dense linear-algebra helpers over `nalgebra`.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

static JITTER_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of factorizations that needed a diagonal jitter, process-wide.
pub fn jitter_events() -> u64 {
    JITTER_EVENTS.load(Ordering::Relaxed)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization; on failure retries with a relative diagonal jitter
/// starting at `1e-10 * trace / d`.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let d = m.nrows().max(1) as f64;
    let base = m.trace() / d;
    if !(base > 0.0) {
        return Err(Error::NotPositiveDefinite(what.to_string()));
    }
    let mut jitter = 1e-10 * base;
    for _ in 0..4 {
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            JITTER_EVENTS.fetch_add(1, Ordering::Relaxed);
            log::debug!("{what}: cholesky needed jitter {jitter:e}");
            return Ok(c);
        }
        jitter *= 100.0;
    }
    Err(Error::NotPositiveDefinite(what.to_string()))
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `x^T M^{-1} x` using a precomputed factor.
pub fn quad_form(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let y = chol.l_dirty().solve_lower_triangular(x).expect("triangular factor");
    y.dot(&y)
}

/// `log N(x; mean, cov)` given the Cholesky factor of `cov`.
pub fn gaussian_log_density(chol: &Cholesky<f64, Dyn>, residual: &DVector<f64>) -> f64 {
    let d = residual.len() as f64;
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det(chol) + quad_form(chol, residual))
}

/// Multivariate log-gamma `ln Gamma_d(a)`.
pub fn ln_multigamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=d)
            .map(|j| statrs::function::gamma::ln_gamma(a + (1.0 - j as f64) / 2.0))
            .sum::<f64>()
}

/// Numerically stable `ln sum exp`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
