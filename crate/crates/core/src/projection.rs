//! Projecting elicited utility vectors onto a type's factored basis.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg;
use crate::mixture::MixtureModel;

/// Point parameters of one type: `W ~ N(mean, cov)`, `U | W ~ N(A W, noise_var I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub noise_var: f64,
}

impl TypeParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, design: &DMatrix<f64>) -> Result<()> {
        if design.ncols() != self.dim() || self.cov.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: design.ncols(),
            });
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "noise variance {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    /// Joint Gaussian over `(W, U_observed)`.
    pub fn joint(&self, design: &DMatrix<f64>, observed: &[usize]) -> Gaussian {
        let m = self.dim();
        let a_o = design.select_rows(observed);
        let k = observed.len();
        let mut mean = DVector::zeros(m + k);
        mean.rows_mut(0, m).copy_from(&self.mean);
        mean.rows_mut(m, k).copy_from(&(&a_o * &self.mean));
        let sa = &self.cov * a_o.transpose();
        let mut cov = DMatrix::zeros(m + k, m + k);
        cov.view_mut((0, 0), (m, m)).copy_from(&self.cov);
        cov.view_mut((0, m), (m, k)).copy_from(&sa);
        cov.view_mut((m, 0), (k, m)).copy_from(&sa.transpose());
        let mut uu = &a_o * &sa;
        for i in 0..k {
            uu[(i, i)] += self.noise_var;
        }
        cov.view_mut((m, m), (k, k)).copy_from(&uu);
        linalg::symmetrize(&mut cov);
        Gaussian { mean, cov }
    }
}

/// Split a partial vector into observed indices and values.
pub fn observed_entries(u: &[Option<f64>]) -> (Vec<usize>, Vec<f64>) {
    u.iter().enumerate().filter_map(|(i, v)| v.map(|x| (i, x))).unzip()
}

/// Least-squares projection `(A^T A)^{-1} A^T u`.
pub fn ls_project(u: &[f64], design: &DMatrix<f64>) -> Result<DVector<f64>> {
    if u.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            got: u.len(),
        });
    }
    let rank = design.rank(1e-9 * design.amax().max(1.0));
    let deficient = Error::RankDeficient {
        rank,
        cols: design.ncols(),
    };
    if rank < design.ncols() {
        return Err(deficient);
    }
    let chol = Cholesky::new(design.transpose() * design).ok_or(deficient)?;
    Ok(chol.solve(&(design.transpose() * DVector::from_column_slice(u))))
}

/// Reusable MAP projection for one type: `w = operator * u + offset`.
#[derive(Debug, Clone)]
pub struct MapProjector {
    pub operator: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub posterior_cov: DMatrix<f64>,
}

impl MapProjector {
    pub fn new(params: &TypeParams, design: &DMatrix<f64>) -> Result<Self> {
        params.check(design)?;
        let prec = linalg::spd_inverse(&params.cov, "type covariance")?;
        let mut info = design.transpose() * design / params.noise_var + &prec;
        linalg::symmetrize(&mut info);
        let chol = linalg::cholesky(&info, "posterior precision")?;
        let operator = chol.solve(&(design.transpose() / params.noise_var));
        let offset = chol.solve(&(&prec * &params.mean));
        let mut posterior_cov = chol.inverse();
        linalg::symmetrize(&mut posterior_cov);
        Ok(Self {
            operator,
            offset,
            posterior_cov,
        })
    }

    pub fn apply(&self, u: &[f64]) -> Result<DVector<f64>> {
        if u.len() != self.operator.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.operator.ncols(),
                got: u.len(),
            });
        }
        Ok(&self.operator * DVector::from_column_slice(u) + &self.offset)
    }
}

/// MAP weights minimizing `|A w - u|^2 / (2 s^2) + (w - mu)^T S^{-1} (w - mu) / 2`.
pub fn map_project(u: &[f64], params: &TypeParams, design: &DMatrix<f64>) -> Result<DVector<f64>> {
    MapProjector::new(params, design)?.apply(u)
}

/// The MAP objective; exposed for optimality checks.
pub fn map_objective(w: &DVector<f64>, u: &[f64], params: &TypeParams, design: &DMatrix<f64>) -> Result<f64> {
    let prec = linalg::spd_inverse(&params.cov, "type covariance")?;
    let r = design * w - DVector::from_column_slice(u);
    let d = w - &params.mean;
    Ok(r.dot(&r) / (2.0 * params.noise_var) + 0.5 * (d.transpose() * prec * &d)[(0, 0)])
}

/// Posterior over the weights given any subset of observed utilities, by
/// conditioning the joint Gaussian over `(W, U_observed)`.
pub fn posterior_weights(u: &[Option<f64>], params: &TypeParams, design: &DMatrix<f64>) -> Result<(Gaussian, f64)> {
    params.check(design)?;
    if u.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            got: u.len(),
        });
    }
    let (observed, values) = observed_entries(u);
    let m = params.dim();
    let joint = params.joint(design, &observed);
    let obs: Vec<(usize, f64)> = values.iter().enumerate().map(|(i, &v)| (m + i, v)).collect();
    joint.condition(&obs)
}

/// Conditioning of one type on one observation pattern, reusable across every
/// record sharing that pattern.
#[derive(Debug, Clone)]
pub struct ConditioningPlan {
    observed: Vec<usize>,
    a_obs: DMatrix<f64>,
    gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl ConditioningPlan {
    pub fn new(params: &TypeParams, design: &DMatrix<f64>, observed: &[usize]) -> Result<Self> {
        params.check(design)?;
        let a_obs = design.select_rows(observed);
        if observed.is_empty() {
            return Ok(Self {
                observed: vec![],
                gain: DMatrix::zeros(params.dim(), 0),
                posterior_cov: params.cov.clone(),
                a_obs,
                chol: None,
            });
        }
        let sa = &params.cov * a_obs.transpose();
        let mut s = &a_obs * &sa;
        for i in 0..observed.len() {
            s[(i, i)] += params.noise_var;
        }
        linalg::symmetrize(&mut s);
        let chol = linalg::cholesky(&s, &format!("observed block {observed:?}"))?;
        let gain = chol.solve(&sa.transpose()).transpose();
        let mut posterior_cov = &params.cov - &gain * sa.transpose();
        linalg::symmetrize(&mut posterior_cov);
        Ok(Self {
            observed: observed.to_vec(),
            a_obs,
            gain,
            posterior_cov,
            chol: Some(chol),
        })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn observed_design(&self) -> &DMatrix<f64> {
        &self.a_obs
    }

    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    /// Posterior mean and log evidence for the observed values.
    pub fn apply(&self, params: &TypeParams, values: &[f64]) -> (DVector<f64>, f64) {
        debug_assert_eq!(values.len(), self.observed.len());
        let Some(chol) = &self.chol else {
            return (params.mean.clone(), 0.0);
        };
        let residual = DVector::from_column_slice(values) - &self.a_obs * &params.mean;
        let log_ev = linalg::gaussian_log_density(chol, &residual);
        (&params.mean + &self.gain * residual, log_ev)
    }
}

#[derive(Debug, Clone)]
pub struct TypePosterior {
    pub posterior: Gaussian,
    pub log_evidence: f64,
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub per_type: Vec<TypePosterior>,
    pub type_posterior: Vec<f64>,
    pub best_type: usize,
    pub best_weights: DVector<f64>,
}

/// Normalize `ln theta_t + ln evidence_t` into a posterior over types.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let z = linalg::log_sum_exp(log_w);
    if !z.is_finite() {
        return None;
    }
    Some(log_w.iter().map(|l| (l - z).exp()).collect())
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn classify(u: &[Option<f64>], model: &MixtureModel) -> Result<ProjectionResult> {
    if model.types.is_empty() {
        return Err(Error::Malformed("model has no types".into()));
    }
    let mut per_type = Vec::with_capacity(model.types.len());
    let mut log_w = Vec::with_capacity(model.types.len());
    for (t, ty) in model.types.iter().enumerate() {
        let (posterior, log_evidence) = posterior_weights(u, &ty.params, ty.design_matrix())?;
        log_w.push(model.theta[t].ln() + log_evidence);
        per_type.push(TypePosterior {
            posterior,
            log_evidence,
        });
    }
    let type_posterior =
        normalize_log_weights(&log_w).ok_or_else(|| Error::DegenerateEvidence("query vector".into()))?;
    let best_type = argmax(&type_posterior);
    let best_weights = per_type[best_type].posterior.mean.clone();
    Ok(ProjectionResult {
        per_type,
        type_posterior,
        best_type,
        best_weights,
    })
}
