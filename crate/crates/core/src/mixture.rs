//! MAP-EM for the mixture of factored-utility types.
//!
//! Each type owns a cluster structure, its basis and design matrix, a
//! Normal-Wishart over the weight vector and a scalar Wishart over the
//! observation noise. Every M-step applies the conjugate updates to the fixed
//! initial prior using the current expected sufficient statistics, then
//! marginalizes the posteriors back to point parameters.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, design_matrix, Basis, ClusterStructure, DesignMatrix, Domain};
use crate::db::UtilityDatabase;
use crate::error::{Error, Result};
use crate::gaussian::{
    dirichlet_mean, dirichlet_update, nw_marginalize, nw_update, wishart_scalar_marginalize, wishart_scalar_update,
    Dirichlet, GaussianStats, NormalWishart, ScalarStats, WishartScalar,
};
use crate::linalg;
use crate::projection::{observed_entries, ConditioningPlan, TypeParams};

/// Hyperparameter defaults shared by every type; the Normal-Wishart prior is
/// sized per type from its basis dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// `R0 = r_scale * I`.
    pub r_scale: f64,
    pub nu: f64,
    /// `beta0 = m + beta_offset`.
    pub beta_offset: f64,
    pub rho: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Symmetric Dirichlet concentration per type.
    pub alpha: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            r_scale: 0.1,
            nu: 1.0,
            beta_offset: 2.0,
            rho: 0.01,
            gamma: 3.0,
            eta: 1.0,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePrior {
    pub nw: NormalWishart,
    pub noise: WishartScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPriors {
    pub types: Vec<TypePrior>,
    pub dirichlet: Dirichlet,
}

impl PriorConfig {
    pub fn type_prior(&self, m: usize) -> TypePrior {
        TypePrior {
            nw: NormalWishart {
                r: DMatrix::identity(m, m) * self.r_scale,
                beta: m as f64 + self.beta_offset,
                lambda: DVector::zeros(m),
                nu: self.nu,
            },
            noise: WishartScalar {
                rho: self.rho,
                gamma: self.gamma,
                eta: self.eta,
            },
        }
    }

    pub fn model_priors(&self, dims: &[usize]) -> Result<ModelPriors> {
        Ok(ModelPriors {
            types: dims.iter().map(|&m| self.type_prior(m)).collect(),
            dirichlet: Dirichlet::symmetric(dims.len(), self.alpha)?,
        })
    }
}

/// Structure-dependent pieces of a type that never change during EM.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeLayout {
    pub structure: ClusterStructure,
    pub basis: Basis,
    pub design: DesignMatrix,
    pub design_matrix: DMatrix<f64>,
}

impl TypeLayout {
    pub fn new(domain: &Domain, structure: &ClusterStructure) -> Result<Self> {
        let basis = build_basis(domain, structure)?;
        let design = design_matrix(domain, &basis, None)?;
        let design_matrix = design.to_matrix();
        Ok(Self {
            structure: structure.clone(),
            basis,
            design,
            design_matrix,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeModel {
    layout: Arc<TypeLayout>,
    pub nw: NormalWishart,
    pub noise: WishartScalar,
    pub params: TypeParams,
}

impl TypeModel {
    pub fn new(layout: Arc<TypeLayout>, nw: NormalWishart, noise: WishartScalar) -> Result<Self> {
        let m = layout.basis.len();
        if nw.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: nw.dim(),
            });
        }
        let g = nw_marginalize(&nw)?;
        let noise_var = wishart_scalar_marginalize(&noise)?;
        Ok(Self {
            layout,
            nw,
            noise,
            params: TypeParams {
                mean: g.mean,
                cov: g.cov,
                noise_var,
            },
        })
    }

    pub fn layout(&self) -> &Arc<TypeLayout> {
        &self.layout
    }

    pub fn structure(&self) -> &ClusterStructure {
        &self.layout.structure
    }

    pub fn basis(&self) -> &Basis {
        &self.layout.basis
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.layout.design
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.layout.design_matrix
    }

    pub fn dim(&self) -> usize {
        self.layout.basis.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub domain: Domain,
    pub types: Vec<TypeModel>,
    pub dirichlet: Dirichlet,
    pub theta: Vec<f64>,
}

impl MixtureModel {
    /// Assemble a model from hyperparameters, marginalizing to point parameters.
    pub fn from_hyper(
        domain: Domain,
        types: Vec<(Arc<TypeLayout>, NormalWishart, WishartScalar)>,
        dirichlet: Dirichlet,
    ) -> Result<Self> {
        if types.len() != dirichlet.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: types.len(),
                got: dirichlet.alpha.len(),
            });
        }
        let types = types
            .into_iter()
            .map(|(l, nw, noise)| TypeModel::new(l, nw, noise))
            .collect::<Result<Vec<_>>>()?;
        let theta = dirichlet_mean(&dirichlet);
        Ok(Self {
            domain,
            types,
            dirichlet,
            theta,
        })
    }

    /// The model obtained by marginalizing the priors directly.
    pub fn from_priors(domain: &Domain, layouts: &[Arc<TypeLayout>], priors: &ModelPriors) -> Result<Self> {
        Self::from_hyper(
            domain.clone(),
            layouts
                .iter()
                .zip(&priors.types)
                .map(|(l, p)| (l.clone(), p.nw.clone(), p.noise))
                .collect(),
            priors.dirichlet.clone(),
        )
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn structures(&self) -> Vec<ClusterStructure> {
        self.types.iter().map(|t| t.structure().clone()).collect()
    }

    pub fn layouts(&self) -> Vec<Arc<TypeLayout>> {
        self.types.iter().map(|t| t.layout.clone()).collect()
    }
}

/// How the squared-deviation term of the noise update is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseCrossTerm {
    /// Residuals `u_o - (A mu_j)_o` are the noise observations: the scatter is
    /// centered on their mean and the deviation term is that mean squared
    /// (prior noise mean zero).
    #[default]
    ResidualMean,
    /// Uncentered residual scatter plus the spread of predicted utilities
    /// around each outcome's empirical mean.
    OutcomeMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub seed: u64,
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub cross_term: NoiseCrossTerm,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 5,
            tol: 1e-6,
            max_iters: 200,
            cross_term: NoiseCrossTerm::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeStats {
    /// Expected number of records of this type.
    pub weight: f64,
    pub gauss: GaussianStats,
    /// Expected number of observed scalar utilities of this type.
    pub observed: f64,
    pub noise: ScalarStats,
    /// `sum_j pi_j sum_{o in O_j} E[(u_o - (A W)_o)^2]`.
    pub noise_sq_total: f64,
}

#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub per_type: Vec<TypeStats>,
    /// `[record][type]`; empty rows for skipped records.
    pub responsibilities: Vec<Vec<f64>>,
    /// `[record][type]` posterior means of the weights.
    pub posterior_means: Vec<Vec<DVector<f64>>>,
    pattern_of: Vec<Option<usize>>,
    pattern_covs: Vec<Vec<DMatrix<f64>>>,
    /// Per-record `ln sum_t theta_t p(u_j | t)`; zero for skipped records.
    pub record_log_likelihood: Vec<f64>,
    pub log_likelihood: f64,
    pub usable: usize,
    pub skipped: Vec<String>,
}

impl SufficientStats {
    pub fn posterior_cov(&self, record: usize, ty: usize) -> Option<&DMatrix<f64>> {
        self.pattern_of[record].map(|p| &self.pattern_covs[p][ty])
    }
}

struct PatternPlans {
    plans: Vec<ConditioningPlan>,
    /// Diagonal of `A_O Sigma_post A_O^T` per type.
    upsilon: Vec<DVector<f64>>,
}

struct RecordPosterior {
    log_w: Vec<f64>,
    means: Vec<DVector<f64>>,
    log_lik: f64,
}

pub fn e_step(model: &MixtureModel, db: &UtilityDatabase, cross: NoiseCrossTerm) -> Result<SufficientStats> {
    e_step_impl(model, db, cross, None)
}

fn e_step_impl(
    model: &MixtureModel,
    db: &UtilityDatabase,
    cross: NoiseCrossTerm,
    forced: Option<&[Vec<f64>]>,
) -> Result<SufficientStats> {
    let n_out = model.domain.num_outcomes();
    if db.num_outcomes != n_out {
        return Err(Error::Mismatch(format!(
            "database has {} outcomes, model domain has {n_out}",
            db.num_outcomes
        )));
    }
    let k = model.num_types();

    let mut pattern_index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut patterns: Vec<Vec<usize>> = vec![];
    let mut pattern_of = Vec::with_capacity(db.len());
    let mut skipped = vec![];
    for r in &db.records {
        let (obs, _) = observed_entries(&r.values);
        if obs.is_empty() {
            log::warn!("record `{}` has no observed values; skipped", r.respondent);
            skipped.push(r.respondent.clone());
            pattern_of.push(None);
            continue;
        }
        let next = patterns.len();
        let p = *pattern_index.entry(obs.clone()).or_insert_with(|| {
            patterns.push(obs);
            next
        });
        pattern_of.push(Some(p));
    }

    let plans: Vec<PatternPlans> = patterns
        .par_iter()
        .map(|obs| {
            let mut plans = Vec::with_capacity(k);
            let mut upsilon = Vec::with_capacity(k);
            for ty in &model.types {
                let plan = ConditioningPlan::new(&ty.params, ty.design_matrix(), obs)?;
                let a = plan.observed_design();
                let ac = a * plan.posterior_cov();
                upsilon.push(DVector::from_fn(obs.len(), |i, _| ac.row(i).dot(&a.row(i))));
                plans.push(plan);
            }
            Ok(PatternPlans { plans, upsilon })
        })
        .collect::<Result<_>>()?;

    let log_theta: Vec<f64> = model.theta.iter().map(|t| t.ln()).collect();
    let posts: Vec<Option<RecordPosterior>> = db
        .records
        .par_iter()
        .zip(&pattern_of)
        .map(|(r, p)| {
            let Some(p) = p else { return Ok(None) };
            let (_, values) = observed_entries(&r.values);
            let mut log_w = Vec::with_capacity(k);
            let mut means = Vec::with_capacity(k);
            for (t, ty) in model.types.iter().enumerate() {
                let (mean, ev) = plans[*p].plans[t].apply(&ty.params, &values);
                log_w.push(log_theta[t] + ev);
                means.push(mean);
            }
            let log_lik = linalg::log_sum_exp(&log_w);
            if !log_lik.is_finite() {
                return Err(Error::DegenerateEvidence(r.respondent.clone()));
            }
            Ok(Some(RecordPosterior { log_w, means, log_lik }))
        })
        .collect::<Result<_>>()?;

    let mut responsibilities = Vec::with_capacity(db.len());
    let mut record_ll = Vec::with_capacity(db.len());
    for (j, post) in posts.iter().enumerate() {
        match post {
            None => {
                responsibilities.push(vec![]);
                record_ll.push(0.0);
            }
            Some(p) => {
                let pi = match forced {
                    Some(f) => f[j].clone(),
                    None => p.log_w.iter().map(|l| (l - p.log_lik).exp()).collect(),
                };
                responsibilities.push(pi);
                record_ll.push(p.log_lik);
            }
        }
    }
    let log_likelihood: f64 = record_ll.iter().sum();
    let usable = posts.iter().filter(|p| p.is_some()).count();

    // Empirical per-outcome means, only needed for the alternative cross term.
    let outcome_means: Vec<Option<f64>> = if cross == NoiseCrossTerm::OutcomeMean {
        (0..n_out)
            .map(|o| {
                let vals: Vec<f64> = db.records.iter().filter_map(|r| r.values[o]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    } else {
        vec![]
    };

    let mut per_type = Vec::with_capacity(k);
    for (t, ty) in model.types.iter().enumerate() {
        let m = ty.dim();
        let mut weight = 0.0;
        let mut sum_mean = DVector::zeros(m);
        let mut pattern_weight = vec![0.0; patterns.len()];
        let mut observed = 0.0;
        let mut sum_e = 0.0;
        let mut sum_sq = 0.0;
        let mut outcome_spread = 0.0;
        for (j, post) in posts.iter().enumerate() {
            let (Some(post), Some(p)) = (post, pattern_of[j]) else {
                continue;
            };
            let pi = responsibilities[j][t];
            if pi == 0.0 {
                continue;
            }
            weight += pi;
            sum_mean += &post.means[t] * pi;
            pattern_weight[p] += pi;

            let plan = &plans[p].plans[t];
            let (_, values) = observed_entries(&db.records[j].values);
            let pred = plan.observed_design() * &post.means[t];
            observed += pi * values.len() as f64;
            for (i, &u) in values.iter().enumerate() {
                let e = pred[i] - u;
                sum_e += pi * e;
                sum_sq += pi * (e * e + plans[p].upsilon[t][i]);
                if cross == NoiseCrossTerm::OutcomeMean {
                    if let Some(ubar) = outcome_means[plan.observed()[i]] {
                        outcome_spread += pi * (pred[i] - ubar).powi(2);
                    }
                }
            }
        }

        let gauss = if weight > 0.0 {
            let mean = sum_mean / weight;
            let mut scatter = DMatrix::zeros(m, m);
            for (j, post) in posts.iter().enumerate() {
                let Some(post) = post else { continue };
                let pi = responsibilities[j][t];
                if pi == 0.0 {
                    continue;
                }
                let d = &post.means[t] - &mean;
                scatter += (&d * d.transpose()) * pi;
            }
            for (p, w) in pattern_weight.iter().enumerate() {
                if *w > 0.0 {
                    scatter += plans[p].plans[t].posterior_cov() * *w;
                }
            }
            linalg::symmetrize(&mut scatter);
            GaussianStats {
                count: weight,
                mean,
                scatter,
            }
        } else {
            GaussianStats::empty(m)
        };

        let noise = if observed > 0.0 {
            match cross {
                NoiseCrossTerm::ResidualMean => {
                    let rbar = sum_e / observed;
                    ScalarStats {
                        count: observed,
                        scatter: (sum_sq - observed * rbar * rbar).max(0.0),
                        cross: rbar * rbar,
                    }
                }
                NoiseCrossTerm::OutcomeMean => ScalarStats {
                    count: observed,
                    scatter: sum_sq,
                    cross: outcome_spread,
                },
            }
        } else {
            ScalarStats::default()
        };

        per_type.push(TypeStats {
            weight,
            gauss,
            observed,
            noise,
            noise_sq_total: sum_sq,
        });
    }

    let posterior_means = posts
        .into_iter()
        .map(|p| p.map(|p| p.means).unwrap_or_default())
        .collect();
    let pattern_covs = plans
        .into_iter()
        .map(|pp| pp.plans.into_iter().map(|p| p.posterior_cov().clone()).collect())
        .collect();

    Ok(SufficientStats {
        per_type,
        responsibilities,
        posterior_means,
        pattern_of,
        pattern_covs,
        record_log_likelihood: record_ll,
        log_likelihood,
        usable,
        skipped,
    })
}

/// Conjugate updates of the fixed priors with expected statistics, then
/// marginalization.
pub fn m_step(priors: &ModelPriors, template: &MixtureModel, stats: &SufficientStats) -> Result<MixtureModel> {
    if priors.types.len() != template.num_types() || stats.per_type.len() != template.num_types() {
        return Err(Error::DimensionMismatch {
            expected: template.num_types(),
            got: stats.per_type.len(),
        });
    }
    let types = template
        .types
        .iter()
        .zip(&priors.types)
        .zip(&stats.per_type)
        .map(|((ty, prior), s)| {
            Ok((
                ty.layout.clone(),
                nw_update(&prior.nw, &s.gauss)?,
                wishart_scalar_update(&prior.noise, &s.noise)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<f64> = stats.per_type.iter().map(|s| s.weight).collect();
    let dirichlet = dirichlet_update(&priors.dirichlet, &counts)?;
    MixtureModel::from_hyper(template.domain.clone(), types, dirichlet)
}

/// Per-record and total observed-data log likelihood.
pub fn log_likelihood(model: &MixtureModel, db: &UtilityDatabase) -> Result<(Vec<f64>, f64)> {
    let s = e_step(model, db, NoiseCrossTerm::default())?;
    Ok((s.record_log_likelihood, s.log_likelihood))
}

/// Log density of the model's point parameters under the priors: Normal-Wishart
/// at `(mean, cov^{-1})`, scalar Wishart at `1 / noise_var`, Dirichlet at theta.
pub fn log_prior_density(priors: &ModelPriors, model: &MixtureModel) -> Result<f64> {
    use statrs::function::gamma::ln_gamma;
    let ln2 = std::f64::consts::LN_2;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for (ty, prior) in model.types.iter().zip(&priors.types) {
        let nw = &prior.nw;
        let m = nw.dim();
        let mf = m as f64;
        let precision = linalg::spd_inverse(&ty.params.cov, "type covariance")?;
        let ld_q = -linalg::log_det(&linalg::cholesky(&ty.params.cov, "type covariance")?);
        let ld_r = linalg::log_det(&linalg::cholesky(&nw.r, "prior R")?);
        let d = &ty.params.mean - &nw.lambda;
        let quad = (d.transpose() * &precision * &d)[(0, 0)];
        let normal = -0.5 * mf * ln2pi + 0.5 * (mf * nw.nu.ln() + ld_q) - 0.5 * nw.nu * quad;
        let wishart = 0.5 * (nw.beta - mf - 1.0) * ld_q - 0.5 * (&nw.r * &precision).trace() - 0.5 * nw.beta * mf * ln2
            + 0.5 * nw.beta * ld_r
            - linalg::ln_multigamma(m, nw.beta / 2.0);
        let ns = &prior.noise;
        let q = 1.0 / ty.params.noise_var;
        let noise = 0.5 * (ns.gamma - 2.0) * q.ln() - 0.5 * ns.rho * q - 0.5 * ns.gamma * ln2
            + 0.5 * ns.gamma * ns.rho.ln()
            - ln_gamma(ns.gamma / 2.0);
        total += normal + wishart + noise;
    }
    let a = &priors.dirichlet.alpha;
    total += ln_gamma(a.iter().sum())
        + a.iter()
            .zip(&model.theta)
            .map(|(ai, th)| (ai - 1.0) * th.ln() - ln_gamma(*ai))
            .sum::<f64>();
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub seed: u64,
    /// Observed-data log likelihood after each M-step.
    pub scores: Vec<f64>,
    /// Log prior density of the point parameters at the same iterates.
    pub log_prior: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    pub restarts: Vec<RestartTrace>,
    pub best_restart: usize,
    pub jitter_events: u64,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Expected statistics evaluated at the returned model.
    pub stats: SufficientStats,
    pub priors: ModelPriors,
    pub diagnostics: EmDiagnostics,
}

impl EmFit {
    pub fn score(&self) -> f64 {
        self.stats.log_likelihood
    }
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn random_responsibilities(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn run_restart(
    initial: &MixtureModel,
    priors: &ModelPriors,
    db: &UtilityDatabase,
    config: &EmConfig,
    restart: usize,
    trace: &mut RestartTrace,
) -> Result<(MixtureModel, SufficientStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(trace.seed);
    let forced = random_responsibilities(&mut rng, db.len(), initial.num_types());
    let init_stats = e_step_impl(initial, db, config.cross_term, Some(&forced))?;
    let mut model = m_step(priors, initial, &init_stats)?;
    loop {
        let stats = e_step(&model, db, config.cross_term)?;
        let score = stats.log_likelihood;
        trace
            .log_prior
            .push(log_prior_density(priors, &model).unwrap_or(f64::NAN));
        let previous = trace.scores.last().copied();
        trace.scores.push(score);
        if let Some(prev) = previous {
            let rel = (score - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < config.tol {
                trace.converged = true;
                return Ok((model, stats));
            }
        }
        if trace.iterations >= config.max_iters {
            log::debug!("restart {restart}: reached max_iters {}", config.max_iters);
            return Ok((model, stats));
        }
        model = m_step(priors, &model, &stats)?;
        trace.iterations += 1;
    }
}

/// Fit a mixture with the given per-type structures.
pub fn em_fit(
    domain: &Domain,
    structures: &[ClusterStructure],
    db: &UtilityDatabase,
    config: &EmConfig,
    prior_config: &PriorConfig,
) -> Result<EmFit> {
    if structures.is_empty() {
        return Err(Error::EmFailed("at least one type is required".into()));
    }
    if db.records.iter().all(|r| r.observed_count() == 0) {
        return Err(Error::EmFailed("database has no observed utilities".into()));
    }
    let layouts = structures
        .iter()
        .map(|s| TypeLayout::new(domain, s).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = layouts.iter().map(|l| l.basis.len()).collect();
    let priors = prior_config.model_priors(&dims)?;
    let initial = MixtureModel::from_priors(domain, &layouts, &priors)?;
    let jitter_before = linalg::jitter_events();

    let mut best: Option<(usize, MixtureModel, SufficientStats)> = None;
    let mut traces = vec![];
    for restart in 0..config.restarts.max(1) {
        let mut trace = RestartTrace {
            restart,
            seed: restart_seed(config.seed, restart),
            scores: vec![],
            log_prior: vec![],
            iterations: 0,
            converged: false,
            error: None,
        };
        match run_restart(&initial, &priors, db, config, restart, &mut trace) {
            Ok((model, stats)) => {
                let better = best
                    .as_ref()
                    .is_none_or(|(_, _, b)| stats.log_likelihood > b.log_likelihood);
                if better {
                    best = Some((restart, model, stats));
                }
            }
            Err(e) => {
                log::warn!("EM restart {restart} failed: {e}");
                trace.error = Some(e.to_string());
            }
        }
        traces.push(trace);
    }
    let Some((best_restart, model, stats)) = best else {
        return Err(Error::EmFailed(format!(
            "all {} restarts failed: {}",
            traces.len(),
            traces
                .iter()
                .filter_map(|t| t.error.clone())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    };
    Ok(EmFit {
        model,
        stats,
        priors,
        diagnostics: EmDiagnostics {
            restarts: traces,
            best_restart,
            jitter_events: linalg::jitter_events() - jitter_before,
        },
    })
}
