//! Structure scoring with the Cheeseman-Stutz approximation and greedy
//! hill-climbing over per-type cluster structures.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{basis_count, ClusterStructure, Domain};
use crate::db::UtilityDatabase;
use crate::error::{Error, Result};
use crate::gaussian::{dirichlet_log_marginal, nw_log_marginal_likelihood, wishart_scalar_log_marginal};
use crate::linalg;
use crate::mixture::{em_fit, EmConfig, EmFit, MixtureModel, PriorConfig, SufficientStats};

/// One cluster structure per type. Types are exchangeable, so the list is kept
/// sorted to give every candidate a single canonical key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateStructure {
    types: Vec<ClusterStructure>,
}

impl CandidateStructure {
    pub fn new(mut types: Vec<ClusterStructure>) -> Self {
        types.sort();
        Self { types }
    }

    pub fn types(&self) -> &[ClusterStructure] {
        &self.types
    }

    pub fn basis_size(&self, domain: &Domain) -> usize {
        self.types
            .iter()
            .map(|s| basis_count(domain, s).unwrap_or(usize::MAX))
            .sum()
    }

    pub fn to_names(&self, domain: &Domain) -> Vec<Vec<Vec<String>>> {
        self.types.iter().map(|s| s.to_names(domain)).collect()
    }
}

impl std::fmt::Display for CandidateStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, s) in self.types.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsComponents {
    /// `log P(D_c | s)`: closed-form marginal of the expected completed data.
    pub completed_marginal: f64,
    /// `log P(D | psi, s)`.
    pub observed_log_likelihood: f64,
    /// `log P(D_c | psi, s)`.
    pub completed_log_likelihood: f64,
}

impl CsComponents {
    pub fn score(&self) -> f64 {
        self.completed_marginal + self.observed_log_likelihood - self.completed_log_likelihood
    }
}

#[derive(Debug, Clone)]
pub struct StructureScore {
    pub cs_score: f64,
    pub components: CsComponents,
    pub em_iters: usize,
    pub fit: EmFit,
}

/// Expected complete-data log likelihood at the fitted point parameters.
pub fn completed_log_likelihood(model: &MixtureModel, stats: &SufficientStats) -> Result<f64> {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for (t, (ty, s)) in model.types.iter().zip(&stats.per_type).enumerate() {
        if s.weight == 0.0 {
            continue;
        }
        let p = &ty.params;
        let m = ty.dim() as f64;
        let chol = linalg::cholesky(&p.cov, "type covariance")?;
        let d = &s.gauss.mean - &p.mean;
        let spread = &s.gauss.scatter + (&d * d.transpose()) * s.weight;
        let trace = chol.solve(&spread).trace();
        total += s.weight * model.theta[t].ln();
        total += -0.5 * s.weight * (m * ln2pi + linalg::log_det(&chol)) - 0.5 * trace;
        total += -0.5 * s.observed * (ln2pi + p.noise_var.ln()) - s.noise_sq_total / (2.0 * p.noise_var);
    }
    Ok(total)
}

/// Closed-form marginal likelihood of the expected completed data.
pub fn completed_marginal(fit: &EmFit) -> Result<f64> {
    let mut total = 0.0;
    for (prior, s) in fit.priors.types.iter().zip(&fit.stats.per_type) {
        total += nw_log_marginal_likelihood(&prior.nw, &s.gauss)?;
        total += wishart_scalar_log_marginal(&prior.noise, &s.noise)?;
    }
    let counts: Vec<f64> = fit.stats.per_type.iter().map(|s| s.weight).collect();
    total += dirichlet_log_marginal(&fit.priors.dirichlet, &counts)?;
    Ok(total)
}

pub fn score_fit(fit: EmFit) -> Result<StructureScore> {
    let components = CsComponents {
        completed_marginal: completed_marginal(&fit)?,
        observed_log_likelihood: fit.stats.log_likelihood,
        completed_log_likelihood: completed_log_likelihood(&fit.model, &fit.stats)?,
    };
    let em_iters = fit.diagnostics.restarts[fit.diagnostics.best_restart].iterations;
    Ok(StructureScore {
        cs_score: components.score(),
        components,
        em_iters,
        fit,
    })
}

pub fn cs_score(
    domain: &Domain,
    candidate: &CandidateStructure,
    db: &UtilityDatabase,
    priors: &PriorConfig,
    em: &EmConfig,
) -> Result<StructureScore> {
    if db.is_empty() {
        return Err(Error::EmFailed("empty database".into()));
    }
    score_fit(em_fit(domain, candidate.types(), db, em, priors)?)
}

fn structure_neighbors(s: &ClusterStructure, num_variables: usize, out: &mut BTreeSet<ClusterStructure>) {
    let clusters = s.clusters();
    for (i, c) in clusters.iter().enumerate() {
        for v in 0..num_variables {
            let mut next = clusters.to_vec();
            if c.contains(&v) {
                next[i].retain(|&x| x != v);
            } else {
                next[i].push(v);
            }
            out.insert(ClusterStructure::new(next));
        }
    }
    for v in 0..num_variables {
        if !clusters.iter().any(|c| c == &[v]) {
            let mut next = clusters.to_vec();
            next.push(vec![v]);
            out.insert(ClusterStructure::new(next));
        }
    }
}

/// Candidates one add, delete or new-singleton move away, changing one type
/// at a time.
pub fn neighbors(
    candidate: &CandidateStructure,
    num_variables: usize,
    max_cluster_size: usize,
) -> Vec<CandidateStructure> {
    let mut out = BTreeSet::new();
    for (t, s) in candidate.types.iter().enumerate() {
        let mut moves = BTreeSet::new();
        structure_neighbors(s, num_variables, &mut moves);
        for m in moves {
            if m == *s || m.max_cluster_size() > max_cluster_size {
                continue;
            }
            let mut types = candidate.types.clone();
            types[t] = m;
            out.insert(CandidateStructure::new(types));
        }
    }
    out.remove(candidate);
    out.into_iter().collect()
}

/// Random canonical structure with clusters of at most `max_cluster_size`.
pub fn random_structure(rng: &mut impl Rng, num_variables: usize, max_cluster_size: usize) -> ClusterStructure {
    let n = rng.random_range(1..=num_variables.max(1));
    let clusters = (0..n).map(|_| {
        let size = rng.random_range(1..=max_cluster_size.clamp(1, num_variables.max(1)));
        let mut vars: Vec<usize> = (0..num_variables).collect();
        for i in 0..size.min(vars.len()) {
            let j = rng.random_range(i..vars.len());
            vars.swap(i, j);
        }
        vars.truncate(size);
        vars
    });
    ClusterStructure::new(clusters.collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_cluster_size: usize,
    /// EM budget for each candidate evaluated during the climb.
    pub em: EmConfig,
    /// EM budget for the final refit of the winner.
    pub final_em: EmConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            seed: 0,
            max_cluster_size: 3,
            em: EmConfig {
                restarts: 2,
                max_iters: 60,
                tol: 1e-4,
                ..EmConfig::default()
            },
            final_em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub restart: usize,
    pub step: usize,
    pub structures: Vec<Vec<Vec<String>>>,
    pub cs_score: Option<f64>,
    pub components: Option<CsComponents>,
    pub em_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    pub entries: Vec<TraceEntry>,
    pub em_runs: usize,
}

impl SearchTrace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: CandidateStructure,
    /// Score of the winner refit with the final EM budget.
    pub score: StructureScore,
    /// Score of the winner under the search budget.
    pub search_score: f64,
    pub trace: SearchTrace,
}

type Cache = HashMap<CandidateStructure, Option<Arc<StructureScore>>>;

struct Climber<'a> {
    domain: &'a Domain,
    db: &'a UtilityDatabase,
    priors: &'a PriorConfig,
    config: &'a SearchConfig,
    cache: Cache,
    trace: SearchTrace,
}

impl Climber<'_> {
    /// Score every uncached candidate in parallel and record them in order.
    fn evaluate(&mut self, candidates: &[CandidateStructure], restart: usize, step: usize) {
        let fresh: Vec<&CandidateStructure> = candidates
            .iter()
            .filter(|c| !self.cache.contains_key(*c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let results: Vec<Result<StructureScore>> = fresh
            .par_iter()
            .map(|c| cs_score(self.domain, c, self.db, self.priors, &self.config.em))
            .collect();
        for (c, r) in fresh.into_iter().zip(results) {
            self.trace.em_runs += 1;
            let structures = c.to_names(self.domain);
            let entry = match &r {
                Ok(s) => TraceEntry {
                    restart,
                    step,
                    structures,
                    cs_score: Some(s.cs_score),
                    components: Some(s.components),
                    em_iters: Some(s.em_iters),
                    error: None,
                },
                Err(e) => {
                    log::warn!("candidate {c} skipped: {e}");
                    TraceEntry {
                        restart,
                        step,
                        structures,
                        cs_score: None,
                        components: None,
                        em_iters: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            self.trace.entries.push(entry);
            self.cache.insert(c.clone(), r.ok().map(Arc::new));
        }
    }

    fn score(&self, c: &CandidateStructure) -> Option<f64> {
        self.cache.get(c).and_then(|s| s.as_ref().map(|s| s.cs_score))
    }

    /// `a` beats `b`: higher score, then fewer basis functions, then
    /// lexicographically smaller.
    fn better(&self, a: (&CandidateStructure, f64), b: (&CandidateStructure, f64)) -> bool {
        if a.1 != b.1 {
            return a.1 > b.1;
        }
        let (sa, sb) = (a.0.basis_size(self.domain), b.0.basis_size(self.domain));
        if sa != sb {
            return sa < sb;
        }
        a.0 < b.0
    }

    fn climb(&mut self, start: CandidateStructure, restart: usize) -> Option<(CandidateStructure, f64)> {
        self.evaluate(std::slice::from_ref(&start), restart, 0);
        let mut current = start;
        let mut current_score = self.score(&current)?;
        let nvars = self.domain.num_variables();
        for step in 1.. {
            let nbrs = neighbors(&current, nvars, self.config.max_cluster_size);
            self.evaluate(&nbrs, restart, step);
            let mut best: Option<(&CandidateStructure, f64)> = None;
            for n in &nbrs {
                let Some(s) = self.score(n) else { continue };
                if best.is_none_or(|b| self.better((n, s), b)) {
                    best = Some((n, s));
                }
            }
            match best {
                Some((n, s)) if s > current_score => {
                    log::debug!("restart {restart} step {step}: {n} ({s:.4})");
                    current = n.clone();
                    current_score = s;
                }
                _ => break,
            }
        }
        Some((current, current_score))
    }
}

fn restart_start(config: &SearchConfig, num_variables: usize, n_types: usize, restart: usize) -> CandidateStructure {
    if restart == 0 {
        return CandidateStructure::new(vec![ClusterStructure::fully_additive(num_variables); n_types]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
    CandidateStructure::new(
        (0..n_types)
            .map(|_| random_structure(&mut rng, num_variables, config.max_cluster_size))
            .collect(),
    )
}

pub fn hill_climb(
    domain: &Domain,
    db: &UtilityDatabase,
    n_types: usize,
    config: &SearchConfig,
    priors: &PriorConfig,
) -> Result<SearchResult> {
    if n_types == 0 {
        return Err(Error::InvalidHyperparameter("at least one type is required".into()));
    }
    let mut climber = Climber {
        domain,
        db,
        priors,
        config,
        cache: HashMap::new(),
        trace: SearchTrace::default(),
    };
    let mut best: Option<(CandidateStructure, f64)> = None;
    for restart in 0..config.restarts.max(1) {
        let start = restart_start(config, domain.num_variables(), n_types, restart);
        let Some((c, s)) = climber.climb(start, restart) else {
            continue;
        };
        if best.as_ref().is_none_or(|(bc, bs)| climber.better((&c, s), (bc, *bs))) {
            best = Some((c, s));
        }
    }
    let Some((best, search_score)) = best else {
        return Err(Error::EmFailed("no candidate structure could be scored".into()));
    };
    let score = cs_score(domain, &best, db, priors, &config.final_em)?;
    Ok(SearchResult {
        best,
        score,
        search_score,
        trace: climber.trace,
    })
}

/// Outer loop over the number of types, keeping the best final score.
pub fn search_types(
    domain: &Domain,
    db: &UtilityDatabase,
    max_types: usize,
    config: &SearchConfig,
    priors: &PriorConfig,
) -> Result<(usize, SearchResult)> {
    let mut best: Option<(usize, SearchResult)> = None;
    for k in 1..=max_types.max(1) {
        let r = hill_climb(domain, db, k, config, priors)?;
        if best.as_ref().is_none_or(|(_, b)| r.score.cs_score > b.score.cs_score) {
            best = Some((k, r));
        }
    }
    best.ok_or_else(|| Error::EmFailed("no type count could be scored".into()))
}
