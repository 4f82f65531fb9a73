//! Synthetic utility databases from known mixtures, and the experiments run
//! on them: structure recovery, weight-projection comparison, learning curves.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{basis_count, ClusterStructure, Domain, StructureSpec};
use crate::db::{UtilityDatabase, UtilityRecord};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::{em_fit, log_likelihood, EmConfig, PriorConfig, TypeLayout};
use crate::projection::{classify, ls_project, map_project};
use crate::search::{hill_climb, CandidateStructure, SearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorType {
    pub structure: StructureSpec,
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<Vec<f64>>,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub domain: Domain,
    pub types: Vec<GeneratorType>,
    pub theta: Vec<f64>,
    pub n: usize,
    pub missing_rate: f64,
    pub seed: u64,
}

/// One sampled record's hidden truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub type_id: usize,
    pub weights: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub db: UtilityDatabase,
    pub truth: Vec<Truth>,
}

/// One ternary and two binary attributes.
pub fn three_attribute_domain() -> Domain {
    Domain::with_arities(&[("X1", 3), ("X2", 2), ("X3", 2)]).expect("valid domain")
}

/// One ternary and three binary attributes.
pub fn four_attribute_domain() -> Domain {
    Domain::with_arities(&[("X1", 3), ("X2", 2), ("X3", 2), ("X4", 2)]).expect("valid domain")
}

/// Default generator scales.
pub const MEAN_VAR: f64 = 0.25;
pub const WEIGHT_VAR: f64 = 0.05;
pub const NOISE_SD: f64 = 0.05;

impl GeneratorSpec {
    /// Draw true means from `N(0, MEAN_VAR)` with `Sigma = WEIGHT_VAR * I` and
    /// noise sd `NOISE_SD`; `param_seed` fixes the parameters, `seed` the data.
    pub fn draw(domain: &Domain, structures: &[ClusterStructure], theta: Vec<f64>, param_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(param_seed);
        let types = structures
            .iter()
            .map(|s| {
                let m = basis_count(domain, s)?;
                let mean = (0..m)
                    .map(|_| MEAN_VAR.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let cov = (0..m)
                    .map(|i| (0..m).map(|j| if i == j { WEIGHT_VAR } else { 0.0 }).collect())
                    .collect();
                Ok(GeneratorType {
                    structure: StructureSpec::of(s, domain),
                    mean,
                    cov,
                    noise_var: NOISE_SD * NOISE_SD,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            domain: domain.clone(),
            types,
            theta,
            n: 0,
            missing_rate: 0.0,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_data(&self, n: usize, missing_rate: f64, seed: u64) -> Self {
        Self {
            n,
            missing_rate,
            seed,
            ..self.clone()
        }
    }

    pub fn structures(&self) -> Result<Vec<ClusterStructure>> {
        self.types.iter().map(|t| t.structure.resolve(&self.domain)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() || self.types.len() != self.theta.len() {
            return Err(Error::Malformed("need one theta per type".into()));
        }
        if self.theta.iter().any(|t| !(*t >= 0.0)) || (self.theta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Malformed(format!("theta {:?} must sum to 1", self.theta)));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Malformed(format!("missing rate {}", self.missing_rate)));
        }
        for t in &self.types {
            let m = basis_count(&self.domain, &t.structure.resolve(&self.domain)?)?;
            if t.mean.len() != m || t.cov.len() != m || t.cov.iter().any(|r| r.len() != m) {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: t.mean.len(),
                });
            }
            if !(t.noise_var >= 0.0) {
                return Err(Error::Malformed(format!("noise variance {}", t.noise_var)));
            }
        }
        Ok(())
    }
}

struct Sampler {
    design: DMatrix<f64>,
    mean: DVector<f64>,
    /// Lower factor of the weight covariance; `None` when it is zero.
    factor: Option<DMatrix<f64>>,
    noise_sd: f64,
}

fn samplers(spec: &GeneratorSpec) -> Result<Vec<Sampler>> {
    spec.types
        .iter()
        .map(|t| {
            let layout = TypeLayout::new(&spec.domain, &t.structure.resolve(&spec.domain)?)?;
            let m = t.mean.len();
            let cov = DMatrix::from_fn(m, m, |i, j| t.cov[i][j]);
            let factor = if cov.amax() == 0.0 {
                None
            } else {
                Some(linalg::cholesky(&cov, "generator covariance")?.l())
            };
            Ok(Sampler {
                design: layout.design_matrix,
                mean: DVector::from_vec(t.mean.clone()),
                factor,
                noise_sd: t.noise_var.sqrt(),
            })
        })
        .collect()
}

pub fn sample_database(spec: &GeneratorSpec) -> Result<Sample> {
    spec.validate()?;
    let samplers = samplers(spec)?;
    let pick = WeightedIndex::new(&spec.theta).map_err(|e| Error::Malformed(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_out = spec.domain.num_outcomes();
    let mut db = UtilityDatabase::new(n_out);
    let mut truth = Vec::with_capacity(spec.n);
    for j in 0..spec.n {
        let t = pick.sample(&mut rng);
        let s = &samplers[t];
        let z = DVector::from_fn(s.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = match &s.factor {
            Some(l) => &s.mean + l * z,
            None => s.mean.clone(),
        };
        let u = &s.design * &w;
        let values = u
            .iter()
            .map(|x| {
                let noisy = x + s.noise_sd * rng.sample::<f64, _>(StandardNormal);
                let missing = rng.random::<f64>() < spec.missing_rate;
                (!missing).then_some(noisy)
            })
            .collect();
        db.push(UtilityRecord {
            respondent: format!("r{j}"),
            values,
        })?;
        truth.push(Truth { type_id: t, weights: w });
    }
    Ok(Sample { db, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn push(&mut self, condition: impl Into<String>, metric: impl Into<String>, value: f64) {
        self.rows.push(ReportRow {
            condition: condition.into(),
            metric: metric.into(),
            value,
        });
    }

    pub fn get(&self, condition: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cell(n: usize, seed: u64) -> String {
    format!("n={n},seed={seed}")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// Summed cluster-set symmetric difference under the best matching of types.
pub fn edit_distance(truth: &[ClusterStructure], found: &[ClusterStructure]) -> usize {
    if truth.len() != found.len() {
        return usize::MAX;
    }
    permutations(truth.len())
        .into_iter()
        .map(|p| {
            truth
                .iter()
                .zip(&p)
                .map(|(a, &i)| a.symmetric_difference(&found[i]))
                .sum()
        })
        .min()
        .unwrap_or(0)
}

/// Per (N, seed): sample, search, report exact match and edit distance.
pub fn run_structure_recovery(
    truth: &GeneratorSpec,
    ns: &[usize],
    seeds: &[u64],
    missing_rate: f64,
    search: &SearchConfig,
    priors: &PriorConfig,
) -> Result<ExperimentReport> {
    let true_structures = truth.structures()?;
    let target = CandidateStructure::new(true_structures.clone());
    let cells: Vec<(usize, u64)> = ns.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let results: Vec<Result<(bool, usize, f64)>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let sample = sample_database(&truth.with_data(n, missing_rate, seed))?;
            let config = SearchConfig { seed, ..*search };
            let r = hill_climb(&truth.domain, &sample.db, true_structures.len(), &config, priors)?;
            Ok((
                r.best == target,
                edit_distance(&true_structures, r.best.types()),
                r.score.cs_score,
            ))
        })
        .collect();
    let mut report = ExperimentReport::default();
    for &n in ns {
        let mut matches = 0usize;
        for &seed in seeds {
            let idx = cells.iter().position(|c| *c == (n, seed)).expect("cell");
            let (exact, dist, score) = results[idx].as_ref().map_err(|e| Error::EmFailed(e.to_string()))?;
            report.push(cell(n, seed), "exact_match", if *exact { 1.0 } else { 0.0 });
            report.push(cell(n, seed), "edit_distance", *dist as f64);
            report.push(cell(n, seed), "cs_score", *score);
            matches += usize::from(*exact);
        }
        report.push(format!("n={n}"), "match_rate", matches as f64 / seeds.len() as f64);
    }
    Ok(report)
}

/// Per seed and training size: fit with the true structures, then compare
/// least-squares and MAP weight estimates on a fixed complete test set.
pub fn run_projection_comparison(
    truth: &GeneratorSpec,
    train_ns: &[usize],
    test_size: usize,
    seeds: &[u64],
    em: &EmConfig,
    priors: &PriorConfig,
) -> Result<ExperimentReport> {
    let structures = truth.structures()?;
    let designs: Vec<DMatrix<f64>> = structures
        .iter()
        .map(|s| Ok(TypeLayout::new(&truth.domain, s)?.design_matrix))
        .collect::<Result<_>>()?;
    let cells: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| train_ns.iter().map(move |&n| (s, n)))
        .collect();
    let results: Vec<Result<(f64, f64)>> = cells
        .par_iter()
        .map(|&(seed, n)| {
            let test = sample_database(&truth.with_data(test_size, 0.0, seed ^ 0x7E57))?;
            let train = sample_database(&truth.with_data(n, truth.missing_rate, seed))?;
            let fit = em_fit(&truth.domain, &structures, &train.db, &EmConfig { seed, ..*em }, priors)?;
            let (mut ls_err, mut map_err, mut count) = (0.0, 0.0, 0usize);
            for (r, t) in test.db.records.iter().zip(&test.truth) {
                let u: Vec<f64> = r.values.iter().map(|v| v.expect("complete test record")).collect();
                let ls = ls_project(&u, &designs[t.type_id])?;
                let best = classify(&r.values, &fit.model)?.best_type;
                let ty = &fit.model.types[best];
                if ty.dim() != t.weights.len() {
                    continue;
                }
                let map = map_project(&u, &ty.params, ty.design_matrix())?;
                ls_err += (ls - &t.weights).norm();
                map_err += (map - &t.weights).norm();
                count += 1;
            }
            let c = count.max(1) as f64;
            Ok((ls_err / c, map_err / c))
        })
        .collect();
    let mut report = ExperimentReport::default();
    for (&(seed, n), r) in cells.iter().zip(results) {
        let (ls, map) = r?;
        report.push(cell(n, seed), "ls_error", ls);
        report.push(cell(n, seed), "map_error", map);
        report.push(cell(n, seed), "gap", map - ls);
    }
    for &n in train_ns {
        for metric in ["ls_error", "map_error", "gap"] {
            let v: Vec<f64> = seeds.iter().filter_map(|&s| report.get(&cell(n, s), metric)).collect();
            report.push(format!("n={n}"), format!("{metric}_mean"), mean(&v));
        }
    }
    Ok(report)
}

/// Parameter distances to the truth and held-out log likelihood per training
/// size. Learned types are matched to true types by smallest mean distance.
pub fn run_learning_curve(
    truth: &GeneratorSpec,
    ns: &[usize],
    test_size: usize,
    seeds: &[u64],
    em: &EmConfig,
    priors: &PriorConfig,
) -> Result<ExperimentReport> {
    let structures = truth.structures()?;
    let k = structures.len();
    let cells: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| ns.iter().map(move |&n| (s, n))).collect();
    let results: Vec<Result<[f64; 4]>> = cells
        .par_iter()
        .map(|&(seed, n)| {
            let test = sample_database(&truth.with_data(test_size, truth.missing_rate, seed ^ 0x7E57))?;
            let train = sample_database(&truth.with_data(n, truth.missing_rate, seed))?;
            let fit = em_fit(&truth.domain, &structures, &train.db, &EmConfig { seed, ..*em }, priors)?;
            let mut best = [f64::INFINITY; 3];
            for p in permutations(k) {
                let mut d = [0.0; 3];
                for (t, &i) in p.iter().enumerate() {
                    let tt = &truth.types[t];
                    let learned = &fit.model.types[i].params;
                    if learned.dim() != tt.mean.len() {
                        d = [f64::INFINITY; 3];
                        break;
                    }
                    let m = tt.mean.len();
                    d[0] += (&learned.mean - DVector::from_vec(tt.mean.clone())).norm();
                    d[1] += (&learned.cov - DMatrix::from_fn(m, m, |a, b| tt.cov[a][b])).norm();
                    d[2] += (learned.noise_var - tt.noise_var).abs();
                }
                if d[0] < best[0] {
                    best = d;
                }
            }
            let (_, ll) = log_likelihood(&fit.model, &test.db)?;
            Ok([best[0], best[1], best[2], ll / test_size.max(1) as f64])
        })
        .collect();
    let names = ["mean_distance", "cov_distance", "noise_var_distance", "heldout_ll"];
    let mut report = ExperimentReport::default();
    for (&(seed, n), r) in cells.iter().zip(results) {
        for (name, v) in names.iter().zip(r?) {
            report.push(cell(n, seed), *name, v);
        }
    }
    for &n in ns {
        for name in names {
            let v: Vec<f64> = seeds.iter().filter_map(|&s| report.get(&cell(n, s), name)).collect();
            report.push(format!("n={n}"), format!("{name}_median"), median(v));
        }
    }
    Ok(report)
}
