use std::path::PathBuf;

use clap::{Args, ValueEnum};
use prefdens_core::mixture::{log_likelihood, EmConfig, MixtureModel, PriorConfig};
use prefdens_core::projection::{classify, ls_project, map_project, posterior_weights};
use prefdens_core::search::{cs_score, CandidateStructure, CsComponents};
use serde::Serialize;

use crate::error::CliError;
use crate::inputs::{check_domain, load_db_for_model, load_model, load_utility, write_output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Least squares; needs every outcome.
    Ls,
    /// Posterior mean under the type's prior.
    Map,
    /// Posterior mean and covariance.
    Posterior,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON array of utilities, `null` for unknown outcomes.
    #[arg(long, required_unless_present = "db", conflicts_with = "db")]
    utility: Option<PathBuf>,
    /// Project every record of a CSV database.
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "map")]
    method: Method,
    /// Use this type instead of the most probable one.
    #[arg(long = "type")]
    type_id: Option<usize>,
    /// Domain file that must match the model's.
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Projection {
    #[serde(skip_serializing_if = "Option::is_none")]
    respondent: Option<String>,
    method: &'static str,
    #[serde(rename = "type")]
    type_id: usize,
    type_posterior: Vec<f64>,
    weights: Vec<f64>,
    utility: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov: Option<Vec<Vec<f64>>>,
}

fn project_one(
    model: &MixtureModel,
    u: &[Option<f64>],
    method: Method,
    type_id: Option<usize>,
) -> Result<Projection, CliError> {
    let n = model.domain.num_outcomes();
    if u.len() != n {
        return Err(CliError::Mismatch(format!(
            "utility has {} entries, the model's domain {n}",
            u.len()
        )));
    }
    let classified = classify(u, model)?;
    let t = match type_id {
        Some(t) if t >= model.num_types() => {
            return Err(CliError::Malformed(format!(
                "--type {t} but the model has {} types",
                model.num_types()
            )))
        }
        Some(t) => t,
        None => classified.best_type,
    };
    let ty = &model.types[t];
    let a = ty.design_matrix();
    let complete: Option<Vec<f64>> = u.iter().copied().collect();
    let (weights, cov) = match (method, &complete) {
        (Method::Ls, Some(full)) => (ls_project(full, a)?, None),
        (Method::Ls, None) => return Err(CliError::Malformed("least squares needs every outcome".into())),
        (Method::Map, Some(full)) => (map_project(full, &ty.params, a)?, None),
        (Method::Map, None) => (posterior_weights(u, &ty.params, a)?.0.mean, None),
        (Method::Posterior, _) => {
            let g = posterior_weights(u, &ty.params, a)?.0;
            let rows = (0..g.cov.nrows())
                .map(|i| g.cov.row(i).iter().copied().collect())
                .collect();
            (g.mean, Some(rows))
        }
    };
    Ok(Projection {
        respondent: None,
        method: match method {
            Method::Ls => "ls",
            Method::Map => "map",
            Method::Posterior => "posterior",
        },
        type_id: t,
        type_posterior: classified.type_posterior,
        utility: (a * &weights).iter().copied().collect(),
        weights: weights.iter().copied().collect(),
        cov,
    })
}

pub fn run_project(args: ProjectArgs) -> Result<(), CliError> {
    let (_, model) = load_model(&args.model)?;
    check_domain(&model, args.domain.as_ref())?;
    let text = match (&args.utility, &args.db) {
        (Some(path), _) => {
            let u = load_utility(path)?;
            serde_json::to_string_pretty(&project_one(&model, &u, args.method, args.type_id)?)?
        }
        (None, Some(path)) => {
            let db = load_db_for_model(&model, path)?;
            let out = db
                .records
                .iter()
                .map(|r| {
                    let mut p = project_one(&model, &r.values, args.method, args.type_id)
                        .map_err(|e| e.context(format!("respondent {}", r.respondent)))?;
                    p.respondent = Some(r.respondent.clone());
                    Ok(p)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            serde_json::to_string_pretty(&out)?
        }
        (None, None) => unreachable!("clap requires --utility or --db"),
    };
    write_output(args.out.as_deref(), &(text + "\n"))
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Refit the model's structures on the database and report the CS score.
    #[arg(long)]
    cs: bool,
    /// EM seed for --cs (defaults to the model's provenance seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RecordScore {
    respondent: String,
    log_likelihood: f64,
}

#[derive(Debug, Serialize)]
struct CsReport {
    score: f64,
    components: CsComponents,
    em_iters: usize,
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    total: f64,
    per_record: Vec<RecordScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cs: Option<CsReport>,
}

pub fn run_score(args: ScoreArgs) -> Result<(), CliError> {
    let (file, model) = load_model(&args.model)?;
    check_domain(&model, args.domain.as_ref())?;
    let db = load_db_for_model(&model, &args.db)?;
    let (per_record, total) = log_likelihood(&model, &db)?;
    let cs = if args.cs {
        let em = EmConfig {
            seed: args.seed.unwrap_or(file.provenance.seed),
            ..EmConfig::default()
        };
        let candidate = CandidateStructure::new(model.structures());
        let s = cs_score(&model.domain, &candidate, &db, &PriorConfig::default(), &em)?;
        Some(CsReport {
            score: s.cs_score,
            components: s.components,
            em_iters: s.em_iters,
        })
    } else {
        None
    };
    let report = ScoreReport {
        total,
        per_record: db
            .records
            .iter()
            .zip(per_record)
            .map(|(r, ll)| RecordScore {
                respondent: r.respondent.clone(),
                log_likelihood: ll,
            })
            .collect(),
        cs,
    };
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}
