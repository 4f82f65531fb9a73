use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use prefdens_core::basis::{ClusterStructure, StructureSpec};
use prefdens_core::mixture::{em_fit, EmConfig, NoiseCrossTerm, PriorConfig};
use prefdens_core::model_file::{ModelFile, Provenance};
use prefdens_core::search::{hill_climb, score_fit, search_types, SearchConfig};
use serde_json::json;

use crate::error::CliError;
use crate::inputs::{load_db, load_domain, sibling};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CrossTerm {
    ResidualMean,
    OutcomeMean,
}

impl From<CrossTerm> for NoiseCrossTerm {
    fn from(c: CrossTerm) -> Self {
        match c {
            CrossTerm::ResidualMean => NoiseCrossTerm::ResidualMean,
            CrossTerm::OutcomeMean => NoiseCrossTerm::OutcomeMean,
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Number of types (inferred from --structure when omitted).
    #[arg(long)]
    types: Option<usize>,
    /// Also try every type count up to this one and keep the best score.
    #[arg(long, conflicts_with_all = ["structure", "types"])]
    max_types: Option<usize>,
    /// JSON list of per-type structures, e.g. `[{"clusters":[["A","B"],["C"]]}]`.
    #[arg(long, conflicts_with = "structure_search")]
    structure: Option<PathBuf>,
    /// Search structures by hill climbing (the default without --structure).
    #[arg(long)]
    structure_search: bool,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hill-climb restarts when searching, EM restarts with a fixed structure.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    em_tol: f64,
    #[arg(long, default_value_t = 200)]
    em_max_iters: usize,
    #[arg(long, default_value_t = 3)]
    max_cluster_size: usize,
    #[arg(long, value_enum, default_value = "residual-mean")]
    cross_term: CrossTerm,
}

fn load_structures(
    args: &LearnArgs,
    path: &PathBuf,
    domain: &prefdens_core::basis::Domain,
) -> Result<Vec<ClusterStructure>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
    let specs: Vec<StructureSpec> =
        serde_json::from_str(&text).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
    let structures = specs
        .iter()
        .map(|s| s.resolve(domain))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::from(e).context(path.display()))?;
    if structures.is_empty() {
        return Err(CliError::Malformed(format!("{}: no structures", path.display())));
    }
    if let Some(k) = args.types {
        if k != structures.len() {
            return Err(CliError::Malformed(format!(
                "--types {k} but {} lists {} structures",
                path.display(),
                structures.len()
            )));
        }
    }
    Ok(structures)
}

pub fn run(args: LearnArgs) -> Result<(), CliError> {
    let domain = load_domain(&args.domain)?;
    let db = load_db(&domain, &args.db)?;
    if args.em_tol.is_nan() || args.em_tol <= 0.0 || args.em_max_iters == 0 {
        return Err(CliError::Malformed(
            "--em-tol and --em-max-iters must be positive".into(),
        ));
    }
    let priors = PriorConfig::default();
    let em = EmConfig {
        seed: args.seed,
        restarts: EmConfig::default().restarts,
        tol: args.em_tol,
        max_iters: args.em_max_iters,
        cross_term: args.cross_term.into(),
    };
    let trace_path = sibling(&args.out, ".trace.jsonl");
    let mut trace = Vec::new();

    let (model, score, config) = match &args.structure {
        Some(path) => {
            let structures = load_structures(&args, path, &domain)?;
            let em = EmConfig {
                restarts: args.restarts.unwrap_or(em.restarts),
                ..em
            };
            let scored = score_fit(em_fit(&domain, &structures, &db, &em, &priors)?)?;
            for r in &scored.fit.diagnostics.restarts {
                serde_json::to_writer(&mut trace, r)?;
                trace.write_all(b"\n")?;
            }
            let config = json!({ "mode": "fixed", "em": em, "priors": priors });
            (scored.fit.model, scored.cs_score, config)
        }
        None => {
            let defaults = SearchConfig::default();
            let search = SearchConfig {
                restarts: args.restarts.unwrap_or(defaults.restarts),
                seed: args.seed,
                max_cluster_size: args.max_cluster_size,
                em: EmConfig {
                    seed: args.seed,
                    cross_term: em.cross_term,
                    ..defaults.em
                },
                final_em: em,
            };
            let result = match args.max_types {
                Some(max) => search_types(&domain, &db, max, &search, &priors)?.1,
                None => hill_climb(&domain, &db, args.types.unwrap_or(1), &search, &priors)?,
            };
            result.trace.write_jsonl(&mut trace)?;
            let config = json!({
                "mode": "search",
                "max_types": args.max_types,
                "search": search,
                "priors": priors,
            });
            (result.score.fit.model, result.score.cs_score, config)
        }
    };
    std::fs::write(&trace_path, &trace)?;

    let file = ModelFile::from_model(
        &model,
        Provenance {
            seed: args.seed,
            config,
            score: Some(score),
        },
    );
    file.save(&args.out)
        .map_err(|e| CliError::from(e).context(args.out.display()))?;
    println!("wrote {} and {}", args.out.display(), trace_path.display());
    println!("cs score {score}");
    for (t, ty) in model.types.iter().enumerate() {
        let clusters: Vec<String> = ty
            .structure()
            .to_names(&model.domain)
            .iter()
            .map(|c| format!("{{{}}}", c.join(",")))
            .collect();
        println!("type {t} weight {:.4} structure {}", model.theta[t], clusters.join(","));
    }
    Ok(())
}
