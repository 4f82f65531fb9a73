use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use prefdens_core::basis::ClusterStructure;
use prefdens_core::mixture::{EmConfig, PriorConfig};
use prefdens_core::search::SearchConfig;
use prefdens_core::synth::{
    four_attribute_domain, run_learning_curve, run_projection_comparison, run_structure_recovery, sample_database,
    three_attribute_domain, ExperimentReport, GeneratorSpec,
};

use crate::error::CliError;
use crate::inputs::{sibling, write_output};

/// Built-in generating models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Truth {
    /// Three attributes, `{X1},{X2},{X3}`.
    Additive,
    /// Three attributes, `{X1,X2},{X2,X3}`.
    Structured,
    /// Three attributes, `{X1,X2,X3}`.
    Full,
    /// Three attributes, structured and additive types in equal proportion.
    Mixture,
    /// Four attributes, `{X1,X2},{X3,X4}`.
    Curve,
}

impl Truth {
    fn spec(self, param_seed: u64) -> Result<GeneratorSpec, CliError> {
        let three = three_attribute_domain();
        let structured = ClusterStructure::new([vec![0, 1], vec![1, 2]]);
        let spec = match self {
            Self::Additive => {
                GeneratorSpec::draw(&three, &[ClusterStructure::fully_additive(3)], vec![1.0], param_seed)
            }
            Self::Structured => GeneratorSpec::draw(&three, &[structured], vec![1.0], param_seed),
            Self::Full => GeneratorSpec::draw(&three, &[ClusterStructure::fully_connected(3)], vec![1.0], param_seed),
            Self::Mixture => GeneratorSpec::draw(
                &three,
                &[structured, ClusterStructure::fully_additive(3)],
                vec![0.5, 0.5],
                param_seed,
            ),
            Self::Curve => GeneratorSpec::draw(
                &four_attribute_domain(),
                &[ClusterStructure::new([vec![0, 1], vec![2, 3]])],
                vec![1.0],
                param_seed,
            ),
        };
        Ok(spec?)
    }
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    /// Generator spec JSON; overrides --truth.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    truth: Option<Truth>,
    /// Seed for drawing the preset's true parameters.
    #[arg(long, default_value_t = 0)]
    param_seed: u64,
}

impl TruthArgs {
    fn load(&self, default: Truth) -> Result<GeneratorSpec, CliError> {
        match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
                let spec: GeneratorSpec =
                    serde_json::from_str(&text).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
                spec.validate().map_err(|e| CliError::from(e).context(path.display()))?;
                Ok(spec)
            }
            None => self.truth.unwrap_or(default).spec(self.param_seed),
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// Number of records (defaults to the spec's).
    #[arg(long)]
    n: Option<usize>,
    /// Probability that each utility is hidden.
    #[arg(long)]
    missing: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the generating spec here.
    #[arg(long)]
    spec_out: Option<PathBuf>,
    /// Write the domain here, ready for `learn --domain`.
    #[arg(long)]
    domain_out: Option<PathBuf>,
}

pub fn run_gen(args: GenArgs) -> Result<(), CliError> {
    let base = args.truth.load(Truth::Structured)?;
    let spec = base.with_data(
        args.n.unwrap_or(base.n),
        args.missing.unwrap_or(base.missing_rate),
        args.seed.unwrap_or(base.seed),
    );
    if spec.n == 0 {
        return Err(CliError::Malformed("--n is required unless the spec sets it".into()));
    }
    spec.validate()?;
    let sample = sample_database(&spec)?;
    let mut csv = Vec::new();
    sample.db.write_csv(&spec.domain, &mut csv)?;
    write_output(args.out.as_deref(), &String::from_utf8_lossy(&csv))?;
    if let Some(p) = &args.spec_out {
        write_json(p, &spec)?;
    }
    if let Some(p) = &args.domain_out {
        write_json(p, &spec.domain)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// Seeds 0..N.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// CSV report; standard output when omitted. The spec is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn seeds(&self) -> Vec<u64> {
        (0..self.seeds).collect()
    }

    fn finish(&self, spec: &GeneratorSpec, report: &ExperimentReport) -> Result<(), CliError> {
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        write_output(self.out.as_deref(), &String::from_utf8_lossy(&csv))?;
        if let Some(out) = &self.out {
            write_json(&sibling(out, ".spec.json"), spec)?;
        }
        Ok(())
    }
}

fn check_ns(ns: &[usize]) -> Result<(), CliError> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(CliError::Malformed("--ns needs positive sizes".into()));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 30, 100, 300, 1000])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    test_size: usize,
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
}

pub fn run_curve(args: CurveArgs) -> Result<(), CliError> {
    check_ns(&args.ns)?;
    let spec = args.run.truth.load(Truth::Curve)?.with_data(0, args.missing, 0);
    spec.validate()?;
    let report = run_learning_curve(
        &spec,
        &args.ns,
        args.test_size,
        &args.run.seeds(),
        &EmConfig::default(),
        &PriorConfig::default(),
    )?;
    args.run.finish(&spec, &report)
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 100, 500, 750])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long, default_value_t = 3)]
    search_restarts: usize,
    #[arg(long, default_value_t = 3)]
    max_cluster_size: usize,
}

pub fn run_recover(args: RecoverArgs) -> Result<(), CliError> {
    check_ns(&args.ns)?;
    let spec = args.run.truth.load(Truth::Structured)?.with_data(0, args.missing, 0);
    spec.validate()?;
    let search = SearchConfig {
        restarts: args.search_restarts,
        max_cluster_size: args.max_cluster_size,
        ..SearchConfig::default()
    };
    let report = run_structure_recovery(
        &spec,
        &args.ns,
        &args.run.seeds(),
        args.missing,
        &search,
        &PriorConfig::default(),
    )?;
    args.run.finish(&spec, &report)
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 30, 100, 300, 1000])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    test_size: usize,
}

pub fn run_compare(args: CompareArgs) -> Result<(), CliError> {
    check_ns(&args.ns)?;
    let spec = args.run.truth.load(Truth::Structured)?;
    let report = run_projection_comparison(
        &spec,
        &args.ns,
        args.test_size,
        &args.run.seeds(),
        &EmConfig::default(),
        &PriorConfig::default(),
    )?;
    args.run.finish(&spec, &report)
}
