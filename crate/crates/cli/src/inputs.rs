//! File loading shared by the subcommands.

use std::path::{Path, PathBuf};

use prefdens_core::basis::Domain;
use prefdens_core::db::UtilityDatabase;
use prefdens_core::mixture::MixtureModel;
use prefdens_core::model_file::ModelFile;

use crate::error::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

pub fn load_domain(path: &Path) -> Result<Domain, CliError> {
    Domain::from_json(&read(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn load_model(path: &Path) -> Result<(ModelFile, MixtureModel), CliError> {
    let file = ModelFile::from_json(&read(path)?).map_err(|e| CliError::from(e).context(path.display()))?;
    let model = file.to_model().map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((file, model))
}

/// A `--domain` given next to a model must match the model's own.
pub fn check_domain(model: &MixtureModel, domain: Option<&PathBuf>) -> Result<(), CliError> {
    if let Some(path) = domain {
        if load_domain(path)? != model.domain {
            return Err(CliError::Mismatch(format!(
                "{} differs from the model's domain",
                path.display()
            )));
        }
    }
    Ok(())
}

pub fn load_db(domain: &Domain, path: &Path) -> Result<UtilityDatabase, CliError> {
    let text = read(path)?;
    UtilityDatabase::read_csv(domain, text.as_bytes()).map_err(|e| CliError::from(e).context(path.display()))
}

/// Load a database that must share the model's outcome columns. Unknown
/// columns mean the data belong to another domain.
pub fn load_db_for_model(model: &MixtureModel, path: &Path) -> Result<UtilityDatabase, CliError> {
    let text = read(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
    for key in headers.iter().skip(1) {
        if model.domain.parse_outcome_key(key.trim()).is_err() {
            return Err(CliError::Mismatch(format!(
                "{}: column `{key}` is not an outcome of the model's domain",
                path.display()
            )));
        }
    }
    UtilityDatabase::read_csv(&model.domain, text.as_bytes()).map_err(|e| CliError::from(e).context(path.display()))
}

/// A JSON array of numbers, `null` marking a missing entry.
pub fn load_utility(path: &Path) -> Result<Vec<Option<f64>>, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Other(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `dir/stem<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}
