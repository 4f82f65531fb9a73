//! JSON model files.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Domain, StructureSpec};
use crate::error::{Error, Result};
use crate::gaussian::{Dirichlet, NormalWishart, WishartScalar};
use crate::mixture::{MixtureModel, TypeLayout};

pub const MODEL_VERSION: &str = "prefdens-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalWishartRepr {
    pub r: Vec<Vec<f64>>,
    pub beta: f64,
    pub lambda: Vec<f64>,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRepr {
    pub structure: StructureSpec,
    pub normal_wishart: NormalWishartRepr,
    pub noise_prior: WishartScalar,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub domain: Domain,
    pub types: Vec<TypeRepr>,
    pub dirichlet: Vec<f64>,
    pub theta: Vec<f64>,
    pub provenance: Provenance,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Malformed(format!("{what} is not square")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

const LOAD_TOL: f64 = 1e-12;

fn check_close(what: &str, stored: &[f64], derived: &[f64]) -> Result<()> {
    if stored.len() != derived.len() {
        return Err(Error::Mismatch(format!(
            "{what}: length {} vs {}",
            stored.len(),
            derived.len()
        )));
    }
    for (a, b) in stored.iter().zip(derived) {
        if (a - b).abs() > LOAD_TOL {
            return Err(Error::Mismatch(format!(
                "{what}: stored {a} differs from marginalized {b}"
            )));
        }
    }
    Ok(())
}

impl ModelFile {
    pub fn from_model(model: &MixtureModel, provenance: Provenance) -> Self {
        let types = model
            .types
            .iter()
            .map(|t| TypeRepr {
                structure: StructureSpec::of(t.structure(), &model.domain),
                normal_wishart: NormalWishartRepr {
                    r: rows(&t.nw.r),
                    beta: t.nw.beta,
                    lambda: t.nw.lambda.iter().copied().collect(),
                    nu: t.nw.nu,
                },
                noise_prior: t.noise,
                mean: t.params.mean.iter().copied().collect(),
                cov: rows(&t.params.cov),
                noise_var: t.params.noise_var,
            })
            .collect();
        Self {
            version: MODEL_VERSION.to_string(),
            domain: model.domain.clone(),
            types,
            dirichlet: model.dirichlet.alpha.clone(),
            theta: model.theta.clone(),
            provenance,
        }
    }

    /// Rebuild the model, checking that the stored point parameters are the
    /// marginalization of the stored hyperparameters.
    pub fn to_model(&self) -> Result<MixtureModel> {
        if self.version != MODEL_VERSION {
            return Err(Error::Malformed(format!(
                "unsupported model version `{}`",
                self.version
            )));
        }
        let types = self
            .types
            .iter()
            .map(|t| {
                let structure = t.structure.resolve(&self.domain)?;
                let layout = Arc::new(TypeLayout::new(&self.domain, &structure)?);
                let nw = NormalWishart {
                    r: matrix(&t.normal_wishart.r, "R")?,
                    beta: t.normal_wishart.beta,
                    lambda: DVector::from_vec(t.normal_wishart.lambda.clone()),
                    nu: t.normal_wishart.nu,
                };
                Ok((layout, nw, t.noise_prior))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = MixtureModel::from_hyper(self.domain.clone(), types, Dirichlet::new(self.dirichlet.clone())?)?;
        for (i, (stored, ty)) in self.types.iter().zip(&model.types).enumerate() {
            check_close(&format!("type {i} mean"), &stored.mean, ty.params.mean.as_slice())?;
            let cov = matrix(&stored.cov, "covariance")?;
            check_close(
                &format!("type {i} covariance"),
                cov.as_slice(),
                ty.params.cov.as_slice(),
            )?;
            check_close(
                &format!("type {i} noise variance"),
                &[stored.noise_var],
                &[ty.params.noise_var],
            )?;
        }
        check_close("theta", &self.theta, &model.theta)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Stable identifier derived from the serialized contents.
    pub fn id(&self) -> Result<String> {
        let text = self.to_json()?;
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in text.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3);
        }
        Ok(format!("{h:016x}"))
    }
}
