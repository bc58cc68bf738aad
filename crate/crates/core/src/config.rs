//! Run configuration: one flat JSON document per experiment.
//!
//! Every numeric setting (tolerances, replication counts, grids) lives in the
//! document. Experiment-specific settings sit under `params`. Errors carry the
//! JSON pointer of the offending key.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analytic::{marginal_cdf, Model};
use crate::error::{EsnError, Result};
use crate::quadrature::default_tol;
use crate::shape::{ShapeKind, ShapeSpec};
use crate::simulate::{GridSpec, Scenario, Window};
use crate::weight::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    MarginalKs,
    Converge,
    Pot,
    OrderStats,
    Bigball,
    Coefficients,
    ExtremalIndex,
    Campbell,
    Mixing,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MarginalKs => "marginal_ks",
            Experiment::Converge => "converge",
            Experiment::Pot => "pot",
            Experiment::OrderStats => "order_stats",
            Experiment::Bigball => "bigball",
            Experiment::Coefficients => "coefficients",
            Experiment::ExtremalIndex => "extremal_index",
            Experiment::Campbell => "campbell",
            Experiment::Mixing => "mixing",
            Experiment::Validate => "validate",
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_quantile() -> f64 {
    0.999
}
fn default_halvings() -> usize {
    40
}
fn default_reps() -> usize {
    1
}
fn empty_params() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub dimension: usize,
    pub shape: ShapeKind,
    pub weight: WeightSpec,
    #[serde(default = "one")]
    pub lambda: f64,
    pub window: Window,
    pub grid: GridSpec,
    /// Initial sampling threshold; the `u0_quantile` marginal quantile when absent.
    #[serde(default)]
    pub u0: Option<f64>,
    #[serde(default = "default_quantile")]
    pub u0_quantile: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Quadrature tolerance; dimension default when absent.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "empty_params")]
    pub params: Value,
}

/// A parsed config with its canonical digest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub shape: ShapeSpec,
    /// SHA-256 of the canonical (sorted-key) JSON after overrides.
    pub digest: String,
}

fn cfg_err(pointer: &str, message: impl Into<String>) -> EsnError {
    EsnError::Config { pointer: pointer.to_string(), message: message.into() }
}

/// `a.b[2].c` to `/a/b/2/c`.
fn to_pointer(path: &str) -> String {
    if path == "." || path.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let mut rest = seg;
        if let Some(i) = rest.find('[') {
            out.push('/');
            out.push_str(&rest[..i]);
            rest = &rest[i..];
            while let Some(end) = rest.find(']') {
                out.push('/');
                out.push_str(&rest[1..end]);
                rest = &rest[end + 1..];
            }
        } else {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}

/// Deserialize `value`, reporting errors under `prefix`.
pub fn typed<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let ptr = format!("{prefix}{}", to_pointer(&e.path().to_string()));
        cfg_err(&ptr, e.inner().to_string())
    })
}

/// Set `key` (dotted path) to `raw`, parsed as JSON when possible.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| cfg_err("", format!("override `{spec}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| cfg_err(&to_pointer(&parts[..i].join(".")), "not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), value);
            return Ok(());
        }
        node = obj.entry(p.to_string()).or_insert_with(empty_params);
    }
    Ok(())
}

/// Canonical text of a document: keys sorted at every level.
pub fn canonical(doc: &Value) -> String {
    // serde_json's default map keeps keys sorted
    serde_json::to_string(doc).expect("a JSON value always serializes")
}

pub fn digest(doc: &Value) -> String {
    hex::encode(Sha256::digest(canonical(doc).as_bytes()))
}

impl LoadedConfig {
    pub fn from_value(mut doc: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: RunConfig = typed(&doc, "")?;
        let shape = ShapeSpec::new(config.shape.clone(), config.dimension).map_err(|e| cfg_err("/shape", e.to_string()))?;
        let loaded = LoadedConfig { digest: digest(&doc), config, shape };
        loaded.check()?;
        Ok(loaded)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err("", format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| cfg_err("", format!("invalid JSON: {e}")))?;
        Self::from_value(doc, overrides)
    }

    fn check(&self) -> Result<()> {
        let c = &self.config;
        let d = c.dimension;
        if !(1..=3).contains(&d) {
            return Err(cfg_err("/dimension", "dimension must be 1, 2 or 3"));
        }
        if c.reps == 0 {
            return Err(cfg_err("/reps", "reps must be at least 1"));
        }
        c.weight.validate().map_err(|e| cfg_err("/weight", e.to_string()))?;
        if !(c.lambda > 0.0 && c.lambda.is_finite()) {
            return Err(cfg_err("/lambda", "lambda must be positive"));
        }
        c.grid.validate(d).map_err(|e| cfg_err("/grid", e.to_string()))?;
        if c.window.lo.len() != d || c.window.hi.len() != d || c.window.lo.iter().zip(&c.window.hi).any(|(l, h)| !(l <= h)) {
            return Err(cfg_err("/window", "window needs lo <= hi in every coordinate"));
        }
        let (glo, ghi) = c.grid.bounding_box();
        if !c.window.contains(&glo) || !c.window.contains(&ghi) {
            return Err(cfg_err("/grid", "grid nodes must lie inside the window"));
        }
        if let Some(u) = c.u0 {
            if !(u > 0.0 && u.is_finite()) {
                return Err(cfg_err("/u0", "u0 must be positive"));
            }
        }
        if !(c.u0_quantile > 0.0 && c.u0_quantile < 1.0) {
            return Err(cfg_err("/u0_quantile", "quantile must lie in (0, 1)"));
        }
        if let Some(t) = c.tol {
            if !(t > 0.0) {
                return Err(cfg_err("/tol", "tol must be positive"));
            }
        }
        if !c.params.is_object() {
            return Err(cfg_err("/params", "params must be an object"));
        }
        Ok(())
    }

    pub fn tol(&self) -> f64 {
        self.config.tol.unwrap_or_else(|| default_tol(self.config.dimension))
    }

    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        typed(&self.config.params, "/params")
    }

    pub fn model(&self) -> Result<Model> {
        self.model_with(self.config.weight.clone(), self.config.lambda)
    }

    pub fn model_with(&self, weight: WeightSpec, lambda: f64) -> Result<Model> {
        Ok(Model::new(self.shape.clone(), weight, lambda)?.with_tol(self.tol()))
    }

    /// Scenario for the configured weight and intensity.
    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario_with(self.config.weight.clone(), self.config.lambda)
    }

    pub fn scenario_with(&self, weight: WeightSpec, lambda: f64) -> Result<Scenario> {
        let c = &self.config;
        let u0 = match c.u0 {
            Some(u) => u,
            None => marginal_quantile(&self.model_with(weight.clone(), lambda)?, c.u0_quantile)?,
        };
        let scn = Scenario {
            shape: self.shape.clone(),
            weight,
            lambda,
            window: c.window.clone(),
            grid: c.grid.clone(),
            u0,
            max_halvings: c.max_halvings,
            reps: c.reps,
            seed: c.seed,
        };
        scn.validate()?;
        Ok(scn)
    }
}

/// Smallest `u` with `P(M <= u) >= p`, by bisection.
pub fn marginal_quantile(model: &Model, p: f64) -> Result<f64> {
    let cdf = |u: f64| marginal_cdf(model, u).map(|c| c.prob);
    let mut hi = model.shape.sup_norm().max(1e-300);
    let mut n = 0;
    while cdf(hi)? < p {
        hi *= 2.0;
        n += 1;
        if n > 2000 {
            return Err(EsnError::Numerical("marginal quantile not bracketed".into()));
        }
    }
    let mut lo = hi / 2.0;
    n = 0;
    while lo > 0.0 && cdf(lo)? >= p {
        lo /= 2.0;
        n += 1;
        if n > 2000 {
            return Ok(0.0);
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? >= p {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(hi)
}
