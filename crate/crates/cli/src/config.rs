//! Experiment configuration: JSON ingestion, defaults and range checks.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use profile_shift_core::AdvectionMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
}

fn invalid(field: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        constraint: constraint.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dimension: usize,
    /// `[lo, hi]` per axis; defaults to `(0, π)` on every axis.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    /// Rows of `#`/`.` (lowest `y` first), one character per interior node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<String>>,
}

/// A single node count for every axis, or one per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

impl Resolution {
    pub fn per_axis(&self, dimension: usize) -> Vec<usize> {
        match self {
            Resolution::Uniform(n) => vec![*n; dimension],
            Resolution::PerAxis(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Heat,
    Absorb,
    Drift,
    Anisotropic,
}

/// One value per interior node for each tabulated coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    /// `[a]` in 1D, `[a_xx, a_xy, a_yy]` in 2D, per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorption: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Constant diffusion, `[a]` or `[a_xx, a_xy, a_yy]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorption: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<CoefficientTable>,
    /// Ellipticity constant; derived from constant diffusion when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            preset: Some(Preset::Heat),
            diffusion: None,
            drift: None,
            absorption: None,
            table: None,
            delta: None,
        }
    }
}

/// Indicator of an axis-aligned subregion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorSpec {
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default = "one")]
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    /// Mode numbers of `Π sin(k_i π (x_i − lo_i) / (hi_i − lo_i))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenfunction: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<IndicatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
    /// Request the normalized solution. Inferred from the samples when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonneg: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_restart")]
    pub restart: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200
}

fn default_restart() -> usize {
    50
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            restart: default_restart(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Keep every `slice_stride`-th time slice (the last one is always kept).
    #[serde(default = "default_stride")]
    pub slice_stride: usize,
}

fn default_directory() -> String {
    "out".into()
}

fn default_stride() -> usize {
    1
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            slice_stride: default_stride(),
        }
    }
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub resolution: Resolution,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N_t")]
    pub steps: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub advection_mode: AdvectionMode,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub gamma: GammaSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

impl ExperimentConfig {
    /// Range checks; fills the default box in place.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        let dim = self.domain.dimension;
        if !(1..=2).contains(&dim) {
            return Err(invalid("domain.dimension", "must be 1 or 2"));
        }
        let bounds = self
            .domain
            .bounds
            .get_or_insert_with(|| vec![[0.0, PI]; dim]);
        if bounds.len() != dim {
            return Err(invalid("domain.box", format!("needs {dim} [lo, hi] pairs")));
        }
        for b in bounds.iter() {
            if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) {
                return Err(invalid("domain.box", "each axis needs finite lo < hi"));
            }
        }

        let n = self.resolution.per_axis(dim);
        if n.len() != dim {
            return Err(invalid("resolution", format!("needs {dim} entries")));
        }
        if n.contains(&0) {
            return Err(invalid("resolution", "node counts must be at least 1"));
        }
        if let Some(rows) = &self.domain.mask {
            let shape_ok = match dim {
                1 => rows.len() == 1 && rows[0].chars().count() == n[0],
                _ => rows.len() == n[1] && rows.iter().all(|r| r.chars().count() == n[0]),
            };
            if !shape_ok {
                return Err(invalid(
                    "domain.mask",
                    format!(
                        "raster must have {} row(s) of {} cells",
                        n.get(1).unwrap_or(&1),
                        n[0]
                    ),
                ));
            }
        }

        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("T", "must be positive and finite"));
        }
        if self.steps == 0 {
            return Err(invalid("N_t", "must be at least 1"));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(invalid("theta", "must lie in [0.5, 1]"));
        }

        self.validate_coefficients(dim)?;
        self.validate_gamma(dim)?;

        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0 && s.tol < 1.0) {
            return Err(invalid("solver.tol", "must lie in (0, 1)"));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be at least 1"));
        }
        if s.restart == 0 {
            return Err(invalid("solver.restart", "must be at least 1"));
        }
        if self.outputs.slice_stride == 0 {
            return Err(invalid("outputs.slice_stride", "must be at least 1"));
        }
        if self.outputs.directory.is_empty() {
            return Err(invalid("outputs.directory", "must not be empty"));
        }
        Ok(())
    }

    fn validate_coefficients(&self, dim: usize) -> Result<(), ConfigError> {
        let c = &self.coefficients;
        match (&c.preset, &c.table) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "coefficients",
                    "give either `preset` or `table`, not both",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "coefficients",
                    "one of `preset` or `table` is required",
                ))
            }
            _ => {}
        }
        let diffusion_len = if dim == 1 { 1 } else { 3 };
        if let Some(d) = &c.diffusion {
            if d.len() != diffusion_len {
                return Err(invalid(
                    "coefficients.diffusion",
                    format!("needs {diffusion_len} entries"),
                ));
            }
            for v in d {
                check_finite("coefficients.diffusion", *v)?;
            }
        }
        if let Some(f) = &c.drift {
            if f.len() != dim {
                return Err(invalid(
                    "coefficients.drift",
                    format!("needs {dim} entries"),
                ));
            }
            for v in f {
                check_finite("coefficients.drift", *v)?;
            }
        }
        if let Some(q) = c.absorption {
            check_finite("coefficients.absorption", q)?;
            if q < 0.0 {
                return Err(invalid("coefficients.absorption", "must be nonnegative"));
            }
        }
        if let Some(delta) = c.delta {
            if !(delta.is_finite() && delta > 0.0) {
                return Err(invalid("coefficients.delta", "must be positive"));
            }
        }
        match c.preset {
            Some(Preset::Absorb) if c.absorption.is_none() => {
                return Err(invalid(
                    "coefficients.absorption",
                    "required by preset `absorb`",
                ))
            }
            Some(Preset::Drift) if c.drift.is_none() => {
                return Err(invalid("coefficients.drift", "required by preset `drift`"))
            }
            Some(Preset::Anisotropic) if c.diffusion.is_none() => {
                return Err(invalid(
                    "coefficients.diffusion",
                    "required by preset `anisotropic`",
                ))
            }
            _ => {}
        }
        if let Some(t) = &c.table {
            if c.diffusion.is_some() || c.drift.is_some() || c.absorption.is_some() {
                return Err(invalid(
                    "coefficients",
                    "constant values cannot be combined with `table`",
                ));
            }
            if let Some(rows) = &t.diffusion {
                if c.delta.is_none() {
                    return Err(invalid(
                        "coefficients.delta",
                        "required with tabulated diffusion",
                    ));
                }
                if rows.iter().any(|r| r.len() != diffusion_len) {
                    return Err(invalid(
                        "coefficients.table.diffusion",
                        format!("each entry needs {diffusion_len} values"),
                    ));
                }
            }
            if let Some(rows) = &t.drift {
                if rows.iter().any(|r| r.len() != dim) {
                    return Err(invalid(
                        "coefficients.table.drift",
                        format!("each entry needs {dim} values"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_gamma(&self, dim: usize) -> Result<(), ConfigError> {
        let g = &self.gamma;
        let forms = [
            g.eigenfunction.is_some(),
            g.indicator.is_some(),
            g.table.is_some(),
        ];
        if forms.iter().filter(|f| **f).count() != 1 {
            return Err(invalid(
                "gamma",
                "exactly one of `eigenfunction`, `indicator`, `table` is required",
            ));
        }
        if let Some(k) = &g.eigenfunction {
            if k.len() != dim || k.contains(&0) {
                return Err(invalid(
                    "gamma.eigenfunction",
                    format!("needs {dim} positive mode numbers"),
                ));
            }
        }
        if let Some(ind) = &g.indicator {
            if ind.bounds.len() != dim || ind.bounds.iter().any(|b| b[0] > b[1]) {
                return Err(invalid(
                    "gamma.indicator.box",
                    format!("needs {dim} [lo, hi] pairs with lo <= hi"),
                ));
            }
            check_finite("gamma.indicator.value", ind.value)?;
        }
        if let Some(t) = &g.table {
            for v in t {
                check_finite("gamma.table", *v)?;
            }
        }
        Ok(())
    }
}
