//! Run configuration files.
//!
//! Configs are TOML documents with three tables. Angles are given in degrees
//! and converted to radians here; everything downstream works in radians.
//!
//! ```toml
//! schema_version = 1          # optional, must be 1
//!
//! [geometry]
//! L1 = 2000.0                 # m, source to splitter 1
//! L2 = 2000.0011991698        # m, source to splitter 2
//! # instead of L2: delta_t = 4e-12 (s), or L = 4000.0 with delta_t
//! V = 100.0                   # m/s, splitter 2, positive = away from source
//! tau = 0.0                   # s, optional
//! tau_jitter_sd = 0.0         # s, optional
//! path_jitter_sd = 0.0        # m, optional
//!
//! [angles]
//! alpha_deg = 45.0
//! beta_deg = -45.0
//!
//! [run]
//! trials = 1000000
//! seed = 42
//! model = "qm"                # optional: "qm" | "ad"
//! tie_tolerance = 0.0         # s, optional
//! nonbefore_policy = "error"  # optional: "error" | "treat-as-qm" | "treat-as-local"
//! distinguishability = ["u", "u"]   # optional
//! ```
//!
//! Unknown keys are rejected. A run manifest (JSON) carries the fully
//! resolved config under `config` and is accepted by [`parse_manifest_config`].

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::correlations::{AngleSettings, NonBeforePolicy};
use crate::error::{Error, Result};
use crate::relativity::{Distinguishability, SPEED_OF_LIGHT};
use crate::simulation::{ExperimentGeometry, Model, SimulationConfig};

pub const SCHEMA_VERSION: u32 = 1;

const TOP_KEYS: &[&str] = &["schema_version", "geometry", "angles", "run"];
const GEOMETRY_KEYS: &[&str] = &["L1", "L2", "L", "delta_t", "V", "tau", "tau_jitter_sd", "path_jitter_sd"];
const ANGLE_KEYS: &[&str] = &["alpha_deg", "beta_deg"];
const RUN_KEYS: &[&str] = &[
    "trials",
    "seed",
    "model",
    "tie_tolerance",
    "nonbefore_policy",
    "distinguishability",
];

/// Relative slack allowed between a stated `delta_t` and `(L2 − L1)/c`.
const DELTA_T_REL_TOLERANCE: f64 = 1e-9;
const DELTA_T_ABS_TOLERANCE: f64 = 1e-21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySection {
    #[serde(rename = "L1", default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(rename = "L2", default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub total_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(rename = "V")]
    pub velocity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_jitter_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_jitter_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSection {
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub trials: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonbefore_policy: Option<NonBeforePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinguishability: Option<[Distinguishability; 2]>,
}

/// Config document as written, before defaults and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub geometry: GeometrySection,
    pub angles: AngleSection,
    pub run: RunSection,
}

/// A validated config together with the degree angles it was written with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedConfig {
    pub simulation: SimulationConfig,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl ResolvedConfig {
    pub fn with_angles_deg(&self, alpha_deg: f64, beta_deg: f64) -> Result<Self> {
        let mut out = *self;
        out.simulation.angles = AngleSettings::from_degrees(alpha_deg, beta_deg)?;
        out.alpha_deg = alpha_deg;
        out.beta_deg = beta_deg;
        Ok(out)
    }

    /// Fully expanded document: every default written out, geometry as L1/L2
    /// with the derived delta_t alongside.
    pub fn to_file(&self) -> ConfigFile {
        let sim = &self.simulation;
        let g = &sim.geometry;
        ConfigFile {
            schema_version: Some(SCHEMA_VERSION),
            geometry: GeometrySection {
                l1: Some(g.l1()),
                l2: Some(g.l2()),
                total_length: None,
                delta_t: Some(g.delta_t()),
                velocity: g.velocity(),
                tau: Some(g.tau()),
                tau_jitter_sd: Some(g.tau_jitter_sd()),
                path_jitter_sd: Some(g.path_jitter_sd()),
            },
            angles: AngleSection {
                alpha_deg: self.alpha_deg,
                beta_deg: self.beta_deg,
            },
            run: RunSection {
                trials: sim.trials,
                seed: sim.seed,
                model: Some(sim.model),
                tie_tolerance: Some(sim.tie_tolerance),
                nonbefore_policy: Some(sim.nonbefore_policy),
                distinguishability: Some(sim.distinguishability),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("config serializes to TOML")
    }
}

fn unknown_keys(value: &Value) -> Vec<String> {
    let mut unknown = Vec::new();
    let Some(top) = value.as_object() else {
        return unknown;
    };
    for (key, inner) in top {
        let allowed = match key.as_str() {
            "geometry" => GEOMETRY_KEYS,
            "angles" => ANGLE_KEYS,
            "run" => RUN_KEYS,
            k if TOP_KEYS.contains(&k) => continue,
            _ => {
                unknown.push(key.clone());
                continue;
            }
        };
        if let Some(table) = inner.as_object() {
            unknown.extend(table.keys().filter(|k| !allowed.contains(&k.as_str())).map(|k| format!("{key}.{k}")));
        }
    }
    unknown
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn finite(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(config_error(format!("{field} must be finite, got {value}")))
    }
}

fn resolve_lengths(g: &GeometrySection) -> Result<(f64, f64)> {
    let c = SPEED_OF_LIGHT;
    let (l1, l2) = match (g.l1, g.l2, g.total_length, g.delta_t) {
        (Some(l1), Some(l2), _, _) => (l1, l2),
        (Some(l1), None, None, Some(dt)) => (l1, l1 + c * dt),
        (None, Some(l2), None, Some(dt)) => (l2 - c * dt, l2),
        (None, None, Some(l), Some(dt)) => ((l - c * dt) / 2.0, (l + c * dt) / 2.0),
        _ => {
            return Err(config_error(
                "geometry needs L1 and L2, or one of L1/L2/L together with delta_t",
            ))
        }
    };
    let l1 = finite("geometry.L1", l1)?;
    let l2 = finite("geometry.L2", l2)?;
    if !(l1 > 0.0) {
        return Err(config_error(format!("geometry.L1 = {l1} must be > 0")));
    }
    if !(l2 > 0.0) {
        return Err(config_error(format!("geometry.L2 = {l2} must be > 0")));
    }
    if let Some(dt) = g.delta_t {
        let derived = (l2 - l1) / c;
        if (dt - derived).abs() > DELTA_T_REL_TOLERANCE * dt.abs() + DELTA_T_ABS_TOLERANCE {
            return Err(config_error(format!(
                "geometry.delta_t = {dt} is inconsistent with (L2 - L1)/c = {derived}; delta_t is derived from the optical paths"
            )));
        }
    }
    if let Some(l) = g.total_length {
        if (l - (l1 + l2)).abs() > 1e-12 * l.abs() {
            return Err(config_error(format!(
                "geometry.L = {l} is inconsistent with L1 + L2 = {}",
                l1 + l2
            )));
        }
    }
    Ok((l1, l2))
}

/// Validates a config document and applies defaults.
pub fn resolve(file: &ConfigFile) -> Result<ResolvedConfig> {
    if let Some(v) = file.schema_version {
        if v != SCHEMA_VERSION {
            return Err(config_error(format!(
                "schema_version = {v} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
    }
    let g = &file.geometry;
    let (l1, l2) = resolve_lengths(g)?;
    let velocity = finite("geometry.V", g.velocity)?;
    if velocity.abs() >= SPEED_OF_LIGHT {
        return Err(config_error(format!(
            "geometry.V = {velocity} m/s violates |V| < c = {SPEED_OF_LIGHT} m/s"
        )));
    }
    let tau = finite("geometry.tau", g.tau.unwrap_or(0.0))?;
    let tau_sd = finite("geometry.tau_jitter_sd", g.tau_jitter_sd.unwrap_or(0.0))?;
    let path_sd = finite("geometry.path_jitter_sd", g.path_jitter_sd.unwrap_or(0.0))?;
    for (field, sd) in [("geometry.tau_jitter_sd", tau_sd), ("geometry.path_jitter_sd", path_sd)] {
        if sd < 0.0 {
            return Err(config_error(format!("{field} = {sd} must be >= 0")));
        }
    }
    let geometry = ExperimentGeometry::with_jitter(l1, l2, velocity, tau, tau_sd, path_sd)?;

    let alpha_deg = finite("angles.alpha_deg", file.angles.alpha_deg)?;
    let beta_deg = finite("angles.beta_deg", file.angles.beta_deg)?;
    let angles = AngleSettings::from_degrees(alpha_deg, beta_deg)?;

    let run = &file.run;
    if run.trials == 0 {
        return Err(config_error("run.trials = 0 must be >= 1"));
    }
    let tie_tolerance = finite("run.tie_tolerance", run.tie_tolerance.unwrap_or(0.0))?;
    if tie_tolerance < 0.0 {
        return Err(config_error(format!("run.tie_tolerance = {tie_tolerance} must be >= 0")));
    }
    let simulation = SimulationConfig {
        geometry,
        angles,
        model: run.model.unwrap_or_default(),
        trials: run.trials,
        seed: run.seed,
        tie_tolerance,
        nonbefore_policy: run.nonbefore_policy.unwrap_or_default(),
        distinguishability: run.distinguishability.unwrap_or([Distinguishability::U; 2]),
    };
    Ok(ResolvedConfig {
        simulation,
        alpha_deg,
        beta_deg,
    })
}

fn from_value(value: Value) -> Result<ResolvedConfig> {
    let unknown = unknown_keys(&value);
    if !unknown.is_empty() {
        return Err(config_error(format!("unknown keys: {}", unknown.join(", "))));
    }
    let file: ConfigFile = serde_json::from_value(value).map_err(|e| config_error(e.to_string()))?;
    resolve(&file)
}

/// Parses a TOML config document.
pub fn parse_config(text: &str) -> Result<ResolvedConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| config_error(e.message().to_string()))?;
    let value = serde_json::to_value(table).map_err(|e| config_error(e.to_string()))?;
    from_value(value)
}

/// Extracts and validates the `config` object of a JSON run manifest.
pub fn parse_manifest_config(text: &str) -> Result<ResolvedConfig> {
    let mut manifest: Value = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
    let config = manifest
        .get_mut("config")
        .map(Value::take)
        .ok_or_else(|| config_error("manifest has no config object"))?;
    from_value(config)
}

/// Parses either format, choosing JSON when the document starts with `{`.
pub fn parse_any(text: &str) -> Result<ResolvedConfig> {
    if text.trim_start().starts_with('{') {
        parse_manifest_config(text)
    } else {
        parse_config(text)
    }
}
