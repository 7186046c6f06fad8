//! Run configuration: defaults, a JSON config file merged over them, then
//! `key.path=value` overrides. Unknown keys are rejected when the merged
//! tree is deserialized.

use std::path::{Path, PathBuf};

use kitting::controller::{CavityKind, Method};
use kitting::dataset::DatasetConfig;
use kitting::estimator::EstimatorSpec;
use kitting::suite::SuiteConfig;
use kitting::{CameraModel, Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "KITNET_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Falls back to `KITNET_SEED`, then 0.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    /// Mesh directory; `None` uses the built-in corpus.
    pub corpus: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub suite: SuiteConfig,
    pub trial: TrialConfig,
    pub render: RenderConfig,
}

/// One cell of the suite grid. Controller, scene, camera and perturbation
/// settings come from `suite`, so a trial reproduces the matching suite row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub mesh: String,
    pub cavity_kind: CavityKind,
    pub angle_deg: f64,
    pub index: usize,
    pub method: Method,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            mesh: "box_bar".into(),
            cavity_kind: CavityKind::Prismatic,
            angle_deg: 30.0,
            index: 0,
            method: Method::Controller {
                estimator: EstimatorSpec::brute_force(10.0),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub camera: CameraModel,
    /// Height of a workspace plane drawn behind the mesh.
    pub plane_z: Option<f64>,
    /// Meters per mesh file unit.
    pub scale: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            camera: CameraModel::default(),
            plane_z: None,
            scale: 1.0,
        }
    }
}

/// Objects carrying a variant tag replace rather than merge, so switching
/// variant does not leave fields of the old one behind.
fn is_tagged(obj: &Map<String, Value>) -> bool {
    obj.contains_key("kind") || obj.contains_key("method")
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if !is_tagged(&o) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `a.b.c=value`; the value is read as JSON, else as a string.
fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!(
            "override {s:?} has an empty key segment"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = root;
    for (i, seg) in path.iter().enumerate() {
        let last = i + 1 == path.len();
        node = match node {
            Value::Object(map) if last => {
                merge(map.entry(seg.clone()).or_insert(Value::Null), value);
                return Ok(());
            }
            Value::Object(map) => map
                .entry(seg.clone())
                .or_insert_with(|| Value::Object(Map::new())),
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    Error::Config(format!("{} indexes an array with {seg:?}", path.join(".")))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::Config(format!("{}: index {idx} out of {len}", path.join(".")))
                })?;
                if last {
                    merge(slot, value);
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "{} descends into a scalar",
                    path.join(".")
                )))
            }
        };
    }
    unreachable!("paths are non-empty")
}

/// Defaults, then `file`, then `overrides` in order.
pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !doc.is_object() {
            return Err(Error::Config(format!(
                "{} must hold a JSON object",
                path.display()
            )));
        }
        merge(&mut tree, doc);
    }
    for o in overrides {
        let (path, value) = parse_override(o)?;
        set_path(&mut tree, &path, value)?;
    }
    serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))
}

/// Seed from the config, else `KITNET_SEED`, else 0.
pub fn resolve_seed(cfg: &RunConfig) -> Result<u64> {
    if let Some(s) = cfg.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
