//! Run configuration: preset, then config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use dce_core::params::{parse_key_values, ParamOverrides};
use dce_core::spectrum::{FrequencyGrid, DEFAULT_STEPS_PER_OMEGA0};
use dce_core::{Error, PhysicalParams, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const GRID_KEYS: [&str; 3] = ["grid_min", "grid_max", "grid_count"];

/// Frequency grid in units of `omega0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let steps = DEFAULT_STEPS_PER_OMEGA0 as f64;
        GridSpec {
            min: 1.0 / steps,
            max: 2.05,
            count: 41 * DEFAULT_STEPS_PER_OMEGA0 / 20,
        }
    }
}

impl GridSpec {
    pub fn build(&self, omega0: f64) -> Result<FrequencyGrid> {
        if *self == GridSpec::default() {
            return Ok(FrequencyGrid::default_for(omega0));
        }
        if !(self.min > 0.0 && self.max > self.min) {
            return Err(Error::Validation {
                field: "grid".into(),
                reason: format!("need 0 < grid_min < grid_max, got {} and {}", self.min, self.max),
            });
        }
        FrequencyGrid::uniform(self.min * omega0, self.max * omega0, self.count)
    }
}

/// Everything that can be set from a preset, a file or flags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layer {
    pub params: ParamOverrides,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_count: Option<usize>,
}

impl Layer {
    pub fn preset(name: &str) -> Result<Layer> {
        match name {
            "squid" => Ok(Layer {
                params: ParamOverrides::from(&PhysicalParams::squid()),
                ..Layer::default()
            }),
            other => Err(Error::Validation {
                field: "preset".into(),
                reason: format!("unknown preset `{other}` (available: squid)"),
            }),
        }
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Layer> {
        for key in map.keys() {
            if !ParamOverrides::KEYS.contains(&key.as_str()) && !GRID_KEYS.contains(&key.as_str()) {
                return Err(Error::Validation {
                    field: key.clone(),
                    reason: "unknown configuration key".into(),
                });
            }
        }
        let float = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|s| {
                    s.parse().map_err(|_| Error::Validation {
                        field: key.into(),
                        reason: format!("not a number: `{s}`"),
                    })
                })
                .transpose()
        };
        let grid_count = map
            .get("grid_count")
            .map(|s| {
                s.parse().map_err(|_| Error::Validation {
                    field: "grid_count".into(),
                    reason: format!("not a count: `{s}`"),
                })
            })
            .transpose()?;
        Ok(Layer {
            params: ParamOverrides::from_map(map)?,
            grid_min: float("grid_min")?,
            grid_max: float("grid_max")?,
            grid_count,
        })
    }

    /// Fields set in `other` win.
    pub fn merge(&self, other: &Layer) -> Layer {
        Layer {
            params: self.params.merge(&other.params),
            grid_min: other.grid_min.or(self.grid_min),
            grid_max: other.grid_max.or(self.grid_max),
            grid_count: other.grid_count.or(self.grid_count),
        }
    }

    pub fn grid(&self) -> GridSpec {
        let d = GridSpec::default();
        GridSpec {
            min: self.grid_min.unwrap_or(d.min),
            max: self.grid_max.unwrap_or(d.max),
            count: self.grid_count.unwrap_or(d.count),
        }
    }
}

/// Read a config file: flat `key = value` text, or a JSON object (possibly a
/// previous run's output, whose `config` member is used).
pub fn load_file(path: &Path) -> Result<Layer> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation {
        field: "config".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    if text.trim_start().starts_with('{') {
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
            line: e.line(),
            reason: e.to_string(),
        })?;
        let object = value.get("config").unwrap_or(&value);
        let object = object.as_object().ok_or_else(|| Error::Config {
            line: 1,
            reason: "expected a JSON object".into(),
        })?;
        let mut map = BTreeMap::new();
        for (k, v) in object {
            let s = match v {
                Value::Number(n) => n.to_string(),
                Value::String(s) => s.clone(),
                Value::Null => continue,
                other => {
                    return Err(Error::Config {
                        line: 1,
                        reason: format!("`{k}` must be a number or string, got {other}"),
                    })
                }
            };
            map.insert(k.clone(), s);
        }
        Layer::from_map(&map)
    } else {
        Layer::from_map(&parse_key_values(&text)?)
    }
}

/// The effective configuration as it appears in outputs and digests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub gamma0_len: f64,
    pub omega0_hz: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub v: f64,
    pub order: usize,
    pub gamma0_sign: dce_core::GammaSign,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_count: usize,
}

impl EffectiveConfig {
    pub fn new(layer: &Layer) -> Result<(EffectiveConfig, PhysicalParams)> {
        let physical = layer.params.resolve()?;
        let p = &layer.params;
        let grid = layer.grid();
        let cfg = EffectiveConfig {
            gamma0_len: p.gamma0_len.expect("resolved"),
            omega0_hz: p.omega0_hz.expect("resolved"),
            epsilon: p.epsilon.expect("resolved"),
            tau: p.tau.expect("resolved"),
            v: p.v.expect("resolved"),
            order: p.order.expect("resolved"),
            gamma0_sign: p.gamma0_sign.unwrap_or_default(),
            grid_min: grid.min,
            grid_max: grid.max,
            grid_count: grid.count,
        };
        Ok((cfg, physical))
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            min: self.grid_min,
            max: self.grid_max,
            count: self.grid_count,
        }
    }
}
