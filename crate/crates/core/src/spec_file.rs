//! Game-spec files (JSON or TOML) with actions referenced by name.
//!
//! ```toml
//! [[classes]]
//! name = "devices"
//! states = ["low", "high"]
//! actions = ["wait", "send"]
//! available = [["wait", "send"], ["wait"]]
//! # kernel[s][k][s']: k follows the order of available[s]
//! kernel = [[[0.2, 0.8], [0.9, 0.1]], [[0.5, 0.5]]]
//! reward = { kind = "table", values = [[0.0, 1.0], [0.5, 0.0]] }
//! mass = 1.0
//! rate_state = 10.0
//! rate_revision = 1.0
//! protocol = { name = "smith" }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ClassSpec, GameSpec};
use crate::protocols::Protocol;
use crate::reward::RewardModel;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassFile {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub available: Vec<Vec<String>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub reward: RewardModel,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub rate_state: f64,
    #[serde(default = "one")]
    pub rate_revision: f64,
    #[serde(default = "smith")]
    pub protocol: Protocol,
}

fn one() -> f64 {
    1.0
}

fn smith() -> Protocol {
    Protocol::Smith
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub classes: Vec<ClassFile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "json" => Some(Format::Json),
            "toml" => Some(Format::Toml),
            _ => None,
        }
    }
}

impl ClassFile {
    pub fn to_spec(&self) -> Result<ClassSpec> {
        let mut available = Vec::with_capacity(self.available.len());
        for (s, names) in self.available.iter().enumerate() {
            let state = self.states.get(s).map(String::as_str).unwrap_or("?");
            let mut idx = Vec::with_capacity(names.len());
            for name in names {
                let a = self.actions.iter().position(|x| x == name).ok_or_else(|| {
                    Error::InvalidGame(format!(
                        "class '{}': state '{state}' lists unknown action '{name}'",
                        self.name
                    ))
                })?;
                idx.push(a);
            }
            available.push(idx);
        }
        Ok(ClassSpec {
            name: self.name.clone(),
            states: self.states.clone(),
            actions: self.actions.clone(),
            available,
            kernel: self.kernel.clone(),
            reward: self.reward.clone(),
            mass: self.mass,
            rate_state: self.rate_state,
            rate_revision: self.rate_revision,
            protocol: self.protocol.clone(),
        })
    }

    pub fn from_spec(class: &ClassSpec) -> Result<ClassFile> {
        if matches!(class.reward, RewardModel::Custom(_)) {
            return Err(Error::Parameter(format!(
                "class '{}': custom rewards cannot be written to a spec file",
                class.name
            )));
        }
        if matches!(class.protocol, Protocol::Custom(_)) {
            return Err(Error::Parameter(format!(
                "class '{}': custom protocols cannot be written to a spec file",
                class.name
            )));
        }
        Ok(ClassFile {
            name: class.name.clone(),
            states: class.states.clone(),
            actions: class.actions.clone(),
            available: class
                .available
                .iter()
                .map(|a| a.iter().map(|&k| class.actions[k].clone()).collect())
                .collect(),
            kernel: class.kernel.clone(),
            reward: class.reward.clone(),
            mass: class.mass,
            rate_state: class.rate_state,
            rate_revision: class.rate_revision,
            protocol: class.protocol.clone(),
        })
    }
}

impl GameFile {
    pub fn to_spec(&self) -> Result<GameSpec> {
        let spec = GameSpec {
            classes: self.classes.iter().map(ClassFile::to_spec).collect::<Result<_>>()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec(spec: &GameSpec) -> Result<GameFile> {
        Ok(GameFile {
            classes: spec.classes.iter().map(ClassFile::from_spec).collect::<Result<_>>()?,
        })
    }
}

/// Parses and validates a spec from text.
pub fn parse_spec(text: &str, format: Format) -> Result<GameSpec> {
    let file: GameFile = match format {
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse(format!("JSON spec: {e}")))?,
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(format!("TOML spec: {e}")))?,
    };
    file.to_spec()
}

/// Loads a spec; the format follows the extension, else JSON then TOML
/// are tried.
pub fn load_spec(path: &Path) -> Result<GameSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    match Format::from_path(path) {
        Some(f) => parse_spec(&text, f),
        None => parse_spec(&text, Format::Json).or_else(|_| parse_spec(&text, Format::Toml)),
    }
}

pub fn emit_spec(spec: &GameSpec, format: Format) -> Result<String> {
    let file = GameFile::from_spec(spec)?;
    match format {
        Format::Json => serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string())),
        Format::Toml => toml::to_string(&file).map_err(|e| Error::Parse(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{build_mac, build_random_game, MacParams, RandomGameConfig, RandomRewardKind};

    const SAMPLE: &str = r#"
[[classes]]
name = "devices"
states = ["low", "high"]
actions = ["wait", "send"]
available = [["wait", "send"], ["wait"]]
kernel = [[[0.2, 0.8], [0.9, 0.1]], [[0.5, 0.5]]]
reward = { kind = "table", values = [[0.0, 1.0], [0.5, 0.0]] }
rate_state = 10.0
protocol = { name = "bnn" }
"#;

    #[test]
    fn toml_sample_parses() {
        let spec = parse_spec(SAMPLE, Format::Toml).unwrap();
        let c = &spec.classes[0];
        assert_eq!(c.available, vec![vec![0, 1], vec![0]]);
        assert_eq!(c.mass, 1.0);
        assert_eq!(c.protocol.name(), "bnn");
    }

    #[test]
    fn round_trips_preserve_games() {
        let generic = RandomGameConfig {
            kind: RandomRewardKind::Generic,
            classes: 2,
            ..RandomGameConfig::default()
        };
        for spec in [build_mac(&MacParams::default()).unwrap(), build_random_game(2, &generic).unwrap()] {
            for fmt in [Format::Json, Format::Toml] {
                let text = emit_spec(&spec, fmt).unwrap();
                let back = parse_spec(&text, fmt).unwrap();
                assert_eq!(emit_spec(&back, fmt).unwrap(), text);
            }
        }
    }

    #[test]
    fn bad_row_names_class_state_action() {
        let bad = SAMPLE.replace("[0.9, 0.1]", "[0.8, 0.1]");
        let msg = parse_spec(&bad, Format::Toml).unwrap_err().to_string();
        assert!(msg.contains("devices") && msg.contains("low") && msg.contains("send"), "{msg}");
        let unknown = SAMPLE.replace(", [\"wait\"]]", ", [\"jump\"]]");
        let msg = parse_spec(&unknown, Format::Toml).unwrap_err().to_string();
        assert!(msg.contains("jump"), "{msg}");
    }
}
