//! Scenario files: built-in defaults, user overrides, presets and the reproducibility hash.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::protocol::{preset, LinkScenario, ProtocolError, Scenario, PRESET_NAMES};

pub const DEFAULTS_TOML: &str = include_str!("../data/defaults.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(#[from] ProtocolError),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Recursively overlays `over` onto `base`; tables merge, everything else replaces.
pub fn merge_toml(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_value(text: &str, origin: &str) -> Result<toml::Value, ConfigError> {
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })
}

fn into_scenario(value: toml::Value, origin: &str) -> Result<Scenario, ConfigError> {
    let s: Scenario = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        message: format!("field `{}`: {}", e.path(), e.inner().message()),
    })?;
    s.validate()?;
    Ok(s)
}

pub fn default_scenario() -> Scenario {
    into_scenario(parse_value(DEFAULTS_TOML, "defaults").expect("defaults parse"), "defaults")
        .expect("built-in defaults are valid")
}

/// Defaults overlaid with a partial scenario given as TOML text.
pub fn scenario_from_toml(text: &str, origin: &str) -> Result<Scenario, ConfigError> {
    let mut base = parse_value(DEFAULTS_TOML, "defaults")?;
    merge_toml(&mut base, parse_value(text, origin)?);
    into_scenario(base, origin)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: origin.clone(), source })?;
    scenario_from_toml(&text, &origin)
}

pub fn preset_row(name: &str) -> Result<LinkScenario, ConfigError> {
    preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
}

/// `base` with the fibres and readout delays of a named preset.
pub fn apply_preset(base: &Scenario, name: &str) -> Result<Scenario, ConfigError> {
    let s = base.with_links(&preset_row(name)?);
    s.validate()?;
    Ok(s)
}

pub fn preset_scenario(name: &str) -> Result<Scenario, ConfigError> {
    apply_preset(&default_scenario(), name)
}

pub fn preset_names() -> &'static [&'static str] {
    &PRESET_NAMES
}

/// SHA-256 of the canonical JSON form (struct field order, shortest float repr).
pub fn config_hash(s: &Scenario) -> String {
    let json = serde_json::to_vec(s).expect("scenario serializes");
    format!("{:x}", Sha256::digest(&json))
}

/// Serializes a scenario back to TOML, e.g. for calibrated parameter files.
pub fn scenario_to_toml(s: &Scenario) -> String {
    toml::to_string_pretty(s).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load() {
        let s = default_scenario();
        assert_eq!(s.nodes.node1.trap_oscillation_period, 14.3e-6);
        assert_eq!(s.readout.dephasing_seed, 7);
    }

    #[test]
    fn overrides_merge() {
        let s = scenario_from_toml("[bsm]\ndelta_tau = 5e-9\n[nodes.node2]\npump_efficiency = 0.7\n", "inline").unwrap();
        assert_eq!(s.bsm.delta_tau, 5e-9);
        assert_eq!(s.nodes.node2.pump_efficiency, 0.7);
        assert_eq!(s.nodes.node1.pump_efficiency, 0.8);
    }

    #[test]
    fn field_errors_named() {
        let e = scenario_from_toml("[bsm]\nxi_maxx = 1.0\n", "bad.toml").unwrap_err().to_string();
        assert!(e.contains("bad.toml") && e.contains("xi_maxx"), "{e}");
        let e = scenario_from_toml("[nodes.node1]\npump_efficiency = 1.5\n", "bad.toml").unwrap_err().to_string();
        assert!(e.contains("pump_efficiency"), "{e}");
        let e = scenario_from_toml("[readout]\nnode1_time = 1e-6\n[links.node1]\nlength_km = 16.5\nattenuation_db = 4.5\n", "x")
            .unwrap_err();
        assert!(matches!(e, ConfigError::Invalid(ProtocolError::ReadoutTooEarly { node: 1, .. })));
    }

    #[test]
    fn hash_stable_and_sensitive() {
        let a = default_scenario();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.bsm.delta_tau = 1e-9;
        assert_ne!(config_hash(&a), config_hash(&b));
        let round = scenario_from_toml(&scenario_to_toml(&a), "round").unwrap();
        assert_eq!(config_hash(&a), config_hash(&round));
    }

    #[test]
    fn presets_apply() {
        for name in preset_names() {
            let s = preset_scenario(name).unwrap();
            assert_eq!(s.name, *name);
        }
        assert!(matches!(preset_scenario("l7"), Err(ConfigError::UnknownPreset(_))));
    }
}
