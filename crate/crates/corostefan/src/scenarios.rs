//! The shipped scenario presets.

use crate::config::{ConfigError, RunPlan};

const PRESETS: [(&str, &str); 6] = [
    ("rest", include_str!("../scenarios/rest.toml")),
    ("stefan1d", include_str!("../scenarios/stefan1d.toml")),
    ("pwave1d", include_str!("../scenarios/pwave1d.toml")),
    ("shear2d", include_str!("../scenarios/shear2d.toml")),
    ("melt2d", include_str!("../scenarios/melt2d.toml")),
    ("rotor2d", include_str!("../scenarios/rotor2d.toml")),
];

/// Names of the presets, in a fixed order.
pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// TOML source of a preset.
pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<RunPlan, ConfigError> {
    RunPlan::parse(source(name).ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))?)
}
