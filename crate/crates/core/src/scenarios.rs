//! Bundled example scenarios.

use crate::product::{ProductError, ScenarioConfig};

pub const TEDDY_S1: &str = include_str!("../scenarios/teddy_s1.json");
pub const TEDDY_S2: &str = include_str!("../scenarios/teddy_s2.json");
pub const KETTLE_S1: &str = include_str!("../scenarios/kettle_s1.json");
pub const KETTLE_S2: &str = include_str!("../scenarios/kettle_s2.json");

/// `(name, json)` for every bundled scenario.
pub const ALL: [(&str, &str); 4] = [
    ("teddy_s1", TEDDY_S1),
    ("teddy_s2", TEDDY_S2),
    ("kettle_s1", KETTLE_S1),
    ("kettle_s2", KETTLE_S2),
];

pub fn load(name: &str) -> Option<Result<ScenarioConfig, ProductError>> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    ALL.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| ScenarioConfig::from_json(json))
}
