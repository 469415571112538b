use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::Scenario;

pub const SCENARIO_SCHEMA_VERSION: u64 = 1;

#[derive(Serialize)]
struct ScenarioFileRef<'a> {
    schema_version: u64,
    #[serde(flatten)]
    scenario: &'a Scenario,
}

/// Writes a scenario as JSON after checking its invariants.
pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    scenario.validate()?;
    let file = ScenarioFileRef { schema_version: SCENARIO_SCHEMA_VERSION, scenario };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::malformed(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))?;
    let obj = value.as_object_mut().ok_or_else(|| Error::malformed(path, "top level is not an object"))?;
    let version = obj
        .remove("schema_version")
        .ok_or_else(|| Error::malformed(path, "missing schema_version"))?
        .as_u64()
        .ok_or_else(|| Error::malformed(path, "schema_version is not an integer"))?;
    if version != SCENARIO_SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found: version, expected: SCENARIO_SCHEMA_VERSION });
    }
    let scenario: Scenario = serde_json::from_value(value).map_err(|e| Error::malformed(path, e))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Reads every `*.json` scenario in a directory, ordered by file name.
pub fn read_scenario_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingInput(format!("no scenario files in {}", dir.display())));
    }
    paths.iter().map(|p| read_scenario(p)).collect()
}
