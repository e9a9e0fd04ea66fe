//! Flat TOML pipeline configuration with `key=value` overrides.

use std::path::Path;

use mobility_core::pipeline::PipelineConfig;
use toml::{Table, Value};

use crate::CliError;

fn defaults() -> Table {
    Table::try_from(PipelineConfig::default()).expect("pipeline config serialises to a table")
}

/// Parses a value as it would appear on the right of `key = ` in the file.
/// Bare words that are not valid TOML are taken as strings.
pub fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Sets `key` in a config table, coercing integers where the default is a float.
fn set(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let Some(slot) = table.get_mut(key) else {
        return Err(CliError::UnknownParameter(key.to_string()));
    };
    *slot = coerce(slot, value);
    Ok(())
}

fn coerce(template: &Value, value: Value) -> Value {
    match (template, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (Value::Array(t), Value::Array(vs)) if t.first().is_some_and(Value::is_float) => {
            Value::Array(vs.into_iter().map(|v| coerce(&Value::Float(0.0), v)).collect())
        }
        (_, v) => v,
    }
}

fn finish(table: Table) -> Result<PipelineConfig, CliError> {
    let config: PipelineConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

/// Defaults, then the file (if any), then each `key=value` override in order.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let mut table = defaults();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let file: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        for (k, v) in file {
            set(&mut table, &k, v)?;
        }
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{o}' is not key=value")))?;
        set(&mut table, k.trim(), parse_value(v))?;
    }
    finish(table)
}

/// Returns `config` with one key replaced.
pub fn with_param(config: &PipelineConfig, key: &str, raw: &str) -> Result<PipelineConfig, CliError> {
    let mut table = Table::try_from(config).map_err(|e| CliError::Config(e.to_string()))?;
    set(&mut table, key, parse_value(raw))?;
    finish(table)
}

/// The full configuration as a TOML file.
pub fn to_toml(config: &PipelineConfig) -> String {
    toml::to_string(config).expect("pipeline config serialises to TOML")
}
