//! `--config FILE` support: keys of a JSON object become flags that were not
//! given on the command line.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{Map, Value};

use crate::errors::ConfigError;

/// Path given with `--config`, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            return it.next().cloned();
        }
        if let Some(path) = text.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

fn subcommand(args: &[OsString]) -> Option<String> {
    args.iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| !a.starts_with('-'))
}

fn given(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&eq)
    })
}

fn render(key: &str, value: &Value) -> Result<Option<String>, ConfigError> {
    Ok(match value {
        Value::Null | Value::Bool(false) => None,
        Value::Bool(true) => Some(String::new()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let parts = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ => Err(ConfigError(format!("config key {key}: list items must be strings or numbers"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(parts.join(","))
        }
        Value::Object(_) => return Err(ConfigError(format!("config key {key}: nested objects are not flags"))),
    })
}

/// Appends every config entry whose flag is absent from `args`. Top-level
/// keys apply to any subcommand; an object under the subcommand's name
/// overrides them.
pub fn merge(args: Vec<OsString>, config: &Map<String, Value>) -> Result<Vec<OsString>, ConfigError> {
    let sub = subcommand(&args);
    let mut entries: Vec<(&String, &Value)> = Vec::new();
    for (key, value) in config {
        if value.is_object() {
            continue;
        }
        entries.push((key, value));
    }
    if let Some(Value::Object(section)) = sub.as_ref().and_then(|s| config.get(s)) {
        for (key, value) in section {
            entries.retain(|(k, _)| *k != key);
            entries.push((key, value));
        }
    }

    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&args, &flag) {
            continue;
        }
        match render(key, value)? {
            None => {}
            Some(v) if v.is_empty() && value.is_boolean() => out.push(flag.into()),
            Some(v) => {
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ConfigError(format!("{}: top level must be a JSON object", path.display())).into()),
        Err(e) => Err(ConfigError(format!("{}: {e}", path.display())).into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(items: &[&str]) -> Vec<OsString> {
        items.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_win_over_file() {
        let config: Map<String, Value> = serde_json::from_str(
            r#"{"window": 5, "hop": 2.5, "overlaps": [0, 10], "verbose": true, "quiet": false,
                "separate": {"hop": 0.5}}"#,
        )
        .unwrap();
        let merged = merge(argv(&["css", "separate", "--window=3"]), &config).unwrap();
        let merged: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(
            merged,
            ["css", "separate", "--window=3", "--overlaps", "0,10", "--verbose", "--hop", "0.5"]
        );
    }

    #[test]
    fn finds_config_path() {
        assert_eq!(config_path(&argv(&["css", "sweep", "--config", "a.json"])), Some("a.json".into()));
        assert_eq!(config_path(&argv(&["css", "--config=b.json", "sweep"])), Some("b.json".into()));
        assert_eq!(config_path(&argv(&["css", "sweep"])), None);
    }

    #[test]
    fn rejects_nested_values() {
        let config: Map<String, Value> = serde_json::from_str(r#"{"windows": [[1]]}"#).unwrap();
        assert!(merge(argv(&["css", "sweep"]), &config).is_err());
    }
}
