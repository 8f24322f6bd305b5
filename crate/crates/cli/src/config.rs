//! Flat key/value run configuration. Values come from an optional config
//! file (`key = value` lines, or a flat JSON object such as a previous run's
//! manifest) and are overridden by command-line flags. Every value a command
//! reads, defaulted or not, is echoed into the run manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::error::CliError;

/// Keys written by the manifest itself (including values derived from other
/// settings); accepted and ignored on input.
const RESERVED: &[&str] = &["command", "version", "lambda_grid_values"];

#[derive(Debug)]
pub struct Settings {
    command: &'static str,
    allowed: &'static [&'static str],
    values: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(
        command: &'static str,
        allowed: &'static [&'static str],
        config: Option<&Path>,
    ) -> Result<Self, CliError> {
        let values = match config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        for key in values.keys() {
            if !allowed.contains(&key.as_str()) && !RESERVED.contains(&key.as_str()) {
                return Err(CliError::Input(format!(
                    "{}: unknown key '{key}' for command {command}",
                    config.map(Path::display).expect("keys come from a file")
                )));
            }
        }
        Ok(Self {
            command,
            allowed,
            values: values
                .into_iter()
                .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
                .collect(),
            resolved: BTreeMap::new(),
        })
    }

    /// Overrides `key` with a flag value when the flag was given.
    pub fn flag(&mut self, key: &str, value: Option<impl Display>) {
        debug_assert!(self.allowed.contains(&key), "undeclared key {key}");
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Raw string value, or the default, recorded in the manifest.
    pub fn string(&mut self, key: &str, default: Option<&str>) -> Result<String, CliError> {
        let value = match (self.values.get(key), default) {
            (Some(v), _) => v.clone(),
            (None, Some(d)) => d.to_string(),
            (None, None) => {
                return Err(CliError::Input(format!(
                    "missing required setting '{key}' for command {}",
                    self.command
                )))
            }
        };
        self.resolved.insert(key.to_string(), value.clone());
        Ok(value)
    }

    pub fn path(&mut self, key: &str) -> Result<PathBuf, CliError> {
        Ok(PathBuf::from(self.string(key, None)?))
    }

    pub fn optional_path(&mut self, key: &str) -> Option<PathBuf> {
        self.values.get(key).cloned().map(|v| {
            self.resolved.insert(key.to_string(), v.clone());
            PathBuf::from(v)
        })
    }

    pub fn parse<T: FromStr>(&mut self, key: &str, default: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.string(key, Some(default))?;
        parse_value(key, &raw)
    }

    pub fn required<T: FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.string(key, None)?;
        parse_value(key, &raw)
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str, default: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let raw = self.string(key, Some(default))?;
        raw.split(',')
            .map(|item| parse_value(key, item.trim()))
            .collect()
    }

    /// Records a value computed from other settings (e.g. an automatic grid).
    pub fn record(&mut self, key: &str, value: String) {
        self.resolved.insert(key.to_string(), value);
    }

    /// Flat manifest document: command, version and every resolved setting.
    pub fn manifest(&self) -> Value {
        let mut map = serde_json::Map::new();
        map.insert("command".into(), Value::String(self.command.into()));
        map.insert(
            "version".into(),
            Value::String(env!("CARGO_PKG_VERSION").into()),
        );
        for (k, v) in &self.resolved {
            map.insert(k.clone(), Value::String(v.clone()));
        }
        Value::Object(map)
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| CliError::Input(format!("setting '{key}': cannot parse '{raw}': {e}")))
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            unreachable!("text starts with a brace");
        };
        map.into_iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k, s)),
                Value::Number(n) => Ok((k, n.to_string())),
                Value::Bool(b) => Ok((k, b.to_string())),
                other => Err(CliError::Input(format!(
                    "{}: key '{k}' must be a string, number or boolean, got {other}",
                    path.display()
                ))),
            })
            .collect()
    } else {
        let mut map = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!(
                    "{}: line {}: expected key = value",
                    path.display(),
                    number + 1
                ))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(map)
    }
}
