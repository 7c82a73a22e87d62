//! Flat `key = value` configuration merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use crate::CliError;

/// Resolved key/value pairs. Every lookup, including defaults, is recorded so
/// the manifest can echo the configuration that actually ran.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: Mutex<BTreeMap<String, String>>,
}

fn canonical(key: &str) -> String {
    let key = key.trim().replace('-', "_");
    match key.as_str() {
        "observable" => "phi".into(),
        _ => key,
    }
}

impl Settings {
    /// Parses a config file: one `key = value` per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key=value, got '{line}'",
                    no + 1
                ))
            })?;
            if k.trim().is_empty() {
                return Err(CliError::Usage(format!(
                    "config line {}: empty key",
                    no + 1
                )));
            }
            s.set(k, v.trim());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(canonical(key), value.into());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
        v.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("key '{key}': cannot parse '{v}'")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let parsed = Self::parse_value(key, v)?;
                self.used.lock().unwrap().insert(key.into(), v.into());
                Ok(Some(parsed))
            }
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required key '{key}'")))
    }

    /// Value of `key`, or `default` (written with `Display`) when absent.
    pub fn or<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.used
                    .lock()
                    .unwrap()
                    .insert(key.into(), default.to_string());
                Ok(default)
            }
        }
    }

    /// Comma-separated list.
    pub fn list_or<T: FromStr + ToString + Clone>(
        &self,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>, CliError> {
        match self.raw(key) {
            Some(v) => {
                let items = v
                    .split(',')
                    .map(|item| Self::parse_value(key, item))
                    .collect::<Result<Vec<T>, _>>()?;
                self.used.lock().unwrap().insert(key.into(), v.into());
                Ok(items)
            }
            None => {
                let text = default
                    .iter()
                    .map(T::to_string)
                    .collect::<Vec<_>>()
                    .join(",");
                self.used.lock().unwrap().insert(key.into(), text);
                Ok(default.to_vec())
            }
        }
    }

    /// Everything looked up so far, in `key = value` form order.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.lock().unwrap().clone()
    }

    /// Keys supplied but never read by the command.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.lock().unwrap();
        self.values
            .keys()
            .filter(|k| !used.contains_key(*k))
            .cloned()
            .collect()
    }
}

/// Serializes resolved settings back to config-file form.
pub fn to_config_text(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
