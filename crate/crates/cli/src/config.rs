//! Flat `key = value` configuration files.
//!
//! Keys mirror the long flag names (`lambda`, `mu`, `K`, `horizon`, ...).
//! Blank lines and lines starting with `#` are ignored. Flags given on the
//! command line override values from the file.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", lineno + 1)))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The flag if given, else the file value, else `None`.
    pub fn lookup<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => {
                v.parse().map(Some).map_err(|e| CliError::Usage(format!("config key {key}: cannot parse {v:?}: {e}")))
            }
        }
    }

    pub fn get_or<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.lookup(key, flag)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.lookup(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required parameter {key} (flag or config)")))
    }
}
