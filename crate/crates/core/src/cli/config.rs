//! Plain-text `key = value` run configurations.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A configurable key with its default value (empty means unset).
#[derive(Debug, Clone, PartialEq)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: String,
}

pub fn key(key: &'static str, default: impl ToString) -> KeySpec {
    KeySpec { key, default: default.to_string() }
}

/// Settings resolved against a fixed key schema. Later sources override
/// earlier ones: defaults, then the config file, then command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults(schema: &[KeySpec]) -> Self {
        Self { values: schema.iter().map(|k| (k.key.to_string(), k.default.clone())).collect() }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)));
            };
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Defaults overridden by an optional file and then by `overrides`.
    pub fn resolve(schema: &[KeySpec], file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::defaults(schema);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in Self::parse_text(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Sets a known key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key {key:?}"))),
        }
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| Error::Config(format!("unknown key {key:?}")))
    }

    /// Parsed value; empty values are `None`.
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let raw = self.raw(key)?;
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|e| Error::Config(format!("{key} = {raw:?}: {e}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.raw(key)?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Config(format!("{key}: {s:?}: {e}"))))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Splits `--key value` and `--key=value` flags into pairs (dashes in keys
/// become underscores).
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::Config(format!("unexpected argument {arg:?}")));
        };
        let (k, v) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Config(format!("flag --{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((k.replace('-', "_"), v));
    }
    Ok(out)
}
