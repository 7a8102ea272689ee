//! Flat `key = value` job configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JobConfig {
    entries: BTreeMap<String, String>,
}

impl JobConfig {
    pub fn parse(text: &str) -> Result<JobConfig, Failure> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Failure::Config(format!("line {}: malformed key `{key}`", no + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Failure::Config(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(JobConfig { entries })
    }

    pub fn load(path: &Path) -> Result<JobConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", path.display())))?;
        JobConfig::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), Failure> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("override `{spec}` is not key=value")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Failure::Config(format!("override `{spec}` has an empty key")));
        }
        self.entries.insert(key.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, Failure> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Failure::Config(format!("cannot parse `{key} = {v}`"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str, default: &[T]) -> Result<Vec<T>, Failure>
    where
        T: Clone,
    {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Failure::Config(format!("cannot parse list entry `{s}` of `{key}`")))
                })
                .collect(),
        }
    }

    /// SHA-256 of the canonical `key=value` lines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
