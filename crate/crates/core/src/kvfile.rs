//! Plain-text `key = value` configuration files.
//!
//! Format, one directive per line:
//!
//! ```text
//! # comment (also ';')
//! include relative/or/absolute.conf
//! sim.n_items = 200
//! trainer.gamma = 0.5
//! run.kind = train
//! ```
//!
//! `include` splices another file at that point; later assignments override
//! earlier ones, so an including file can override anything it includes.
//! Keys are dotted lowercase paths. Values are parsed on demand by the
//! typed getters. Serialization is sorted by key, so a config snapshot is
//! byte-stable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const MAX_INCLUDE_DEPTH: usize = 16;

/// A flat, ordered key-value store parsed from the config format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    map: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::new();
        let mut stack = Vec::new();
        cfg.load(path.as_ref(), &mut stack)?;
        Ok(cfg)
    }

    pub fn from_str_content(content: &str) -> Result<Self> {
        let mut cfg = Self::new();
        cfg.parse_lines(content, Path::new("<inline>"), &mut Vec::new())?;
        Ok(cfg)
    }

    fn load(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> Result<()> {
        if stack.len() >= MAX_INCLUDE_DEPTH {
            return Err(Error::config(format!(
                "include depth exceeds {MAX_INCLUDE_DEPTH} at {}",
                path.display()
            )));
        }
        let canon = path
            .canonicalize()
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        if stack.contains(&canon) {
            return Err(Error::config(format!("include cycle via {}", canon.display())));
        }
        let content = std::fs::read_to_string(&canon)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", canon.display())))?;
        stack.push(canon.clone());
        self.parse_lines(&content, &canon, stack)?;
        stack.pop();
        Ok(())
    }

    fn parse_lines(&mut self, content: &str, origin: &Path, stack: &mut Vec<PathBuf>) -> Result<()> {
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(target) = line.strip_prefix("include ") {
                let target = target.trim();
                let mut inc = PathBuf::from(target);
                if inc.is_relative() {
                    if let Some(dir) = origin.parent() {
                        inc = dir.join(inc);
                    }
                }
                self.load(&inc, stack)?;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "{}:{}: expected `key = value` or `include path`, got `{line}`",
                    origin.display(),
                    lineno + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!(
                    "{}:{}: empty key",
                    origin.display(),
                    lineno + 1
                )));
            }
            self.map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.map.insert(key.into(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, |v| v.parse::<f64>().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse_with(key, |v| v.parse::<u64>().ok())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, |v| v.parse::<usize>().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.parse_with(key, |v| match v {
            "true" | "yes" | "1" | "on" => Some(true),
            "false" | "no" | "0" | "off" => Some(false),
            _ => None,
        })
    }

    fn parse_with<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => parse(v)
                .map(Some)
                .ok_or_else(|| Error::config(format!("key `{key}`: cannot parse `{v}`"))),
        }
    }

    /// Sorted `key = value` rendering; stable bytes for snapshots.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
