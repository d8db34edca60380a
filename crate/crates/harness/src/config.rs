//! Flat `key = value` configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    /// Keys before the first header belong to section `""`. `#` starts a
    /// comment; repeated keys override earlier ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| HarnessError::Parse {
                    line: i + 1,
                    detail: format!("unterminated section header `{line}`"),
                })?;
                current = name.trim().to_string();
                cfg.sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
                line: i + 1,
                detail: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(HarnessError::Parse { line: i + 1, detail: "empty key".into() });
            }
            cfg.sections.entry(current.clone()).or_default().insert(key.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.into());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Parsed value, or `default` when the key is absent.
    pub fn value<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => {
                v.parse().map_err(|_| HarnessError::Config(format!("[{section}] {key} = `{v}` is not a valid value")))
            }
        }
    }

    pub fn opt<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None | Some("") | Some("none") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| HarnessError::Config(format!("[{section}] {key} = `{v}` is not a valid value"))),
        }
    }

    pub fn string(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| HarnessError::Config(format!("missing [{section}] {key}")))
    }

    /// Comma-separated list; empty entries dropped.
    pub fn list(&self, section: &str, key: &str) -> Option<Vec<String>> {
        self.get(section, key)
            .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect())
    }

    /// Rejects keys outside `allowed` so typos do not pass silently.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<()> {
        if let Some(s) = self.sections.get(section) {
            for k in s.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(HarnessError::Config(format!(
                        "unknown key [{section}] {k}; expected one of: {}",
                        allowed.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sections whose name starts with `prefix`, in name order.
    pub fn sections_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.sections.keys().map(String::as_str).filter(move |k| k.starts_with(prefix))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, kv) in &self.sections {
            if !name.is_empty() {
                s.push_str(&format!("[{name}]\n"));
            }
            for (k, v) in kv {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}
