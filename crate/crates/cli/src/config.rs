//! Flat `key=value` settings: read from a file, overridden by flags, then
//! consumed key by key so that leftovers can be reported as unknown.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Every key that was consumed, with the value in effect.
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value", lineno + 1))?;
            let key = normalize(k);
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            s.values.insert(key, v.trim().to_string());
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
        Self::parse(&text).with_context(|| path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(normalize(key), value.to_string());
    }

    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// Applies a `key=value` override given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{pair}' is not of the form key=value"))?;
        self.set(k, v.trim());
        Ok(())
    }

    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(raw) => {
                let parsed = raw.parse::<T>().map_err(|e| anyhow!("setting {key}='{raw}': {e}"))?;
                self.resolved.insert(key.to_string(), raw);
                Ok(Some(parsed))
            }
        }
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.take(key)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take(key)?.ok_or_else(|| anyhow!("missing required setting '{key}'"))
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<BTreeMap<String, String>> {
        if !self.values.is_empty() {
            let all: Vec<&str> = self.values.keys().map(String::as_str).collect();
            bail!("unknown setting{} {}", if all.len() > 1 { "s" } else { "" }, all.join(", "));
        }
        Ok(self.resolved)
    }
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}
