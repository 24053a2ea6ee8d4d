//! Line-oriented `key = value` files with dotted keys (`sgd.learning_rate`).
//! `#` starts a comment; blank lines are ignored. Used for run configs and
//! the manifests written next to every run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{NlabError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NlabError::Config(format!("line {}: expected key=value, got `{raw}`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(NlabError::Config(format!("line {}: bad key `{k}`", n + 1)));
            }
            if map.entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(NlabError::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(map)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NlabError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override, replacing any existing value.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| NlabError::Config(format!("override `{spec}` is not key=value")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(NlabError::Config(format!("override `{spec}` has an empty key")));
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| NlabError::Config(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    pub fn merge(&mut self, other: &KvMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Sorted `key = value` lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| NlabError::io(format!("writing {}", path.display()), e))
    }
}

/// Formats a float so it parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let kv = KvMap::parse("# run\nmode = regularization\n\nsgd.learning_rate=0.05 # tuned\n").unwrap();
        assert_eq!(kv.get("mode"), Some("regularization"));
        assert_eq!(kv.parse_opt::<f64>("sgd.learning_rate").unwrap(), Some(0.05));
        assert_eq!(kv.parse_or("missing", 3usize).unwrap(), 3);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvMap::parse("just words").is_err());
        assert!(KvMap::parse("a = 1\na = 2").is_err());
        assert!(KvMap::parse("bad key = 1").is_err());
        let kv = KvMap::parse("n = x").unwrap();
        assert!(kv.parse_opt::<usize>("n").is_err());
    }

    #[test]
    fn render_parse_roundtrip() {
        let mut kv = KvMap::new();
        kv.set("b.x", 0.1 + 0.2);
        kv.set("a", "hello");
        kv.apply_override("b.x=7").unwrap();
        let text = kv.render();
        assert_eq!(text, "a = hello\nb.x = 7\n");
        assert_eq!(KvMap::parse(&text).unwrap(), kv);
        assert_eq!(fmt_f64(0.1 + 0.2).parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}
