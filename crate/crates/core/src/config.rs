//! Line-oriented `key = value` config format shared by the network specs,
//! hardware descriptions, and energy tables.
//!
//! Rules: one `key = value` pair per line, `#` starts a comment, blank lines
//! are ignored, keys may repeat (`layer = ...` lines are ordered).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvConfig {
    pairs: Vec<(String, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            pairs.push((key.to_string(), value.to_string()));
        }
        Ok(KvConfig { pairs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Last value for `key`, if any.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    /// All values for a repeated key, in file order.
    pub fn all(&self, key: &str) -> Vec<&str> {
        self.pairs
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number"))),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a non-negative integer"))),
        }
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.get_usize(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_comments_and_repeats() {
        let cfg = KvConfig::parse(
            "# header\nname = vgg5\nlayer = conv 64 3 1 1\nlayer = pool 2 2 # inline\n\n",
        )
        .unwrap();
        assert_eq!(cfg.get("name"), Some("vgg5"));
        assert_eq!(cfg.all("layer"), vec!["conv 64 3 1 1", "pool 2 2"]);
        assert!(cfg.get("missing").is_none());
    }

    #[test]
    fn rejects_missing_equals() {
        assert!(KvConfig::parse("just words").is_err());
    }

    #[test]
    fn numeric_parse_errors_are_config_errors() {
        let cfg = KvConfig::parse("x = abc").unwrap();
        assert!(matches!(cfg.get_f64("x"), Err(Error::Config(_))));
    }
}
