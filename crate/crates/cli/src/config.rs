//! `key = value` configuration files with `[section]` headers and `#`
//! comments. Every value remembers its line so errors can point at it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Parsed file: section name → key → entry. Keys before any header go to
/// the section `""`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, Entry>>,
    pub section_lines: BTreeMap<String, usize>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, "section header is missing `]`"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(ConfigError::at(line, format!("invalid section name `{name}`")));
                }
                if cfg.section_lines.insert(name.to_string(), line).is_some() {
                    return Err(ConfigError::at(line, format!("section [{name}] appears twice")));
                }
                cfg.sections.entry(name.to_string()).or_default();
                current = name.to_string();
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, found `{s}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::at(line, "empty key"));
            }
            let sec = cfg.sections.entry(current.clone()).or_default();
            if sec.contains_key(k) {
                return Err(ConfigError::at(line, format!("key `{k}` set twice")));
            }
            sec.insert(k.to_string(), Entry { value: v.to_string(), line });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }
}

/// Parse a scalar, naming `section.key` and the line on failure.
pub fn parse_value<T: FromStr>(section: &str, key: &str, e: &Entry) -> Result<T, ConfigError> {
    e.value
        .parse()
        .map_err(|_| ConfigError::at(e.line, format!("{section}.{key}: cannot parse `{}`", e.value)))
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(section: &str, key: &str, e: &Entry) -> Result<Vec<T>, ConfigError> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| ConfigError::at(e.line, format!("{section}.{key}: cannot parse `{s}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_lines() {
        let c = RawConfig::parse("# head\n[experiment]\nkind = sssi # trailing\n\n[params]\nbetas = 0.3, 0.5\n").unwrap();
        let e = c.entry("experiment", "kind").unwrap();
        assert_eq!((e.value.as_str(), e.line), ("sssi", 3));
        let v: Vec<f64> = parse_list("params", "betas", c.entry("params", "betas").unwrap()).unwrap();
        assert_eq!(v, vec![0.3, 0.5]);
    }

    #[test]
    fn errors_are_line_anchored() {
        let e = RawConfig::parse("[a]\nx = 1\nnonsense\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = RawConfig::parse("[a]\nx = 1\nx = 2\n").unwrap_err();
        assert_eq!(e.to_string(), "line 3: key `x` set twice");
        let e = RawConfig::parse("[a\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let c = RawConfig::parse("[a]\nn = ten\n").unwrap();
        let e = parse_value::<u64>("a", "n", c.entry("a", "n").unwrap()).unwrap_err();
        assert!(e.to_string().starts_with("line 2: a.n"));
    }
}
