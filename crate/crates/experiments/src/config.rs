//! `key = value` configuration files.
//!
//! Keys are long flag names without the leading dashes. Blank lines and
//! everything after `#` are ignored. Values may be quoted.

use std::collections::BTreeMap;
use std::path::Path;

use crate::ExperimentError;

pub type Config = BTreeMap<String, String>;

pub fn parse_config(text: &str) -> Result<Config, ExperimentError> {
    let mut out = Config::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ExperimentError::Usage(format!("config line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(ExperimentError::Usage(format!("config line {}: empty key", n + 1)));
        }
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        out.insert(key, v.to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Config, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Parses boolean config values.
pub fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_quotes() {
        let c = parse_config("# header\nfmt = E6M5  # acc\n\n--r=13\nout = \"a b.csv\"\n").unwrap();
        assert_eq!(c.get("fmt").unwrap(), "E6M5");
        assert_eq!(c.get("r").unwrap(), "13");
        assert_eq!(c.get("out").unwrap(), "a b.csv");
        assert_eq!(c.len(), 3);
        assert!(parse_config("novalue\n").is_err());
        assert!(parse_config(" = 3\n").is_err());
    }

    #[test]
    fn booleans() {
        assert_eq!(parse_bool("On"), Some(true));
        assert_eq!(parse_bool("0"), Some(false));
        assert_eq!(parse_bool("maybe"), None);
    }
}
