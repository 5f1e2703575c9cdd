//! Flat `key=value` settings: one pair per line, `#` starts a comment.
//! Command-line flags override file values; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::{CliError, CliResult};

/// Every key accepted in a config file or as a flag.
pub const KNOWN_KEYS: &[&str] = &[
    "objective",
    "loss",
    "alpha0",
    "p",
    "lipschitz_ratio",
    "eps",
    "delta",
    "n",
    "d",
    "seed",
    "iters",
    "step0",
    "schedule",
    "tol",
    "ridge",
    "fit_intercept",
    "bandwidth",
    "radius",
    "in_csv",
    "out_csv",
    "alphas",
    "variant",
    "alpha_true",
    "replicates",
    "model",
    "trace",
    "mode",
    "condition",
    "cv_alpha",
    "holdout_csv",
    "holdout_n",
    "holdout_m",
    "eval_n",
    "jobs",
    "out_dir",
];

/// Environment variable consulted when no seed is configured.
pub const SEED_ENV: &str = "DRO_SEED";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
                path: origin.to_path_buf(),
                reason: format!("line {}: expected key=value", lineno + 1),
            })?;
            let key = key.trim();
            check_key(key).map_err(|e| CliError::Parse {
                path: origin.to_path_buf(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Sets `key`, overriding any earlier value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        check_key(key).map_err(CliError::Usage)?;
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn merge_over(mut self, overrides: &Settings) -> Self {
        for (k, v) in &overrides.values {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required setting '{key}'")))
    }

    pub fn parsed<V: FromStr>(&self, key: &str) -> CliResult<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("invalid value '{raw}' for '{key}': {e}"))),
        }
    }

    pub fn parsed_or<V: FromStr>(&self, key: &str, default: V) -> CliResult<V>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list; `None` when the key is absent.
    pub fn list<V: FromStr>(&self, key: &str) -> CliResult<Option<Vec<V>>>
    where
        V::Err: std::fmt::Display,
    {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Usage(format!("invalid entry '{s}' in '{key}': {e}")))
            })
            .collect::<CliResult<Vec<V>>>()
            .and_then(|v| {
                if v.is_empty() {
                    Err(CliError::Usage(format!("'{key}' is an empty list")))
                } else {
                    Ok(Some(v))
                }
            })
    }

    /// Configured seed, else `DRO_SEED`, else 0.
    pub fn seed(&self) -> CliResult<u64> {
        if let Some(s) = self.parsed("seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(raw) => raw
                .trim()
                .parse()
                .map_err(|e| CliError::Usage(format!("invalid {SEED_ENV} '{raw}': {e}"))),
            Err(_) => Ok(0),
        }
    }
}

fn check_key(key: &str) -> Result<(), String> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(format!("unknown key '{key}'"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let file = Settings::parse("# header\nalpha0 = 0.3\np=2 # inline\n\n", Path::new("cfg")).unwrap();
        assert_eq!(file.get("alpha0"), Some("0.3"));
        assert_eq!(file.get("p"), Some("2"));
        let mut flags = Settings::default();
        flags.set("alpha0", "0.1").unwrap();
        let merged = file.merge_over(&flags);
        assert_eq!(merged.parsed::<f64>("alpha0").unwrap(), Some(0.1));
        assert_eq!(merged.parsed::<f64>("p").unwrap(), Some(2.0));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Settings::parse("alpha=0.3", Path::new("cfg")).is_err());
        assert!(Settings::parse("alpha0 0.3", Path::new("cfg")).is_err());
        let mut s = Settings::default();
        assert!(s.set("nope", "1").is_err());
        s.set("n", "abc").unwrap();
        assert!(s.parsed::<usize>("n").is_err());
    }

    #[test]
    fn lists() {
        let s = Settings::parse("lipschitz_ratio=0.1, 1,10", Path::new("cfg")).unwrap();
        assert_eq!(s.list::<f64>("lipschitz_ratio").unwrap(), Some(vec![0.1, 1.0, 10.0]));
        assert_eq!(s.list::<f64>("alphas").unwrap(), None);
    }
}
