//! Flat `key = value` configuration files. Blank lines and `#` comments are ignored.
//! Command-line flags take precedence over config values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Keys accepted in config files.
pub const KNOWN_KEYS: &[&str] = &[
    "data",
    "arm",
    "arm1",
    "arm2",
    "model",
    "mode",
    "degree",
    "t_min",
    "t_max",
    "p",
    "a",
    "b",
    "margin",
    "bootstrap",
    "seed",
    "alpha_ks",
    "reselect_degree",
    // simulation study
    "alpha1",
    "beta1",
    "alpha2",
    "beta2",
    "horizon",
    "spacing",
    "n",
    "reps",
    // random effects
    "nodes",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| CliError::Schema {
                path: source.to_path_buf(),
                line: i as u64 + 1,
                column: None,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(bad(format!("key `{key}` given twice")));
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parsed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    /// `flag`, else the config value, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let c = Config::parse("# study\nn = 200\nspacing=1\nalpha-ks = 0.5  # stricter selection\n", Path::new("s.cfg")).unwrap();
        assert_eq!(c.get::<u32>("n").unwrap(), Some(200));
        assert_eq!(c.resolve(Some(50u32), "n", 100).unwrap(), 50);
        assert_eq!(c.resolve(None, "n", 100u32).unwrap(), 200);
        assert_eq!(c.resolve(None, "reps", 7usize).unwrap(), 7);
        assert_eq!(c.get::<f64>("alpha_ks").unwrap(), Some(0.5));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Config::parse("colour = red\n", Path::new("c")).is_err());
        assert!(Config::parse("n 200\n", Path::new("c")).is_err());
        assert!(Config::parse("n = 1\nn = 2\n", Path::new("c")).is_err());
        let c = Config::parse("n = many\n", Path::new("c")).unwrap();
        assert!(c.get::<u32>("n").is_err());
    }
}
