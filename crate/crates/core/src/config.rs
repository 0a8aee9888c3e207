//! Run configuration for the command-line front end.
//!
//! A configuration is a flat table of `key = value` strings. Values are
//! resolved in three layers: built-in defaults, then an optional file
//! (`#` starts a comment), then command-line flags. The fully resolved
//! table is what gets echoed into run metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::solver::{CboParams, NoiseMode};

/// Every recognised key with its default value; an empty default means unset.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "out"),
    ("lambda", "0.5"),
    ("sigma", "1"),
    ("beta", "50"),
    ("h", "0.01"),
    ("particles", "100"),
    ("max_iters", "10000"),
    ("tol", "1e-8"),
    ("noise", "common"),
    ("stride", "1"),
    ("init_std", "1"),
    ("rf", "0.01"),
    ("objective", "sharpe"),
    ("projector", ""),
    ("stats", ""),
    ("prices", ""),
    ("grid_step", "0.005"),
    ("assets", "3"),
    ("periods", "500"),
    ("mu", ""),
    ("vol", ""),
    ("corr", "0.2"),
    ("samples", "10000"),
    ("svg", "false"),
    ("runs", "200"),
    ("horizon", "100"),
    ("betas", "0,1,10,100,1000"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self { values }
    }
}

fn canonical_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("config line {}: expected key = value", i + 1)))?;
        let key = canonical_key(k);
        if key.is_empty() {
            return Err(Error::config(format!("config line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, overlaid by the file at `path` (if any), overlaid by `flags`.
    pub fn resolve(path: Option<&Path>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
            cfg.overlay(&parse_config_text(&text)?)?;
        }
        cfg.overlay(flags)?;
        Ok(cfg)
    }

    pub fn overlay(&mut self, layer: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in layer {
            let key = canonical_key(k);
            match self.values.get_mut(&key) {
                Some(slot) => *slot = v.clone(),
                None => return Err(Error::config(format!("unknown configuration key '{k}'"))),
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let mut layer = BTreeMap::new();
        layer.insert(key.to_string(), value.into());
        self.overlay(&layer)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Resolved configuration as `key = value` lines in key order.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| Error::config(format!("invalid value '{raw}' for {key}: {e}")))
    }

    /// `None` when the key is unset (empty).
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Comma- or semicolon-separated list of reals; empty when unset.
    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(self.raw(key)).map_err(|e| Error::config(format!("invalid list for {key}: {e}")))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    pub fn cbo_params(&self) -> Result<CboParams> {
        let params = CboParams {
            lambda: self.get("lambda")?,
            sigma: self.get("sigma")?,
            beta: self.get("beta")?,
            h: self.get("h")?,
            n_particles: self.get("particles")?,
            noise_mode: self.get::<NoiseMode>("noise")?,
            seed: self.get("seed")?,
            max_iters: self.get("max_iters")?,
            residual_tol: self.get("tol")?,
        };
        params.validate()?;
        Ok(params)
    }
}

pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = parse_config_text("# base setup\nlambda = 1\nsigma=0.5 # inline\n\nmax-iters = 20\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.overlay(&file).unwrap();
        let mut flags = BTreeMap::new();
        flags.insert("sigma".to_string(), "0.25".to_string());
        cfg.overlay(&flags).unwrap();
        let p = cfg.cbo_params().unwrap();
        assert_eq!((p.lambda, p.sigma, p.max_iters, p.beta), (1.0, 0.25, 20, 50.0));
        assert!(cfg.echo().contains("sigma = 0.25\n"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_text("lambda 1").is_err());
        assert!(RunConfig::default().set("lamda", "1").is_err());
        let mut cfg = RunConfig::default();
        cfg.set("h", "abc").unwrap();
        assert!(cfg.cbo_params().is_err());
        cfg.set("h", "-1").unwrap();
        assert!(cfg.cbo_params().is_err());
    }

    #[test]
    fn lists_and_optionals() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.list("betas").unwrap(), vec![0.0, 1.0, 10.0, 100.0, 1000.0]);
        assert!(cfg.list("mu").unwrap().is_empty());
        assert_eq!(cfg.opt::<String>("projector").unwrap(), None);
        assert_eq!(cfg.path("stats"), None);
        assert_eq!(parse_list("1; 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
