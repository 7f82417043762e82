//! Run configuration: defaults, plain-text `key=value` file, and CLI
//! overrides, with precedence CLI > file > defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::training::TrainConfig;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub conv_filters: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            seed: 1,
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-3,
            conv_filters: vec![32, 32],
            dense_units: vec![64],
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, Error> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad list entry '{p}': {e}")))
        })
        .collect()
}

impl RunConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{key}={value}: {e}"));
        match key {
            "data_root" => self.data_root = PathBuf::from(value),
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "batch_size" => self.batch_size = value.parse().map_err(|e| bad(&e))?,
            "epochs" => self.epochs = value.parse().map_err(|e| bad(&e))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "conv_filters" => self.conv_filters = parse_usize_list(value)?,
            "dense_units" => self.dense_units = parse_usize_list(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a plain-text config file: one `key=value` per line, `#`
    /// comments and blank lines ignored.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The resolved configuration as a `key=value` document (echoed into
    /// the output directory for provenance).
    pub fn to_key_values(&self) -> String {
        let list = |v: &[usize]| {
            v.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
        };
        let entries: BTreeMap<&str, String> = BTreeMap::from([
            ("data_root", self.data_root.display().to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", format!("{}", self.learning_rate)),
            ("conv_filters", list(&self.conv_filters)),
            ("dense_units", list(&self.dense_units)),
            ("output_dir", self.output_dir.display().to_string()),
        ]);
        let mut out = String::new();
        for (k, v) in entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}
