//! `key=value` run configuration; command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use traj_core::Error;

/// Keys a config file may set, spelled like the long flags.
pub const KEYS: [&str; 11] = [
    "seed",
    "context-min",
    "pred-tokens",
    "n",
    "temperature",
    "k",
    "alpha",
    "eps-global",
    "eps-local",
    "agreement-radius",
    "unit",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value, got {raw:?}", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
        }
    }

    /// The flag value if given, else the file value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Error> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| Error::Config(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }
}
