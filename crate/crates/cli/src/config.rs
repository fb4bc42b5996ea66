//! Flat key-value config files mirroring the CLI flags. Flags beat
//! config values; config values beat defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;

#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), idx + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Exit with the usage code the way clap does for bad flags.
pub fn usage_error(message: impl std::fmt::Display) -> ! {
    eprintln!("error: {message}");
    eprintln!("run `mmad <command> --help` for usage");
    std::process::exit(2);
}

/// flag > config > default, parsing config strings like flag values.
pub fn pick<T: FromStr + Clone>(
    flag: &Option<T>,
    config: &FileConfig,
    key: &str,
    default: T,
) -> T
where
    T::Err: std::fmt::Display,
{
    pick_opt(flag, config, key).unwrap_or(default)
}

pub fn pick_opt<T: FromStr + Clone>(flag: &Option<T>, config: &FileConfig, key: &str) -> Option<T>
where
    T::Err: std::fmt::Display,
{
    if let Some(value) = flag {
        return Some(value.clone());
    }
    config.get(key).map(|raw| match raw.parse::<T>() {
        Ok(value) => value,
        Err(e) => usage_error(format!("config key {key} = {raw:?}: {e}")),
    })
}

pub fn pick_path(flag: &Option<PathBuf>, config: &FileConfig, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| config.get(key).map(PathBuf::from))
}

pub fn pick_bool(flag: bool, config: &FileConfig, key: &str) -> bool {
    if flag {
        return true;
    }
    match config.get(key) {
        Some(raw) => match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => true,
            "false" | "no" | "0" | "off" => false,
            other => usage_error(format!("config key {key} = {other:?}: expected a boolean")),
        },
        None => false,
    }
}

pub fn require<T>(value: Option<T>, what: &str) -> T {
    match value {
        Some(v) => v,
        None => usage_error(format!("missing required {what}")),
    }
}
