//! `--config <json>`: an object whose keys are long flag names. Values fill
//! in flags that were not given on the command line.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::CliError;

const GLOBAL_KEYS: [&str; 3] = ["seed", "quiet", "json"];

#[derive(Debug, Default)]
pub struct Config {
    map: Map<String, Value>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(map)) => Ok(Config { map }),
            Ok(_) => Err(CliError::Usage("config must be a JSON object".into())),
            Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
        }
    }

    /// Rejects keys that are neither global nor in `allowed`.
    pub fn check_keys(&self, command: &str, allowed: &[&str]) -> Result<(), CliError> {
        for k in self.map.keys() {
            if !GLOBAL_KEYS.contains(&k.as_str()) && !allowed.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown config key `{k}` for `{command}`")));
            }
        }
        Ok(())
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    pub fn flag(&self, given: bool, key: &str) -> Result<bool, CliError> {
        Ok(given || self.get(key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"programs": 7, "seed": 3, "shape": {"depth": 2}}"#).unwrap();
        let cfg = Config::load(Some(&path)).unwrap();
        assert_eq!(cfg.pick(None, "programs", 1usize).unwrap(), 7);
        assert_eq!(cfg.pick(Some(9), "programs", 1usize).unwrap(), 9);
        assert_eq!(cfg.pick(None, "mutants", 5usize).unwrap(), 5);
        assert!(cfg.check_keys("gen-data", &["programs", "shape"]).is_ok());
        assert!(matches!(cfg.check_keys("solve", &[]), Err(CliError::Usage(_))));
        assert!(matches!(cfg.pick::<String>(None, "programs", String::new()), Err(CliError::Usage(_))));
    }

    #[test]
    fn config_must_be_an_object() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "[1]").unwrap();
        assert!(Config::load(Some(&path)).is_err());
    }
}
