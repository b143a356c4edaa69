//! Service configuration: `key = value` file with `CTL_`-prefixed environment overrides.

use std::net::SocketAddr;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value:?}")]
    BadValue { key: String, value: String },
    #[error("{key} is required")]
    Missing { key: &'static str },
    #[error("{key} points to {path:?}, which does not exist")]
    NotFound { key: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    /// Overrides on top of the curated complementary map.
    pub complementary_map: Option<PathBuf>,
    pub judgment_tasks: Option<PathBuf>,
    /// Blinded tag to method name; only used by the precision endpoint.
    pub judgment_key: Option<PathBuf>,
    pub judgment_store: Option<PathBuf>,
    pub k_per_category: usize,
    pub k_final: usize,
    pub product_shot_threshold: f64,
    pub probes: Option<usize>,
    pub task_batch: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".parse().expect("static address"),
            checkpoint: None,
            index: None,
            features: None,
            catalog: None,
            complementary_map: None,
            judgment_tasks: None,
            judgment_key: None,
            judgment_store: None,
            k_per_category: 10,
            k_final: 10,
            product_shot_threshold: 0.9,
            probes: None,
            task_batch: 20,
        }
    }
}

pub const ENV_PREFIX: &str = "CTL_";

impl ServiceConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        let bad = || ConfigError::BadValue {
            key: key.clone(),
            value: value.to_string(),
        };
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key.as_str() {
            "listen" => self.listen = value.parse().map_err(|_| bad())?,
            "checkpoint" => self.checkpoint = path(),
            "index" => self.index = path(),
            "features" => self.features = path(),
            "catalog" => self.catalog = path(),
            "complementary_map" => self.complementary_map = path(),
            "judgment_tasks" => self.judgment_tasks = path(),
            "judgment_key" => self.judgment_key = path(),
            "judgment_store" => self.judgment_store = path(),
            "k_per_category" | "k" => self.k_per_category = value.parse().map_err(|_| bad())?,
            "k_final" => self.k_final = value.parse().map_err(|_| bad())?,
            "product_shot_threshold" => self.product_shot_threshold = value.parse().map_err(|_| bad())?,
            "probes" => self.probes = if value.is_empty() { None } else { Some(value.parse().map_err(|_| bad())?) },
            "task_batch" => self.task_batch = value.parse().map_err(|_| bad())?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k, v).map_err(|e| ConfigError::Syntax {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies every `CTL_<KEY>` variable; other variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.as_ref()
                    .strip_prefix(ENV_PREFIX)
                    .map(|k| (k.to_string(), v.as_ref().to_string()))
            })
            .collect();
        vars.sort();
        for (k, v) in vars {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Checks the settings needed to serve recommendations.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_per_category == 0 || self.k_final == 0 || self.task_batch == 0 {
            return Err(ConfigError::Invalid("k defaults and task_batch must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.product_shot_threshold) {
            return Err(ConfigError::Invalid("product_shot_threshold must lie in [0, 1]".into()));
        }
        let required = [
            ("checkpoint", &self.checkpoint),
            ("index", &self.index),
            ("features", &self.features),
            ("catalog", &self.catalog),
        ];
        for (key, path) in required {
            let path = path.as_ref().ok_or(ConfigError::Missing { key })?;
            if !path.exists() {
                return Err(ConfigError::NotFound { key, path: path.clone() });
            }
        }
        let optional = [
            ("complementary_map", &self.complementary_map),
            ("judgment_tasks", &self.judgment_tasks),
            ("judgment_key", &self.judgment_key),
        ];
        for (key, path) in optional {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::NotFound { key, path: p.clone() });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let mut c = ServiceConfig::default();
        c.apply_text("# service\nlisten = 0.0.0.0:9000\nk = 5\ncheckpoint = /tmp/model.ctlt # trailing\n")
            .unwrap();
        assert_eq!(c.listen.port(), 9000);
        assert_eq!(c.k_per_category, 5);
        assert_eq!(c.checkpoint, Some(PathBuf::from("/tmp/model.ctlt")));
        c.apply_env([("CTL_K_FINAL", "3"), ("HOME", "/root"), ("CTL_PROBES", "4")]).unwrap();
        assert_eq!(c.k_final, 3);
        assert_eq!(c.probes, Some(4));
    }

    #[test]
    fn errors() {
        let mut c = ServiceConfig::default();
        assert!(matches!(c.apply_text("k: 3"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.apply_text("\nnope = 1"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(c.set("k", "zero").is_err());
        assert!(matches!(c.validate(), Err(ConfigError::Missing { key: "checkpoint" })));
        c.set("k", "0").unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        let mut c = ServiceConfig::default();
        for k in ["checkpoint", "index", "features", "catalog"] {
            c.set(k, "/definitely/not/here").unwrap();
        }
        assert!(matches!(c.validate(), Err(ConfigError::NotFound { key: "checkpoint", .. })));
    }
}
