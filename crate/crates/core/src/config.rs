//! The single run configuration shared by every pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataset::CorpusConfig;
use crate::diagnosis::{
    default_fusion_sets, default_single_sets, BaselineConfig, MethodKind, Task,
};
use crate::error::{Error, Result};
use crate::jsonio::read_json;
use crate::llmclient::LlmConfig;
use crate::reasoning::FeatureSpace;
use crate::telemetry::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub methods: Vec<MethodKind>,
    pub single_sets: Vec<Vec<Modality>>,
    pub fusion_sets: Vec<Vec<Modality>>,
    pub tasks: Vec<Task>,
    pub hyper: BaselineConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: MethodKind::ALL.to_vec(),
            single_sets: default_single_sets(),
            fusion_sets: default_fusion_sets(),
            tasks: Task::ALL.to_vec(),
            hyper: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub bench: BenchConfig,
    pub features: FeatureSpace,
    pub llm: LlmConfig,
}

impl RunConfig {
    /// Parse a config file; unknown keys anywhere are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.features.validate()?;
        self.llm.validate()?;
        if self.bench.methods.is_empty() || self.bench.tasks.is_empty() {
            return Err(Error::InvalidConfig(
                "bench needs at least one method and task".into(),
            ));
        }
        let sets = self.bench.single_sets.iter().chain(&self.bench.fusion_sets);
        if sets.clone().any(Vec::is_empty) {
            return Err(Error::InvalidConfig(
                "empty modality set in bench config".into(),
            ));
        }
        Ok(())
    }

    /// Short hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(canonical_json(&v).as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Compact JSON with object keys sorted at every level, independent of the
/// map type serde_json was built with.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&m[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => {
            let body: Vec<String> = a.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

/// Refuse to continue from an artifact produced under another config.
pub fn check_hash(path: &Path, expected: &str, found: &str, force: bool) -> Result<()> {
    if expected == found || force {
        Ok(())
    } else {
        Err(Error::ConfigMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_hash_is_stable() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"corpus": {"n_nodez": 5}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"extra": 1}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"corpus": {"n_nodes": 5}}"#).unwrap();
        assert_eq!(partial.corpus.n_nodes, 5);
        assert_ne!(partial.hash(), RunConfig::default().hash());
    }

    #[test]
    fn canonical_form_sorts_keys() {
        let v: Value = serde_json::from_str(r#"{"b": [1, {"d": 2, "c": 3}], "a": "x"}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":"x","b":[1,{"c":3,"d":2}]}"#);
    }
}
