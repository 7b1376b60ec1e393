//! Experiment configuration files.
//!
//! A config is a JSON object; every section except `corpus` has defaults.
//! Relative paths are resolved against the directory of the config file.
//! See `configs/schema.json` at the repository root for the full schema.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::classifier::TrainConfig;
use crate::corpus::{self, Corpus, CorpusError, DefaultPolicy, SynthParams, TagEmbeddings};
use crate::engine::TaskSpec;
use crate::retrieval::{RetrievalConfig, Strategy};

/// Environment variable overriding the remote query cap.
pub const QUERY_CAP_ENV: &str = "SEAFARER_QUERY_CAP";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("config parse error at `{path}`: {msg}")]
    Parse { path: String, msg: String },
    #[error("io error reading {file}: {source}")]
    Io {
        file: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn invalid(path: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    Path(PathBuf),
    Synth(SynthParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsSource {
    /// GloVe-style text file. Synthetic corpora bring their own when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub default_policy: DefaultPolicy,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    #[default]
    InMemory,
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default)]
        query_cap: Option<u64>,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Labels come from the task's ground truth.
    #[default]
    Simulated,
    /// Labels come from a person through the labeling service.
    Human,
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_budget() -> usize {
    100
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub embeddings: Option<EmbeddingsSource>,
    #[serde(default)]
    pub task: TaskSpec,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub oracle: OracleMode,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Read, parse, resolve relative paths against the file's directory, and validate.
    pub fn load(file: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io {
            file: file.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = file.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let CorpusSource::Path(p) = &mut self.corpus {
            fix(p);
        }
        if let Some(EmbeddingsSource { path: Some(p), .. }) = &mut self.embeddings {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.corpus {
            CorpusSource::Path(p) if !p.exists() => {
                return Err(invalid("corpus.path", format!("{} does not exist", p.display())));
            }
            CorpusSource::Synth(s) => {
                if s.n_items < 2 || s.n_tags < 1 || s.d < 2 || s.k < 1 {
                    return Err(invalid("corpus.synth", "need n_items >= 2, n_tags >= 1, d >= 2, k >= 1"));
                }
            }
            _ => {}
        }
        match &self.embeddings {
            Some(EmbeddingsSource { path: Some(p), .. }) if !p.exists() => {
                return Err(invalid("embeddings.path", format!("{} does not exist", p.display())));
            }
            None | Some(EmbeddingsSource { path: None, .. })
                if matches!(self.corpus, CorpusSource::Path(_)) =>
            {
                return Err(invalid("embeddings.path", "required for file corpora"));
            }
            _ => {}
        }
        if self.budget == 0 {
            return Err(invalid("budget", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "must not be empty"));
        }
        if !(self.task.test_fraction > 0.0 && self.task.test_fraction < 1.0) {
            return Err(invalid("task.test_fraction", "must be in (0, 1)"));
        }
        if !(self.task.threshold > 0.0 && self.task.threshold <= 1.0) {
            return Err(invalid("task.threshold", "must be in (0, 1]"));
        }
        self.train
            .validate()
            .map_err(|e| invalid("train", e.to_string()))?;
        self.retrieval
            .validate()
            .map_err(|e| invalid("retrieval", e.to_string()))?;
        if !self.acquisition.gamma.is_finite() {
            return Err(invalid("acquisition.gamma", "must be finite"));
        }
        if let SourceConfig::Remote { endpoint, .. } = &self.source {
            if url::Url::parse(endpoint).is_err() {
                return Err(invalid("source.endpoint", format!("`{endpoint}` is not a URL")));
            }
        }
        Ok(())
    }

    /// Load or generate the corpus and tag embeddings.
    pub fn materialize(&self) -> Result<(Arc<Corpus>, TagEmbeddings), ConfigError> {
        let policy = self
            .embeddings
            .as_ref()
            .map(|e| e.default_policy)
            .unwrap_or_default();
        let emb_path = self.embeddings.as_ref().and_then(|e| e.path.as_ref());
        let (corpus, embeddings) = match &self.corpus {
            CorpusSource::Path(p) => {
                let c = corpus::load_corpus(p)?;
                let path = emb_path.ok_or_else(|| invalid("embeddings.path", "required for file corpora"))?;
                (c, corpus::load_embeddings(path, policy)?)
            }
            CorpusSource::Synth(params) => {
                let (c, e) = corpus::synth_corpus(params)?;
                match emb_path {
                    Some(path) => (c, corpus::load_embeddings(path, policy)?),
                    None => (c, e.with_policy(policy)),
                }
            }
        };
        Ok((Arc::new(corpus), embeddings))
    }

    /// Remote query cap, with the environment variable taking precedence.
    pub fn query_cap(&self) -> Option<u64> {
        let from_env = std::env::var(QUERY_CAP_ENV).ok().and_then(|v| v.parse().ok());
        match &self.source {
            SourceConfig::Remote { query_cap, .. } => from_env.or(*query_cap),
            SourceConfig::InMemory => from_env,
        }
    }

    pub fn remote_timeout(&self) -> Option<Duration> {
        match &self.source {
            SourceConfig::Remote { timeout_ms, .. } => Some(Duration::from_millis(*timeout_ms)),
            SourceConfig::InMemory => None,
        }
    }
}
