//! Run configuration loaded from TOML.
//!
//! ```toml
//! run_dir = "runs"
//! store_dir = "store"
//!
//! [backend]
//! mock_script = "mock.toml"        # or: base_url = "http://localhost:8000/v1"
//! catalog = "models.toml"
//! agent_model = "large"
//!
//! [[dataset]]
//! name = "emails"
//! kind = "jsonl"                   # or "dir"
//! path = "emails.jsonl"
//! description = "Internal emails"
//!
//! [policy]
//! kind = "min-cost"
//! min_quality = 0.75
//!
//! [budgets]
//! run_cost = 5.0
//! ```
//!
//! Relative paths resolve against the config file's directory. API keys are
//! read from the environment variable named by `backend.api_key_env` and are
//! never written to disk.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, DEFAULT_MAX_STEPS};
use crate::cache::ContextStore;
use crate::error::{Error, Result};
use crate::exec::{FailurePolicy, RunPolicy};
use crate::llm::{
    ChatProvider, Embedder, HashingEmbedder, HttpEmbedder, LlmClient, MockBackend, MockScript, ModelCatalog,
    OpenAiCompatible, DEFAULT_API_KEY_ENV,
};
use crate::model::{load_jsonl, Context, DirectorySource, RecordSource, VectorIndex};
use crate::optimizer::{OptimizerConfig, Policy};
use crate::runtime::{ReuseConfig, Runtime};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub mock_script: Option<PathBuf>,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub catalog: Option<PathBuf>,
    /// Defaults to the catalog's strongest model.
    pub agent_model: Option<String>,
    /// Remote embedding model; the local hashing embedder is used otherwise.
    pub embedding_model: Option<String>,
    pub embedding_dimension: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// One record per file with fields `path` and `text`.
    Dir,
    /// One JSON record per line.
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub kind: DatasetKind,
    pub path: PathBuf,
    pub description: Option<String>,
    /// Build a vector index keyed by this field.
    pub index_key: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Per pipeline execution.
    pub run_cost: Option<f64>,
    /// Per agent run, tool spend included.
    pub agent_cost: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendConfig,
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetConfig>,
    pub policy: Policy,
    pub failure: FailurePolicy,
    pub budgets: Budgets,
    pub pool_width: usize,
    pub sample_size: usize,
    pub run_dir: PathBuf,
    pub store_dir: Option<PathBuf>,
    pub reuse: ReuseConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendConfig::default(),
            datasets: Vec::new(),
            policy: Policy::default(),
            failure: FailurePolicy::default(),
            budgets: Budgets::default(),
            pool_width: 8,
            sample_size: 0,
            run_dir: PathBuf::from("runs"),
            store_dir: None,
            reuse: ReuseConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.base_dir = base_dir.into();
        config.check()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn check(&self) -> Result<()> {
        match (&self.backend.mock_script, &self.backend.base_url) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("configure either backend.mock_script or backend.base_url, not both".into()))
            }
            (None, None) => return Err(Error::Config("no backend configured".into())),
            _ => {}
        }
        let mut names = HashSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                return Err(Error::Config(format!("duplicate dataset `{}`", d.name)));
            }
        }
        if self.pool_width == 0 {
            return Err(Error::Config("pool_width must be at least 1".into()));
        }
        for (what, b) in [("run_cost", self.budgets.run_cost), ("agent_cost", self.budgets.agent_cost)] {
            if matches!(b, Some(v) if v.is_nan() || v < 0.0) {
                return Err(Error::Config(format!("budgets.{what} must be >= 0")));
            }
        }
        self.policy.check()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn is_mock(&self) -> bool {
        self.backend.mock_script.is_some()
    }

    pub fn catalog(&self) -> Result<ModelCatalog> {
        match &self.backend.catalog {
            Some(p) => ModelCatalog::load(self.resolve(p)),
            None => Ok(ModelCatalog::builtin()),
        }
    }

    fn http_provider(&self, base_url: &str) -> Result<OpenAiCompatible> {
        OpenAiCompatible::new(base_url, self.backend.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV))
    }

    pub fn provider(&self) -> Result<Arc<dyn ChatProvider>> {
        if let Some(script) = &self.backend.mock_script {
            return Ok(Arc::new(MockBackend::new(MockScript::load(self.resolve(script))?)));
        }
        let url = self.backend.base_url.as_deref().expect("checked backend");
        Ok(Arc::new(self.http_provider(url)?))
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        match (&self.backend.base_url, &self.backend.embedding_model) {
            (Some(url), Some(model)) => {
                let dim = self.backend.embedding_dimension.ok_or_else(|| {
                    Error::Config("backend.embedding_dimension is required with embedding_model".into())
                })?;
                Ok(Arc::new(HttpEmbedder::new(self.http_provider(url)?, model.clone(), dim)))
            }
            _ => Ok(Arc::new(HashingEmbedder::default())),
        }
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig> {
        self.datasets.iter().find(|d| d.name == name).ok_or_else(|| Error::Config(format!("unknown dataset `{name}`")))
    }

    /// Loads a registered dataset as a root context named after it.
    pub fn load_dataset(&self, name: &str) -> Result<Arc<Context>> {
        let d = self.dataset(name)?;
        let path = self.resolve(&d.path);
        let source: Arc<dyn RecordSource> = match d.kind {
            DatasetKind::Dir => Arc::new(DirectorySource::open(&path)?),
            DatasetKind::Jsonl => Arc::new(load_jsonl(&path)?),
        };
        let description =
            d.description.clone().unwrap_or_else(|| format!("Dataset `{}` loaded from {}.", d.name, d.path.display()));
        let index = match &d.index_key {
            Some(key) => Some(Arc::new(VectorIndex::build(source.as_ref(), self.embedder()?, Some(key.clone()))?)),
            None => None,
        };
        let ctx = Context::create(source, description, index, Vec::new())?.with_name(d.name.clone());
        Ok(Arc::new(ctx))
    }

    pub fn run_policy(&self) -> RunPolicy {
        RunPolicy {
            failure: self.failure,
            pool_width: self.pool_width,
            cost_budget: self.budgets.run_cost,
            ..RunPolicy::default()
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            policy: self.policy,
            sample_size: self.sample_size,
            pool_width: self.pool_width,
            ..OptimizerConfig::default()
        }
    }

    pub fn agent_config(&self, catalog: &ModelCatalog) -> Result<AgentConfig> {
        let model = match &self.backend.agent_model {
            Some(id) => {
                catalog.get(id).ok_or_else(|| Error::Config(format!("agent model `{id}` is not in the catalog")))?
            }
            None => catalog.strongest().ok_or_else(|| Error::Config("model catalog is empty".into()))?,
        };
        let mut agent = AgentConfig::new(model.clone());
        agent.max_steps = self.budgets.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
        agent.cost_budget = self.budgets.agent_cost;
        agent.check()?;
        Ok(agent)
    }

    pub fn open_store(&self) -> Result<Arc<ContextStore>> {
        let embedder = self.embedder()?;
        Ok(Arc::new(match &self.store_dir {
            Some(dir) => ContextStore::open(self.resolve(dir), embedder)?,
            None => ContextStore::in_memory(embedder),
        }))
    }

    pub fn runtime(&self) -> Result<Runtime> {
        let catalog = self.catalog()?;
        let client = LlmClient::new(self.provider()?, &catalog);
        let agent = self.agent_config(&catalog)?;
        Ok(Runtime::new(client, catalog.models().to_vec(), agent)?
            .with_policy(self.run_policy())
            .with_optimizer(self.optimizer_config())
            .with_reuse(self.reuse)
            .with_store(self.open_store()?))
    }
}
