//! Pipeline configuration file (TOML). Relative paths are resolved against
//! the directory holding the file; command-line flags override file values.

use std::path::{Path, PathBuf};

use agentdial_core::generate::GenParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    /// Recorded prompt/reply pairs from `generation.replay_file`.
    #[default]
    Replay,
    /// Chat-completion HTTP endpoint at `generation.endpoint`.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sources {
    pub snips: Option<PathBuf>,
    pub fc: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    /// Probability that a tool-calling record has its names masked.
    pub mask_probability: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig { mask_probability: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub client: ClientKind,
    pub replay_file: Option<PathBuf>,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the endpoint credential.
    pub api_key_env: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
    pub concurrency: usize,
    /// Zero disables rate limiting.
    pub requests_per_minute: u32,
    pub include_seed_frames: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let p = GenParams::default();
        GenerationConfig {
            client: ClientKind::Replay,
            replay_file: None,
            endpoint: None,
            api_key_env: "AGENTDIAL_API_KEY".into(),
            model_id: p.model_id,
            temperature: p.temperature,
            max_output_tokens: p.max_output_tokens,
            timeout_secs: p.timeout.as_secs(),
            retries: p.retries,
            concurrency: 4,
            requests_per_minute: 0,
            include_seed_frames: false,
        }
    }
}

impl GenerationConfig {
    pub fn params(&self) -> GenParams {
        GenParams {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            timeout: std::time::Duration::from_secs(self.timeout_secs),
            retries: self.retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    pub dedup: bool,
    /// Defaults to the global seed.
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    /// Number of dialogues drawn for human review.
    pub sample_size: usize,
    /// Defaults to the global seed.
    pub sample_seed: Option<u64>,
    /// Score log; defaults to `scores.jsonl` in the output directory.
    pub scores: Option<PathBuf>,
    pub bind: String,
    /// Environment variable holding the shared API token; unset disables the check.
    pub token_env: Option<String>,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            sample_size: 100,
            sample_seed: None,
            scores: None,
            bind: "127.0.0.1:8080".into(),
            token_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed. Required: there is no clock-derived default.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Function registry: a JSON tool list or numbered signature lines.
    pub registry: PathBuf,
    pub sources: Sources,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub annotation: AnnotationConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.registry);
        for p in [&mut self.sources.snips, &mut self.sources.fc, &mut self.sources.seeds]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(p) = &mut self.generation.replay_file {
            fix(p);
        }
        if let Some(p) = &mut self.annotation.scores {
            fix(p);
        }
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.mix.shuffle_seed.unwrap_or(self.seed)
    }

    pub fn sample_seed(&self) -> u64 {
        self.annotation.sample_seed.unwrap_or(self.seed)
    }

    /// Checks every referenced input before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let must_exist = |what: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{what} {} does not exist", p.display())))
            }
        };
        must_exist("registry", &self.registry)?;
        let s = &self.sources;
        if s.snips.is_none() && s.fc.is_none() && s.seeds.is_none() {
            return Err(ConfigError::Invalid("no sources configured".into()));
        }
        for (what, p) in [("sources.snips", &s.snips), ("sources.fc", &s.fc), ("sources.seeds", &s.seeds)] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        if !(0.0..=1.0).contains(&self.transform.mask_probability) {
            return Err(ConfigError::Invalid("transform.mask_probability must be within [0, 1]".into()));
        }
        if s.seeds.is_some() {
            let g = &self.generation;
            if g.concurrency == 0 {
                return Err(ConfigError::Invalid("generation.concurrency must be positive".into()));
            }
            match g.client {
                ClientKind::Replay => match &g.replay_file {
                    Some(p) => must_exist("generation.replay_file", p)?,
                    None => return Err(ConfigError::Invalid("generation.replay_file is required for the replay client".into())),
                },
                ClientKind::Http => {
                    if g.endpoint.as_deref().unwrap_or("").is_empty() {
                        return Err(ConfigError::Invalid("generation.endpoint is required for the http client".into()));
                    }
                    if std::env::var(&g.api_key_env).map(|v| v.is_empty()).unwrap_or(true) {
                        return Err(ConfigError::Invalid(format!(
                            "environment variable {} must hold the endpoint credential",
                            g.api_key_env
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
