//! Backend and prompt-registry configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use disco_core::mock::MockProfile;
use disco_core::prompts::PromptSet;
use disco_core::query::{BackendDescriptor, BackendKind};
use serde::{Deserialize, Serialize};

/// How requests are laid out on the wire for a remote backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStyle {
    /// Chat completions with base64 image parts.
    #[default]
    ChatCompletions,
    /// Chat completions that also ask for a JSON object with a `movie_title` field.
    ChatCompletionsJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub descriptor: BackendDescriptor,
    /// Model identifier sent to remote endpoints.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub request_style: RequestStyle,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    /// Number of alternatives requested per position when asking for logprobs.
    #[serde(default)]
    pub top_logprobs: Option<u32>,
    /// First retry delay; later delays double up to `max_backoff_ms`.
    #[serde(default = "default_backoff")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_max_backoff")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// Mock profile file, relative to the backend config.
    #[serde(default)]
    pub mock_profile: Option<PathBuf>,
}

fn default_backoff() -> u64 {
    500
}

fn default_max_backoff() -> u64 {
    30_000
}

fn default_timeout() -> u64 {
    120
}

impl BackendConfig {
    pub fn mock(descriptor: BackendDescriptor) -> Self {
        Self {
            descriptor,
            model: None,
            request_style: RequestStyle::default(),
            requests_per_minute: None,
            top_logprobs: None,
            base_backoff_ms: default_backoff(),
            max_backoff_ms: default_max_backoff(),
            timeout_s: default_timeout(),
            mock_profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendFile {
    #[serde(rename = "backend", default)]
    pub backends: Vec<BackendConfig>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl BackendFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file: BackendFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        file.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for b in &file.backends {
            b.descriptor
                .check()
                .with_context(|| format!("in {}", path.display()))?;
            if b.descriptor.kind == BackendKind::Mock && b.mock_profile.is_none() {
                bail!("mock backend `{}` needs a mock_profile", b.descriptor.name);
            }
        }
        for (i, b) in file.backends.iter().enumerate() {
            if file.backends[..i].iter().any(|o| o.descriptor.name == b.descriptor.name) {
                bail!("backend `{}` declared twice in {}", b.descriptor.name, path.display());
            }
        }
        Ok(file)
    }

    pub fn get(&self, name: &str) -> Result<&BackendConfig> {
        self.backends
            .iter()
            .find(|b| b.descriptor.name == name)
            .with_context(|| {
                let known: Vec<&str> = self.backends.iter().map(|b| b.descriptor.name.as_str()).collect();
                format!("unknown backend `{name}` (configured: {})", known.join(", "))
            })
    }

    pub fn mock_profile(&self, backend: &BackendConfig) -> Result<MockProfile> {
        let rel = backend
            .mock_profile
            .as_ref()
            .with_context(|| format!("backend `{}` has no mock_profile", backend.descriptor.name))?;
        load_mock_profile(&self.dir.join(rel))
    }
}

pub fn load_mock_profile(path: &Path) -> Result<MockProfile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing mock profile {}", path.display()))
}

/// Versioned set of prompt variants keyed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRegistry {
    pub version: u32,
    #[serde(rename = "variant")]
    pub variants: Vec<PromptSet>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self {
            version: 1,
            variants: PromptSet::builtin().to_vec(),
        }
    }
}

impl PromptRegistry {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let reg: PromptRegistry = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for (i, v) in reg.variants.iter().enumerate() {
            if reg.variants[..i].iter().any(|o| o.id == v.id) {
                bail!("prompt variant `{}` declared twice in {}", v.id, path.display());
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Result<&PromptSet> {
        self.variants.iter().find(|v| v.id == id).with_context(|| {
            let known: Vec<&str> = self.variants.iter().map(|v| v.id.as_str()).collect();
            format!("unknown prompt variant `{id}` (registered: {})", known.join(", "))
        })
    }
}
