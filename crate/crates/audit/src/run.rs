//! Experiment orchestration: probe every partitioned title with the selected
//! detectors and leave a self-contained run directory behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use disco_core::corpus::{partition, FrameKind, Group, Movie, PartitionPolicy};
use disco_core::detectors::{
    build_distractors, check_frames_per_prompt, run_captions, run_freeform, run_mcqa, run_renyi,
    DetectorError, DetectorKind, FloorDenominator, Placement, ProbeSettings, RenyiConfig,
};
use disco_core::matcher::DEFAULT_FUZZY_THRESHOLD;
use disco_core::query::{Backend, Capability, GatewayError};
use disco_core::stats::DEFAULT_ITERATIONS;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::ResponseCache;
use crate::config::{BackendFile, PromptRegistry};
use crate::gateway::{open_backend, Gateway};
use crate::images::{DiskImages, Resolution};
use crate::manifest::{self, LoadedManifest};
use crate::predlog::{self, PredictionRecord};
use crate::report;

pub const CONFIG_FILE: &str = "config.json";
pub const MOVIES_FILE: &str = "movies.json";
pub const PREDICTIONS_FILE: &str = "predictions.ndjson";
pub const VALIDATION_FILE: &str = "validation.json";

pub fn default_box_office_edges() -> Vec<f64> {
    vec![0.0, 1e8, 2.5e8, 5e8, 1e9, 3e9]
}

pub fn default_imdb_edges() -> Vec<f64> {
    vec![1.0, 5.0, 6.0, 7.0, 8.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub backends: PathBuf,
    pub backend: String,
    pub detectors: Vec<DetectorKind>,
    pub kinds: Vec<FrameKind>,
    pub frames_per_prompt: usize,
    pub placement: Placement,
    pub renyi: RenyiConfig,
    #[serde(default)]
    pub resolution: Option<Resolution>,
    /// Prompt registry file; the built-in registry when absent.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    pub prompt_variant: String,
    pub seed: u64,
    pub iterations: usize,
    pub floor_denominator: FloorDenominator,
    pub fuzzy_threshold: f64,
    pub max_output_tokens: u32,
    pub policy: PartitionPolicy,
    pub box_office_edges: Vec<f64>,
    pub imdb_edges: Vec<f64>,
    /// Worker threads; parallelism is still capped by the backend's in-flight limit.
    pub workers: usize,
    /// Response cache directory; `<out>/cache` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, backends: impl Into<PathBuf>, backend: impl Into<String>) -> Self {
        Self {
            manifest: manifest.into(),
            backends: backends.into(),
            backend: backend.into(),
            detectors: vec![DetectorKind::Disco],
            kinds: FrameKind::ALL.to_vec(),
            frames_per_prompt: 1,
            placement: Placement::Randomized,
            renyi: RenyiConfig::default(),
            resolution: None,
            prompts: None,
            prompt_variant: "default".into(),
            seed: 0,
            iterations: DEFAULT_ITERATIONS,
            floor_denominator: FloorDenominator::AllFrames,
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            max_output_tokens: 64,
            policy: PartitionPolicy::default(),
            box_office_edges: default_box_office_edges(),
            imdb_edges: default_imdb_edges(),
            workers: 4,
            cache_dir: None,
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn registry(&self) -> Result<PromptRegistry> {
        match &self.prompts {
            Some(p) => PromptRegistry::load(p),
            None => Ok(PromptRegistry::default()),
        }
    }

    /// Detectors in table order, without duplicates.
    pub fn detector_set(&self) -> Vec<DetectorKind> {
        DetectorKind::ALL
            .into_iter()
            .filter(|d| self.detectors.contains(d))
            .collect()
    }

    fn wants(&self, d: DetectorKind) -> bool {
        self.detectors.contains(&d)
    }
}

/// Per-title facts needed to rebuild every table without the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieRow {
    pub title: String,
    pub group: Group,
    pub genre_tags: Vec<String>,
    pub box_office_usd: Option<u64>,
    pub imdb_rating: Option<f64>,
    pub n_main: usize,
    pub n_neutral: usize,
}

impl MovieRow {
    pub fn of(m: &Movie) -> Self {
        Self {
            title: m.title.clone(),
            group: m.group,
            genre_tags: m.genre_tags.clone(),
            box_office_usd: m.box_office_usd,
            imdb_rating: m.imdb_rating,
            n_main: m.frames_of(FrameKind::Main).count(),
            n_neutral: m.frames_of(FrameKind::Neutral).count(),
        }
    }

    /// Enough of a movie for covariate binning.
    pub fn as_movie(&self) -> Movie {
        Movie {
            title: self.title.clone(),
            aliases: vec![],
            release_date: None,
            group: self.group,
            genre_tags: self.genre_tags.clone(),
            box_office_usd: self.box_office_usd,
            imdb_rating: self.imdb_rating,
            frames: vec![],
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Fails before any query if the backend cannot serve the requested detectors.
fn preflight(config: &RunConfig, backend: &Gateway, probed: &[&Movie], pool: &[&Movie]) -> Result<(), DetectorError> {
    if config.wants(DetectorKind::Disco) || config.wants(DetectorKind::FloorDisco) {
        check_frames_per_prompt(backend, config.frames_per_prompt)?;
    }
    if config.wants(DetectorKind::Renyi) {
        config.renyi.check()?;
        let d = backend.descriptor();
        if !d.has(Capability::Logits) {
            return Err(GatewayError::CapabilityUnsupported {
                backend: d.name.clone(),
                what: "token distributions".into(),
            }
            .into());
        }
    }
    if config.wants(DetectorKind::Mcqa) {
        if let Placement::Fixed(i) = config.placement {
            if i > 3 {
                return Err(DetectorError::InvalidConfig(format!("fixed option index {i} out of range 0..4")));
            }
        }
        for m in probed {
            build_distractors(m, pool, config.seed)?;
        }
    }
    Ok(())
}

fn probe_movie(
    config: &RunConfig,
    backend: &Gateway,
    source: &DiskImages,
    movie: &Movie,
    pool: &[&Movie],
    settings: &ProbeSettings,
) -> Result<Vec<PredictionRecord>, DetectorError> {
    let mut preds = Vec::new();
    if config.wants(DetectorKind::Disco) || config.wants(DetectorKind::FloorDisco) {
        preds.extend(run_freeform(backend, source, movie, &config.kinds, config.frames_per_prompt, settings)?);
    }
    if config.wants(DetectorKind::Captions) || config.wants(DetectorKind::FloorDisco) {
        preds.extend(run_captions(backend, movie, &config.kinds, settings)?);
    }
    if config.wants(DetectorKind::Mcqa) {
        preds.extend(run_mcqa(
            backend,
            source,
            movie,
            pool,
            &config.kinds,
            config.placement,
            config.seed,
            settings,
        )?);
    }
    if config.wants(DetectorKind::Renyi) {
        preds.extend(run_renyi(backend, source, movie, &config.kinds, &config.renyi, settings)?);
    }
    Ok(preds
        .into_iter()
        .map(|p| PredictionRecord::new(&movie.title, movie.group, p))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub movies: usize,
    pub queries: usize,
    pub transport_calls: usize,
    pub cache_hits: usize,
}

/// Runs the configured detectors and writes the run directory at `out`.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    if config.detectors.is_empty() {
        bail!("no detectors selected");
    }
    if config.kinds.is_empty() {
        bail!("no frame kinds selected");
    }
    let registry = config.registry()?;
    let prompts = registry.get(&config.prompt_variant)?.clone();
    let backends = BackendFile::load(&config.backends)?;
    let backend_config = backends.get(&config.backend)?;

    let loaded: LoadedManifest = manifest::load(&config.manifest)?;
    let validation = manifest::validate_loaded(&loaded, &config.policy);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join(VALIDATION_FILE), &validation)?;
    if let Some(issue) = validation.blocking().next() {
        return Err(ValidationFailed(format!(
            "{} blocking issue(s), first: {}",
            validation.blocking().count(),
            serde_json::to_string(issue)?
        ))
        .into());
    }

    let parts = partition(&loaded.manifest, &config.policy)?;
    let probed: Vec<&Movie> = loaded
        .manifest
        .movies
        .iter()
        .filter(|m| parts.suspect.iter().chain(&parts.clean).any(|p| std::ptr::eq(*p, *m)))
        .collect();
    let pool: Vec<&Movie> = loaded.manifest.movies.iter().collect();

    let cache_dir = config.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let gateway = open_backend(
        &backends,
        backend_config,
        &loaded.manifest.movies,
        Some(ResponseCache::open(&cache_dir)?),
    )?;
    preflight(config, &gateway, &probed, &pool)?;

    let mut snapshot = config.clone();
    snapshot.cache_dir = None;
    write_json(&out.join(CONFIG_FILE), &snapshot)?;
    let rows: Vec<MovieRow> = probed.iter().map(|m| MovieRow::of(m)).collect();
    write_json(&out.join(MOVIES_FILE), &rows)?;

    let source = DiskImages {
        root: loaded.root.clone(),
        resolution: config.resolution,
    };
    let settings = ProbeSettings {
        prompts,
        fuzzy_threshold: config.fuzzy_threshold,
        max_output_tokens: config.max_output_tokens,
    };
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()?;
    let per_movie: Vec<Result<Vec<PredictionRecord>, DetectorError>> = workers.install(|| {
        probed
            .par_iter()
            .map(|m| probe_movie(config, &gateway, &source, m, &pool, &settings))
            .collect()
    });
    let mut records = Vec::new();
    for (m, r) in probed.iter().zip(per_movie) {
        records.extend(r.with_context(|| format!("probing `{}`", m.title))?);
    }
    predlog::write(&out.join(PREDICTIONS_FILE), &records)?;
    report::cmd_report(out)?;
    report::cmd_timing(out)?;

    Ok(RunSummary {
        movies: probed.len(),
        queries: records.len(),
        transport_calls: gateway.transport_calls(),
        cache_hits: gateway.cache_hits(),
    })
}

/// Blocking manifest validation issues.
#[derive(Debug, thiserror::Error)]
#[error("manifest validation failed: {0}")]
pub struct ValidationFailed(pub String);

/// One run per value of a swept parameter, each in `<out>/<param>=<value>`.
pub fn cmd_sweep(base: &RunConfig, param: SweepParam, values: &[String], out: &Path) -> Result<PathBuf> {
    let mut dirs = Vec::new();
    for v in values {
        let mut config = base.clone();
        match param {
            SweepParam::FramesPerPrompt => config.frames_per_prompt = v.parse().with_context(|| format!("bad N `{v}`"))?,
            SweepParam::Resolution => {
                config.resolution = Some(v.parse::<Resolution>().map_err(anyhow::Error::msg)?)
            }
            SweepParam::PromptVariant => config.prompt_variant = v.clone(),
        }
        if config.cache_dir.is_none() {
            config.cache_dir = Some(out.join("cache"));
        }
        let dir = out.join(format!("{}={}", param.as_str(), v));
        cmd_run(&config, &dir)?;
        dirs.push((v.clone(), dir));
    }
    let path = out.join(format!("sweep_{}.tsv", param.as_str()));
    report::write_sweep(&path, param.as_str(), &dirs)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    FramesPerPrompt,
    Resolution,
    PromptVariant,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::FramesPerPrompt => "frames_per_prompt",
            SweepParam::Resolution => "resolution",
            SweepParam::PromptVariant => "prompt_variant",
        }
    }
}
