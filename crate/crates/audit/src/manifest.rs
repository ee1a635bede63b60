//! Manifest files on disk and the image assets they point at.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use disco_core::corpus::{validate, CorpusManifest, PartitionPolicy, ValidationIssue, ValidationReport};

/// A manifest plus the directory its `image_path`s are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

impl LoadedManifest {
    pub fn asset_path(&self, image_path: &str) -> PathBuf {
        self.root.join(image_path)
    }
}

pub fn load(path: &Path) -> Result<LoadedManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    if manifest.schema_version != CorpusManifest::SCHEMA_VERSION {
        anyhow::bail!(
            "manifest {} has schema_version {}, expected {}",
            path.display(),
            manifest.schema_version,
            CorpusManifest::SCHEMA_VERSION
        );
    }
    manifest
        .check_invariants()
        .with_context(|| format!("manifest {}", path.display()))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedManifest { root, manifest })
}

pub fn to_json(manifest: &CorpusManifest) -> Result<String> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    Ok(text)
}

pub fn save(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json(manifest)?).with_context(|| format!("writing manifest {}", path.display()))
}

/// One `MissingAsset` issue per frame whose file is absent or does not decode
/// as PNG or JPEG.
pub fn check_assets(loaded: &LoadedManifest) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for movie in &loaded.manifest.movies {
        for frame in &movie.frames {
            let path = loaded.asset_path(&frame.image_path);
            if image::image_dimensions(&path).is_err() {
                issues.push(ValidationIssue::MissingAsset {
                    title: movie.title.clone(),
                    frame_id: frame.frame_id.clone(),
                    path: path.display().to_string(),
                });
            }
        }
    }
    issues
}

/// Schema-level validation plus the asset check.
pub fn validate_loaded(loaded: &LoadedManifest, policy: &PartitionPolicy) -> ValidationReport {
    let mut report = validate(&loaded.manifest, policy);
    for issue in check_assets(loaded) {
        report.push(issue);
    }
    report
}
