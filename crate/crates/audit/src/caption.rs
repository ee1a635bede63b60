//! Filling in missing captions with a generating backend.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use disco_core::corpus::CaptionProvenance;
use disco_core::detectors::FrameSource;

use crate::cache::ResponseCache;
use crate::config::BackendFile;
use crate::gateway::{generate_caption, open_backend};
use crate::images::DiskImages;
use crate::manifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionSummary {
    pub generated: usize,
    /// Frames whose generated caption lacks the required opening.
    pub nonconforming: Vec<String>,
    pub transport_calls: usize,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

/// Writes a copy of the manifest at `out` with every empty caption generated.
/// Image paths are rewritten to absolute ones when `out` lives in another
/// directory.
pub fn cmd_caption(
    manifest_path: &Path,
    backends: &Path,
    backend: &str,
    out: &Path,
    cache_dir: Option<&Path>,
) -> Result<CaptionSummary> {
    let src = absolute(manifest_path)?;
    let dst = absolute(out)?;
    if dst == src || (dst.exists() && dst.canonicalize()? == src.canonicalize()?) {
        bail!("refusing to overwrite the input manifest {}", manifest_path.display());
    }
    let mut loaded = manifest::load(manifest_path)?;
    let file = BackendFile::load(backends)?;
    let config = file.get(backend)?;
    let cache = cache_dir.map(ResponseCache::open).transpose()?;
    let gateway = open_backend(&file, config, &loaded.manifest.movies, cache)?;
    let images = DiskImages {
        root: loaded.root.clone(),
        resolution: None,
    };

    let mut summary = CaptionSummary {
        generated: 0,
        nonconforming: Vec::new(),
        transport_calls: 0,
    };
    for movie in &mut loaded.manifest.movies {
        for frame in &mut movie.frames {
            if !frame.caption.trim().is_empty() {
                continue;
            }
            let image = images.image(frame)?;
            let caption = generate_caption(&gateway, &frame.frame_id, image)
                .with_context(|| format!("captioning frame {}", frame.frame_id))?;
            if !caption.conforming {
                summary.nonconforming.push(frame.frame_id.clone());
            }
            frame.caption = caption.text;
            frame.caption_provenance = CaptionProvenance::Generated;
            summary.generated += 1;
        }
    }

    let out_dir = dst.parent().map(Path::to_path_buf).unwrap_or_default();
    let src_dir = absolute(&loaded.root)?;
    if out_dir != src_dir {
        for frame in loaded.manifest.movies.iter_mut().flat_map(|m| m.frames.iter_mut()) {
            if !Path::new(&frame.image_path).is_absolute() {
                frame.image_path = src_dir.join(&frame.image_path).display().to_string();
            }
        }
    }
    manifest::save(out, &loaded.manifest)?;
    summary.transport_calls = gateway.transport_calls();
    Ok(summary)
}
