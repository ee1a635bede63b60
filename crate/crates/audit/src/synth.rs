//! Synthetic corpora and mock backend configs for offline runs.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use chrono::NaiveDate;
use disco_core::corpus::{CaptionProvenance, CorpusManifest, Frame, FrameKind, Group, Movie, CAPTION_PREFIX};
use disco_core::mock::MockProfile;
use disco_core::query::{BackendDescriptor, BackendKind, Capability, QueryMode};
use image::{ImageFormat, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, BackendFile};
use crate::manifest;

const ADJECTIVES: [&str; 20] = [
    "Crimson", "Silent", "Hollow", "Golden", "Broken", "Distant", "Frozen", "Hidden", "Burning", "Quiet",
    "Restless", "Iron", "Velvet", "Wandering", "Shattered", "Midnight", "Paper", "Electric", "Forgotten", "Savage",
];

const NOUNS: [&str; 20] = [
    "Harbor", "Orchard", "Frontier", "Lantern", "Meridian", "Cathedral", "Canyon", "Archive", "Compass", "Garden",
    "Citadel", "Monsoon", "Labyrinth", "Voyage", "Engine", "Pilgrim", "Horizon", "Tides", "Atlas", "Signal",
];

/// Shape of a generated corpus. Genres are dealt round-robin so every genre
/// has as many titles as possible to draw MCQA distractors from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_suspect: usize,
    pub n_clean: usize,
    pub n_main: usize,
    pub n_neutral: usize,
    pub seed: u64,
    pub genres: Vec<String>,
    /// Side length of the square frame images.
    pub image_px: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_suspect: 10,
            n_clean: 10,
            n_main: 4,
            n_neutral: 2,
            seed: 0,
            genres: vec!["drama".into(), "action".into(), "animation".into()],
            image_px: 8,
        }
    }
}

fn date(rng: &mut ChaCha8Rng, from_year: i32, to_year: i32) -> NaiveDate {
    let start = NaiveDate::from_ymd_opt(from_year, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(to_year, 12, 31).expect("valid year");
    let span = (end - start).num_days();
    start + chrono::Duration::days(rng.gen_range(0..=span))
}

fn frame_png(rng: &mut ChaCha8Rng, px: u32) -> Result<Vec<u8>> {
    let mut noise = vec![0u8; (px * px * 3) as usize];
    rng.fill_bytes(&mut noise);
    let img = RgbImage::from_fn(px, px, |x, y| {
        let i = ((y * px + x) * 3) as usize;
        Rgb([noise[i], noise[i + 1], noise[i + 2]])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Writes `manifest.json` and an `images/` directory under `dir`. Every frame
/// gets distinct pixels so no two frames share a cache key.
pub fn write_corpus(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    let total = spec.n_suspect + spec.n_clean;
    if total > ADJECTIVES.len() * NOUNS.len() {
        bail!("at most {} synthetic titles are available", ADJECTIVES.len() * NOUNS.len());
    }
    if spec.genres.is_empty() || spec.image_px == 0 {
        bail!("synthetic corpus needs at least one genre and a positive image size");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs: Vec<(usize, usize)> = (0..ADJECTIVES.len())
        .flat_map(|a| (0..NOUNS.len()).map(move |n| (a, n)))
        .collect();
    pairs.shuffle(&mut rng);

    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    let mut movies = Vec::with_capacity(total);
    for (i, (a, n)) in pairs.into_iter().take(total).enumerate() {
        let group = if i < spec.n_suspect { Group::Suspect } else { Group::Clean };
        let release_date = match group {
            Group::Suspect => date(&mut rng, 1995, 2022),
            _ => date(&mut rng, 2024, 2025),
        };
        let genre = spec.genres[i % spec.genres.len()].clone();
        let box_office = 10f64.powf(rng.gen_range(6.0..9.4)).round() as u64;
        let rating = (rng.gen_range(10..=95) as f64) / 10.0;
        let mut frames = Vec::new();
        for (kind, count) in [(FrameKind::Main, spec.n_main), (FrameKind::Neutral, spec.n_neutral)] {
            for j in 0..count {
                let frame_id = format!("m{i:03}-{}{j:03}", &kind.as_str()[..1]);
                let file = format!("{frame_id}.png");
                fs::write(images.join(&file), frame_png(&mut rng, spec.image_px)?)?;
                frames.push(Frame {
                    frame_id: frame_id.clone(),
                    image_path: format!("images/{file}"),
                    kind,
                    caption: format!("{CAPTION_PREFIX} a {} scene from frame {frame_id}.", NOUNS[n].to_lowercase()),
                    caption_provenance: CaptionProvenance::Supplied,
                    width_px: Some(spec.image_px),
                    height_px: Some(spec.image_px),
                });
            }
        }
        movies.push(Movie {
            title: format!("The {} {}", ADJECTIVES[a], NOUNS[n]),
            aliases: Vec::new(),
            release_date: Some(release_date),
            group,
            genre_tags: vec![genre],
            box_office_usd: Some(box_office),
            imdb_rating: Some(rating),
            frames,
        });
    }
    let manifest = CorpusManifest {
        schema_version: CorpusManifest::SCHEMA_VERSION,
        source_note: format!("synthetic corpus, seed {}", spec.seed),
        movies,
    };
    let path = dir.join("manifest.json");
    manifest::save(&path, &manifest)?;
    Ok(path)
}

/// Decoy titles per genre. None of them collide with generated titles.
pub fn confusion_pools(genres: &[String]) -> Vec<(String, Vec<String>)> {
    genres
        .iter()
        .map(|g| {
            let pool = ["Alpha", "Bravo", "Charlie", "Delta", "Echo"]
                .iter()
                .map(|w| format!("Decoy {w} of {g}"))
                .collect();
            (g.clone(), pool)
        })
        .collect()
}

/// Per-group recall levels for a mock profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recalls {
    pub suspect_main: f64,
    pub suspect_neutral: f64,
    pub clean: f64,
    pub suspect_caption: f64,
    pub clean_caption: f64,
}

/// A profile with the same recalls for free-form and MCQA image queries.
pub fn mock_profile(seed: u64, genres: &[String], r: Recalls) -> MockProfile {
    let mut p = MockProfile::new(seed);
    for mode in [QueryMode::FreeformImage, QueryMode::McqaImage] {
        p.set_recall(Group::Suspect, FrameKind::Main, mode, r.suspect_main);
        p.set_recall(Group::Suspect, FrameKind::Neutral, mode, r.suspect_neutral);
        p.set_recall(Group::Clean, FrameKind::Main, mode, r.clean);
        p.set_recall(Group::Clean, FrameKind::Neutral, mode, r.clean);
    }
    p.caption_recall.insert(Group::Suspect, r.suspect_caption);
    p.caption_recall.insert(Group::Clean, r.clean_caption);
    p.confusion_pool.extend(confusion_pools(genres));
    p
}

/// Writes `<dir>/<name>.profile.toml` and a `backends.toml` declaring one mock
/// backend that uses it. Returns the backends file path.
pub fn write_mock_backend(
    dir: &Path,
    name: &str,
    profile: &MockProfile,
    capabilities: &[Capability],
    max_images_per_prompt: usize,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let profile_file = format!("{name}.profile.toml");
    fs::write(dir.join(&profile_file), toml::to_string(profile)?)?;
    let mut config = BackendConfig::mock(BackendDescriptor {
        name: name.to_string(),
        kind: BackendKind::Mock,
        endpoint_url: None,
        auth_env_var: None,
        capabilities: capabilities.iter().copied().collect::<BTreeSet<_>>(),
        max_images_per_prompt,
        max_inflight: 4,
        retry_limit: 0,
    });
    config.mock_profile = Some(PathBuf::from(profile_file));
    let file = BackendFile {
        backends: vec![config],
        dir: PathBuf::new(),
    };
    let path = dir.join("backends.toml");
    fs::write(&path, toml::to_string(&file)?)?;
    Ok(path)
}
