use alloc::string::String;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Frame, FrameKind, Movie};
use crate::matcher::{canonicalize, parse_mcqa};
use crate::query::{Backend, QueryMode, QueryRequest, EVAL_TEMPERATURE};

use super::{
    selected_kinds, DetectorError, Evidence, FramePrediction, FrameSource, PredictionMode,
    ProbeSettings,
};

/// Where the true title sits among the four options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Uniform per frame, derived from the seed and the frame id.
    Randomized,
    Fixed(usize),
}

fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Picks three distinct same-genre titles other than `movie`, deterministically.
pub fn build_distractors(
    movie: &Movie,
    pool: &[&Movie],
    seed: u64,
) -> Result<[String; 3], DetectorError> {
    let truth = canonicalize(&movie.title);
    let mut seen = Vec::new();
    let mut eligible: Vec<&str> = Vec::new();
    for candidate in pool {
        let canon = canonicalize(&candidate.title);
        if canon == truth || !movie.shares_genre(candidate) || seen.contains(&canon) {
            continue;
        }
        seen.push(canon);
        eligible.push(&candidate.title);
    }
    if eligible.len() < 3 {
        return Err(DetectorError::InsufficientPool {
            title: movie.title.clone(),
            found: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &movie.title));
    // partial Fisher-Yates over the first three slots
    for i in 0..3 {
        let remaining = (eligible.len() - i) as u64;
        let j = i + (rng.next_u64() % remaining) as usize;
        eligible.swap(i, j);
    }
    Ok([eligible[0].into(), eligible[1].into(), eligible[2].into()])
}

/// Index of the true title for `frame_id` under `placement`.
pub fn truth_position(placement: Placement, seed: u64, frame_id: &str) -> usize {
    match placement {
        Placement::Fixed(i) => i.min(3),
        Placement::Randomized => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, frame_id));
            (rng.next_u32() % 4) as usize
        }
    }
}

/// Four-option probing with same-genre distractors.
#[allow(clippy::too_many_arguments)]
pub fn run_mcqa<B, S>(
    backend: &B,
    source: &S,
    movie: &Movie,
    pool: &[&Movie],
    kinds: &[FrameKind],
    placement: Placement,
    seed: u64,
    settings: &ProbeSettings,
) -> Result<Vec<FramePrediction>, DetectorError>
where
    B: Backend + ?Sized,
    S: FrameSource + ?Sized,
{
    if let Placement::Fixed(i) = placement {
        if i > 3 {
            return Err(DetectorError::InvalidConfig(alloc::format!(
                "fixed option index {i} out of range 0..4"
            )));
        }
    }
    let distractors = build_distractors(movie, pool, seed)?;
    let frames: Vec<&Frame> = selected_kinds(kinds)
        .flat_map(|k| movie.frames_of(k))
        .collect();
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let truth_index = truth_position(placement, seed, &frame.frame_id);
        let mut options: Vec<String> = distractors.to_vec();
        options.insert(truth_index, movie.title.clone());

        let mut request = QueryRequest::new(QueryMode::McqaImage, settings.prompts.mcqa_prompt(&options));
        request.temperature = EVAL_TEMPERATURE;
        request.max_output_tokens = settings.max_output_tokens;
        request.images.push(source.image(frame)?);
        request.frame_ids.push(frame.frame_id.clone());
        request.options = Some(options.clone());

        let response = backend.complete(&request)?;
        let parsed = parse_mcqa(&response.raw_text, &options);
        out.push(FramePrediction {
            frame_ids: request.frame_ids,
            kind: frame.kind,
            mode: PredictionMode::Mcqa,
            correct: parsed == Some(truth_index),
            raw_text: response.raw_text,
            evidence: Evidence::Choice {
                parsed,
                truth_index,
                options,
            },
            renyi: None,
            latency_ms: response.latency_ms,
            from_cache: response.from_cache,
        });
    }
    Ok(out)
}
