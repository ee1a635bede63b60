use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::corpus::{Frame, FrameKind, Movie};
use crate::matcher::match_title;
use crate::query::{Backend, Capability, GatewayError, QueryMode, QueryRequest, EVAL_TEMPERATURE};

use super::{
    selected_kinds, DetectorError, Evidence, FramePrediction, FrameSource, PredictionMode,
    ProbeSettings,
};

/// Fails before any query when `frames_per_prompt` cannot be served.
pub fn check_frames_per_prompt<B: Backend + ?Sized>(
    backend: &B,
    frames_per_prompt: usize,
) -> Result<(), DetectorError> {
    if frames_per_prompt == 0 {
        return Err(DetectorError::InvalidConfig(
            "frames_per_prompt must be at least 1".to_string(),
        ));
    }
    let d = backend.descriptor();
    if frames_per_prompt > 1 && !d.has(Capability::MultiImage) {
        return Err(GatewayError::CapabilityUnsupported {
            backend: d.name.clone(),
            what: format!("{frames_per_prompt} frames per prompt (no multi-image support)"),
        }
        .into());
    }
    if frames_per_prompt > d.max_images_per_prompt {
        return Err(GatewayError::CapabilityUnsupported {
            backend: d.name.clone(),
            what: format!(
                "{frames_per_prompt} frames per prompt (limit {})",
                d.max_images_per_prompt
            ),
        }
        .into());
    }
    Ok(())
}

pub(crate) fn image_request<S: FrameSource + ?Sized>(
    source: &S,
    frames: &[&Frame],
    settings: &ProbeSettings,
) -> Result<QueryRequest, DetectorError> {
    let mut request = QueryRequest::new(
        QueryMode::FreeformImage,
        settings.prompts.image_prompt(frames.len()),
    );
    request.temperature = EVAL_TEMPERATURE;
    request.max_output_tokens = settings.max_output_tokens;
    for frame in frames {
        request.images.push(source.image(frame)?);
        request.frame_ids.push(frame.frame_id.clone());
    }
    Ok(request)
}

/// DIS-CO probing: frames of each selected kind are sent `frames_per_prompt`
/// at a time, in manifest order, and each answer is matched against the title.
pub fn run_freeform<B, S>(
    backend: &B,
    source: &S,
    movie: &Movie,
    kinds: &[FrameKind],
    frames_per_prompt: usize,
    settings: &ProbeSettings,
) -> Result<Vec<FramePrediction>, DetectorError>
where
    B: Backend + ?Sized,
    S: FrameSource + ?Sized,
{
    check_frames_per_prompt(backend, frames_per_prompt)?;
    let mut out = Vec::new();
    for kind in selected_kinds(kinds) {
        let frames: Vec<&Frame> = movie.frames_of(kind).collect();
        for chunk in frames.chunks(frames_per_prompt) {
            let request = image_request(source, chunk, settings)?;
            let response = backend.complete(&request)?;
            let outcome = match_title(&response.raw_text, movie, settings.fuzzy_threshold);
            out.push(FramePrediction {
                frame_ids: request.frame_ids,
                kind,
                mode: PredictionMode::Image,
                correct: outcome.is_match(),
                raw_text: response.raw_text,
                evidence: Evidence::Title(outcome),
                renyi: None,
                latency_ms: response.latency_ms,
                from_cache: response.from_cache,
            });
        }
    }
    Ok(out)
}

/// Caption-only probing: one text query per frame, no images attached.
pub fn run_captions<B: Backend + ?Sized>(
    backend: &B,
    movie: &Movie,
    kinds: &[FrameKind],
    settings: &ProbeSettings,
) -> Result<Vec<FramePrediction>, DetectorError> {
    let frames: Vec<&Frame> = selected_kinds(kinds)
        .flat_map(|k| movie.frames_of(k))
        .collect();
    if let Some(f) = frames.iter().find(|f| f.caption.trim().is_empty()) {
        return Err(DetectorError::MissingCaption {
            title: movie.title.clone(),
            frame_id: f.frame_id.clone(),
        });
    }
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut request = QueryRequest::new(
            QueryMode::FreeformCaption,
            settings.prompts.caption_prompt(&frame.caption),
        );
        request.max_output_tokens = settings.max_output_tokens;
        request.frame_ids.push(frame.frame_id.clone());
        let response = backend.complete(&request)?;
        let outcome = match_title(&response.raw_text, movie, settings.fuzzy_threshold);
        out.push(FramePrediction {
            frame_ids: request.frame_ids,
            kind: frame.kind,
            mode: PredictionMode::Caption,
            correct: outcome.is_match(),
            raw_text: response.raw_text,
            evidence: Evidence::Title(outcome),
            renyi: None,
            latency_ms: response.latency_ms,
            from_cache: response.from_cache,
        });
    }
    Ok(out)
}
