//! Deterministic offline stand-in for a probed model.
//!
//! Every decision is a pure function of the profile seed, the frame ids in the
//! request and the query mode, so whole pipeline runs replay byte for byte.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{FrameKind, Group, Movie};
use crate::matcher::{canonicalize, option_letter};
use crate::query::{GatewayError, QueryMode, QueryRequest, QueryResponse, Segment, TokenDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub group: Group,
    pub kind: FrameKind,
    pub mode: QueryMode,
    pub p: f64,
}

/// Shape of the synthetic next-token distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitProfile {
    pub vocab_size: usize,
    pub image_positions_per_frame: usize,
    /// Probability of the top token per group. Higher means lower entropy.
    pub peak: BTreeMap<Group, f64>,
    pub jitter: f64,
    /// Emit only the `k` largest probabilities, flagged partial.
    pub top_k: Option<usize>,
}

impl Default for LogitProfile {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            image_positions_per_frame: 0,
            peak: [(Group::Suspect, 0.5), (Group::Clean, 0.5), (Group::Excluded, 0.5)]
                .into_iter()
                .collect(),
            jitter: 0.1,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyProfile {
    pub per_image_ms: u64,
    pub per_query_ms: u64,
    pub jitter_ms: u64,
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self {
            per_image_ms: 250,
            per_query_ms: 120,
            jitter_ms: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub seed: u64,
    #[serde(default)]
    pub recall: Vec<RecallEntry>,
    #[serde(default)]
    pub confusion_pool: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub caption_recall: BTreeMap<Group, f64>,
    /// Always answer this MCQA option, whatever the question.
    #[serde(default)]
    pub mcqa_fixed_answer: Option<usize>,
    /// Chance that a generated caption opens with the requested prefix.
    #[serde(default = "one")]
    pub caption_conformance: f64,
    #[serde(default)]
    pub logits: LogitProfile,
    #[serde(default)]
    pub latency: LatencyProfile,
}

fn one() -> f64 {
    1.0
}

impl MockProfile {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            recall: Vec::new(),
            confusion_pool: BTreeMap::new(),
            caption_recall: BTreeMap::new(),
            mcqa_fixed_answer: None,
            caption_conformance: 1.0,
            logits: LogitProfile::default(),
            latency: LatencyProfile::default(),
        }
    }

    pub fn with_recall(mut self, group: Group, kind: FrameKind, mode: QueryMode, p: f64) -> Self {
        self.set_recall(group, kind, mode, p);
        self
    }

    pub fn set_recall(&mut self, group: Group, kind: FrameKind, mode: QueryMode, p: f64) {
        match self
            .recall
            .iter_mut()
            .find(|e| e.group == group && e.kind == kind && e.mode == mode)
        {
            Some(entry) => entry.p = p,
            None => self.recall.push(RecallEntry {
                group,
                kind,
                mode,
                p,
            }),
        }
    }

    pub fn recall(&self, group: Group, kind: FrameKind, mode: QueryMode) -> Option<f64> {
        self.recall
            .iter()
            .find(|e| e.group == group && e.kind == kind && e.mode == mode)
            .map(|e| e.p)
    }

    /// Probabilities in range and a confusion pool for every genre in use.
    pub fn check<'a>(&self, genres: impl IntoIterator<Item = &'a str>) -> Result<(), GatewayError> {
        let probs = self
            .recall
            .iter()
            .map(|e| e.p)
            .chain(self.caption_recall.values().copied())
            .chain(self.logits.peak.values().copied())
            .chain(core::iter::once(self.caption_conformance));
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(incomplete(format!("probability {p} outside [0, 1]")));
            }
        }
        if let Some(i) = self.mcqa_fixed_answer {
            if i >= 4 {
                return Err(incomplete(format!("fixed MCQA answer index {i} out of range")));
            }
        }
        for genre in genres {
            if self.confusion_pool.get(genre).is_none_or(Vec::is_empty) {
                return Err(incomplete(format!("no confusion pool for genre `{genre}`")));
            }
        }
        Ok(())
    }
}

fn incomplete(msg: String) -> GatewayError {
    GatewayError::ProfileIncomplete(msg)
}

/// Deterministic stream of 64-bit draws keyed by seed, frames, mode and a purpose tag.
struct Draws {
    base: [u8; 32],
}

impl Draws {
    fn new(seed: u64, frame_ids: &[String], mode: QueryMode) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((frame_ids.len() as u64).to_le_bytes());
        for id in frame_ids {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
        }
        h.update(mode.as_str().as_bytes());
        Self {
            base: h.finalize().into(),
        }
    }

    fn u64(&self, purpose: &str, index: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(self.base);
        h.update(purpose.as_bytes());
        h.update(index.to_le_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
    }

    /// Uniform in [0, 1).
    fn unit(&self, purpose: &str, index: u64) -> f64 {
        (self.u64(purpose, index) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn pick(&self, purpose: &str, n: usize) -> usize {
        (self.u64(purpose, 0) % n as u64) as usize
    }
}

const CAPTION_SCENES: [&str; 6] = [
    "a wide landscape under a pale sky, with distant hills and a narrow road",
    "two figures talking in a dimly lit room with wooden furniture",
    "a crowded street at dusk, lit by shop windows and passing cars",
    "a close view of an old object resting on a cluttered table",
    "a calm stretch of water reflecting trees along the shore",
    "a hallway with tall windows casting long shadows across the floor",
];

/// Answers `request` as a model whose knowledge of `truth` follows `profile`.
pub fn mock_complete(
    profile: &MockProfile,
    request: &QueryRequest,
    truth: &Movie,
) -> Result<QueryResponse, GatewayError> {
    let draws = Draws::new(profile.seed, &request.frame_ids, request.mode);
    let kind = request
        .frame_ids
        .first()
        .and_then(|id| truth.frame(id))
        .map_or(FrameKind::Main, |f| f.kind);
    let n_frames = request.frame_ids.len().max(request.images.len()).max(1);

    let raw_text = match request.mode {
        QueryMode::FreeformImage => {
            let p = profile
                .recall(truth.group, kind, request.mode)
                .ok_or_else(|| missing_recall(truth.group, kind, request.mode))?;
            // each extra frame is another independent chance to recognise the title
            let p_group = 1.0 - libm::pow(1.0 - p, n_frames as f64);
            freeform_answer(profile, &draws, truth, draws.unit("recall", 0) < p_group)?
        }
        QueryMode::FreeformCaption => {
            let p = *profile
                .caption_recall
                .get(&truth.group)
                .ok_or_else(|| incomplete(format!("no caption recall for {}", truth.group.as_str())))?;
            freeform_answer(profile, &draws, truth, draws.unit("recall", 0) < p)?
        }
        QueryMode::McqaImage => mcqa_answer(profile, &draws, request, truth, kind)?,
        QueryMode::CaptionGeneration => {
            let scene = CAPTION_SCENES[draws.pick("scene", CAPTION_SCENES.len())];
            if draws.unit("conformance", 0) < profile.caption_conformance {
                format!("The image depicts {scene}.")
            } else {
                format!("A still showing {scene}.")
            }
        }
    };

    let token_distributions = request
        .want_distributions
        .then(|| synth_distributions(profile, &draws, truth.group, request, &raw_text));

    let latency = &profile.latency;
    let jitter = if latency.jitter_ms == 0 {
        0
    } else {
        draws.u64("latency", 0) % (latency.jitter_ms + 1)
    };
    Ok(QueryResponse {
        raw_text,
        token_distributions,
        from_cache: false,
        latency_ms: latency.per_query_ms + latency.per_image_ms * request.images.len() as u64 + jitter,
        backend_name: "mock".to_string(),
    })
}

fn missing_recall(group: Group, kind: FrameKind, mode: QueryMode) -> GatewayError {
    incomplete(format!(
        "no recall for ({}, {}, {})",
        group.as_str(),
        kind.as_str(),
        mode.as_str()
    ))
}

fn freeform_answer(
    profile: &MockProfile,
    draws: &Draws,
    truth: &Movie,
    correct: bool,
) -> Result<String, GatewayError> {
    let title = if correct {
        truth.title.clone()
    } else {
        confusion_title(profile, draws, truth)?
    };
    // vary the answer shape the way real models do
    Ok(match draws.pick("style", 4) {
        0 | 1 => title,
        2 => format!("The movie is {title}."),
        _ => format!("{{\"movie_title\": \"{title}\"}}"),
    })
}

fn confusion_title(profile: &MockProfile, draws: &Draws, truth: &Movie) -> Result<String, GatewayError> {
    let canon_truth = canonicalize(&truth.title);
    for genre in &truth.genre_tags {
        let Some(pool) = profile.confusion_pool.get(genre) else {
            continue;
        };
        let wrong: Vec<&String> = pool
            .iter()
            .filter(|t| canonicalize(t) != canon_truth)
            .collect();
        if !wrong.is_empty() {
            return Ok(wrong[draws.pick("confusion", wrong.len())].clone());
        }
    }
    Err(incomplete(format!(
        "no usable confusion title for `{}`",
        truth.title
    )))
}

fn mcqa_answer(
    profile: &MockProfile,
    draws: &Draws,
    request: &QueryRequest,
    truth: &Movie,
    kind: FrameKind,
) -> Result<String, GatewayError> {
    let options = request
        .options
        .as_ref()
        .ok_or_else(|| incomplete("mcqa request without options".into()))?;
    let choice = match profile.mcqa_fixed_answer {
        Some(i) => i,
        None => {
            let canon = canonicalize(&truth.title);
            let truth_index = options
                .iter()
                .position(|o| canonicalize(o) == canon)
                .ok_or_else(|| incomplete(format!("`{}` is not among the options", truth.title)))?;
            let p = profile
                .recall(truth.group, kind, request.mode)
                .ok_or_else(|| missing_recall(truth.group, kind, request.mode))?;
            if draws.unit("recall", 0) < p {
                truth_index
            } else {
                let others: Vec<usize> = (0..options.len()).filter(|&i| i != truth_index).collect();
                others[draws.pick("distractor", others.len())]
            }
        }
    };
    let letter = option_letter(choice);
    Ok(match draws.pick("style", 3) {
        0 => letter.to_string(),
        1 => format!("{letter}. {}", options[choice]),
        _ => format!("Answer: {letter}"),
    })
}

fn synth_distributions(
    profile: &MockProfile,
    draws: &Draws,
    group: Group,
    request: &QueryRequest,
    answer: &str,
) -> Vec<TokenDistribution> {
    let lp = &profile.logits;
    let vocab = lp.vocab_size.max(2);
    let peak = lp.peak.get(&group).copied().unwrap_or(0.5);
    let image_positions = request.images.len().max(usize::from(request.mode != QueryMode::FreeformCaption))
        * lp.image_positions_per_frame;
    let text_positions = answer.split_whitespace().count().max(1);

    let mut out = Vec::with_capacity(image_positions + text_positions);
    for pos in 0..image_positions + text_positions {
        let segment = if pos < image_positions {
            Segment::Image
        } else {
            Segment::Text
        };
        let jitter = lp.jitter * (2.0 * draws.unit("logit", pos as u64) - 1.0);
        let top = (peak + jitter).clamp(1.0 / vocab as f64, 1.0);
        let rest = (1.0 - top) / (vocab - 1) as f64;
        let mut probs = Vec::with_capacity(vocab);
        probs.push(top);
        probs.extend(core::iter::repeat_n(rest, vocab - 1));
        out.push(match lp.top_k {
            Some(k) if k < vocab => {
                probs.truncate(k);
                TokenDistribution::top_k(segment, probs)
            }
            _ => TokenDistribution::full(segment, probs),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CaptionProvenance, Frame};
    use crate::matcher::{match_title, parse_mcqa};
    use crate::query::ImagePayload;
    use alloc::vec;

    fn movie(n_frames: usize) -> Movie {
        Movie {
            title: "Frozen".into(),
            aliases: vec![],
            release_date: None,
            group: Group::Suspect,
            genre_tags: vec!["animation".into()],
            box_office_usd: None,
            imdb_rating: None,
            frames: (0..n_frames)
                .map(|i| Frame {
                    frame_id: format!("f{i:04}"),
                    image_path: String::new(),
                    kind: FrameKind::Main,
                    caption: "The image depicts snow.".into(),
                    caption_provenance: CaptionProvenance::Supplied,
                    width_px: None,
                    height_px: None,
                })
                .collect(),
        }
    }

    fn profile(p: f64) -> MockProfile {
        let mut prof = MockProfile::new(7).with_recall(Group::Suspect, FrameKind::Main, QueryMode::FreeformImage, p);
        prof.confusion_pool
            .insert("animation".into(), vec!["Moana".into(), "Tangled".into(), "Frozen".into()]);
        prof
    }

    fn image_request(frame_id: &str) -> QueryRequest {
        let mut r = QueryRequest::new(QueryMode::FreeformImage, "name it");
        r.images = vec![ImagePayload::new("image/png", frame_id.as_bytes().to_vec())];
        r.frame_ids = vec![frame_id.into()];
        r
    }

    fn correct_fraction(p: f64, n: usize) -> f64 {
        let m = movie(n);
        let prof = profile(p);
        let hits = m
            .frames
            .iter()
            .filter(|f| {
                let resp = mock_complete(&prof, &image_request(&f.frame_id), &m).unwrap();
                match_title(&resp.raw_text, &m, 0.9).is_match()
            })
            .count();
        hits as f64 / n as f64
    }

    #[test]
    fn degenerate_recall() {
        assert_eq!(correct_fraction(1.0, 200), 1.0);
        assert_eq!(correct_fraction(0.0, 200), 0.0);
    }

    #[test]
    fn recall_concentrates() {
        let n = 1000;
        let observed = correct_fraction(0.35, n);
        let sd = (0.35f64 * 0.65 / n as f64).sqrt();
        assert!((observed - 0.35).abs() < 3.0 * sd, "observed {observed}");
    }

    #[test]
    fn deterministic_replay() {
        let m = movie(3);
        let prof = profile(0.5);
        let r = image_request("f0001");
        assert_eq!(mock_complete(&prof, &r, &m), mock_complete(&prof, &r, &m));
    }

    #[test]
    fn missing_recall_is_incomplete() {
        let m = movie(1);
        let mut r = image_request("f0000");
        r.mode = QueryMode::FreeformCaption;
        r.images.clear();
        assert!(matches!(
            mock_complete(&profile(0.5), &r, &m),
            Err(GatewayError::ProfileIncomplete(_))
        ));
    }

    #[test]
    fn check_requires_pools() {
        let prof = profile(0.5);
        assert!(prof.check(["animation"]).is_ok());
        assert!(prof.check(["horror"]).is_err());
        let mut bad = prof.clone();
        bad.caption_recall.insert(Group::Clean, 1.5);
        assert!(bad.check([]).is_err());
    }

    #[test]
    fn fixed_mcqa_answer() {
        let m = movie(1);
        let mut prof = profile(0.0);
        prof.mcqa_fixed_answer = Some(0);
        let mut r = image_request("f0000");
        r.mode = QueryMode::McqaImage;
        let options: Vec<String> = ["Moana", "Frozen", "Up", "Coco"].iter().map(|s| s.to_string()).collect();
        r.options = Some(options.clone());
        let resp = mock_complete(&prof, &r, &m).unwrap();
        assert_eq!(parse_mcqa(&resp.raw_text, &options), Some(0));
    }

    #[test]
    fn distributions_are_well_formed() {
        let m = movie(1);
        let mut r = image_request("f0000");
        r.want_distributions = true;
        let mut with_image = profile(1.0);
        with_image.logits.image_positions_per_frame = 4;
        let resp = mock_complete(&with_image, &r, &m).unwrap();
        let dists = resp.token_distributions.unwrap();
        assert!(dists.len() > 4);
        assert!(dists.iter().all(TokenDistribution::is_well_formed));
        assert_eq!(dists.iter().filter(|d| d.segment == Segment::Image).count(), 4);

    }

    #[test]
    fn one_vector_per_answer_token() {
        let mut m = movie(64);
        m.title = "The Snow Queen".into();
        let mut r = image_request("f0000");
        r.want_distributions = true;
        let prof = profile(1.0);
        let mut seen_plain = false;
        for f in &m.frames {
            r.frame_ids = vec![f.frame_id.clone()];
            let resp = mock_complete(&prof, &r, &m).unwrap();
            if resp.raw_text == "The Snow Queen" {
                seen_plain = true;
                assert_eq!(resp.token_distributions.unwrap().len(), 3);
            }
        }
        assert!(seen_plain);
    }

    #[test]
    fn partial_vectors_flagged() {
        let m = movie(1);
        let mut r = image_request("f0000");
        r.want_distributions = true;
        let mut partial = profile(1.0);
        partial.logits.top_k = Some(5);
        let resp = mock_complete(&partial, &r, &m).unwrap();
        let dists = resp.token_distributions.unwrap();
        assert!(dists.iter().all(|d| d.partial && d.k() == 5 && d.is_well_formed()));
    }
}
