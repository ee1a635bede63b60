//! Detectors: probe runners that produce per-frame predictions, and the
//! scoring that folds predictions into one score per movie.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Frame, FrameKind};
use crate::matcher::{MatchOutcome, DEFAULT_FUZZY_THRESHOLD};
use crate::prompts::PromptSet;
use crate::query::{GatewayError, ImagePayload};

mod freeform;
mod mcqa;
mod renyi;
mod scoring;

pub use freeform::{check_frames_per_prompt, run_captions, run_freeform};
pub use mcqa::{build_distractors, run_mcqa, truth_position, Placement};
pub use renyi::{
    max_renyi_k, renyi_entropy, renyi_scores, run_renyi, Aggregate, PositionSlice, RenyiConfig,
    DEFAULT_K_GRID,
};
pub use scoring::{accuracy_score, disco_score, floor_disco, FloorDenominator};

/// Detector identities, in the row order used by the AUC table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Captions,
    Mcqa,
    Renyi,
    FloorDisco,
    Disco,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Captions,
        DetectorKind::Mcqa,
        DetectorKind::Renyi,
        DetectorKind::FloorDisco,
        DetectorKind::Disco,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Captions => "captions",
            DetectorKind::Mcqa => "mcqa",
            DetectorKind::Renyi => "renyi",
            DetectorKind::FloorDisco => "floor_disco",
            DetectorKind::Disco => "disco",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::Captions => "Captions",
            DetectorKind::Mcqa => "MCQA",
            DetectorKind::Renyi => "Rényi (α = 0.5)",
            DetectorKind::FloorDisco => "⌊DIS-CO⌋",
            DetectorKind::Disco => "DIS-CO",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    Image,
    Caption,
    Mcqa,
    /// Free-form image query that also returned token distributions.
    Logits,
}

impl PredictionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionMode::Image => "image",
            PredictionMode::Caption => "caption",
            PredictionMode::Mcqa => "mcqa",
            PredictionMode::Logits => "logits",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Title(MatchOutcome),
    Choice {
        parsed: Option<usize>,
        truth_index: usize,
        options: Vec<String>,
    },
}

/// Verdict for one query. With several frames per prompt every listed frame
/// inherits the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub frame_ids: Vec<String>,
    pub kind: FrameKind,
    pub mode: PredictionMode,
    pub correct: bool,
    pub raw_text: String,
    pub evidence: Evidence,
    /// Negated Max-K% Rényi aggregate per grid entry, for logits queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renyi: Option<Vec<f64>>,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// Which slice of a movie's frames a score refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreView {
    Main,
    Neutral,
    Weighted,
}

impl ScoreView {
    pub const ALL: [ScoreView; 3] = [ScoreView::Main, ScoreView::Neutral, ScoreView::Weighted];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreView::Main => "main",
            ScoreView::Neutral => "neutral",
            ScoreView::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieScore {
    pub movie_title: String,
    pub detector: DetectorKind,
    pub acc_main: f64,
    pub acc_neutral: f64,
    pub acc_weighted: f64,
    pub n_main: usize,
    pub n_neutral: usize,
    #[serde(default)]
    pub renyi_score: Option<f64>,
    #[serde(default)]
    pub renyi_main: Option<f64>,
    #[serde(default)]
    pub renyi_neutral: Option<f64>,
    #[serde(default)]
    pub k_percent: Option<f64>,
}

impl MovieScore {
    /// The number fed to AUC for this view, if the view has any frames.
    pub fn value(&self, view: ScoreView) -> Option<f64> {
        if self.detector == DetectorKind::Renyi {
            return match view {
                ScoreView::Main => self.renyi_main,
                ScoreView::Neutral => self.renyi_neutral,
                ScoreView::Weighted => self.renyi_score,
            };
        }
        match view {
            ScoreView::Main => (self.n_main > 0).then_some(self.acc_main),
            ScoreView::Neutral => (self.n_neutral > 0).then_some(self.acc_neutral),
            ScoreView::Weighted => (self.n_main + self.n_neutral > 0).then_some(self.acc_weighted),
        }
    }
}

/// Supplies encoded image bytes for a frame.
pub trait FrameSource {
    fn image(&self, frame: &Frame) -> Result<ImagePayload, GatewayError>;
}

impl<S: FrameSource + ?Sized> FrameSource for &S {
    fn image(&self, frame: &Frame) -> Result<ImagePayload, GatewayError> {
        (**self).image(frame)
    }
}

/// Knobs shared by every runner.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSettings {
    pub prompts: PromptSet,
    pub fuzzy_threshold: f64,
    pub max_output_tokens: u32,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            prompts: PromptSet::default(),
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            max_output_tokens: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("frame `{frame_id}` of `{title}` has no caption")]
    MissingCaption { title: String, frame_id: String },
    #[error("only {found} same-genre distractor(s) available for `{title}`, need 3")]
    InsufficientPool { title: String, found: usize },
    #[error("no predictions to score")]
    EmptyInput,
    #[error("image and caption predictions cover different frames (first difference: `{0}`)")]
    KeyMismatch(String),
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("token distributions are top-k partial vectors; enable accept_partial_vectors to use them")]
    PartialVectorsRejected,
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn selected_kinds(kinds: &[FrameKind]) -> impl Iterator<Item = FrameKind> + '_ {
    FrameKind::ALL.into_iter().filter(move |k| kinds.contains(k))
}
