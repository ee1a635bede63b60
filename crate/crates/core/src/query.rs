//! Probe requests and responses exchanged with a model backend.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Decoding temperature for every evaluation query.
pub const EVAL_TEMPERATURE: f64 = 0.0;
/// Decoding temperature for caption generation.
pub const CAPTION_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    FreeformImage,
    FreeformCaption,
    McqaImage,
    CaptionGeneration,
}

impl QueryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::FreeformImage => "freeform_image",
            QueryMode::FreeformCaption => "freeform_caption",
            QueryMode::McqaImage => "mcqa_image",
            QueryMode::CaptionGeneration => "caption_generation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Freeform,
    Logits,
    MultiImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    pub capabilities: BTreeSet<Capability>,
    #[serde(default = "one")]
    pub max_images_per_prompt: usize,
    #[serde(default = "one")]
    pub max_inflight: usize,
    #[serde(default)]
    pub retry_limit: u32,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("backend `{0}`: remote_http requires endpoint_url")]
    MissingEndpoint(String),
    #[error("backend `{0}`: mock backends must not set endpoint_url")]
    UnexpectedEndpoint(String),
    #[error("backend `{0}`: {1} must be at least 1")]
    ZeroLimit(String, &'static str),
}

impl BackendDescriptor {
    pub fn has(&self, cap: Capability) -> bool {
        self.capabilities.contains(&cap)
    }

    pub fn check(&self) -> Result<(), DescriptorError> {
        match (self.kind, &self.endpoint_url) {
            (BackendKind::RemoteHttp, None) => {
                return Err(DescriptorError::MissingEndpoint(self.name.clone()))
            }
            (BackendKind::Mock, Some(_)) => {
                return Err(DescriptorError::UnexpectedEndpoint(self.name.clone()))
            }
            _ => {}
        }
        if self.max_images_per_prompt == 0 {
            return Err(DescriptorError::ZeroLimit(
                self.name.clone(),
                "max_images_per_prompt",
            ));
        }
        if self.max_inflight == 0 {
            return Err(DescriptorError::ZeroLimit(self.name.clone(), "max_inflight"));
        }
        Ok(())
    }

    /// Largest number of images a single prompt may carry on this backend.
    pub fn image_limit(&self) -> usize {
        if self.has(Capability::MultiImage) {
            self.max_images_per_prompt
        } else {
            self.max_images_per_prompt.min(1)
        }
    }
}

/// Encoded image bytes plus their media type. Identity is the content digest.
#[derive(Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl core::fmt::Debug for ImagePayload {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ImagePayload")
            .field("media_type", &self.media_type)
            .field("len", &self.bytes.len())
            .finish()
    }
}

impl ImagePayload {
    pub fn new(media_type: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            media_type: media_type.into(),
            bytes,
        }
    }

    pub fn digest(&self) -> String {
        hex(&Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub mode: QueryMode,
    pub images: Vec<ImagePayload>,
    pub prompt_text: String,
    pub options: Option<Vec<String>>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Ask for per-position token distributions alongside the text.
    pub want_distributions: bool,
    /// Frames this query is about. Routing context only: not part of the cache key.
    pub frame_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("mcqa queries need exactly 4 options, got {0}")]
    OptionCount(usize),
    #[error("{0} queries take no options")]
    UnexpectedOptions(&'static str),
    #[error("{0} queries take no images")]
    UnexpectedImages(&'static str),
    #[error("{0} queries need at least one image")]
    MissingImage(&'static str),
    #[error("temperature must be finite and non-negative")]
    Temperature,
}

impl QueryRequest {
    pub fn new(mode: QueryMode, prompt_text: impl Into<String>) -> Self {
        Self {
            mode,
            images: Vec::new(),
            prompt_text: prompt_text.into(),
            options: None,
            temperature: EVAL_TEMPERATURE,
            max_output_tokens: 64,
            want_distributions: false,
            frame_ids: Vec::new(),
        }
    }

    pub fn check(&self) -> Result<(), RequestError> {
        let mode = self.mode.as_str();
        match (self.mode, &self.options) {
            (QueryMode::McqaImage, Some(o)) if o.len() == 4 => {}
            (QueryMode::McqaImage, Some(o)) => return Err(RequestError::OptionCount(o.len())),
            (QueryMode::McqaImage, None) => return Err(RequestError::OptionCount(0)),
            (_, Some(_)) => return Err(RequestError::UnexpectedOptions(mode)),
            (_, None) => {}
        }
        match self.mode {
            QueryMode::FreeformCaption if !self.images.is_empty() => {
                return Err(RequestError::UnexpectedImages(mode))
            }
            QueryMode::FreeformImage | QueryMode::McqaImage | QueryMode::CaptionGeneration
                if self.images.is_empty() =>
            {
                return Err(RequestError::MissingImage(mode))
            }
            _ => {}
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(RequestError::Temperature);
        }
        Ok(())
    }
}

/// Which part of the model input or output a token position belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Image,
    Text,
}

/// Next-token probabilities at one position. `partial` marks top-k vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub segment: Segment,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub partial: bool,
}

impl TokenDistribution {
    pub fn full(segment: Segment, probs: Vec<f64>) -> Self {
        Self {
            segment,
            probs,
            partial: false,
        }
    }

    pub fn top_k(segment: Segment, probs: Vec<f64>) -> Self {
        Self {
            segment,
            probs,
            partial: true,
        }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Full vectors sum to one within 1e-6; partial ones to at most one.
    pub fn is_well_formed(&self) -> bool {
        let mass = self.mass();
        self.probs.iter().all(|p| p.is_finite() && *p >= 0.0)
            && if self.partial {
                mass <= 1.0 + 1e-6
            } else {
                (mass - 1.0).abs() <= 1e-6
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_distributions: Option<Vec<TokenDistribution>>,
    #[serde(default)]
    pub from_cache: bool,
    pub latency_ms: u64,
    pub backend_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("backend `{backend}` does not support {what}")]
    CapabilityUnsupported { backend: String, what: String },
    #[error("environment variable `{0}` holding the API key is not set")]
    AuthMissing(String),
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    TransportFailure { attempts: u32, detail: String },
    #[error("backend refused the request: {0}")]
    BackendRefusal(String),
    #[error("invalid request: {0}")]
    InvalidRequest(#[from] RequestError),
    #[error("mock profile incomplete: {0}")]
    ProfileIncomplete(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Rejects requests the backend cannot serve, before anything is sent.
pub fn check_support(
    backend: &BackendDescriptor,
    request: &QueryRequest,
) -> Result<(), GatewayError> {
    request.check()?;
    let unsupported = |what: String| GatewayError::CapabilityUnsupported {
        backend: backend.name.clone(),
        what,
    };
    if request.images.len() > backend.image_limit() {
        return Err(unsupported(alloc::format!(
            "{} images per prompt (limit {})",
            request.images.len(),
            backend.image_limit()
        )));
    }
    if request.want_distributions && !backend.has(Capability::Logits) {
        return Err(unsupported("token distributions".to_string()));
    }
    if !backend.has(Capability::Freeform)
        && matches!(
            request.mode,
            QueryMode::FreeformImage | QueryMode::FreeformCaption | QueryMode::CaptionGeneration
        )
    {
        return Err(unsupported("free-form generation".to_string()));
    }
    Ok(())
}

/// A model endpoint that answers probe queries. Implementations are expected
/// to enforce [`check_support`] and may cache, retry and rate limit.
pub trait Backend {
    fn descriptor(&self) -> &BackendDescriptor;

    fn complete(&self, request: &QueryRequest) -> Result<QueryResponse, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }

    fn complete(&self, request: &QueryRequest) -> Result<QueryResponse, GatewayError> {
        (**self).complete(request)
    }
}

/// Issues `request` with distributions requested and returns them in position order.
pub fn logit_stream<B: Backend + ?Sized>(
    backend: &B,
    request: &QueryRequest,
) -> Result<(QueryResponse, Vec<TokenDistribution>), GatewayError> {
    let descriptor = backend.descriptor();
    if !descriptor.has(Capability::Logits) {
        return Err(GatewayError::CapabilityUnsupported {
            backend: descriptor.name.clone(),
            what: "token distributions".to_string(),
        });
    }
    let mut request = request.clone();
    request.want_distributions = true;
    let response = backend.complete(&request)?;
    let stream = response.token_distributions.clone().ok_or_else(|| {
        GatewayError::BackendRefusal("response carried no token distributions".to_string())
    })?;
    Ok((response, stream))
}

/// Content-addressed key for a request on a named backend.
///
/// Covers everything that can change the answer: mode, prompt, ordered image
/// digests, options, temperature, token budget and whether distributions were
/// requested. Fields are length-prefixed so no two distinct requests share a
/// preimage.
pub fn cache_key(backend_name: &str, request: &QueryRequest) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"disco-cache-v1");
    field(backend_name.as_bytes());
    field(request.mode.as_str().as_bytes());
    field(request.prompt_text.as_bytes());
    field(&(request.images.len() as u64).to_le_bytes());
    for image in &request.images {
        field(&Sha256::digest(&image.bytes));
    }
    match &request.options {
        None => field(&[0]),
        Some(options) => {
            field(&[1]);
            field(&(options.len() as u64).to_le_bytes());
            for o in options {
                field(o.as_bytes());
            }
        }
    }
    field(&request.temperature.to_bits().to_le_bytes());
    field(&request.max_output_tokens.to_le_bytes());
    field(&[u8::from(request.want_distributions)]);
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}
