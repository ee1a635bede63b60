//! Backend handles: capability checks, response cache, retries with
//! exponential backoff, and per-backend in-flight and rate caps.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use disco_core::corpus::{Movie, CAPTION_PREFIX};
use disco_core::mock::{mock_complete, MockProfile};
use disco_core::prompts::CAPTION_GENERATION_PROMPT;
use disco_core::query::{
    cache_key, check_support, Backend, BackendDescriptor, BackendKind, Capability, GatewayError,
    ImagePayload, QueryMode, QueryRequest, QueryResponse, CAPTION_TEMPERATURE,
};

use crate::cache::ResponseCache;
use crate::config::{BackendConfig, BackendFile};
use crate::http::HttpTransport;

/// Outcome of one delivery attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Rate limiting, server errors, dropped connections.
    Retryable(String),
    /// The backend understood and declined.
    Refusal(String),
    Fatal(GatewayError),
}

/// One attempt at answering a request, with no retry or caching.
pub trait Transport: Send + Sync {
    fn send(&self, request: &QueryRequest) -> Result<QueryResponse, TransportError>;
}

/// Exponential backoff, doubling from `base` and capped at `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub max: Duration,
}

impl Backoff {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.max)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

fn real_sleep() -> Sleeper {
    Arc::new(std::thread::sleep)
}

struct Inflight {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Inflight);

impl Inflight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().expect("inflight lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("inflight lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().expect("inflight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Token bucket holding up to one minute's worth of requests.
struct RateBucket {
    per_minute: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateBucket {
    fn new(per_minute: u32) -> Self {
        let per_minute = f64::from(per_minute.max(1));
        Self {
            per_minute,
            state: Mutex::new((per_minute, Instant::now())),
        }
    }

    fn take(&self, sleep: &Sleeper) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("rate lock");
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * self.per_minute / 60.0;
                s.0 = (s.0 + refill).min(self.per_minute);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.0) * 60.0 / self.per_minute)
            };
            sleep(wait);
        }
    }
}

#[derive(Debug, Default)]
pub struct GatewayStats {
    pub transport_calls: AtomicUsize,
    pub cache_hits: AtomicUsize,
    pub retries: AtomicUsize,
}

/// A shareable backend handle. Safe to call from many threads.
pub struct Gateway {
    descriptor: BackendDescriptor,
    transport: Box<dyn Transport>,
    cache: Option<ResponseCache>,
    inflight: Inflight,
    rate: Option<RateBucket>,
    backoff: Backoff,
    sleep: Sleeper,
    pub stats: GatewayStats,
}

impl Gateway {
    pub fn new(descriptor: BackendDescriptor, transport: Box<dyn Transport>) -> Self {
        let max = descriptor.max_inflight.max(1);
        Self {
            descriptor,
            transport,
            cache: None,
            inflight: Inflight {
                max,
                current: Mutex::new(0),
                freed: Condvar::new(),
            },
            rate: None,
            backoff: Backoff {
                base: Duration::from_millis(500),
                max: Duration::from_secs(30),
            },
            sleep: real_sleep(),
            stats: GatewayStats::default(),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_rate_limit(mut self, per_minute: u32) -> Self {
        self.rate = Some(RateBucket::new(per_minute));
        self
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_sleeper(mut self, sleep: Sleeper) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn transport_calls(&self) -> usize {
        self.stats.transport_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.stats.cache_hits.load(Ordering::Relaxed)
    }
}

impl Backend for Gateway {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(&self, request: &QueryRequest) -> Result<QueryResponse, GatewayError> {
        check_support(&self.descriptor, request)?;
        let key = cache_key(&self.descriptor.name, request);
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(&key)? {
                self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                hit.from_cache = true;
                return Ok(hit);
            }
        }

        let _permit = self.inflight.acquire();
        let mut retries = 0u32;
        loop {
            if let Some(bucket) = &self.rate {
                bucket.take(&self.sleep);
            }
            self.stats.transport_calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.send(request) {
                Ok(mut response) => {
                    response.from_cache = false;
                    response.backend_name = self.descriptor.name.clone();
                    if let Some(cache) = &self.cache {
                        cache.put(&key, &response)?;
                    }
                    return Ok(response);
                }
                Err(TransportError::Retryable(detail)) => {
                    if retries >= self.descriptor.retry_limit {
                        return Err(GatewayError::TransportFailure {
                            attempts: retries + 1,
                            detail,
                        });
                    }
                    (self.sleep)(self.backoff.delay(retries));
                    retries += 1;
                    self.stats.retries.fetch_add(1, Ordering::Relaxed);
                }
                Err(TransportError::Refusal(detail)) => return Err(GatewayError::BackendRefusal(detail)),
                Err(TransportError::Fatal(e)) => return Err(e),
            }
        }
    }
}

/// Answers from a [`MockProfile`], routing each request to the movie that owns
/// its first frame id.
pub struct MockTransport {
    profile: MockProfile,
    owner: HashMap<String, Arc<Movie>>,
}

impl MockTransport {
    pub fn new(profile: MockProfile, movies: &[Movie]) -> Self {
        let mut owner = HashMap::new();
        for m in movies {
            let shared = Arc::new(m.clone());
            for f in &m.frames {
                owner.insert(f.frame_id.clone(), Arc::clone(&shared));
            }
        }
        Self { profile, owner }
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &QueryRequest) -> Result<QueryResponse, TransportError> {
        let id = request.frame_ids.first().ok_or_else(|| {
            TransportError::Fatal(GatewayError::ProfileIncomplete(
                "mock requests must name their frames".into(),
            ))
        })?;
        let movie = self.owner.get(id).ok_or_else(|| {
            TransportError::Fatal(GatewayError::ProfileIncomplete(format!("frame `{id}` is not in the corpus")))
        })?;
        mock_complete(&self.profile, request, movie).map_err(TransportError::Fatal)
    }
}

/// Builds the gateway for a configured backend. Mock backends need the corpus
/// to route requests.
pub fn open_backend(
    file: &BackendFile,
    config: &BackendConfig,
    movies: &[Movie],
    cache: Option<ResponseCache>,
) -> anyhow::Result<Gateway> {
    let transport: Box<dyn Transport> = match config.descriptor.kind {
        BackendKind::Mock => {
            let profile = file.mock_profile(config)?;
            let genres = movies.iter().flat_map(|m| m.genre_tags.iter().map(String::as_str));
            profile.check(genres)?;
            Box::new(MockTransport::new(profile, movies))
        }
        BackendKind::RemoteHttp => Box::new(HttpTransport::from_config(config)?),
    };
    let mut gateway = Gateway::new(config.descriptor.clone(), transport).with_backoff(Backoff {
        base: Duration::from_millis(config.base_backoff_ms),
        max: Duration::from_millis(config.max_backoff_ms.max(config.base_backoff_ms)),
    });
    if let Some(rpm) = config.requests_per_minute {
        gateway = gateway.with_rate_limit(rpm);
    }
    if let Some(cache) = cache {
        gateway = gateway.with_cache(cache);
    }
    Ok(gateway)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedCaption {
    pub text: String,
    /// Whether the text opens with the requested prefix.
    pub conforming: bool,
}

/// Caption for one frame image, requested at the caption temperature.
pub fn generate_caption<B: Backend + ?Sized>(
    backend: &B,
    frame_id: &str,
    image: ImagePayload,
) -> Result<GeneratedCaption, GatewayError> {
    let d = backend.descriptor();
    if !d.has(Capability::Freeform) {
        return Err(GatewayError::CapabilityUnsupported {
            backend: d.name.clone(),
            what: "free-form generation".into(),
        });
    }
    let mut request = QueryRequest::new(QueryMode::CaptionGeneration, CAPTION_GENERATION_PROMPT);
    request.temperature = CAPTION_TEMPERATURE;
    request.max_output_tokens = 300;
    request.images.push(image);
    request.frame_ids.push(frame_id.to_string());
    let response = backend.complete(&request)?;
    let text = response.raw_text.trim().to_string();
    Ok(GeneratedCaption {
        conforming: text.starts_with(CAPTION_PREFIX),
        text,
    })
}
