use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Frame, FrameKind, Movie};
use crate::matcher::match_title;
use crate::query::{logit_stream, Backend, Capability, GatewayError, Segment, TokenDistribution};

use super::freeform::image_request;
use super::{
    selected_kinds, DetectorError, DetectorKind, Evidence, FramePrediction, FrameSource,
    MovieScore, PredictionMode, ProbeSettings,
};

pub const DEFAULT_K_GRID: [f64; 11] = [5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionSlice {
    AllPositions,
    ImagePositions,
    TextPositions,
}

impl PositionSlice {
    fn keeps(self, segment: Segment) -> bool {
        match self {
            PositionSlice::AllPositions => true,
            PositionSlice::ImagePositions => segment == Segment::Image,
            PositionSlice::TextPositions => segment == Segment::Text,
        }
    }
}

/// Whether Max-K% averages the largest or the smallest entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    MaxAggregate,
    MinAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenyiConfig {
    pub alpha: f64,
    pub k_percent_grid: Vec<f64>,
    pub slice: PositionSlice,
    pub direction: Aggregate,
    /// Renormalize top-k vectors instead of refusing them.
    pub accept_partial_vectors: bool,
}

impl Default for RenyiConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k_percent_grid: DEFAULT_K_GRID.to_vec(),
            slice: PositionSlice::AllPositions,
            direction: Aggregate::MaxAggregate,
            accept_partial_vectors: false,
        }
    }
}

impl RenyiConfig {
    pub fn check(&self) -> Result<(), DetectorError> {
        check_alpha(self.alpha)?;
        if self.k_percent_grid.is_empty() {
            return Err(DetectorError::InvalidConfig("empty K% grid".into()));
        }
        if let Some(k) = self
            .k_percent_grid
            .iter()
            .find(|k| !(**k > 0.0 && **k <= 100.0))
        {
            return Err(DetectorError::InvalidConfig(format!("K% value {k} outside (0, 100]")));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<(), DetectorError> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(DetectorError::InvalidAlpha(alpha))
    }
}

/// Rényi entropy of order `alpha` in nats. `alpha == 1` gives Shannon entropy.
pub fn renyi_entropy(p: &[f64], alpha: f64) -> Result<f64, DetectorError> {
    check_alpha(alpha)?;
    if p.is_empty() {
        return Err(DetectorError::InvalidDistribution("empty vector".into()));
    }
    if let Some(bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(DetectorError::InvalidDistribution(format!("entry {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(DetectorError::InvalidDistribution(format!("sums to {total}")));
    }
    if alpha == 1.0 {
        return Ok(-p
            .iter()
            .filter(|x| **x > 0.0)
            .map(|x| x * libm::log(*x))
            .sum::<f64>());
    }
    let power_sum: f64 = p
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| libm::pow(*x, alpha))
        .sum();
    Ok(libm::log(power_sum) / (1.0 - alpha))
}

/// Mean of the `max(1, floor(k% · n))` largest (or smallest) entropies.
pub fn max_renyi_k(entropies: &[f64], k_percent: f64, direction: Aggregate) -> Result<f64, DetectorError> {
    if entropies.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(DetectorError::InvalidConfig(format!("K% value {k_percent} outside (0, 100]")));
    }
    let n = entropies.len();
    // k·n/100 rather than (k/100)·n keeps integral products exact
    let m = (libm::floor(k_percent * n as f64 / 100.0) as usize).clamp(1, n);
    let mut sorted = entropies.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let chosen = match direction {
        Aggregate::MaxAggregate => &sorted[n - m..],
        Aggregate::MinAggregate => &sorted[..m],
    };
    Ok(chosen.iter().sum::<f64>() / m as f64)
}

fn position_entropies(
    stream: &[TokenDistribution],
    config: &RenyiConfig,
) -> Result<Vec<f64>, DetectorError> {
    let mut out = Vec::new();
    for dist in stream.iter().filter(|d| config.slice.keeps(d.segment)) {
        if dist.partial {
            if !config.accept_partial_vectors {
                return Err(DetectorError::PartialVectorsRejected);
            }
            let mass = dist.mass();
            if mass <= 0.0 {
                return Err(DetectorError::InvalidDistribution("top-k vector with no mass".into()));
            }
            let renormalized: Vec<f64> = dist.probs.iter().map(|p| p / mass).collect();
            out.push(renyi_entropy(&renormalized, config.alpha)?);
        } else {
            out.push(renyi_entropy(&dist.probs, config.alpha)?);
        }
    }
    Ok(out)
}

/// MaxRényi-K% probing: one single-image query per frame with token
/// distributions. Each prediction carries the negated aggregate for every K.
pub fn run_renyi<B, S>(
    backend: &B,
    source: &S,
    movie: &Movie,
    kinds: &[FrameKind],
    config: &RenyiConfig,
    settings: &ProbeSettings,
) -> Result<Vec<FramePrediction>, DetectorError>
where
    B: Backend + ?Sized,
    S: FrameSource + ?Sized,
{
    config.check()?;
    let d = backend.descriptor();
    if !d.has(Capability::Logits) {
        return Err(GatewayError::CapabilityUnsupported {
            backend: d.name.clone(),
            what: "token distributions".into(),
        }
        .into());
    }
    let mut out = Vec::new();
    for kind in selected_kinds(kinds) {
        for frame in movie.frames_of(kind) {
            let frames: [&Frame; 1] = [frame];
            let request = image_request(source, &frames, settings)?;
            let (response, stream) = logit_stream(backend, &request)?;
            let entropies = position_entropies(&stream, config)?;
            if entropies.is_empty() {
                return Err(DetectorError::InvalidConfig(format!(
                    "no {:?} positions in the stream for frame `{}`",
                    config.slice, frame.frame_id
                )));
            }
            let per_k = config
                .k_percent_grid
                .iter()
                .map(|k| max_renyi_k(&entropies, *k, config.direction).map(|v| -v))
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = match_title(&response.raw_text, movie, settings.fuzzy_threshold);
            out.push(FramePrediction {
                frame_ids: request.frame_ids,
                kind,
                mode: PredictionMode::Logits,
                correct: outcome.is_match(),
                raw_text: response.raw_text,
                evidence: Evidence::Title(outcome),
                renyi: Some(per_k),
                latency_ms: response.latency_ms,
                from_cache: response.from_cache,
            });
        }
    }
    Ok(out)
}

/// Per-movie Rényi scores, one [`MovieScore`] per grid entry: the mean frame
/// score overall and per kind.
pub fn renyi_scores(
    movie_title: &str,
    preds: &[FramePrediction],
    k_percent_grid: &[f64],
) -> Result<Vec<MovieScore>, DetectorError> {
    let mut sums = vec![[0.0f64; 2]; k_percent_grid.len()];
    let mut counts = [0usize; 2];
    for p in preds {
        let per_k = p.renyi.as_ref().ok_or(DetectorError::EmptyInput)?;
        if per_k.len() != k_percent_grid.len() {
            return Err(DetectorError::InvalidConfig(format!(
                "prediction has {} K% values, grid has {}",
                per_k.len(),
                k_percent_grid.len()
            )));
        }
        let slot = match p.kind {
            FrameKind::Main => 0,
            FrameKind::Neutral => 1,
        };
        counts[slot] += 1;
        for (acc, v) in sums.iter_mut().zip(per_k) {
            acc[slot] += v;
        }
    }
    let total = counts[0] + counts[1];
    if total == 0 {
        return Err(DetectorError::EmptyInput);
    }
    let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
    Ok(k_percent_grid
        .iter()
        .zip(&sums)
        .map(|(k, s)| MovieScore {
            movie_title: movie_title.into(),
            detector: DetectorKind::Renyi,
            acc_main: 0.0,
            acc_neutral: 0.0,
            acc_weighted: 0.0,
            n_main: counts[0],
            n_neutral: counts[1],
            renyi_score: mean(s[0] + s[1], total),
            renyi_main: mean(s[0], counts[0]),
            renyi_neutral: mean(s[1], counts[1]),
            k_percent: Some(*k),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Group;
    use crate::detectors::testkit::{movie, BytesOfId, MockFor};
    use crate::detectors::ScoreView;
    use crate::mock::MockProfile;
    use crate::query::QueryMode;
    use proptest::prelude::*;

    #[test]
    fn uniform_is_log_support() {
        let h = renyi_entropy(&[0.25; 4], 0.5).unwrap();
        assert!((h - 1.386_294_361_119_890_6).abs() < 1e-12);
    }

    #[test]
    fn degenerate_is_zero() {
        assert_eq!(renyi_entropy(&[1.0, 0.0, 0.0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn half_quarter_quarter() {
        // 2·ln(√0.5 + √0.25 + √0.25), 50-digit mpmath evaluation
        let h = renyi_entropy(&[0.5, 0.25, 0.25], 0.5).unwrap();
        assert!((h - 1.069_599_993_479_140_7).abs() < 1e-12, "{h}");
    }

    #[test]
    fn alpha_one_is_shannon() {
        let h = renyi_entropy(&[0.5, 0.5], 1.0).unwrap();
        assert!((h - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(renyi_entropy(&[0.5, 0.4], 0.5), Err(DetectorError::InvalidDistribution(_))));
        assert!(matches!(renyi_entropy(&[1.5, -0.5], 0.5), Err(DetectorError::InvalidDistribution(_))));
        assert!(matches!(renyi_entropy(&[1.0], 0.0), Err(DetectorError::InvalidAlpha(_))));
        assert!(matches!(renyi_entropy(&[1.0], f64::NAN), Err(DetectorError::InvalidAlpha(_))));
    }

    #[test]
    fn max_k_examples() {
        assert_eq!(max_renyi_k(&[3.0, 1.0, 2.0], 100.0, Aggregate::MaxAggregate).unwrap(), 2.0);
        assert_eq!(max_renyi_k(&[3.0, 1.0, 2.0], 33.0, Aggregate::MaxAggregate).unwrap(), 3.0);
        assert_eq!(max_renyi_k(&[3.0, 1.0, 2.0], 33.0, Aggregate::MinAggregate).unwrap(), 1.0);
        for k in DEFAULT_K_GRID {
            assert!((max_renyi_k(&[0.7; 9], k, Aggregate::MaxAggregate).unwrap() - 0.7).abs() < 1e-15);
        }
        assert_eq!(max_renyi_k(&[], 50.0, Aggregate::MaxAggregate), Err(DetectorError::EmptyInput));
    }

    #[test]
    fn k_selects_floor_count() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        // 30% of 10 is exactly 3 positions: 10, 9, 8
        assert_eq!(max_renyi_k(&xs, 30.0, Aggregate::MaxAggregate).unwrap(), 9.0);
        assert_eq!(max_renyi_k(&xs, 70.0, Aggregate::MinAggregate).unwrap(), 4.0);
    }

    fn logits_profile(suspect_peak: f64, clean_peak: f64) -> MockProfile {
        let mut p = MockProfile::new(11)
            .with_recall(Group::Suspect, FrameKind::Main, QueryMode::FreeformImage, 0.5)
            .with_recall(Group::Clean, FrameKind::Main, QueryMode::FreeformImage, 0.0);
        p.confusion_pool.insert("drama".into(), vec!["Elsewhere".into()]);
        p.logits.peak.insert(Group::Suspect, suspect_peak);
        p.logits.peak.insert(Group::Clean, clean_peak);
        p
    }

    const LOGITS: [Capability; 2] = [Capability::Freeform, Capability::Logits];

    #[test]
    fn lower_entropy_scores_higher() {
        let suspect = movie("Known", Group::Suspect, "drama", 6, 0);
        let clean = movie("Unknown", Group::Clean, "drama", 6, 0);
        let config = RenyiConfig::default();
        let profile = logits_profile(0.9, 0.3);
        let score = |m: &Movie| {
            let b = MockFor::new(profile.clone(), m, &LOGITS, 1);
            let preds = run_renyi(&b, &BytesOfId, m, &[FrameKind::Main], &config, &ProbeSettings::default()).unwrap();
            renyi_scores(&m.title, &preds, &config.k_percent_grid).unwrap()
        };
        let s = score(&suspect);
        let c = score(&clean);
        for (a, b) in s.iter().zip(&c) {
            assert!(a.value(ScoreView::Weighted).unwrap() > b.value(ScoreView::Weighted).unwrap());
        }
    }

    #[test]
    fn partial_vectors_rejected_by_default() {
        let m = movie("Known", Group::Suspect, "drama", 2, 0);
        let mut profile = logits_profile(0.9, 0.3);
        profile.logits.top_k = Some(5);
        let b = MockFor::new(profile, &m, &LOGITS, 1);
        let err = run_renyi(&b, &BytesOfId, &m, &[FrameKind::Main], &RenyiConfig::default(), &ProbeSettings::default());
        assert_eq!(err, Err(DetectorError::PartialVectorsRejected));

        let accept = RenyiConfig {
            accept_partial_vectors: true,
            ..RenyiConfig::default()
        };
        assert!(run_renyi(&b, &BytesOfId, &m, &[FrameKind::Main], &accept, &ProbeSettings::default()).is_ok());
    }

    #[test]
    fn needs_logits_capability() {
        let m = movie("Known", Group::Suspect, "drama", 1, 0);
        let b = MockFor::new(logits_profile(0.9, 0.3), &m, &[Capability::Freeform], 1);
        let err = run_renyi(&b, &BytesOfId, &m, &[FrameKind::Main], &RenyiConfig::default(), &ProbeSettings::default());
        assert!(matches!(err, Err(DetectorError::Gateway(GatewayError::CapabilityUnsupported { .. }))));
        assert_eq!(b.calls.get(), 0);
    }

    #[test]
    fn single_frame_single_position() {
        let m = movie("Known", Group::Suspect, "drama", 1, 0);
        let mut profile = logits_profile(0.8, 0.3);
        profile.logits.jitter = 0.0;
        let b = MockFor::new(profile, &m, &LOGITS, 1);
        let config = RenyiConfig {
            slice: PositionSlice::TextPositions,
            k_percent_grid: vec![100.0],
            ..RenyiConfig::default()
        };
        let preds = run_renyi(&b, &BytesOfId, &m, &[FrameKind::Main], &config, &ProbeSettings::default()).unwrap();
        let mut probs = vec![0.8];
        probs.extend(core::iter::repeat_n(0.2 / 31.0, 31));
        let h = renyi_entropy(&probs, 0.5).unwrap();
        let scores = renyi_scores(&m.title, &preds, &config.k_percent_grid).unwrap();
        // every text position carries the same distribution without jitter
        assert!((scores[0].renyi_score.unwrap() + h).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_symmetry(
            weights in proptest::collection::vec(0.0f64..1.0, 1..40),
            alpha in prop_oneof![Just(0.3), Just(0.5), Just(0.9), Just(2.0), 0.05f64..5.0],
            rot in 0usize..40,
        ) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let h = renyi_entropy(&p, alpha).unwrap();
            let v = p.len() as f64;
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= libm::log(v) + 1e-12);

            let mut q = p.clone();
            q.rotate_left(rot % p.len());
            q.reverse();
            let hq = renyi_entropy(&q, alpha).unwrap();
            prop_assert!((h - hq).abs() < 1e-12);
        }

        #[test]
        fn entropy_equals_log_support_only_when_uniform(n in 2usize..40, bump in 0.01f64..0.5) {
            let mut p = vec![1.0 / n as f64; n];
            let uniform = renyi_entropy(&p, 0.5).unwrap();
            prop_assert!((uniform - libm::log(n as f64)).abs() < 1e-12);
            p[0] += bump / n as f64;
            p[1] -= bump / n as f64;
            let skewed = renyi_entropy(&p, 0.5).unwrap();
            prop_assert!(skewed < libm::log(n as f64) - 1e-15);
        }

        #[test]
        fn full_k_is_mean(xs in proptest::collection::vec(-5.0f64..5.0, 1..50)) {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let hi = max_renyi_k(&xs, 100.0, Aggregate::MaxAggregate).unwrap();
            let lo = max_renyi_k(&xs, 100.0, Aggregate::MinAggregate).unwrap();
            prop_assert!((hi - mean).abs() < 1e-12);
            prop_assert!((lo - mean).abs() < 1e-12);
        }
    }
}
