use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::corpus::FrameKind;

use super::{DetectorError, DetectorKind, FramePrediction, MovieScore};

/// How ⌊DIS-CO⌋ treats frames whose caption query was also correct.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorDenominator {
    /// Drop them from the numerator only.
    #[default]
    AllFrames,
    /// Drop them from numerator and denominator.
    DropIntersection,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    correct: usize,
    total: usize,
}

impl Tally {
    fn accuracy(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

fn score_from(
    title: &str,
    detector: DetectorKind,
    main: Tally,
    neutral: Tally,
) -> Result<MovieScore, DetectorError> {
    let total = main.total + neutral.total;
    if total == 0 {
        return Err(DetectorError::EmptyInput);
    }
    Ok(MovieScore {
        movie_title: title.into(),
        detector,
        acc_main: main.accuracy(),
        acc_neutral: neutral.accuracy(),
        acc_weighted: (main.correct + neutral.correct) as f64 / total as f64,
        n_main: main.total,
        n_neutral: neutral.total,
        renyi_score: None,
        renyi_main: None,
        renyi_neutral: None,
        k_percent: None,
    })
}

/// Per-kind and frame-weighted accuracy of a prediction list. Every frame in a
/// multi-frame prediction counts once with the group verdict.
pub fn accuracy_score(
    movie_title: &str,
    detector: DetectorKind,
    preds: &[FramePrediction],
) -> Result<MovieScore, DetectorError> {
    let mut main = Tally::default();
    let mut neutral = Tally::default();
    for p in preds {
        let t = match p.kind {
            FrameKind::Main => &mut main,
            FrameKind::Neutral => &mut neutral,
        };
        let n = p.frame_ids.len();
        t.total += n;
        if p.correct {
            t.correct += n;
        }
    }
    score_from(movie_title, detector, main, neutral)
}

/// DIS-CO: every correctly identified frame counts.
pub fn disco_score(movie_title: &str, preds: &[FramePrediction]) -> Result<MovieScore, DetectorError> {
    accuracy_score(movie_title, DetectorKind::Disco, preds)
}

/// ⌊DIS-CO⌋: a frame counts only when the image query was right and the
/// caption-only query was wrong.
pub fn floor_disco(
    movie_title: &str,
    image_preds: &[FramePrediction],
    caption_preds: &[FramePrediction],
    denominator: FloorDenominator,
) -> Result<MovieScore, DetectorError> {
    let mut image: BTreeMap<&str, (FrameKind, bool)> = BTreeMap::new();
    for p in image_preds {
        for id in &p.frame_ids {
            image.insert(id, (p.kind, p.correct));
        }
    }
    let mut caption: BTreeMap<&str, bool> = BTreeMap::new();
    for p in caption_preds {
        for id in &p.frame_ids {
            caption.insert(id, p.correct);
        }
    }
    if let Some(id) = image
        .keys()
        .find(|k| !caption.contains_key(*k))
        .or_else(|| caption.keys().find(|k| !image.contains_key(*k)))
    {
        return Err(DetectorError::KeyMismatch(String::from(*id)));
    }

    let mut main = Tally::default();
    let mut neutral = Tally::default();
    for (id, (kind, image_ok)) in &image {
        let caption_ok = caption[id];
        let t = match kind {
            FrameKind::Main => &mut main,
            FrameKind::Neutral => &mut neutral,
        };
        let overlap = *image_ok && caption_ok;
        if overlap && denominator == FloorDenominator::DropIntersection {
            continue;
        }
        t.total += 1;
        if *image_ok && !caption_ok {
            t.correct += 1;
        }
    }
    if image.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    if main.total + neutral.total == 0 {
        // every frame fell in the intersection and was dropped
        return Ok(MovieScore {
            movie_title: movie_title.into(),
            detector: DetectorKind::FloorDisco,
            acc_main: 0.0,
            acc_neutral: 0.0,
            acc_weighted: 0.0,
            n_main: 0,
            n_neutral: 0,
            renyi_score: None,
            renyi_main: None,
            renyi_neutral: None,
            k_percent: None,
        });
    }
    score_from(movie_title, DetectorKind::FloorDisco, main, neutral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{Evidence, PredictionMode};
    use crate::matcher::{MatchOutcome, Verdict};
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn pred(id: &str, kind: FrameKind, mode: PredictionMode, correct: bool) -> FramePrediction {
        FramePrediction {
            frame_ids: vec![id.to_string()],
            kind,
            mode,
            correct,
            raw_text: String::new(),
            evidence: Evidence::Title(MatchOutcome {
                verdict: if correct { Verdict::Exact } else { Verdict::None },
                similarity: if correct { 1.0 } else { 0.0 },
                extracted_candidate: String::new(),
            }),
            renyi: None,
            latency_ms: 0,
            from_cache: false,
        }
    }

    fn preds(n: usize, correct: &[usize], mode: PredictionMode) -> Vec<FramePrediction> {
        (0..n)
            .map(|i| pred(&format!("f{i}"), FrameKind::Neutral, mode, correct.contains(&i)))
            .collect()
    }

    #[test]
    fn disco_basic_accuracy() {
        let s = disco_score("m", &preds(10, &[0, 1, 2], PredictionMode::Image)).unwrap();
        assert_eq!(s.acc_neutral, 0.3);
        assert_eq!(s.acc_weighted, 0.3);
        let all = disco_score("m", &preds(4, &[0, 1, 2, 3], PredictionMode::Image)).unwrap();
        assert_eq!(all.acc_weighted, 1.0);
        assert_eq!(disco_score("m", &[]), Err(DetectorError::EmptyInput));
    }

    #[test]
    fn weighted_average_of_kinds() {
        let mut p: Vec<FramePrediction> = (0..100)
            .map(|i| pred(&format!("m{i}"), FrameKind::Main, PredictionMode::Image, i < 50))
            .collect();
        p.extend((0..40).map(|i| pred(&format!("n{i}"), FrameKind::Neutral, PredictionMode::Image, i < 8)));
        let s = disco_score("m", &p).unwrap();
        assert_eq!(s.acc_main, 0.5);
        assert_eq!(s.acc_neutral, 0.2);
        assert!((s.acc_weighted - 58.0 / 140.0).abs() < 1e-15);
    }

    #[test]
    fn group_predictions_count_every_frame() {
        let mut p = pred("a", FrameKind::Main, PredictionMode::Image, true);
        p.frame_ids = vec!["a".into(), "b".into(), "c".into()];
        let q = pred("d", FrameKind::Main, PredictionMode::Image, false);
        let s = disco_score("m", &[p, q]).unwrap();
        assert_eq!(s.n_main, 4);
        assert_eq!(s.acc_main, 0.75);
    }

    #[test]
    fn floor_removes_caption_overlap() {
        let image = preds(10, &[1, 2, 3], PredictionMode::Image);
        let caption = preds(10, &[2], PredictionMode::Caption);
        let disco = disco_score("m", &image).unwrap();
        let floor = floor_disco("m", &image, &caption, FloorDenominator::AllFrames).unwrap();
        assert_eq!(disco.acc_weighted, 0.3);
        assert_eq!(floor.acc_weighted, 0.2);

        let none = preds(10, &[], PredictionMode::Caption);
        let same = floor_disco("m", &image, &none, FloorDenominator::AllFrames).unwrap();
        assert_eq!(same.acc_weighted, disco.acc_weighted);

        let superset = preds(10, &[1, 2, 3, 4], PredictionMode::Caption);
        let zero = floor_disco("m", &image, &superset, FloorDenominator::AllFrames).unwrap();
        assert_eq!(zero.acc_weighted, 0.0);
    }

    #[test]
    fn floor_shrinking_denominator() {
        let image = preds(10, &[1, 2, 3], PredictionMode::Image);
        let caption = preds(10, &[2], PredictionMode::Caption);
        let s = floor_disco("m", &image, &caption, FloorDenominator::DropIntersection).unwrap();
        assert_eq!(s.n_neutral, 9);
        assert!((s.acc_neutral - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn floor_key_mismatch() {
        let image = preds(3, &[], PredictionMode::Image);
        let caption = preds(2, &[], PredictionMode::Caption);
        assert_eq!(
            floor_disco("m", &image, &caption, FloorDenominator::AllFrames),
            Err(DetectorError::KeyMismatch("f2".into()))
        );
    }

    proptest! {
        #[test]
        fn floor_never_exceeds_disco(
            flags in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..60)
        ) {
            let image: Vec<_> = flags.iter().enumerate().map(|(i, (main, img, _))| {
                let kind = if *main { FrameKind::Main } else { FrameKind::Neutral };
                pred(&format!("f{i}"), kind, PredictionMode::Image, *img)
            }).collect();
            let caption: Vec<_> = flags.iter().enumerate().map(|(i, (main, _, cap))| {
                let kind = if *main { FrameKind::Main } else { FrameKind::Neutral };
                pred(&format!("f{i}"), kind, PredictionMode::Caption, *cap)
            }).collect();
            let d = disco_score("m", &image).unwrap();
            let f = floor_disco("m", &image, &caption, FloorDenominator::AllFrames).unwrap();
            prop_assert!(f.acc_main <= d.acc_main);
            prop_assert!(f.acc_neutral <= d.acc_neutral);
            prop_assert!(f.acc_weighted <= d.acc_weighted);
            let overlap = flags.iter().any(|(_, i, c)| *i && *c);
            prop_assert_eq!(f.acc_weighted == d.acc_weighted, !overlap);
        }

        #[test]
        fn disco_permutation_invariant(
            flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40),
            seed in any::<u64>(),
        ) {
            let mut p: Vec<_> = flags.iter().enumerate().map(|(i, (main, ok))| {
                let kind = if *main { FrameKind::Main } else { FrameKind::Neutral };
                pred(&format!("f{i}"), kind, PredictionMode::Image, *ok)
            }).collect();
            let before = disco_score("m", &p).unwrap();
            let n = p.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                p.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(disco_score("m", &p).unwrap(), before.clone());
            let lo = before.acc_main.min(before.acc_neutral);
            let hi = before.acc_main.max(before.acc_neutral);
            if before.n_main > 0 && before.n_neutral > 0 {
                prop_assert!(lo <= before.acc_weighted + 1e-15 && before.acc_weighted <= hi + 1e-15);
            }
        }
    }
}
