//! Detection statistics over per-movie scores.
//!
//! AUC is the Mann-Whitney ranking statistic, computed exactly from integer
//! win/tie counts. Bootstrap resamples each group with replacement to its own
//! size; every iteration draws from its own ChaCha stream so iterations can be
//! evaluated in any order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Group, Movie};

pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty score list")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("no movie carries the covariate")]
    NoCovariateData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChanceMode {
    Mcqa { k: u32 },
    Freeform { omega: f64, bias: f64 },
}

/// Accuracy of guessing: `1/k` for multiple choice, `bias/omega` (at most 1)
/// for free-form answers over a title universe of size `omega`.
pub fn chance_baseline(mode: ChanceMode) -> Result<f64, StatsError> {
    match mode {
        ChanceMode::Mcqa { k } if k >= 2 => Ok(1.0 / f64::from(k)),
        ChanceMode::Mcqa { k } => Err(StatsError::InvalidParam(format!("k = {k}, need k ≥ 2"))),
        ChanceMode::Freeform { omega, bias } => {
            if !(omega >= 1.0 && omega.is_finite()) {
                return Err(StatsError::InvalidParam(format!("omega = {omega}, need omega ≥ 1")));
            }
            if !(bias >= 1.0 && bias.is_finite()) {
                return Err(StatsError::InvalidParam(format!("bias = {bias}, need bias ≥ 1")));
            }
            Ok((bias / omega).min(1.0))
        }
    }
}

fn check_scores(scores: &[f64]) -> Result<(), StatsError> {
    if scores.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(x) = scores.iter().find(|x| x.is_nan()) {
        return Err(StatsError::InvalidParam(format!("score {x}")));
    }
    Ok(())
}

/// AUC as an exact fraction `(2·wins + ties, 2·|S|·|C|)`.
pub fn auc_ratio(suspect: &[f64], clean: &[f64]) -> Result<(u64, u64), StatsError> {
    check_scores(suspect)?;
    check_scores(clean)?;
    let mut c = clean.to_vec();
    c.sort_by(|a, b| a.total_cmp(b));
    let mut numerator = 0u64;
    for s in suspect {
        let below = c.partition_point(|x| x < s) as u64;
        let not_above = c.partition_point(|x| x <= s) as u64;
        numerator += 2 * below + (not_above - below);
    }
    Ok((numerator, 2 * suspect.len() as u64 * clean.len() as u64))
}

/// Probability that a random suspect score beats a random clean one, ties
/// counting one half.
pub fn auc(suspect: &[f64], clean: &[f64]) -> Result<f64, StatsError> {
    let (n, d) = auc_ratio(suspect, clean)?;
    Ok(n as f64 / d as f64)
}

fn balanced_accuracy(suspect: &[f64], clean: &[f64], theta: f64) -> f64 {
    let tp = suspect.iter().filter(|s| **s >= theta).count();
    let tn = clean.iter().filter(|c| **c < theta).count();
    0.5 * (tp as f64 / suspect.len() as f64 + tn as f64 / clean.len() as f64)
}

/// Threshold θ (score ≥ θ ⇒ suspect) maximizing balanced accuracy over the
/// midpoints of adjacent distinct pooled scores and ±∞. Ties go to the
/// smallest θ.
pub fn best_threshold(suspect: &[f64], clean: &[f64]) -> Result<(f64, f64), StatsError> {
    check_scores(suspect)?;
    check_scores(clean)?;
    let mut pooled: Vec<f64> = suspect.iter().chain(clean).copied().collect();
    pooled.sort_by(|a, b| a.total_cmp(b));
    pooled.dedup();
    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(f64::NEG_INFINITY);
    candidates.extend(pooled.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(f64::INFINITY);

    let mut best = (f64::NEG_INFINITY, balanced_accuracy(suspect, clean, f64::NEG_INFINITY));
    for theta in &candidates[1..] {
        let ba = balanced_accuracy(suspect, clean, *theta);
        if ba > best.1 {
            best = (*theta, ba);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: libm::sqrt(var),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub suspect: MeanStd,
    pub clean: MeanStd,
}

/// Produces the resample indices for one group in one iteration.
pub trait Resampler {
    fn indices(&self, iteration: usize, group: Group, n: usize) -> Vec<usize>;
}

/// With-replacement draws from ChaCha8 seeded by `seed`, one stream per
/// (iteration, group).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededResampler {
    pub seed: u64,
}

impl Resampler for SeededResampler {
    fn indices(&self, iteration: usize, group: Group, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let lane = match group {
            Group::Suspect => 0,
            Group::Clean => 1,
            Group::Excluded => 2,
        };
        rng.set_stream(iteration as u64 * 3 + lane);
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Every iteration sees the original sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityResampler;

impl Resampler for IdentityResampler {
    fn indices(&self, _iteration: usize, _group: Group, n: usize) -> Vec<usize> {
        (0..n).collect()
    }
}

mod serde_extended_f64 {
    //! JSON has no infinities; thresholds may be ±∞.
    use alloc::string::String;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            Repr::Named("inf".into()).serialize(s)
        } else if *x == f64::NEG_INFINITY {
            Repr::Named("-inf".into()).serialize(s)
        } else {
            Repr::Finite(*x).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(x) => Ok(x),
            Repr::Named(name) if name == "inf" => Ok(f64::INFINITY),
            Repr::Named(name) if name == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Named(other) => Err(serde::de::Error::custom(alloc::format!("bad threshold `{other}`"))),
        }
    }

    pub mod vec {
        use alloc::vec::Vec;
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        struct Wrap(f64);

        impl serde::Serialize for Wrap {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                super::serialize(&self.0, s)
            }
        }

        impl<'de> Deserialize<'de> for Wrap {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                super::deserialize(d).map(Wrap)
            }
        }

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for x in xs {
                seq.serialize_element(&Wrap(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detector: String,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub per_iteration_auc: Vec<f64>,
    #[serde(with = "serde_extended_f64::vec")]
    pub per_iteration_threshold: Vec<f64>,
    /// Lower median of the per-iteration thresholds.
    #[serde(with = "serde_extended_f64")]
    pub best_threshold: f64,
    /// Mean over iterations of the balanced accuracy at each iteration's threshold.
    pub threshold_balanced_accuracy: f64,
    /// Mean score of each group's resample, summarized over iterations.
    pub group_accuracy: GroupSummary,
    pub n_suspect: usize,
    pub n_clean: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_selected: Option<f64>,
}

fn gather(xs: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|i| xs[*i]).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Bootstrap AUC with an explicit resampler.
pub fn bootstrap_auc_with<R: Resampler + ?Sized>(
    detector: &str,
    suspect: &[f64],
    clean: &[f64],
    iterations: usize,
    seed: u64,
    resampler: &R,
) -> Result<DetectionReport, StatsError> {
    check_scores(suspect)?;
    check_scores(clean)?;
    if iterations == 0 {
        return Err(StatsError::InvalidParam("iterations must be at least 1".into()));
    }
    let mut aucs = Vec::with_capacity(iterations);
    let mut thresholds = Vec::with_capacity(iterations);
    let mut bas = Vec::with_capacity(iterations);
    let mut suspect_means = Vec::with_capacity(iterations);
    let mut clean_means = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let s = gather(suspect, &resampler.indices(it, Group::Suspect, suspect.len()));
        let c = gather(clean, &resampler.indices(it, Group::Clean, clean.len()));
        aucs.push(auc(&s, &c)?);
        let (theta, ba) = best_threshold(&s, &c)?;
        thresholds.push(theta);
        bas.push(ba);
        suspect_means.push(mean(&s));
        clean_means.push(mean(&c));
    }
    let summary = MeanStd::of(&aucs);
    let mut sorted = thresholds.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(DetectionReport {
        detector: detector.into(),
        auc_mean: summary.mean,
        auc_std: summary.std,
        per_iteration_auc: aucs,
        per_iteration_threshold: thresholds,
        best_threshold: sorted[(sorted.len() - 1) / 2],
        threshold_balanced_accuracy: mean(&bas),
        group_accuracy: GroupSummary {
            suspect: MeanStd::of(&suspect_means),
            clean: MeanStd::of(&clean_means),
        },
        n_suspect: suspect.len(),
        n_clean: clean.len(),
        seed,
        k_selected: None,
    })
}

/// Bootstrap AUC: each iteration resamples both groups with replacement to
/// their original sizes.
pub fn bootstrap_auc(
    detector: &str,
    suspect: &[f64],
    clean: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<DetectionReport, StatsError> {
    bootstrap_auc_with(detector, suspect, clean, iterations, seed, &SeededResampler { seed })
}

/// Bootstrap mean and std of one group's average score, drawn from the same
/// streams `bootstrap_auc` uses for that group.
pub fn group_accuracy(
    group: Group,
    scores: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<MeanStd, StatsError> {
    check_scores(scores)?;
    if iterations == 0 {
        return Err(StatsError::InvalidParam("iterations must be at least 1".into()));
    }
    let r = SeededResampler { seed };
    let means: Vec<f64> = (0..iterations)
        .map(|it| mean(&gather(scores, &r.indices(it, group, scores.len()))))
        .collect();
    Ok(MeanStd::of(&means))
}

/// Index of the report with the highest mean AUC; ties go to the smallest K.
pub fn select_best_k(candidates: &[(f64, DetectionReport)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (k, r)) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(j) => {
                let (bk, br) = &candidates[j];
                if r.auc_mean > br.auc_mean || (r.auc_mean == br.auc_mean && k < bk) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    BoxOffice,
    ImdbRating,
}

impl Covariate {
    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::BoxOffice => "box_office",
            Covariate::ImdbRating => "imdb_rating",
        }
    }

    pub fn of(self, movie: &Movie) -> Option<f64> {
        match self {
            Covariate::BoxOffice => movie.box_office_usd.map(|v| v as f64),
            Covariate::ImdbRating => movie.imdb_rating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBinReport {
    pub covariate: Covariate,
    pub bin_edges: Vec<f64>,
    /// Mean weighted accuracy per bin; `None` for an empty bin.
    pub per_bin_accuracy: Vec<Option<f64>>,
    pub per_bin_counts: Vec<usize>,
    pub missing_covariate: usize,
    pub out_of_range: usize,
}

/// Bins movies by covariate value. Bins are `[e_i, e_{i+1})`, the last one
/// closed on the right.
pub fn bin_by_covariate(
    scored: &[(&Movie, f64)],
    covariate: Covariate,
    bin_edges: &[f64],
) -> Result<CovariateBinReport, StatsError> {
    if bin_edges.len() < 2 {
        return Err(StatsError::InvalidParam("need at least two bin edges".into()));
    }
    if bin_edges.iter().any(|e| e.is_nan()) || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::InvalidParam("bin edges must be strictly increasing".into()));
    }
    let bins = bin_edges.len() - 1;
    let mut sums = alloc::vec![0.0f64; bins];
    let mut counts = alloc::vec![0usize; bins];
    let mut missing = 0;
    let mut out_of_range = 0;
    for (movie, acc) in scored {
        let Some(v) = covariate.of(movie) else {
            missing += 1;
            continue;
        };
        let last = bin_edges[bins];
        if v < bin_edges[0] || v > last {
            out_of_range += 1;
            continue;
        }
        let bin = if v == last {
            bins - 1
        } else {
            bin_edges.partition_point(|e| *e <= v) - 1
        };
        sums[bin] += acc;
        counts[bin] += 1;
    }
    if missing == scored.len() {
        return Err(StatsError::NoCovariateData);
    }
    Ok(CovariateBinReport {
        covariate,
        bin_edges: bin_edges.to_vec(),
        per_bin_accuracy: sums
            .iter()
            .zip(&counts)
            .map(|(s, n)| (*n > 0).then(|| s / *n as f64))
            .collect(),
        per_bin_counts: counts,
        missing_covariate: missing,
        out_of_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn brute_force(s: &[f64], c: &[f64]) -> (u64, u64) {
        let mut num = 0;
        for x in s {
            for y in c {
                num += if x > y { 2 } else if x == y { 1 } else { 0 };
            }
        }
        (num, 2 * (s.len() * c.len()) as u64)
    }

    #[test]
    fn chance_examples() {
        assert_eq!(chance_baseline(ChanceMode::Mcqa { k: 4 }), Ok(0.25));
        assert_eq!(chance_baseline(ChanceMode::Freeform { omega: 10_000.0, bias: 1.0 }), Ok(0.0001));
        assert_eq!(chance_baseline(ChanceMode::Freeform { omega: 10_000.0, bias: 100.0 }), Ok(0.01));
        assert_eq!(chance_baseline(ChanceMode::Freeform { omega: 10.0, bias: 50.0 }), Ok(1.0));
        assert!(chance_baseline(ChanceMode::Mcqa { k: 1 }).is_err());
        assert!(chance_baseline(ChanceMode::Freeform { omega: 0.5, bias: 1.0 }).is_err());
        assert!(chance_baseline(ChanceMode::Freeform { omega: 5.0, bias: 0.5 }).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]), Ok(1.0));
        assert_eq!(auc(&[0.5], &[0.5]), Ok(0.5));
        assert_eq!(auc(&[0.3, 0.7], &[0.4, 0.2]), Ok(0.75));
        assert_eq!(auc(&[], &[0.5]), Err(StatsError::EmptyInput));
        assert_eq!(auc(&[0.5], &[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(best_threshold(&[0.8, 0.9], &[0.1, 0.2]), Ok((0.5, 1.0)));
        assert_eq!(best_threshold(&[1.0], &[0.0]), Ok((0.5, 1.0)));
        let (theta, ba) = best_threshold(&[0.2, 0.4, 0.4], &[0.4, 0.2, 0.4]).unwrap();
        assert_eq!(ba, 0.5);
        assert_eq!(theta, f64::NEG_INFINITY);
    }

    #[test]
    fn threshold_tie_prefers_smallest() {
        // θ = 0.25 and θ = 0.75 both give balanced accuracy 0.75
        let (theta, ba) = best_threshold(&[0.5, 1.0], &[0.0, 0.5]).unwrap();
        assert_eq!(ba, 0.75);
        assert_eq!(theta, 0.25);
    }

    #[test]
    fn separated_bootstrap() {
        let s: Vec<f64> = (0..20).map(|i| 0.6 + 0.01 * i as f64).collect();
        let c: Vec<f64> = (0..20).map(|i| 0.01 * i as f64).collect();
        let r = bootstrap_auc("disco", &s, &c, 10, 7).unwrap();
        assert_eq!(r.auc_mean, 1.0);
        assert_eq!(r.auc_std, 0.0);
        assert_eq!(r.per_iteration_auc.len(), 10);
        assert_eq!(r.threshold_balanced_accuracy, 1.0);
        assert_eq!(r, bootstrap_auc("disco", &s, &c, 10, 7).unwrap());
    }

    #[test]
    fn identical_groups_near_half() {
        // scores from one distribution; 3 standard errors of the per-seed mean
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s: Vec<f64> = (0..400).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        let c: Vec<f64> = (0..400).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        let r = bootstrap_auc("x", &s, &c, 10, 3).unwrap();
        // Mann-Whitney null std for n = m = 400 is sqrt((n+m+1)/(12nm)) ≈ 0.0204
        assert!((r.auc_mean - 0.5).abs() < 3.0 * 0.0204 * 1.5, "{}", r.auc_mean);
    }

    #[test]
    fn different_seeds_differ() {
        let s = [0.1, 0.5, 0.9, 0.3, 0.7];
        let c = [0.2, 0.4, 0.6, 0.8, 0.0];
        let a = bootstrap_auc("x", &s, &c, 10, 1).unwrap();
        let b = bootstrap_auc("x", &s, &c, 10, 2).unwrap();
        assert_ne!(a.per_iteration_auc, b.per_iteration_auc);
    }

    #[test]
    fn group_accuracy_matches_report() {
        let s = [0.1, 0.5, 0.9, 0.3];
        let c = [0.2, 0.4, 0.0];
        let r = bootstrap_auc("x", &s, &c, 10, 11).unwrap();
        assert_eq!(group_accuracy(Group::Suspect, &s, 10, 11).unwrap(), r.group_accuracy.suspect);
        assert_eq!(group_accuracy(Group::Clean, &c, 10, 11).unwrap(), r.group_accuracy.clean);
        let zeros = group_accuracy(Group::Suspect, &[0.0; 8], 10, 0).unwrap();
        assert_eq!(zeros, MeanStd { mean: 0.0, std: 0.0 });
        assert_eq!(group_accuracy(Group::Suspect, &[], 10, 0), Err(StatsError::EmptyInput));
    }

    #[test]
    fn report_json_round_trip_with_infinite_threshold() {
        let r = bootstrap_auc("x", &[0.5, 0.5], &[0.5], 3, 0).unwrap();
        assert_eq!(r.best_threshold, f64::NEG_INFINITY);
        let text = serde_json::to_string(&r).unwrap();
        let back: DetectionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    fn report(auc_mean: f64) -> DetectionReport {
        let mut r = bootstrap_auc("renyi", &[1.0], &[0.0], 1, 0).unwrap();
        r.auc_mean = auc_mean;
        r
    }

    #[test]
    fn best_k_selection() {
        let c = vec![(30.0, report(0.6)), (10.0, report(0.7)), (5.0, report(0.7)), (50.0, report(0.65))];
        assert_eq!(select_best_k(&c), Some(2));
        assert_eq!(select_best_k(&[]), None);
    }

    fn rated(title: &str, box_office: Option<u64>) -> Movie {
        Movie {
            title: title.into(),
            aliases: vec![],
            release_date: None,
            group: Group::Suspect,
            genre_tags: vec![],
            box_office_usd: box_office,
            imdb_rating: None,
            frames: vec![],
        }
    }

    #[test]
    fn covariate_examples() {
        let a = rated("a", Some(1_000_000));
        let b = rated("b", Some(2_000_000_000));
        let none = rated("c", None);
        let r = bin_by_covariate(&[(&a, 0.2), (&b, 0.8), (&none, 0.5)], Covariate::BoxOffice, &[0.0, 5e8, 1e10]).unwrap();
        assert_eq!(r.per_bin_counts, vec![1, 1]);
        assert_eq!(r.per_bin_accuracy, vec![Some(0.2), Some(0.8)]);
        assert_eq!(r.missing_covariate, 1);

        let r = bin_by_covariate(&[(&a, 0.2)], Covariate::BoxOffice, &[0.0, 5e8, 1e10]).unwrap();
        assert_eq!(r.per_bin_counts, vec![1, 0]);
        assert_eq!(r.per_bin_accuracy[1], None);

        assert_eq!(
            bin_by_covariate(&[(&none, 0.2)], Covariate::BoxOffice, &[0.0, 1.0]),
            Err(StatsError::NoCovariateData)
        );
        assert!(bin_by_covariate(&[(&a, 0.2)], Covariate::BoxOffice, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn covariate_edges_inclusive() {
        let lo = rated("lo", Some(0));
        let hi = rated("hi", Some(10));
        let mid = rated("mid", Some(5));
        let r = bin_by_covariate(&[(&lo, 0.0), (&mid, 1.0), (&hi, 1.0)], Covariate::BoxOffice, &[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(r.per_bin_counts, vec![1, 2]);
        assert_eq!(r.out_of_range, 0);
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        // coarse grid to force ties
        proptest::collection::vec((0u8..20).prop_map(|x| f64::from(x) / 4.0), 1..200)
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(s in scores(), c in scores()) {
            prop_assert_eq!(auc_ratio(&s, &c).unwrap(), brute_force(&s, &c));
        }

        #[test]
        fn auc_antisymmetric(s in scores(), c in scores()) {
            let (a, d) = auc_ratio(&s, &c).unwrap();
            let (b, e) = auc_ratio(&c, &s).unwrap();
            prop_assert_eq!(d, e);
            prop_assert_eq!(a + b, d);
        }

        #[test]
        fn auc_monotone_invariant(s in scores(), c in scores()) {
            let f = |x: &f64| libm::exp(3.0 * x) - 7.0;
            let fs: Vec<f64> = s.iter().map(f).collect();
            let fc: Vec<f64> = c.iter().map(f).collect();
            prop_assert_eq!(auc_ratio(&s, &c).unwrap(), auc_ratio(&fs, &fc).unwrap());
        }

        #[test]
        fn identity_bootstrap_is_auc(s in scores(), c in scores()) {
            let r = bootstrap_auc_with("x", &s, &c, 1, 0, &IdentityResampler).unwrap();
            prop_assert_eq!(r.auc_mean, auc(&s, &c).unwrap());
            prop_assert_eq!(r.auc_std, 0.0);
            prop_assert_eq!(r.best_threshold, best_threshold(&s, &c).unwrap().0);
        }

        #[test]
        fn threshold_at_least_half(s in scores(), c in scores()) {
            let (theta, ba) = best_threshold(&s, &c).unwrap();
            prop_assert!(ba >= 0.5);
            prop_assert_eq!(ba, balanced_accuracy(&s, &c, theta));
        }

        #[test]
        fn report_invariants(s in scores(), c in scores(), seed in any::<u64>(), iters in 1usize..15) {
            let r = bootstrap_auc("x", &s, &c, iters, seed).unwrap();
            prop_assert_eq!(r.per_iteration_auc.len(), iters);
            let m = r.per_iteration_auc.iter().sum::<f64>() / iters as f64;
            prop_assert!((r.auc_mean - m).abs() <= 1e-12);
            prop_assert!(r.auc_std >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.auc_mean));
        }

        #[test]
        fn bins_partition(values in proptest::collection::vec(proptest::option::of(0u64..1000), 1..60)) {
            let movies: Vec<Movie> = values.iter().enumerate().map(|(i, v)| rated(&alloc::format!("m{i}"), *v)).collect();
            prop_assume!(values.iter().any(Option::is_some));
            let scored: Vec<(&Movie, f64)> = movies.iter().map(|m| (m, 0.5)).collect();
            let r = bin_by_covariate(&scored, Covariate::BoxOffice, &[0.0, 100.0, 500.0, 999.0]).unwrap();
            let with = values.iter().filter(|v| v.is_some()).count();
            prop_assert_eq!(r.per_bin_counts.iter().sum::<usize>() + r.out_of_range, with);
            prop_assert_eq!(r.missing_covariate, values.len() - with);
        }
    }
}
