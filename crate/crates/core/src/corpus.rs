//! Benchmark corpus data model: titled movies with dated group labels,
//! categorized frames and captions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::canonicalize;

/// Caption prefix requested by the caption-generation prompt.
pub const CAPTION_PREFIX: &str = "The image depicts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Suspect,
    Clean,
    Excluded,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Suspect => "suspect",
            Group::Clean => "clean",
            Group::Excluded => "excluded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Main,
    Neutral,
}

impl FrameKind {
    pub const ALL: [FrameKind; 2] = [FrameKind::Main, FrameKind::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Main => "main",
            FrameKind::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionProvenance {
    #[default]
    Supplied,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: String,
    /// Path of the image, relative to the manifest file.
    pub image_path: String,
    pub kind: FrameKind,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub caption_provenance: CaptionProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_px: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movie {
    pub title: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub release_date: Option<NaiveDate>,
    pub group: Group,
    #[serde(default)]
    pub genre_tags: Vec<String>,
    #[serde(default)]
    pub box_office_usd: Option<u64>,
    #[serde(default)]
    pub imdb_rating: Option<f64>,
    #[serde(default)]
    pub frames: Vec<Frame>,
}

impl Movie {
    pub fn frames_of(&self, kind: FrameKind) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(move |f| f.kind == kind)
    }

    pub fn frame(&self, frame_id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn shares_genre(&self, other: &Movie) -> bool {
        self.genre_tags
            .iter()
            .any(|g| other.genre_tags.iter().any(|o| o == g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub source_note: String,
    pub movies: Vec<Movie>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("duplicate frame id `{0}`")]
    DuplicateFrameId(String),
    #[error("duplicate title `{0}` (canonical form `{1}`)")]
    DuplicateTitle(String, String),
    #[error("movie `{0}` has no release date")]
    MissingDate(String),
    #[error("movie `{title}`: {detail}")]
    OutOfRange { title: String, detail: String },
}

impl CorpusManifest {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn frame_count(&self) -> usize {
        self.movies.iter().map(|m| m.frames.len()).sum()
    }

    pub fn movie(&self, title: &str) -> Option<&Movie> {
        self.movies.iter().find(|m| m.title == title)
    }

    /// Checks the identity and range invariants that make a manifest loadable.
    pub fn check_invariants(&self) -> Result<(), CorpusError> {
        let mut titles = BTreeSet::new();
        let mut frame_ids = BTreeSet::new();
        for movie in &self.movies {
            let canon = canonicalize(&movie.title);
            if !titles.insert(canon.clone()) {
                return Err(CorpusError::DuplicateTitle(movie.title.clone(), canon));
            }
            if let Some(r) = movie.imdb_rating {
                if !(1.0..=10.0).contains(&r) {
                    return Err(CorpusError::OutOfRange {
                        title: movie.title.clone(),
                        detail: format!("imdb_rating {r} outside [1, 10]"),
                    });
                }
            }
            for frame in &movie.frames {
                if !frame_ids.insert(frame.frame_id.as_str()) {
                    return Err(CorpusError::DuplicateFrameId(frame.frame_id.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Date cut-offs that split titles into suspect, excluded and clean groups.
///
/// Dates up to `suspect_until` are suspect, the `excluded_from..=excluded_until`
/// window is dropped, and dates from `clean_from` on are clean. Dates falling
/// in a gap between the windows are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPolicy {
    pub suspect_until: NaiveDate,
    pub excluded_from: NaiveDate,
    pub excluded_until: NaiveDate,
    pub clean_from: NaiveDate,
}

impl Default for PartitionPolicy {
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid constant date");
        Self {
            suspect_until: d(2022, 12, 31),
            excluded_from: d(2023, 1, 1),
            excluded_until: d(2023, 9, 30),
            clean_from: d(2023, 10, 1),
        }
    }
}

impl PartitionPolicy {
    pub fn classify(&self, date: NaiveDate) -> Group {
        if date <= self.suspect_until {
            Group::Suspect
        } else if (self.excluded_from..=self.excluded_until).contains(&date) {
            Group::Excluded
        } else if date >= self.clean_from {
            Group::Clean
        } else {
            Group::Excluded
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition<'a> {
    pub suspect: Vec<&'a Movie>,
    pub clean: Vec<&'a Movie>,
    pub excluded: Vec<&'a Movie>,
}

impl<'a> Partition<'a> {
    pub fn get(&self, group: Group) -> &[&'a Movie] {
        match group {
            Group::Suspect => &self.suspect,
            Group::Clean => &self.clean,
            Group::Excluded => &self.excluded,
        }
    }

    pub fn len(&self) -> usize {
        self.suspect.len() + self.clean.len() + self.excluded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits the manifest by release date. Manifest order is kept inside each set.
pub fn partition<'a>(
    manifest: &'a CorpusManifest,
    policy: &PartitionPolicy,
) -> Result<Partition<'a>, CorpusError> {
    let mut out = Partition::default();
    for movie in &manifest.movies {
        let date = movie
            .release_date
            .ok_or_else(|| CorpusError::MissingDate(movie.title.clone()))?;
        match policy.classify(date) {
            Group::Suspect => out.suspect.push(movie),
            Group::Clean => out.clean.push(movie),
            Group::Excluded => out.excluded.push(movie),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    GroupMismatch {
        title: String,
        labeled: Group,
        expected: Group,
    },
    MissingDate {
        title: String,
    },
    MissingCaption {
        title: String,
        frame_id: String,
    },
    NonconformingCaption {
        title: String,
        frame_id: String,
    },
    MissingCovariate {
        title: String,
        covariate: String,
    },
    CovariateOutOfRange {
        title: String,
        covariate: String,
    },
    NoFrames {
        title: String,
    },
    MissingAsset {
        title: String,
        frame_id: String,
        path: String,
    },
}

impl ValidationIssue {
    /// Missing covariates and caption-style warnings do not block a run.
    pub fn is_blocking(&self) -> bool {
        !matches!(
            self,
            ValidationIssue::MissingCovariate { .. } | ValidationIssue::NonconformingCaption { .. }
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCounts {
    pub main: usize,
    pub neutral: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub frame_counts: BTreeMap<String, KindCounts>,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn blocking(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.is_blocking())
    }

    pub fn push(&mut self, issue: ValidationIssue) {
        self.issues.push(issue);
    }
}

/// Structural checks on a loaded manifest. Asset existence is checked by the
/// IO layer, which appends `MissingAsset` issues in strict mode.
pub fn validate(manifest: &CorpusManifest, policy: &PartitionPolicy) -> ValidationReport {
    let mut report = ValidationReport::default();
    for movie in &manifest.movies {
        let title = || movie.title.clone();
        let counts = KindCounts {
            main: movie.frames_of(FrameKind::Main).count(),
            neutral: movie.frames_of(FrameKind::Neutral).count(),
        };
        report.frame_counts.insert(movie.title.clone(), counts);

        match movie.release_date {
            Some(date) => {
                let expected = policy.classify(date);
                if expected != movie.group {
                    report.push(ValidationIssue::GroupMismatch {
                        title: title(),
                        labeled: movie.group,
                        expected,
                    });
                }
            }
            None => report.push(ValidationIssue::MissingDate { title: title() }),
        }
        if movie.frames.is_empty() {
            report.push(ValidationIssue::NoFrames { title: title() });
        }
        for frame in &movie.frames {
            if frame.caption.trim().is_empty() {
                report.push(ValidationIssue::MissingCaption {
                    title: title(),
                    frame_id: frame.frame_id.clone(),
                });
            } else if frame.caption_provenance == CaptionProvenance::Generated
                && !frame.caption.trim_start().starts_with(CAPTION_PREFIX)
            {
                report.push(ValidationIssue::NonconformingCaption {
                    title: title(),
                    frame_id: frame.frame_id.clone(),
                });
            }
        }
        if movie.box_office_usd.is_none() {
            report.push(ValidationIssue::MissingCovariate {
                title: title(),
                covariate: "box_office_usd".into(),
            });
        }
        match movie.imdb_rating {
            None => report.push(ValidationIssue::MissingCovariate {
                title: title(),
                covariate: "imdb_rating".into(),
            }),
            Some(r) if !(1.0..=10.0).contains(&r) => {
                report.push(ValidationIssue::CovariateOutOfRange {
                    title: title(),
                    covariate: "imdb_rating".into(),
                })
            }
            Some(_) => {}
        }
    }
    report
}
