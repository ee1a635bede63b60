//! Tables rebuilt from a run directory's prediction log.
//!
//! Everything here reads only `config.json`, `movies.json` and
//! `predictions.ndjson`, so every emitted number can be traced back to logged
//! model answers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use disco_core::corpus::Group;
use disco_core::detectors::{
    accuracy_score, disco_score, floor_disco, renyi_scores, DetectorKind, FramePrediction,
    MovieScore, PredictionMode, ScoreView,
};
use disco_core::stats::{bin_by_covariate, bootstrap_auc, select_best_k, Covariate, DetectionReport, StatsError};
use serde::{Deserialize, Serialize};

use crate::predlog::{self, PredictionRecord};
use crate::run::{MovieRow, RunConfig, CONFIG_FILE, MOVIES_FILE, PREDICTIONS_FILE};
use crate::tsv::Tsv;

pub const SCORES_FILE: &str = "scores.tsv";
pub const REPORTS_FILE: &str = "reports.json";
pub const AUC_TABLE_FILE: &str = "auc_table.tsv";
pub const ACCURACY_TABLE_FILE: &str = "accuracy_table.tsv";
pub const RENYI_K_FILE: &str = "renyi_k.tsv";
pub const TIMING_FILE: &str = "timing.tsv";
pub const SUMMARY_FILE: &str = "summary.md";

#[derive(Debug, thiserror::Error)]
#[error("run directory {dir} is missing {file}")]
pub struct MissingArtifacts {
    pub dir: PathBuf,
    pub file: &'static str,
}

fn require(dir: &Path, file: &'static str) -> Result<PathBuf> {
    let path = dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(MissingArtifacts {
            dir: dir.to_path_buf(),
            file,
        }
        .into())
    }
}

/// A detection report for one detector on one frame view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub detector: DetectorKind,
    pub frames: ScoreView,
    pub report: DetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReports {
    pub backend: String,
    pub entries: Vec<ReportEntry>,
    /// AUC for every Rényi K%, one row per (view, K).
    pub renyi_sweep: Vec<RenyiKRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenyiKRow {
    pub frames: ScoreView,
    pub k_percent: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub selected: bool,
}

pub struct RunData {
    pub config: RunConfig,
    pub movies: Vec<MovieRow>,
    pub records: Vec<PredictionRecord>,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    require(dir, CONFIG_FILE)?;
    let config = RunConfig::load(dir)?;
    let movies: Vec<MovieRow> = serde_json::from_str(&fs::read_to_string(require(dir, MOVIES_FILE)?)?)
        .with_context(|| format!("parsing {}", dir.join(MOVIES_FILE).display()))?;
    let records = predlog::read(&require(dir, PREDICTIONS_FILE)?)?;
    Ok(RunData { config, movies, records })
}

/// Per-movie scores for every configured detector, in movie then table order.
pub fn movie_scores(data: &RunData) -> Result<Vec<(usize, MovieScore)>> {
    let mut by_movie: BTreeMap<&str, Vec<FramePrediction>> = BTreeMap::new();
    for r in &data.records {
        by_movie.entry(r.movie_title.as_str()).or_default().push(r.to_prediction());
    }
    let empty = Vec::new();
    let mut out = Vec::new();
    for (i, movie) in data.movies.iter().enumerate() {
        let preds = by_movie.get(movie.title.as_str()).unwrap_or(&empty);
        let of = |mode: PredictionMode| -> Vec<FramePrediction> {
            preds.iter().filter(|p| p.mode == mode).cloned().collect()
        };
        let title = movie.title.as_str();
        for d in data.config.detector_set() {
            let context = || format!("scoring `{title}` with {}", d.as_str());
            match d {
                DetectorKind::Disco => out.push((i, disco_score(title, &of(PredictionMode::Image)).with_context(context)?)),
                DetectorKind::FloorDisco => out.push((
                    i,
                    floor_disco(
                        title,
                        &of(PredictionMode::Image),
                        &of(PredictionMode::Caption),
                        data.config.floor_denominator,
                    )
                    .with_context(context)?,
                )),
                DetectorKind::Captions => out.push((
                    i,
                    accuracy_score(title, d, &of(PredictionMode::Caption)).with_context(context)?,
                )),
                DetectorKind::Mcqa => {
                    out.push((i, accuracy_score(title, d, &of(PredictionMode::Mcqa)).with_context(context)?))
                }
                DetectorKind::Renyi => {
                    for s in renyi_scores(title, &of(PredictionMode::Logits), &data.config.renyi.k_percent_grid)
                        .with_context(context)?
                    {
                        out.push((i, s));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn split_groups(
    data: &RunData,
    scores: &[(usize, MovieScore)],
    detector: DetectorKind,
    k: Option<f64>,
    view: ScoreView,
) -> (Vec<f64>, Vec<f64>) {
    let mut suspect = Vec::new();
    let mut clean = Vec::new();
    for (i, s) in scores {
        if s.detector != detector || s.k_percent != k {
            continue;
        }
        let Some(v) = s.value(view) else { continue };
        match data.movies[*i].group {
            Group::Suspect => suspect.push(v),
            Group::Clean => clean.push(v),
            Group::Excluded => {}
        }
    }
    (suspect, clean)
}

fn bootstrap(data: &RunData, detector: DetectorKind, s: &[f64], c: &[f64]) -> Result<Option<DetectionReport>> {
    match bootstrap_auc(detector.as_str(), s, c, data.config.iterations, data.config.seed) {
        Ok(r) => Ok(Some(r)),
        Err(StatsError::EmptyInput) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn detection_reports(data: &RunData, scores: &[(usize, MovieScore)]) -> Result<RunReports> {
    let mut entries = Vec::new();
    let mut renyi_sweep = Vec::new();
    for d in data.config.detector_set() {
        for view in ScoreView::ALL {
            if d == DetectorKind::Renyi {
                let mut candidates = Vec::new();
                for k in &data.config.renyi.k_percent_grid {
                    let (s, c) = split_groups(data, scores, d, Some(*k), view);
                    if let Some(r) = bootstrap(data, d, &s, &c)? {
                        candidates.push((*k, r));
                    }
                }
                let Some(best) = select_best_k(&candidates) else { continue };
                for (i, (k, r)) in candidates.iter().enumerate() {
                    renyi_sweep.push(RenyiKRow {
                        frames: view,
                        k_percent: *k,
                        auc_mean: r.auc_mean,
                        auc_std: r.auc_std,
                        selected: i == best,
                    });
                }
                let (k, mut report) = candidates.swap_remove(best);
                report.k_selected = Some(k);
                entries.push(ReportEntry {
                    detector: d,
                    frames: view,
                    report,
                });
            } else {
                let (s, c) = split_groups(data, scores, d, None, view);
                if let Some(report) = bootstrap(data, d, &s, &c)? {
                    entries.push(ReportEntry {
                        detector: d,
                        frames: view,
                        report,
                    });
                }
            }
        }
    }
    Ok(RunReports {
        backend: data.config.backend.clone(),
        entries,
        renyi_sweep,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_scores(dir: &Path, data: &RunData, scores: &[(usize, MovieScore)]) -> Result<()> {
    let mut t = Tsv::new(&["movie_title", "group", "detector", "k_percent", "n_main", "n_neutral", "main", "neutral", "weighted"]);
    for (i, s) in scores {
        let m = &data.movies[*i];
        t.row([
            m.title.clone(),
            m.group.as_str().into(),
            s.detector.as_str().into(),
            opt(s.k_percent),
            s.n_main.to_string(),
            s.n_neutral.to_string(),
            opt(s.value(ScoreView::Main)),
            opt(s.value(ScoreView::Neutral)),
            opt(s.value(ScoreView::Weighted)),
        ]);
    }
    t.write(&dir.join(SCORES_FILE))
}

fn cell(r: &DetectionReport) -> String {
    format!("{:.3} ± {:.3}", r.auc_mean, r.auc_std)
}

/// Rows: frame view × detector in table order. Columns: one per backend.
pub fn auc_table(runs: &[RunReports]) -> Tsv {
    let mut header = vec!["frames".to_string(), "detector".to_string()];
    header.extend(runs.iter().map(|r| r.backend.clone()));
    let mut t = Tsv::with_header(header);
    for view in ScoreView::ALL {
        for d in DetectorKind::ALL {
            let cells: Vec<String> = runs
                .iter()
                .map(|run| {
                    run.entries
                        .iter()
                        .find(|e| e.detector == d && e.frames == view)
                        .map(|e| cell(&e.report))
                        .unwrap_or_default()
                })
                .collect();
            if cells.iter().all(String::is_empty) {
                continue;
            }
            let mut row = vec![view.as_str().to_string(), d.label().to_string()];
            row.extend(cells);
            t.row(row);
        }
    }
    t
}

fn accuracy_table(reports: &RunReports) -> Tsv {
    let mut t = Tsv::new(&[
        "detector", "frames", "suspect_mean", "suspect_std", "clean_mean", "clean_std", "n_suspect", "n_clean",
    ]);
    for e in reports.entries.iter().filter(|e| e.detector != DetectorKind::Renyi) {
        let g = &e.report.group_accuracy;
        t.row([
            e.detector.label().to_string(),
            e.frames.as_str().to_string(),
            g.suspect.mean.to_string(),
            g.suspect.std.to_string(),
            g.clean.mean.to_string(),
            g.clean.std.to_string(),
            e.report.n_suspect.to_string(),
            e.report.n_clean.to_string(),
        ]);
    }
    t
}

fn covariate_table(data: &RunData, scores: &[(usize, MovieScore)], covariate: Covariate, edges: &[f64]) -> Result<Tsv> {
    let mut t = Tsv::new(&["detector", "group", "bin_edge", "bin_upper", "accuracy", "count"]);
    let movies: Vec<_> = data.movies.iter().map(MovieRow::as_movie).collect();
    for d in data.config.detector_set().into_iter().filter(|d| *d != DetectorKind::Renyi) {
        for group in [Group::Suspect, Group::Clean] {
            let scored: Vec<_> = scores
                .iter()
                .filter(|(i, s)| s.detector == d && data.movies[*i].group == group)
                .map(|(i, s)| (&movies[*i], s.acc_weighted))
                .collect();
            if scored.is_empty() {
                continue;
            }
            let report = match bin_by_covariate(&scored, covariate, edges) {
                Ok(r) => r,
                Err(StatsError::NoCovariateData) => continue,
                Err(e) => return Err(e.into()),
            };
            for (b, (acc, n)) in report.per_bin_accuracy.iter().zip(&report.per_bin_counts).enumerate() {
                t.row([
                    d.label().to_string(),
                    group.as_str().to_string(),
                    edges[b].to_string(),
                    edges[b + 1].to_string(),
                    opt(*acc),
                    n.to_string(),
                ]);
            }
        }
    }
    Ok(t)
}

fn renyi_table(reports: &RunReports) -> Tsv {
    let mut t = Tsv::new(&["frames", "k_percent", "auc_mean", "auc_std", "selected"]);
    for r in &reports.renyi_sweep {
        t.row([
            r.frames.as_str().to_string(),
            r.k_percent.to_string(),
            r.auc_mean.to_string(),
            r.auc_std.to_string(),
            r.selected.to_string(),
        ]);
    }
    t
}

fn summary(data: &RunData, reports: &RunReports) -> String {
    let count = |g: Group| data.movies.iter().filter(|m| m.group == g).count();
    let mut md = String::new();
    let _ = writeln!(md, "# Audit run: {}\n", data.config.backend);
    let _ = writeln!(
        md,
        "Titles: {} suspect, {} clean. Queries logged: {}. Bootstrap: {} iterations, seed {}.\n",
        count(Group::Suspect),
        count(Group::Clean),
        data.records.len(),
        data.config.iterations,
        data.config.seed
    );
    let _ = writeln!(md, "## AUC\n");
    let _ = writeln!(md, "| Frames | Detector | AUC | Balanced acc. | K% |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for e in &reports.entries {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.3} | {} |",
            e.frames.as_str(),
            e.detector.label(),
            cell(&e.report),
            e.report.threshold_balanced_accuracy,
            opt(e.report.k_selected)
        );
    }
    let _ = writeln!(md, "\n## Group accuracy\n");
    let _ = writeln!(md, "| Detector | Frames | Suspect | Clean |");
    let _ = writeln!(md, "|---|---|---|---|");
    for e in reports.entries.iter().filter(|e| e.detector != DetectorKind::Renyi) {
        let g = &e.report.group_accuracy;
        let _ = writeln!(
            md,
            "| {} | {} | {:.3} ± {:.3} | {:.3} ± {:.3} |",
            e.detector.label(),
            e.frames.as_str(),
            g.suspect.mean,
            g.suspect.std,
            g.clean.mean,
            g.clean.std
        );
    }
    md
}

/// Rebuilds scores, reports and tables inside `dir` from its logs.
pub fn cmd_report(dir: &Path) -> Result<RunReports> {
    let data = load_run(dir)?;
    let scores = movie_scores(&data)?;
    let reports = detection_reports(&data, &scores)?;
    write_scores(dir, &data, &scores)?;
    let mut json = serde_json::to_string_pretty(&reports)?;
    json.push('\n');
    fs::write(dir.join(REPORTS_FILE), json)?;
    auc_table(std::slice::from_ref(&reports)).write(&dir.join(AUC_TABLE_FILE))?;
    accuracy_table(&reports).write(&dir.join(ACCURACY_TABLE_FILE))?;
    covariate_table(&data, &scores, Covariate::BoxOffice, &data.config.box_office_edges)?
        .write(&dir.join("covariate_box_office.tsv"))?;
    covariate_table(&data, &scores, Covariate::ImdbRating, &data.config.imdb_edges)?
        .write(&dir.join("covariate_imdb_rating.tsv"))?;
    if data.config.detectors.contains(&DetectorKind::Renyi) {
        renyi_table(&reports).write(&dir.join(RENYI_K_FILE))?;
    }
    fs::write(dir.join(SUMMARY_FILE), summary(&data, &reports))?;
    Ok(reports)
}

/// AUC table with one column per run directory's backend.
pub fn combine_auc(dirs: &[PathBuf], out: &Path) -> Result<()> {
    let runs = dirs
        .iter()
        .map(|d| {
            let text = fs::read_to_string(require(d, REPORTS_FILE)?)?;
            Ok(serde_json::from_str::<RunReports>(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    auc_table(&runs).write(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingRow {
    pub detector: DetectorKind,
    pub queries: usize,
    pub total_ms: u64,
    pub movies: usize,
}

/// Harness-side latency per detector. ⌊DIS-CO⌋ pays for both the image and
/// the caption pass.
pub fn timing(data: &RunData) -> Vec<TimingRow> {
    let modes = |d: DetectorKind| -> &'static [PredictionMode] {
        match d {
            DetectorKind::Disco => &[PredictionMode::Image],
            DetectorKind::FloorDisco => &[PredictionMode::Image, PredictionMode::Caption],
            DetectorKind::Captions => &[PredictionMode::Caption],
            DetectorKind::Mcqa => &[PredictionMode::Mcqa],
            DetectorKind::Renyi => &[PredictionMode::Logits],
        }
    };
    data.config
        .detector_set()
        .into_iter()
        .map(|d| {
            let used: Vec<&PredictionRecord> = data.records.iter().filter(|r| modes(d).contains(&r.mode)).collect();
            let mut titles: Vec<&str> = used.iter().map(|r| r.movie_title.as_str()).collect();
            titles.sort_unstable();
            titles.dedup();
            TimingRow {
                detector: d,
                queries: used.len(),
                total_ms: used.iter().map(|r| r.latency_ms).sum(),
                movies: titles.len(),
            }
        })
        .collect()
}

pub fn cmd_timing(dir: &Path) -> Result<Vec<TimingRow>> {
    let data = load_run(dir)?;
    let rows = timing(&data);
    let mut t = Tsv::new(&["detector", "queries", "total_ms", "movies", "per_movie_mean_ms"]);
    for r in &rows {
        let mean = if r.movies == 0 { 0.0 } else { r.total_ms as f64 / r.movies as f64 };
        t.row([
            r.detector.label().to_string(),
            r.queries.to_string(),
            r.total_ms.to_string(),
            r.movies.to_string(),
            mean.to_string(),
        ]);
    }
    t.write(&dir.join(TIMING_FILE))?;
    Ok(rows)
}

/// Accuracy and AUC against the swept value, one row per (value, detector, view).
pub fn write_sweep(path: &Path, param: &str, runs: &[(String, PathBuf)]) -> Result<()> {
    let mut t = Tsv::new(&[param, "detector", "frames", "auc_mean", "auc_std", "suspect_accuracy", "clean_accuracy"]);
    for (value, dir) in runs {
        let reports: RunReports = serde_json::from_str(&fs::read_to_string(require(dir, REPORTS_FILE)?)?)?;
        for e in &reports.entries {
            t.row([
                value.clone(),
                e.detector.label().to_string(),
                e.frames.as_str().to_string(),
                e.report.auc_mean.to_string(),
                e.report.auc_std.to_string(),
                e.report.group_accuracy.suspect.mean.to_string(),
                e.report.group_accuracy.clean.mean.to_string(),
            ]);
        }
    }
    t.write(path)
}
