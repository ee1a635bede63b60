//! Checked-in matcher regression corpus.
//!
//! Columns: `kind` (`title` or `mcqa`), `raw`, `truth`, `aliases` and
//! `options` (both `|`-separated), `expected` (a verdict for titles, an option
//! letter or `none` for MCQA). `\n` and `\t` in `raw` are unescaped.

use std::path::Path;

use anyhow::{bail, Context, Result};
use disco_core::matcher::{match_against, option_letter, parse_mcqa, DEFAULT_FUZZY_THRESHOLD};


pub const BUILTIN_CORPUS: &str = include_str!("../fixtures/matcher_corpus.tsv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaseKind {
    Title,
    Mcqa,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    pub line: usize,
    pub kind: CaseKind,
    pub raw: String,
    pub truth: String,
    pub aliases: Vec<String>,
    pub options: Vec<String>,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub case: Case,
    pub got: String,
}

fn unescape(s: &str) -> String {
    s.replace("\\n", "\n").replace("\\t", "\t")
}

fn list(s: &str) -> Vec<String> {
    s.split('|').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect()
}

pub fn parse(text: &str) -> Result<Vec<Case>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let expected_header = ["kind", "raw", "truth", "aliases", "options", "expected"];
    if header != expected_header {
        bail!("matcher corpus header must be {expected_header:?}");
    }
    let mut cases = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let kind = match &rec[0] {
            "title" => CaseKind::Title,
            "mcqa" => CaseKind::Mcqa,
            other => bail!("line {line}: unknown kind `{other}`"),
        };
        let case = Case {
            line,
            kind,
            raw: unescape(&rec[1]),
            truth: rec[2].to_string(),
            aliases: list(&rec[3]),
            options: list(&rec[4]),
            expected: rec[5].trim().to_string(),
        };
        if case.kind == CaseKind::Mcqa && case.options.len() != 4 {
            bail!("line {line}: MCQA cases need four options");
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn load(path: &Path) -> Result<Vec<Case>> {
    parse(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

pub fn evaluate(case: &Case) -> String {
    match case.kind {
        CaseKind::Title => match_against(&case.raw, &case.truth, &case.aliases, DEFAULT_FUZZY_THRESHOLD)
            .verdict
            .as_str()
            .to_string(),
        CaseKind::Mcqa => parse_mcqa(&case.raw, &case.options)
            .map(|i| option_letter(i).to_string())
            .unwrap_or_else(|| "none".to_string()),
    }
}

pub fn check(cases: &[Case]) -> Vec<Failure> {
    cases
        .iter()
        .filter_map(|c| {
            let got = evaluate(c);
            (got != c.expected).then(|| Failure { case: c.clone(), got })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_corpus_passes() {
        let cases = parse(BUILTIN_CORPUS).unwrap();
        assert!(cases.len() >= 60);
        let failures = check(&cases);
        assert!(failures.is_empty(), "{failures:#?}");
    }

    #[test]
    fn corpus_covers_required_shapes() {
        let cases = parse(BUILTIN_CORPUS).unwrap();
        let has = |f: &dyn Fn(&Case) -> bool| cases.iter().any(f);
        assert!(has(&|c| c.raw.to_lowercase().starts_with("the movie is")));
        assert!(has(&|c| c.raw.starts_with('"')));
        assert!(has(&|c| c.truth.ends_with(" 3") || c.raw.ends_with(" 2")));
        assert!(has(&|c| c.kind == CaseKind::Mcqa && c.raw.starts_with('(')));
        assert!(has(&|c| c.kind == CaseKind::Mcqa && c.expected == "none"));
    }
}
