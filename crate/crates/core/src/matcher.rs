//! Turning free-form model output into a verdict against ground-truth titles.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Movie;

/// Default similarity a non-identical answer needs to count as a fuzzy match.
pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.9;

const ARTICLES: [&str; 3] = ["the", "a", "an"];

/// Answer preambles models put in front of the title. Matched case-insensitively
/// at the start of the answer, longest first.
const BOILERPLATE_PREFIXES: [&str; 22] = [
    "the movie in the images is",
    "the movie in the image is",
    "this frame is from the movie",
    "this image is from the movie",
    "this frame is from",
    "this image is from",
    "these frames are from",
    "the frame is from",
    "the movie shown is",
    "the correct answer is",
    "the movie title is",
    "the answer is",
    "the movie is",
    "the film is",
    "this is from",
    "this is the movie",
    "movie title:",
    "final answer:",
    "answer:",
    "movie:",
    "title:",
    "guess:",
];

const QUOTE_PAIRS: [(char, char); 6] = [
    ('"', '"'),
    ('\'', '\''),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
    ('\u{ab}', '\u{bb}'),
    ('`', '`'),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Exact,
    Alias,
    Fuzzy,
    None,
}

impl Verdict {
    pub fn is_match(self) -> bool {
        !matches!(self, Verdict::None)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Exact => "exact",
            Verdict::Alias => "alias",
            Verdict::Fuzzy => "fuzzy",
            Verdict::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub verdict: Verdict,
    pub similarity: f64,
    pub extracted_candidate: String,
}

impl MatchOutcome {
    pub fn is_match(&self) -> bool {
        self.verdict.is_match()
    }
}

/// Normal form used for every title comparison.
///
/// Case-folds, strips diacritics (NFKD without combining marks), drops a
/// trailing parenthesized four-digit year, removes apostrophes, turns other
/// punctuation into spaces, collapses whitespace and removes leading English
/// articles.
pub fn canonicalize(title: &str) -> String {
    // NFKD can surface uppercase letters and lowercasing can surface marks
    let mut folded = String::from(title);
    loop {
        let next: String = folded
            .to_lowercase()
            .nfkd()
            .filter(|c| !is_combining_mark(*c))
            .collect();
        if next == folded {
            break;
        }
        folded = next;
    }

    let mut rest = folded.trim();
    while let Some(stripped) = strip_trailing_year(rest) {
        rest = stripped;
    }

    let mut spaced = String::with_capacity(rest.len());
    for c in rest.chars() {
        if c.is_alphanumeric() {
            spaced.push(c);
        } else if matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '\u{2bc}') {
            // "schindler's" and "schindlers" compare equal
        } else {
            spaced.push(' ');
        }
    }

    let mut words: Vec<&str> = spaced.split_whitespace().collect();
    while words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

fn strip_trailing_year(s: &str) -> Option<&str> {
    let body = s.strip_suffix(')')?;
    let open = body.rfind('(')?;
    let year = &body[open + 1..];
    if year.len() == 4 && year.bytes().all(|b| b.is_ascii_digit()) {
        let head = body[..open].trim_end();
        if !head.is_empty() {
            return Some(head);
        }
    }
    None
}

/// Pulls the title out of a chatty answer.
///
/// A JSON `movie_title` field anywhere in the text takes precedence. Otherwise
/// the first non-empty line is stripped of markdown emphasis, surrounding
/// quotes, answer preambles and trailing punctuation until nothing changes.
pub fn extract_title(raw_text: &str) -> String {
    if let Some(title) = structured_title(raw_text) {
        return title;
    }
    let trimmed = raw_text.trim();
    let mut lines = trimmed.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut current = match lines.next() {
        Some(first) => {
            // "Answer:\nFrozen" style
            let head = strip_markdown(first);
            if head.ends_with(':') && is_preamble_only(&head) {
                lines.next().unwrap_or(first).to_string()
            } else {
                first.to_string()
            }
        }
        None => return String::new(),
    };
    loop {
        let next = clean_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        trimmed.to_string()
    } else {
        current
    }
}

fn is_preamble_only(line: &str) -> bool {
    let lower = line.to_lowercase();
    BOILERPLATE_PREFIXES
        .iter()
        .any(|p| lower.trim_end_matches(':') == p.trim_end_matches(':'))
}

fn clean_once(s: &str) -> String {
    let s = strip_markdown(s.trim());
    let s = strip_prefix_ci(&s);
    let s = strip_quotes(s.trim());
    s.trim()
        .trim_end_matches(['.', '!', ',', ';', ':'])
        .trim()
        .to_string()
}

fn strip_markdown(s: &str) -> String {
    let s = s.trim_start_matches(['#', '>', '-', '*', ' ']);
    s.chars().filter(|c| !matches!(c, '*' | '_' | '`')).collect()
}

fn strip_prefix_ci(s: &str) -> String {
    strip_any_prefix(s, &BOILERPLATE_PREFIXES)
}

/// Removes the first matching ASCII prefix, case-insensitively, when it ends
/// on a word boundary.
fn strip_any_prefix(s: &str, prefixes: &[&str]) -> String {
    for prefix in prefixes {
        let Some(head) = s.get(..prefix.len()) else {
            continue;
        };
        if !head.eq_ignore_ascii_case(prefix) {
            continue;
        }
        let rest = &s[prefix.len()..];
        if rest.chars().next().is_none_or(|c| !c.is_alphanumeric()) {
            return rest.trim_start_matches([':', ' ', '-']).to_string();
        }
    }
    s.to_string()
}

fn strip_quotes(s: &str) -> &str {
    for (open, close) in QUOTE_PAIRS {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner;
        }
    }
    s
}

fn structured_title(raw: &str) -> Option<String> {
    if !raw.contains("movie_title") {
        return None;
    }
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(&raw[start..=end]).ok()?;
    match value.get("movie_title")? {
        serde_json::Value::String(s) => Some(s.trim().to_string()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[b.len()]
}

/// `1 - distance / max_len`, with two empty strings counting as identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / max_len as f64
}

/// Scores one answer against a movie's title and aliases.
pub fn match_title(raw_text: &str, movie: &Movie, fuzzy_threshold: f64) -> MatchOutcome {
    match_against(raw_text, &movie.title, &movie.aliases, fuzzy_threshold)
}

pub fn match_against(
    raw_text: &str,
    title: &str,
    aliases: &[String],
    fuzzy_threshold: f64,
) -> MatchOutcome {
    let extracted = extract_title(raw_text);
    let candidate = canonicalize(&extracted);
    let outcome = |verdict, similarity| MatchOutcome {
        verdict,
        similarity,
        extracted_candidate: extracted.clone(),
    };
    if candidate.is_empty() {
        return outcome(Verdict::None, 0.0);
    }
    let canon_title = canonicalize(title);
    if candidate == canon_title {
        return outcome(Verdict::Exact, 1.0);
    }
    let canon_aliases: Vec<String> = aliases.iter().map(|a| canonicalize(a)).collect();
    if canon_aliases.contains(&candidate) {
        return outcome(Verdict::Alias, 1.0);
    }
    let best = core::iter::once(&canon_title)
        .chain(canon_aliases.iter())
        .filter(|t| !t.is_empty())
        .map(|t| similarity(&candidate, t))
        .fold(0.0_f64, f64::max);
    if best >= fuzzy_threshold {
        outcome(Verdict::Fuzzy, best)
    } else {
        outcome(Verdict::None, best)
    }
}

/// Option letter for a 0-based MCQA index.
pub fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Maps an MCQA answer onto one of the four options.
///
/// Accepts a bare letter, a letter followed by a delimiter and optional text
/// ("B. Frozen", "(B)"), or the option text alone.
pub fn parse_mcqa(raw_text: &str, options: &[String]) -> Option<usize> {
    let n = options.len();
    let cleaned = strip_quotes(strip_markdown(raw_text.trim()).trim()).trim().to_string();
    let body = strip_mcqa_preamble(&cleaned);
    let body = body.trim().trim_end_matches(['.', '!', ',', ';']).trim();

    let letter_index = |c: char| -> Option<usize> {
        let idx = (c.to_ascii_uppercase() as u32).checked_sub('A' as u32)? as usize;
        (c.is_ascii_alphabetic() && idx < n).then_some(idx)
    };

    let mut chars = body.chars();
    let first = chars.next()?;
    // "(B)" or "[B]"
    if matches!(first, '(' | '[') {
        let mut rest = chars.clone();
        if let (Some(c), Some(close)) = (rest.next(), rest.next()) {
            if matches!(close, ')' | ']') {
                if let Some(i) = letter_index(c) {
                    return Some(i);
                }
            }
        }
    }
    let after = chars.as_str();
    if let Some(idx) = letter_index(first) {
        if after.is_empty() {
            return Some(idx);
        }
        if after.starts_with(['.', ')', ':', ']']) {
            return Some(idx);
        }
    }

    // text answers: exact canonical match wins, then "B Frozen" with matching text
    let canon_body = canonicalize(body);
    let canon_opts: Vec<String> = options.iter().map(|o| canonicalize(o)).collect();
    if let Some(i) = canon_opts.iter().position(|o| !o.is_empty() && *o == canon_body) {
        return Some(i);
    }
    if let Some(idx) = letter_index(first) {
        if after.starts_with(' ') && canonicalize(after) == canon_opts[idx] {
            return Some(idx);
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, opt) in canon_opts.iter().enumerate() {
        if opt.is_empty() {
            continue;
        }
        let sim = similarity(&canon_body, opt);
        if sim >= DEFAULT_FUZZY_THRESHOLD && best.is_none_or(|(_, s)| sim > s) {
            best = Some((i, sim));
        }
    }
    best.map(|(i, _)| i)
}

fn strip_mcqa_preamble(s: &str) -> String {
    strip_any_prefix(
        s,
        &[
            "the correct answer is",
            "the answer is",
            "final answer:",
            "answer:",
            "option",
        ],
    )
}
