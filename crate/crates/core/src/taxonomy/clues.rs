//! Lexicon-driven clue-word detection for the automatic recall stage.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use super::{Clue, ClueType};
use crate::error::TaxonomyError;
use crate::model::{Instance, TokenizedText};

const DEFAULT_LEXICON: &str = include_str!("../../data/clues.tsv");

/// Tokens after which a bare digit string quantifies the answer set
/// ("which 2 players", "the 3 largest").
const NUMERAL_DETERMINERS: [&str; 9] = ["the", "which", "what", "these", "those", "top", "name", "list", "all"];

/// Tokens that may precede a regular `-est` superlative.
const SUPERLATIVE_DETERMINERS: [&str; 8] = ["the", "its", "their", "his", "her", "our", "your", "whose"];

/// `-est` words that are not superlatives.
const NOT_SUPERLATIVE: [&str; 24] = [
    "interest", "forest", "contest", "request", "protest", "harvest", "conquest", "arrest", "suggest", "manifest",
    "honest", "modest", "guest", "chest", "crest", "quest", "nest", "rest", "test", "west", "midwest", "pest",
    "digest", "invest",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Clue(ClueType),
    /// Clue hits lying entirely inside the pattern are discarded.
    Stop,
    /// Any match discards every cardinal hit in the question.
    StopCardinal,
}

#[derive(Debug, Clone)]
struct Entry {
    surface: Vec<String>,
    kind: EntryKind,
}

/// Editable word → clue-type table.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<Entry>,
}

impl Lexicon {
    /// Parses `surface<TAB>type` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (surface, ty) = line
                .split_once('\t')
                .ok_or_else(|| TaxonomyError::Lexicon { line: line_no, message: "expected surface<TAB>type".into() })?;
            let surface: Vec<String> = surface.split_whitespace().map(clean_token).collect();
            if surface.is_empty() || surface.iter().any(String::is_empty) {
                return Err(TaxonomyError::Lexicon { line: line_no, message: "empty surface".into() });
            }
            let kind = match ty.trim() {
                "stop" => EntryKind::Stop,
                "stop_cardinal" => EntryKind::StopCardinal,
                other => {
                    EntryKind::Clue(other.parse().map_err(|message| TaxonomyError::Lexicon { line: line_no, message })?)
                }
            };
            entries.push(Entry { surface, kind });
        }
        Ok(Self { entries })
    }

    /// The shipped lexicon.
    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon parses"))
    }

    /// Raw text of the shipped lexicon, for users who want to edit a copy.
    pub fn builtin_source() -> &'static str {
        DEFAULT_LEXICON
    }

    /// Also treat the conjunction "and" as an other-semantics clue.
    pub fn with_and_clue(mut self) -> Self {
        self.entries.push(Entry { surface: vec!["and".into()], kind: EntryKind::Clue(ClueType::OtherSemantics) });
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn matches(&self, cleaned: &[String]) -> Vec<(Range<usize>, EntryKind)> {
        let mut out = Vec::new();
        for start in 0..cleaned.len() {
            for e in &self.entries {
                let end = start + e.surface.len();
                if end <= cleaned.len() && cleaned[start..end] == e.surface[..] {
                    out.push((start..end, e.kind));
                }
            }
        }
        out
    }
}

/// One detected clue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClueHit {
    pub tokens: Range<usize>,
    #[serde(rename = "type")]
    pub clue_type: ClueType,
    pub text: String,
}

impl From<ClueHit> for Clue {
    fn from(h: ClueHit) -> Clue {
        Clue { clue_type: h.clue_type, tokens: Some(h.tokens), text: Some(h.text) }
    }
}

/// Lowercased token with leading/trailing non-alphanumerics trimmed.
fn clean_token(tok: &str) -> String {
    tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn digit_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d+|\d{1,3}(,\d{3})+)$").unwrap())
}

fn ordinal_numeral_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d+(st|nd|rd|th)$").unwrap())
}

fn rule_hits(cleaned: &[String]) -> Vec<(Range<usize>, ClueType)> {
    let mut hits = Vec::new();
    for (i, tok) in cleaned.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| cleaned[p].as_str());
        let next = cleaned.get(i + 1).map(String::as_str);
        if digit_re().is_match(tok) && prev.is_some_and(|p| NUMERAL_DETERMINERS.contains(&p)) {
            hits.push((i..i + 1, ClueType::Cardinal));
        } else if ordinal_numeral_re().is_match(tok) {
            hits.push((i..i + 1, ClueType::Ordinal));
        } else if tok.len() >= 5
            && tok.ends_with("est")
            && tok.chars().all(char::is_alphabetic)
            && !NOT_SUPERLATIVE.contains(&tok.as_str())
            && prev.is_some_and(|p| SUPERLATIVE_DETERMINERS.contains(&p) || p.ends_with("'s"))
        {
            hits.push((i..i + 1, ClueType::CompSuper));
        } else if tok.len() >= 4 && tok.ends_with("er") && tok.chars().all(char::is_alphabetic) && next == Some("than")
        {
            hits.push((i..i + 1, ClueType::CompSuper));
        }
    }
    hits
}

/// Finds clue words in a question.
///
/// Hits come from the lexicon plus a few shape rules: bare digits after a
/// determiner or wh-word are cardinals, `1st`/`2nd`-style tokens are ordinals,
/// `-est` after a determiner and `-er` before "than" are comparatives or
/// superlatives. Hits inside a `stop` pattern are dropped, a `stop_cardinal`
/// pattern ("how many") drops all cardinal hits, and overlapping hits resolve
/// leftmost-longest. The result is sorted and pairwise disjoint.
pub fn detect_clue_words(question: &TokenizedText, lexicon: &Lexicon) -> Vec<ClueHit> {
    let cleaned: Vec<String> = question.tokens().iter().map(|t| clean_token(t)).collect();
    let mut candidates: Vec<(Range<usize>, ClueType)> = Vec::new();
    let mut stops: Vec<Range<usize>> = Vec::new();
    let mut suppress_cardinal = false;
    for (range, kind) in lexicon.matches(&cleaned) {
        match kind {
            EntryKind::Clue(t) => candidates.push((range, t)),
            EntryKind::Stop => stops.push(range),
            EntryKind::StopCardinal => {
                suppress_cardinal = true;
                stops.push(range);
            }
        }
    }
    candidates.extend(rule_hits(&cleaned));
    candidates.retain(|(r, t)| {
        !(suppress_cardinal && *t == ClueType::Cardinal) && !stops.iter().any(|s| s.start <= r.start && r.end <= s.end)
    });
    candidates.sort_by(|(a, ta), (b, tb)| a.start.cmp(&b.start).then(b.end.cmp(&a.end)).then(ta.cmp(tb)));

    let mut hits: Vec<ClueHit> = Vec::new();
    for (range, clue_type) in candidates {
        if hits.last().is_some_and(|h| h.tokens.end > range.start) {
            continue;
        }
        let text = question
            .token_slice(range.clone())
            .unwrap_or_default()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_owned();
        hits.push(ClueHit { tokens: range, clue_type, text });
    }
    hits
}

/// Splits a corpus into instances with at least one detected clue word
/// (recalled for quick verification) and the rest (full manual annotation).
pub fn recall_stage1<'a>(corpus: &'a [Instance], lexicon: &Lexicon) -> (Vec<&'a Instance>, Vec<&'a Instance>) {
    corpus.iter().partition(|inst| !detect_clue_words(&inst.question, lexicon).is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenize;

    fn detect(q: &str) -> Vec<(String, ClueType)> {
        detect_clue_words(&tokenize(q), Lexicon::builtin()).into_iter().map(|h| (h.text, h.clue_type)).collect()
    }

    fn one(text: &str, t: ClueType) -> Vec<(String, ClueType)> {
        vec![(text.to_owned(), t)]
    }

    #[test]
    fn clue_type_examples() {
        assert_eq!(detect("Which two players completed 1-yard TD pass?"), one("two", ClueType::Cardinal));
        assert_eq!(detect("Who scored the first touchdown of the game?"), one("first", ClueType::Ordinal));
        assert_eq!(detect("What's the largest pizza chain in America?"), one("largest", ClueType::CompSuper));
        assert_eq!(detect("Is San Juan Bautista incorporated or unincorporated?"), one("or", ClueType::Alternative));
        assert_eq!(
            detect("What are the first names of the trio who try to call 911?"),
            one("trio", ClueType::OtherSemantics)
        );
    }

    #[test]
    fn questions_without_clue_words() {
        assert!(detect("1 light year equal to how many km?").is_empty());
        assert!(detect("Which countries does the Danube River flow through?").is_empty());
        assert!(detect("Who won Super Bowl XXXIX?").is_empty());
        assert!(detect("").is_empty());
    }

    #[test]
    fn official_languages_cardinal() {
        assert_eq!(detect("What are the two official languages of Puerto Rico?"), one("two", ClueType::Cardinal));
    }

    #[test]
    fn multi_token_and_stop_patterns() {
        assert_eq!(
            detect("What is the first name of the person who shot Tom?"),
            one("name of the person", ClueType::OtherSemantics)
        );
        assert_eq!(detect("What is the last name of the victim?"), vec![]);
    }

    #[test]
    fn digit_and_suffix_rules() {
        assert_eq!(detect("Which 3 cities hosted?"), one("3", ClueType::Cardinal));
        assert_eq!(detect("Who scored in the 2nd quarter?"), one("2nd", ClueType::Ordinal));
        assert_eq!(detect("Who kicked the shortest field goal?"), one("shortest", ClueType::CompSuper));
        assert_eq!(detect("Which team was stronger than Dallas?"), one("stronger", ClueType::CompSuper));
        assert!(detect("Who won in 1999?").is_empty());
        assert!(detect("Which states are in the west?").is_empty());
        assert!(detect("How many 2 point conversions were there?").is_empty());
    }

    #[test]
    fn multiple_types_in_one_question() {
        let hits = detect("Which happened first, the war or the treaty?");
        assert_eq!(hits, vec![("first".into(), ClueType::Ordinal), ("or".into(), ClueType::Alternative)]);
    }

    #[test]
    fn and_toggle() {
        let q = tokenize("Who played drums and guitar?");
        assert!(detect_clue_words(&q, Lexicon::builtin()).is_empty());
        let lex = Lexicon::builtin().clone().with_and_clue();
        assert_eq!(detect_clue_words(&q, &lex)[0].clue_type, ClueType::OtherSemantics);
    }

    #[test]
    fn lexicon_parse_errors_name_the_line() {
        let e = Lexicon::parse("two\tcardinal\nfoo bar\n").unwrap_err();
        assert_eq!(e, TaxonomyError::Lexicon { line: 2, message: "expected surface<TAB>type".into() });
        let e = Lexicon::parse("# c\n\nthree\tplural\n").unwrap_err();
        assert!(matches!(e, TaxonomyError::Lexicon { line: 3, .. }));
        let lex = Lexicon::parse("seven wonders\tcardinal\n").unwrap();
        let hits = detect_clue_words(&tokenize("List the seven wonders!"), &lex);
        assert_eq!(hits[0].tokens, 2..4);
    }
}
