//! Exact-match and partial-match scoring, micro-averaged over a corpus.
//!
//! Partial match compares every prediction with every gold answer through the
//! longest common *contiguous* run of normalized tokens. A prediction keeps
//! its best retrieved score over all golds, a gold keeps its best relevant
//! score over all predictions, and the sums are pooled across questions before
//! dividing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::model::{normalize, normalized_tokens, AnswerSet, PredictionSet};

/// Unit over which partial-match overlap is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LcsMode {
    #[default]
    Token,
    /// Characters of the normalized string; diagnostics only.
    Char,
}

/// Length of the longest common contiguous run of `a` and `b`.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Retrieved/relevant overlap of one prediction against one gold answer,
/// kept as integer parts so the ratios stay exact until the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialScorePair {
    pub lcs: usize,
    pub pred_len: usize,
    pub gold_len: usize,
}

impl PartialScorePair {
    /// lcs / len(pred); 0 for an empty prediction.
    pub fn retrieved(&self) -> f64 {
        ratio(self.lcs, self.pred_len)
    }

    /// lcs / len(gold); 0 for an empty gold.
    pub fn relevant(&self) -> f64 {
        ratio(self.lcs, self.gold_len)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// A span prepared for scoring: normalized text plus the units LCS runs over.
#[derive(Debug, Clone)]
struct Prepared {
    norm: String,
    units: Vec<String>,
}

impl Prepared {
    fn new(text: &str, mode: LcsMode) -> Self {
        match mode {
            LcsMode::Token => {
                let units = normalized_tokens(text);
                Self { norm: units.join(" "), units }
            }
            LcsMode::Char => {
                let norm = normalize(text);
                let units = norm.chars().map(String::from).collect();
                Self { norm, units }
            }
        }
    }

    fn pair(&self, gold: &Prepared) -> PartialScorePair {
        if self.units.is_empty() || gold.units.is_empty() {
            return PartialScorePair { lcs: 0, pred_len: 0, gold_len: 0 };
        }
        PartialScorePair {
            lcs: lcs_len(&self.units, &gold.units),
            pred_len: self.units.len(),
            gold_len: gold.units.len(),
        }
    }
}

/// Partial scores of a prediction text against a gold text. Either side
/// empty after normalization yields (0, 0).
pub fn partial_scores(pred: &str, gold: &str, mode: LcsMode) -> PartialScorePair {
    Prepared::new(pred, mode).pair(&Prepared::new(gold, mode))
}

/// Per-question numerators and denominators.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionScore {
    pub em_matched_pairs: usize,
    pub n_pred: usize,
    pub m_gold: usize,
    pub pm_ret_sum: f64,
    pub pm_rel_sum: f64,
    /// Predictions that normalized to nothing and were scored (0, 0).
    pub empty_predictions: usize,
}

impl Add for QuestionScore {
    type Output = QuestionScore;

    fn add(self, o: QuestionScore) -> QuestionScore {
        QuestionScore {
            em_matched_pairs: self.em_matched_pairs + o.em_matched_pairs,
            n_pred: self.n_pred + o.n_pred,
            m_gold: self.m_gold + o.m_gold,
            pm_ret_sum: self.pm_ret_sum + o.pm_ret_sum,
            pm_rel_sum: self.pm_rel_sum + o.pm_rel_sum,
            empty_predictions: self.empty_predictions + o.empty_predictions,
        }
    }
}

impl Sum for QuestionScore {
    fn sum<I: Iterator<Item = QuestionScore>>(iter: I) -> Self {
        iter.fold(QuestionScore::default(), Add::add)
    }
}

impl<'a> Sum<&'a QuestionScore> for QuestionScore {
    fn sum<I: Iterator<Item = &'a QuestionScore>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

/// Scores one question's predictions against its gold set.
///
/// Exact-match pairs are a maximum one-to-one matching on normalized text, so
/// a repeated prediction can match a gold answer only once.
pub fn score_question(preds: &PredictionSet, gold: &AnswerSet, mode: LcsMode) -> QuestionScore {
    score_texts(preds.texts(), gold.texts(), mode)
}

/// [`score_question`] over plain text iterators.
pub fn score_texts<'a, 'b>(
    preds: impl IntoIterator<Item = &'a str>,
    golds: impl IntoIterator<Item = &'b str>,
    mode: LcsMode,
) -> QuestionScore {
    let preds: Vec<Prepared> = preds.into_iter().map(|t| Prepared::new(t, mode)).collect();
    let golds: Vec<Prepared> = golds.into_iter().map(|t| Prepared::new(t, mode)).collect();

    // Maximum one-to-one matching under text equality is the multiset
    // intersection of the normalized texts.
    let mut pred_counts: HashMap<&str, usize> = HashMap::new();
    for p in preds.iter().filter(|p| !p.units.is_empty()) {
        *pred_counts.entry(p.norm.as_str()).or_default() += 1;
    }
    let mut em_matched_pairs = 0;
    for g in golds.iter().filter(|g| !g.units.is_empty()) {
        if let Some(c) = pred_counts.get_mut(g.norm.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            em_matched_pairs += 1;
        }
    }

    let mut ret_best = vec![0.0f64; preds.len()];
    let mut rel_best = vec![0.0f64; golds.len()];
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in golds.iter().enumerate() {
            let pair = p.pair(g);
            ret_best[i] = ret_best[i].max(pair.retrieved());
            rel_best[j] = rel_best[j].max(pair.relevant());
        }
    }

    QuestionScore {
        em_matched_pairs,
        n_pred: preds.len(),
        m_gold: golds.len(),
        pm_ret_sum: ret_best.iter().sum(),
        pm_rel_sum: rel_best.iter().sum(),
        empty_predictions: preds.iter().filter(|p| p.units.is_empty()).count(),
    }
}

/// Precision, recall and F1 as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_sums(matched_for_p: f64, n_pred: usize, matched_for_r: f64, m_gold: usize) -> Self {
        let p = if n_pred == 0 { 0.0 } else { 100.0 * matched_for_p / n_pred as f64 };
        let r = if m_gold == 0 { 0.0 } else { 100.0 * matched_for_r / m_gold as f64 };
        Self { precision: p, recall: r, f1: harmonic(p, r) }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Micro-averaged EM and PM scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub em: Prf,
    pub pm: Prf,
    pub questions: usize,
    pub predictions: usize,
    pub golds: usize,
}

impl ScoreReport {
    pub fn from_totals(t: &QuestionScore, questions: usize) -> Self {
        Self {
            em: Prf::from_sums(t.em_matched_pairs as f64, t.n_pred, t.em_matched_pairs as f64, t.m_gold),
            pm: Prf::from_sums(t.pm_ret_sum, t.n_pred, t.pm_rel_sum, t.m_gold),
            questions,
            predictions: t.n_pred,
            golds: t.m_gold,
        }
    }
}

/// Pools per-question numerators and denominators, then divides.
pub fn corpus_report(scores: &[QuestionScore]) -> ScoreReport {
    let totals: QuestionScore = scores.iter().sum();
    ScoreReport::from_totals(&totals, scores.len())
}

/// Aligned text table in the EM P/R/F1 | PM P/R/F1 layout.
pub fn render_score_table(rows: &[(String, ScoreReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<name_w$} | {:^23} | {:^23}", "", "EM", "PM");
    let _ = writeln!(out, "{:<name_w$} | {:>7}{:>8}{:>8} | {:>7}{:>8}{:>8}", "Model", "P", "R", "F1", "P", "R", "F1");
    let _ = writeln!(out, "{}", "-".repeat(name_w + 54));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>7.2}{:>8.2}{:>8.2} | {:>7.2}{:>8.2}{:>8.2}",
            name, r.em.precision, r.em.recall, r.em.f1, r.pm.precision, r.pm.recall, r.pm.f1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn lcs_examples() {
        let a = toks("a b c d e");
        assert_eq!(lcs_len(&a, &a), 5);
        assert_eq!(lcs_len(&toks("official language"), &toks("official languages of puerto rico")), 1);
        assert_eq!(lcs_len(&toks("x y"), &toks("p q r")), 0);
        assert_eq!(lcs_len::<&str>(&[], &a), 0);
        // contiguous, not subsequence
        assert_eq!(lcs_len(&toks("a x b"), &toks("a b")), 1);
    }

    #[test]
    fn partial_score_examples() {
        let p = partial_scores("English", "English", LcsMode::Token);
        assert_eq!((p.retrieved(), p.relevant()), (1.0, 1.0));
        let p = partial_scores("official language", "official languages of puerto rico", LcsMode::Token);
        assert_eq!((p.retrieved(), p.relevant()), (0.5, 0.2));
        let p = partial_scores("x y", "w x y z", LcsMode::Token);
        assert_eq!((p.retrieved(), p.relevant()), (1.0, 0.5));
        let p = partial_scores("the", "a b", LcsMode::Token);
        assert_eq!((p.retrieved(), p.relevant()), (0.0, 0.0));
    }

    #[test]
    fn char_mode_counts_characters() {
        let p = partial_scores("language", "languages", LcsMode::Char);
        assert_eq!(p.lcs, 8);
        assert_eq!(p.pred_len, 8);
        assert_eq!(p.gold_len, 9);
    }

    #[test]
    fn score_question_examples() {
        let s = score_texts(["English", "French"], ["English", "French"], LcsMode::Token);
        assert_eq!((s.em_matched_pairs, s.pm_ret_sum, s.pm_rel_sum), (2, 2.0, 2.0));

        let s = score_texts(["English"], ["English", "French"], LcsMode::Token);
        assert_eq!((s.em_matched_pairs, s.pm_ret_sum, s.pm_rel_sum), (1, 1.0, 1.0));

        let s = score_texts(["English", "English"], ["English"], LcsMode::Token);
        assert_eq!((s.em_matched_pairs, s.n_pred, s.m_gold), (1, 2, 1));
        assert_eq!((s.pm_ret_sum, s.pm_rel_sum), (2.0, 1.0));

        let s = score_texts(std::iter::empty(), ["English"], LcsMode::Token);
        assert_eq!((s.em_matched_pairs, s.n_pred, s.pm_ret_sum), (0, 0, 0.0));
    }

    #[test]
    fn empty_prediction_never_exact_matches() {
        let s = score_texts(["the", "."], ["English"], LcsMode::Token);
        assert_eq!(s.em_matched_pairs, 0);
        assert_eq!(s.empty_predictions, 2);
        assert_eq!(s.pm_ret_sum, 0.0);
    }

    #[test]
    fn corpus_report_examples() {
        let perfect = score_texts(["p", "q"], ["p", "q"], LcsMode::Token);
        let r = corpus_report(&[perfect, perfect]);
        for v in [r.em.precision, r.em.recall, r.em.f1, r.pm.precision, r.pm.recall, r.pm.f1] {
            assert_eq!(v, 100.0);
        }

        let dup = score_texts(["English", "English"], ["English"], LcsMode::Token);
        let r = corpus_report(&[dup]);
        assert_eq!(r.em.precision, 50.0);
        assert_eq!(r.em.recall, 100.0);
        assert!((r.em.f1 - 66.666_666).abs() < 1e-4);
        assert_eq!((r.pm.precision, r.pm.recall, r.pm.f1), (100.0, 100.0, 100.0));

        let one = score_texts(["x"], ["x"], LcsMode::Token);
        let none = score_texts(std::iter::empty(), ["y"], LcsMode::Token);
        let r = corpus_report(&[one, none]);
        assert_eq!((r.em.precision, r.em.recall), (100.0, 50.0));
        assert!((r.em.f1 - 66.666_666).abs() < 1e-4);
    }

    #[test]
    fn no_predictions_anywhere_is_zero_not_nan() {
        let r = corpus_report(&[score_texts(std::iter::empty(), ["y"], LcsMode::Token)]);
        assert_eq!(r.em, Prf::default());
        assert_eq!(r.pm, Prf::default());
        assert_eq!(corpus_report(&[]).em.f1, 0.0);
    }

    #[test]
    fn table_layout() {
        let r = corpus_report(&[score_texts(["English", "English"], ["English"], LcsMode::Token)]);
        let t = render_score_table(&[("dup".to_owned(), r)]);
        assert!(t.contains("  50.00  100.00   66.67 |  100.00  100.00  100.00"), "{t}");
    }
}
