//! Corpus analyses: taxonomy and clue-type distributions, answer-count
//! cross-tabs, corpus statistics and per-type metric breakdowns.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::metrics::{score_question, LcsMode, QuestionScore, ScoreReport};
use crate::model::{Dataset, Instance, PredictionSet};
use crate::taxonomy::{ClueType, LabelKind, TaxonomyLabel};

/// Type of a labeled instance, with question-dependent split by clue words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    PassageDependent,
    WithClue,
    WithoutClue,
    BadAnnotation,
    Unlabeled,
}

impl Stratum {
    pub fn of(label: Option<&TaxonomyLabel>) -> Self {
        match label {
            None => Stratum::Unlabeled,
            Some(l) => match l.kind {
                LabelKind::PassageDependent => Stratum::PassageDependent,
                LabelKind::BadAnnotation => Stratum::BadAnnotation,
                LabelKind::QuestionDependent if l.has_clue_words() => Stratum::WithClue,
                LabelKind::QuestionDependent => Stratum::WithoutClue,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Types,
    Clues,
    Counts,
}

/// One row: counts per column within a scope (the row's population).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistRow {
    pub label: String,
    pub scope: usize,
    pub counts: Vec<usize>,
}

impl DistRow {
    pub fn percent(&self, col: usize) -> f64 {
        if self.scope == 0 {
            0.0
        } else {
            100.0 * self.counts[col] as f64 / self.scope as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistributionTable {
    pub title: String,
    pub row_header: String,
    pub columns: Vec<String>,
    /// When set, the scope is shown as its own leading column under this name.
    pub scope_column: Option<String>,
    /// Whether cells show a percentage of the row scope.
    pub percentages: bool,
    pub rows: Vec<DistRow>,
}

fn datasets_in(corpus: &[Instance]) -> Vec<Dataset> {
    corpus.iter().map(|i| i.dataset).collect::<BTreeSet<_>>().into_iter().collect()
}

fn clue_types_of(inst: &Instance) -> BTreeSet<ClueType> {
    inst.taxonomy.as_ref().map(|l| l.clues.iter().map(|c| c.clue_type).collect()).unwrap_or_default()
}

fn type_row(label: String, insts: &[&Instance]) -> DistRow {
    let mut counts = vec![0; 6];
    for inst in insts {
        match Stratum::of(inst.taxonomy.as_ref()) {
            Stratum::PassageDependent => counts[0] += 1,
            Stratum::WithClue => {
                counts[1] += 1;
                counts[2] += 1
            }
            Stratum::WithoutClue => {
                counts[1] += 1;
                counts[3] += 1
            }
            Stratum::BadAnnotation => counts[4] += 1,
            Stratum::Unlabeled => counts[5] += 1,
        }
    }
    DistRow { label, scope: insts.len(), counts }
}

fn clue_row(label: String, insts: &[&Instance]) -> DistRow {
    let with_clue: Vec<&&Instance> =
        insts.iter().filter(|i| Stratum::of(i.taxonomy.as_ref()) == Stratum::WithClue).collect();
    let mut counts = vec![0; ClueType::ALL.len()];
    for inst in &with_clue {
        for t in clue_types_of(inst) {
            counts[ClueType::ALL.iter().position(|x| *x == t).unwrap()] += 1;
        }
    }
    DistRow { label, scope: with_clue.len(), counts }
}

/// Answer-count bucket label: 1, 2, 3 or >3.
pub fn count_bucket(n: usize) -> usize {
    n.clamp(1, 4) - 1
}

pub const BUCKETS: [&str; 4] = ["1", "2", "3", ">3"];

/// Per-dataset rows plus a total row. Instances without labels land in an
/// explicit "unlabeled" column (types) rather than being dropped.
pub fn distribution(corpus: &[Instance], dim: Dimension) -> Vec<DistributionTable> {
    let datasets = datasets_in(corpus);
    let all: Vec<&Instance> = corpus.iter().collect();
    let per_dataset = |d: Dataset| corpus.iter().filter(|i| i.dataset == d).collect::<Vec<_>>();
    match dim {
        Dimension::Types => {
            let mut rows: Vec<DistRow> = datasets.iter().map(|d| type_row(d.to_string(), &per_dataset(*d))).collect();
            rows.push(type_row("Total".into(), &all));
            vec![DistributionTable {
                title: "Instance types".into(),
                row_header: "Dataset".into(),
                columns: [
                    "passage_dependent",
                    "question_dependent",
                    "with_clue",
                    "without_clue",
                    "bad_annotation",
                    "unlabeled",
                ]
                .map(String::from)
                .to_vec(),
                scope_column: None,
                percentages: true,
                rows,
            }]
        }
        Dimension::Clues => {
            let mut rows: Vec<DistRow> = datasets.iter().map(|d| clue_row(d.to_string(), &per_dataset(*d))).collect();
            rows.push(clue_row("Total".into(), &all));
            vec![DistributionTable {
                title: "Clue word types (a question may have several)".into(),
                row_header: "Dataset".into(),
                columns: ClueType::ALL.iter().map(|t| t.as_str().to_owned()).collect(),
                scope_column: Some("with_clue".into()),
                percentages: true,
                rows,
            }]
        }
        Dimension::Counts => {
            let mut tables = Vec::new();
            for d in &datasets {
                let insts = per_dataset(*d);
                let mut by_type = vec![vec![0usize; 5]; 4];
                let mut by_clue = vec![vec![0usize; ClueType::ALL.len()]; 4];
                for inst in &insts {
                    let b = count_bucket(inst.gold.len());
                    let col = match Stratum::of(inst.taxonomy.as_ref()) {
                        Stratum::PassageDependent => 0,
                        Stratum::WithClue => 1,
                        Stratum::WithoutClue => 2,
                        Stratum::BadAnnotation => 3,
                        Stratum::Unlabeled => 4,
                    };
                    by_type[b][col] += 1;
                    if col == 1 {
                        for t in clue_types_of(inst) {
                            by_clue[b][ClueType::ALL.iter().position(|x| *x == t).unwrap()] += 1;
                        }
                    }
                }
                let rows = |m: Vec<Vec<usize>>, scope: fn(&[usize]) -> usize| {
                    m.into_iter()
                        .zip(BUCKETS)
                        .map(|(counts, b)| DistRow { label: b.into(), scope: scope(&counts), counts })
                        .collect::<Vec<_>>()
                };
                tables.push(DistributionTable {
                    title: format!("{d}: types by number of answers"),
                    row_header: "#Ans".into(),
                    columns: ["passage_dependent", "with_clue", "without_clue", "bad_annotation", "unlabeled"]
                        .map(String::from)
                        .to_vec(),
                    scope_column: None,
                    percentages: false,
                    rows: rows(by_type, |c| c.iter().sum()),
                });
                tables.push(DistributionTable {
                    title: format!("{d}: clue types by number of answers"),
                    row_header: "#Ans".into(),
                    columns: ClueType::ALL.iter().map(|t| t.as_str().to_owned()).collect(),
                    scope_column: None,
                    percentages: false,
                    rows: rows(by_clue, |c| c.iter().sum()),
                });
            }
            tables
        }
    }
}

fn cell(row: &DistRow, col: usize, percentages: bool) -> String {
    if percentages {
        format!("{} ({:.1}%)", row.counts[col], row.percent(col))
    } else {
        row.counts[col].to_string()
    }
}

fn headers(t: &DistributionTable) -> Vec<String> {
    let mut h = vec![t.row_header.clone()];
    h.extend(t.scope_column.clone());
    h.extend(t.columns.iter().cloned());
    h
}

fn cells(t: &DistributionTable, row: &DistRow) -> Vec<String> {
    let mut c = vec![row.label.clone()];
    if t.scope_column.is_some() {
        c.push(row.scope.to_string());
    }
    c.extend((0..t.columns.len()).map(|i| cell(row, i, t.percentages)));
    c
}

fn aligned(header: &[String], body: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| body.iter().map(|r| r[i].chars().count()).chain([header[i].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[0]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_owned()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(header));
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for r in body {
        let _ = writeln!(out, "{}", line(r));
    }
    out
}

pub fn render_table_text(t: &DistributionTable) -> String {
    let body: Vec<Vec<String>> = t.rows.iter().map(|r| cells(t, r)).collect();
    format!("{}\n{}", t.title, aligned(&headers(t), &body))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// CSV with raw counts, plus a `<column>_pct` column per count when the table
/// carries percentages.
pub fn render_table_csv(t: &DistributionTable) -> String {
    let mut header = vec!["table".to_owned(), t.row_header.clone(), "scope".to_owned()];
    for c in &t.columns {
        header.push(c.clone());
        if t.percentages {
            header.push(format!("{c}_pct"));
        }
    }
    let mut out = header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",") + "\n";
    for r in &t.rows {
        let mut f = vec![t.title.clone(), r.label.clone(), r.scope.to_string()];
        for i in 0..t.columns.len() {
            f.push(r.counts[i].to_string());
            if t.percentages {
                f.push(format!("{:.1}", r.percent(i)));
            }
        }
        out += &(f.iter().map(|x| csv_field(x)).collect::<Vec<_>>().join(",") + "\n");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub multi_answer_instances: usize,
    /// Means in whitespace tokens; absent for an empty corpus.
    pub mean_question_len: Option<f64>,
    pub mean_context_len: Option<f64>,
    pub mean_answer_len: Option<f64>,
    pub mean_answers: Option<f64>,
    pub mean_answers_multi: Option<f64>,
    /// Mean token gap between consecutive answers (end of one to start of the
    /// next, in passage order), pooled over multi-answer instances whose
    /// answers are all grounded. Absent when there is no such pair.
    pub mean_distance: Option<f64>,
    pub distance_pairs: usize,
    /// Multi-answer instances left out of the distance mean for lacking
    /// grounded offsets.
    pub distance_excluded: usize,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

pub fn corpus_stats(corpus: &[Instance]) -> CorpusStats {
    let n = corpus.len();
    let multi: Vec<&Instance> = corpus.iter().filter(|i| i.is_multi_answer()).collect();
    let answers: Vec<usize> =
        corpus.iter().flat_map(|i| i.gold.texts().map(|t| t.split_whitespace().count())).collect();
    let mut gap_sum = 0usize;
    let mut pairs = 0usize;
    let mut excluded = 0usize;
    for inst in &multi {
        let ranges: Option<Vec<_>> = inst.gold.spans().iter().map(|s| s.token_range.clone()).collect();
        let Some(mut ranges) = ranges else {
            excluded += 1;
            continue;
        };
        ranges.sort_by_key(|r| (r.start, r.end));
        for w in ranges.windows(2) {
            gap_sum += w[1].start.saturating_sub(w[0].end);
            pairs += 1;
        }
    }
    CorpusStats {
        instances: n,
        multi_answer_instances: multi.len(),
        mean_question_len: mean(corpus.iter().map(|i| i.question.len()).sum::<usize>() as f64, n),
        mean_context_len: mean(corpus.iter().map(|i| i.passage.len()).sum::<usize>() as f64, n),
        mean_answer_len: mean(answers.iter().sum::<usize>() as f64, answers.len()),
        mean_answers: mean(answers.len() as f64, n),
        mean_answers_multi: mean(multi.iter().map(|i| i.gold.len()).sum::<usize>() as f64, multi.len()),
        mean_distance: mean(gap_sum as f64, pairs),
        distance_pairs: pairs,
        distance_excluded: excluded,
    }
}

type StatGetter = fn(&CorpusStats) -> Option<f64>;

const STAT_ROWS: [(&str, StatGetter); 6] = [
    ("Length of question", |s| s.mean_question_len),
    ("Length of context", |s| s.mean_context_len),
    ("Length of answer", |s| s.mean_answer_len),
    ("#Answers", |s| s.mean_answers),
    ("#Answers (multi)", |s| s.mean_answers_multi),
    ("Distance between answers", |s| s.mean_distance),
];

/// Stats table with one column per dataset (plus "All" when several).
pub fn render_stats_text(columns: &[(String, CorpusStats)]) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.1}"));
    let mut header = vec!["Statistic".to_owned()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    let mut body: Vec<Vec<String>> = vec![{
        let mut r = vec!["Instances".to_owned()];
        r.extend(columns.iter().map(|(_, s)| s.instances.to_string()));
        r
    }];
    for (name, get) in STAT_ROWS {
        let mut r = vec![name.to_owned()];
        r.extend(columns.iter().map(|(_, s)| fmt(get(s))));
        body.push(r);
    }
    aligned(&header, &body)
}

/// Same layout as [`render_stats_text`] with unrounded values; empty cells
/// for absent means.
pub fn render_stats_csv(columns: &[(String, CorpusStats)]) -> String {
    let mut out = String::from("statistic");
    for (name, _) in columns {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push_str("\ninstances");
    for (_, s) in columns {
        out.push_str(&format!(",{}", s.instances));
    }
    out.push('\n');
    for (name, get) in STAT_ROWS {
        out.push_str(&csv_field(name));
        for (_, s) in columns {
            out.push(',');
            if let Some(v) = get(s) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Per-dataset statistics in dataset order, with an "All" column when the
/// corpus mixes datasets.
pub fn stats_by_dataset(corpus: &[Instance]) -> Vec<(String, CorpusStats)> {
    let datasets = datasets_in(corpus);
    let mut out: Vec<(String, CorpusStats)> = datasets
        .iter()
        .map(|d| {
            let part: Vec<Instance> = corpus.iter().filter(|i| i.dataset == *d).cloned().collect();
            (d.to_string(), corpus_stats(&part))
        })
        .collect();
    if datasets.len() != 1 {
        out.push(("All".into(), corpus_stats(corpus)));
    }
    out
}

/// Per-instance scores with bookkeeping for unmatched ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusScores {
    pub per_instance: Vec<QuestionScore>,
    /// Gold instances without a prediction line; scored as empty predictions.
    pub missing_predictions: Vec<String>,
    /// Prediction lines whose id is not in the gold corpus; ignored.
    pub unknown_predictions: Vec<String>,
}

/// Scores predictions against a corpus, aligned by instance id.
pub fn score_corpus(corpus: &[Instance], predictions: &[PredictionSet], mode: LcsMode) -> CorpusScores {
    let by_id: HashMap<&str, &PredictionSet> = predictions.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    let mut missing = Vec::new();
    let per_instance = corpus
        .iter()
        .map(|inst| match by_id.get(inst.id.as_str()) {
            Some(p) => score_question(p, &inst.gold, mode),
            None => {
                missing.push(inst.id.clone());
                score_question(&PredictionSet::from_texts(&inst.id, Vec::<String>::new(), ""), &inst.gold, mode)
            }
        })
        .collect();
    let ids: std::collections::HashSet<&str> = corpus.iter().map(|i| i.id.as_str()).collect();
    let unknown =
        predictions.iter().filter(|p| !ids.contains(p.instance_id.as_str())).map(|p| p.instance_id.clone()).collect();
    CorpusScores { per_instance, missing_predictions: missing, unknown_predictions: unknown }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub stratum: String,
    pub n: usize,
    pub totals: QuestionScore,
    /// Absent for an empty stratum.
    pub report: Option<ScoreReport>,
}

pub const BREAKDOWN_STRATA: [&str; 7] =
    ["all", "passage_dependent", "question_dependent", "with_clue", "without_clue", "bad_annotation", "unlabeled"];

fn in_stratum(name: &str, s: Stratum) -> bool {
    match name {
        "all" => true,
        "passage_dependent" => s == Stratum::PassageDependent,
        "question_dependent" => matches!(s, Stratum::WithClue | Stratum::WithoutClue),
        "with_clue" => s == Stratum::WithClue,
        "without_clue" => s == Stratum::WithoutClue,
        "bad_annotation" => s == Stratum::BadAnnotation,
        "unlabeled" => s == Stratum::Unlabeled,
        _ => false,
    }
}

/// Micro-averaged scores recomputed within each label stratum.
/// `scores[i]` must belong to `corpus[i]`.
pub fn breakdown_report(corpus: &[Instance], scores: &[QuestionScore]) -> Vec<StratumReport> {
    assert_eq!(corpus.len(), scores.len(), "one score per instance");
    let strata: Vec<Stratum> = corpus.iter().map(|i| Stratum::of(i.taxonomy.as_ref())).collect();
    BREAKDOWN_STRATA
        .iter()
        .map(|name| {
            let picked: Vec<&QuestionScore> =
                scores.iter().zip(&strata).filter(|(_, s)| in_stratum(name, **s)).map(|(q, _)| q).collect();
            let totals: QuestionScore = picked.iter().copied().sum();
            StratumReport {
                stratum: (*name).to_owned(),
                n: picked.len(),
                totals,
                report: (!picked.is_empty()).then(|| ScoreReport::from_totals(&totals, picked.len())),
            }
        })
        .collect()
}

pub fn render_breakdown_text(rows: &[StratumReport]) -> String {
    let header: Vec<String> =
        ["Stratum", "n", "EM P", "EM R", "EM F1", "PM P", "PM R", "PM F1"].map(String::from).to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut c = vec![r.stratum.clone(), r.n.to_string()];
            match &r.report {
                Some(s) => c.extend(
                    [s.em.precision, s.em.recall, s.em.f1, s.pm.precision, s.pm.recall, s.pm.f1]
                        .map(|x| format!("{x:.2}")),
                ),
                None => c.extend(std::iter::repeat_n("n=0".to_owned(), 6)),
            }
            c
        })
        .collect();
    aligned(&header, &body)
}

pub fn render_breakdown_csv(rows: &[StratumReport]) -> String {
    let mut out = "stratum,n,em_p,em_r,em_f1,pm_p,pm_r,pm_f1\n".to_owned();
    for r in rows {
        let vals = match &r.report {
            Some(s) => [s.em.precision, s.em.recall, s.em.f1, s.pm.precision, s.pm.recall, s.pm.f1]
                .map(|x| format!("{x:.4}"))
                .join(","),
            None => ",,,,,".to_owned(),
        };
        let _ = writeln!(out, "{},{},{vals}", r.stratum, r.n);
    }
    out
}
