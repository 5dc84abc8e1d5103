//! Toolkit for multi-answer machine reading comprehension.
//!
//! Loads multi-answer QA corpora into one data model, tags questions with an
//! answer-count taxonomy, decodes and ensembles predictions from external
//! models, and scores them with exact-match and partial-match metrics.

pub mod annotation;
pub mod client;
pub mod ensemble;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod paradigms;
pub mod reporting;
pub mod taxonomy;

pub use error::*;
pub use metrics::{corpus_report, lcs_len, partial_scores, score_question, LcsMode, QuestionScore, ScoreReport};
pub use model::{
    ground_span, normalize, tokenize, AnswerInput, AnswerSet, AnswerSpan, Dataset, Instance, PredictedSpan,
    PredictionSet, TokenizedText,
};
pub use taxonomy::{ClueType, LabelKind, TaxonomyLabel};
