use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use multiqa::annotation::{AnnotationService, AnnotatorConfig, ServiceConfig, SystemClock};
use multiqa::client::{connect, Endpoint, ModelClient};
use multiqa::ingest::{self, SourceFormat};
use multiqa::paradigms::{self, GenInput, DEFAULT_MAX_ITERS, DEFAULT_THRESHOLD};
use multiqa::reporting::{self, Dimension};
use multiqa::taxonomy::{detect_clue_words, Lexicon};
use multiqa::{corpus_report, metrics, Instance, LcsMode, PredictionSet};
use rayon::prelude::*;
use serde_json::json;

use crate::args::*;
use crate::Usage;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::Decode(a) => decode(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Report(a) => report(a),
        Command::AnnotateServe(a) => serve(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|()| stdout.flush()).context("cannot write to standard output")
        }
    }
}

fn load_corpus(path: &Path) -> Result<Vec<Instance>> {
    let (corpus, report) =
        ingest::load(SourceFormat::Unified, &read(path)?).with_context(|| format!("{}", path.display()))?;
    if report.skipped_malformed + report.skipped_non_span > 0 {
        log::warn!(
            "{}: skipped {} malformed and {} non-span records",
            path.display(),
            report.skipped_malformed,
            report.skipped_non_span
        );
    }
    Ok(corpus)
}

fn attach(corpus: &mut [Instance], annotations: &Path) -> Result<()> {
    let labels = ingest::load_annotations(&read(annotations)?).with_context(|| format!("{}", annotations.display()))?;
    let r = ingest::attach_labels(corpus, &labels);
    if !r.unknown_ids.is_empty() {
        log::warn!("{}: {} labels for ids not in the corpus", annotations.display(), r.unknown_ids.len());
    }
    log::info!("attached {} labels, {} instances unlabeled", r.attached, r.unlabeled);
    Ok(())
}

fn load_preds(path: &Path) -> Result<Vec<PredictionSet>> {
    let producer = path.file_stem().map_or("predictions".into(), |s| s.to_string_lossy().into_owned());
    ingest::load_predictions(&read(path)?, &producer).with_context(|| format!("{}", path.display()))
}

fn lcs_mode(a: LcsModeArg) -> LcsMode {
    match a {
        LcsModeArg::Token => LcsMode::Token,
        LcsModeArg::Char => LcsMode::Char,
    }
}

fn lexicon(path: Option<&PathBuf>) -> Result<Lexicon> {
    match path {
        None => Ok(Lexicon::builtin().clone()),
        Some(p) => {
            let text = String::from_utf8(read(p)?).with_context(|| format!("{}: not UTF-8", p.display()))?;
            Lexicon::parse(&text).with_context(|| format!("{}", p.display()))
        }
    }
}

fn json_line(v: &impl serde::Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let format = match a.format {
        InputFormat::Drop => SourceFormat::Drop,
        InputFormat::Quoref => SourceFormat::Quoref,
        InputFormat::Multispanqa => SourceFormat::MultiSpanQa,
        InputFormat::Unified => SourceFormat::Unified,
    };
    let (mut corpus, report) =
        ingest::load(format, &read(&a.input)?).with_context(|| format!("{}", a.input.display()))?;
    if let Some(ann) = &a.annotations {
        attach(&mut corpus, ann)?;
    }
    log::info!(
        "{}: {} records, {} loaded, {} non-span, {} malformed",
        a.input.display(),
        report.records,
        report.loaded,
        report.skipped_non_span,
        report.skipped_malformed
    );
    if let Some(path) = &a.report {
        emit(Some(path), &json_line(&report))?;
    }
    emit(a.out.as_ref(), &ingest::export(&corpus))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut corpus = load_corpus(&a.gold)?;
    if let Some(ann) = &a.by_type {
        attach(&mut corpus, ann)?;
    }
    let preds = load_preds(&a.pred)?;
    let scored = reporting::score_corpus(&corpus, &preds, lcs_mode(a.lcs_mode));
    if !scored.missing_predictions.is_empty() {
        log::warn!(
            "{}: no prediction for {} gold instances (scored as empty), first {:?}",
            a.pred.display(),
            scored.missing_predictions.len(),
            scored.missing_predictions[0]
        );
    }
    if !scored.unknown_predictions.is_empty() {
        log::warn!(
            "{}: {} predictions for ids not in the gold corpus, first {:?}",
            a.pred.display(),
            scored.unknown_predictions.len(),
            scored.unknown_predictions[0]
        );
    }
    let overall = corpus_report(&scored.per_instance);
    let breakdown = a.by_type.is_some().then(|| reporting::breakdown_report(&corpus, &scored.per_instance));
    let bytes = match a.format {
        TextOrJson::Json => json_line(&json!({
            "overall": overall,
            "breakdown": breakdown,
            "missing_predictions": scored.missing_predictions,
            "unknown_predictions": scored.unknown_predictions,
        })),
        TextOrJson::Text => {
            let name = a.pred.file_stem().map_or("predictions".into(), |s| s.to_string_lossy().into_owned());
            let mut text = metrics::render_score_table(&[(name, overall)]);
            if let Some(rows) = &breakdown {
                text.push('\n');
                text.push_str(&reporting::render_breakdown_text(rows));
            }
            text.into_bytes()
        }
    };
    emit(a.out.as_ref(), &bytes)
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let mut lex = lexicon(a.lexicon.as_ref())?;
    if a.and_clue {
        lex = lex.with_and_clue();
    }
    let mut out = Vec::new();
    for inst in &corpus {
        let clues = detect_clue_words(&inst.question, &lex);
        let line = json!({ "id": inst.id, "question": inst.question.raw(), "clues": clues });
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    emit(a.out.as_ref(), &out)
}

fn decode(a: DecodeArgs) -> Result<()> {
    if a.threshold.is_some() && a.paradigm != Paradigm::Tagging {
        return Err(usage("--threshold applies only to --paradigm tagging"));
    }
    if a.max_iters.is_some() && a.paradigm != Paradigm::Iterative {
        return Err(usage("--max-iters applies only to --paradigm iterative"));
    }
    if a.gen_input.is_some() && a.paradigm != Paradigm::Generation {
        return Err(usage("--gen-input applies only to --paradigm generation"));
    }
    let threshold = a.threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(usage(format!("--threshold must lie in [0, 1], got {threshold}")));
    }
    let max_iters = a.max_iters.unwrap_or(DEFAULT_MAX_ITERS);
    if max_iters == 0 {
        return Err(usage("--max-iters must be at least 1"));
    }
    if !(a.timeout.is_finite() && a.timeout > 0.0) {
        return Err(usage(format!("--timeout must be a positive number of seconds, got {}", a.timeout)));
    }
    let jobs = match a.jobs {
        Some(0) => return Err(usage("--jobs must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let endpoint: Endpoint = a.model_endpoint.parse().map_err(|e: String| usage(format!("--model-endpoint: {e}")))?;
    let gen_input = match a.gen_input.unwrap_or(GenInputArg::Plain) {
        GenInputArg::Plain => GenInput::Plain,
        GenInputArg::Pipeline => GenInput::Pipeline,
        GenInputArg::VanillaOneshot => GenInput::VanillaOneshot,
        GenInputArg::NumpredOneshot => GenInput::NumpredOneshot,
    };

    let corpus = load_corpus(&a.corpus)?;
    let client = connect(&endpoint, &corpus, Duration::from_secs_f64(a.timeout), jobs)
        .with_context(|| format!("cannot open model endpoint {}", a.model_endpoint))?;
    let client: &dyn ModelClient = client.as_ref();
    let run_one = |inst: &Instance| -> Result<PredictionSet, String> {
        let result = match a.paradigm {
            Paradigm::Tagging => paradigms::run_tagging(client, inst, threshold).map_err(|e| e.to_string()),
            Paradigm::Numpred => paradigms::run_numpred(client, inst).map_err(|e| e.to_string()),
            Paradigm::Generation => paradigms::run_generation(client, inst, gen_input).map_err(|e| e.to_string()),
            Paradigm::Iterative => {
                let outcome = paradigms::iterative_run(client, inst, max_iters);
                match outcome.error {
                    None => Ok(outcome.prediction),
                    Some(e) => Err(e.to_string()),
                }
            }
        };
        result.map_err(|e| format!("instance {}: {e}", inst.id))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().context("cannot start worker pool")?;
    let results: Vec<Result<PredictionSet, String>> = pool.install(|| corpus.par_iter().map(run_one).collect());

    let producer = results.iter().flatten().next().map_or("", |p| p.producer.as_str()).to_owned();
    let mut sets = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (inst, r) in corpus.iter().zip(results) {
        match r {
            Ok(p) => sets.push(p),
            Err(e) if a.keep_going => {
                log::warn!("{e}; writing an empty prediction");
                failures += 1;
                sets.push(PredictionSet::from_texts(&inst.id, Vec::<String>::new(), &producer));
            }
            Err(e) => bail!("{e}"),
        }
    }
    if failures > 0 {
        log::warn!("{failures} of {} instances failed", corpus.len());
    }
    emit(a.out.as_ref(), &ingest::write_predictions(&sets))
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    if a.preds.len() < 2 {
        return Err(usage("ensemble needs at least two --pred files"));
    }
    let models = a.preds.iter().map(|p| load_preds(p)).collect::<Result<Vec<_>>>()?;
    let voted = multiqa::ensemble::vote_corpus(&models).context("prediction files do not cover the same instances")?;
    emit(a.out.as_ref(), &ingest::write_predictions(&voted))
}

fn report(a: ReportArgs) -> Result<()> {
    if a.pred.is_some() != (a.what == ReportWhat::Breakdown) {
        return Err(usage("--pred is required with --what breakdown and not accepted otherwise"));
    }
    let mut corpus = load_corpus(&a.corpus)?;
    if let Some(ann) = &a.annotations {
        attach(&mut corpus, ann)?;
    }
    let bytes = match a.what {
        ReportWhat::Types | ReportWhat::Clues | ReportWhat::Counts => {
            let dim = match a.what {
                ReportWhat::Types => Dimension::Types,
                ReportWhat::Clues => Dimension::Clues,
                _ => Dimension::Counts,
            };
            let tables = reporting::distribution(&corpus, dim);
            match a.format {
                TableFormat::Json => json_line(&tables),
                TableFormat::Text => join(tables.iter().map(reporting::render_table_text)),
                TableFormat::Csv => join(tables.iter().map(reporting::render_table_csv)),
            }
        }
        ReportWhat::Stats => {
            let cols = reporting::stats_by_dataset(&corpus);
            match a.format {
                TableFormat::Json => {
                    let map: serde_json::Map<String, serde_json::Value> =
                        cols.iter().map(|(n, s)| (n.clone(), serde_json::to_value(s).expect("serializable"))).collect();
                    json_line(&map)
                }
                TableFormat::Text => reporting::render_stats_text(&cols).into_bytes(),
                TableFormat::Csv => reporting::render_stats_csv(&cols).into_bytes(),
            }
        }
        ReportWhat::Breakdown => {
            let preds = load_preds(a.pred.as_ref().expect("checked above"))?;
            let scored = reporting::score_corpus(&corpus, &preds, lcs_mode(a.lcs_mode));
            let rows = reporting::breakdown_report(&corpus, &scored.per_instance);
            match a.format {
                TableFormat::Json => json_line(&rows),
                TableFormat::Text => reporting::render_breakdown_text(&rows).into_bytes(),
                TableFormat::Csv => reporting::render_breakdown_csv(&rows).into_bytes(),
            }
        }
    };
    emit(a.out.as_ref(), &bytes)
}

fn join(parts: impl Iterator<Item = String>) -> Vec<u8> {
    parts.collect::<Vec<_>>().join("\n").into_bytes()
}

fn serve(a: ServeArgs) -> Result<()> {
    if let Some(bad) = a.adjudicators.iter().find(|j| a.annotators.contains(j)) {
        return Err(usage(format!("{bad:?} is given as both --annotator and --adjudicator")));
    }
    let corpus = load_corpus(&a.corpus)?;
    let lex = lexicon(a.lexicon.as_ref())?;
    let annotators = a
        .annotators
        .iter()
        .map(|id| AnnotatorConfig { id: id.clone(), adjudicator: false })
        .chain(a.adjudicators.iter().map(|id| AnnotatorConfig { id: id.clone(), adjudicator: true }))
        .collect();
    let config = ServiceConfig { annotators, seed: a.seed };
    let service = AnnotationService::open(config, corpus, &lex, Box::new(SystemClock), &a.log)
        .with_context(|| format!("{}", a.log.display()))?;
    let app = multiqa_server::router(service, a.static_dir);
    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    runtime.block_on(multiqa_server::serve(a.addr, app)).with_context(|| format!("cannot serve on {}", a.addr))
}
