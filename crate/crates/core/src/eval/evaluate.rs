//! Cross-validated evaluation with nested tuning and CSV emission.
//!
//! Random streams: the outer split draws from stream 0 of the seed, and the
//! inner split of outer fold `f` from stream `f + 1`. Folds are evaluated
//! in parallel and merged in fold order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bttda::nmse;
use crate::dataset::LabeledDataset;
use crate::error::{Result, ResultExt};
use crate::eval::cv::{stratified_kfold, Split};
use crate::eval::metrics::{score_metric, MetricKind};
use crate::eval::tune::{tune_hyperparameters, EvalSettings, TuningReport};
use crate::pipeline::Decoder;

pub const OUTER_STREAM: u64 = 0;

pub fn inner_stream(fold: usize) -> u64 {
    fold as u64 + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub subject: String,
    pub session: String,
    pub fold: usize,
    pub theta: f64,
    pub blocks: usize,
    pub metric: String,
    pub value: f64,
    /// Training NMSE after each fitted block.
    pub train_nmse: Vec<f64>,
}

/// Free-text tags copied into every record.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunTags {
    pub dataset: String,
    pub subject: String,
    pub session: String,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub tuning: TuningReport,
    pub decoder: Decoder,
    pub records: Vec<MetricsRecord>,
}

/// Tunes and fits on the training part of `split` only, then scores its test
/// part.
pub fn evaluate_fold(
    data: &LabeledDataset,
    split: &Split,
    fold: usize,
    settings: &EvalSettings,
    tags: &RunTags,
) -> Result<FoldOutcome> {
    let train = data.subset(&split.train)?;
    let test = data.subset(&split.test)?;
    let tuning = tune_hyperparameters(&train, settings, inner_stream(fold))?;
    let decoder = Decoder::fit(&train, tuning.blocks, tuning.theta, &settings.fit, settings.lda)?;
    let metric = MetricKind::for_classes(data.classes());
    let scores = decoder.scores(test.samples())?;
    let value = score_metric(&scores, test.labels(), metric)?;
    let reconstructions = test
        .samples()
        .iter()
        .map(|t| decoder.extractor.reconstruct(t))
        .collect::<Result<Vec<_>>>()?;
    let test_nmse = nmse(test.samples(), &reconstructions)?;

    let record = |metric: &str, value: f64| MetricsRecord {
        dataset: tags.dataset.clone(),
        subject: tags.subject.clone(),
        session: tags.session.clone(),
        fold,
        theta: tuning.theta,
        blocks: decoder.extractor.blocks.len(),
        metric: metric.to_string(),
        value,
        train_nmse: decoder.extractor.nmse_trajectory(),
    };
    let records = vec![record(metric.name(), value), record("nmse", test_nmse)];
    Ok(FoldOutcome {
        tuning,
        decoder,
        records,
    })
}

pub fn outer_splits(data: &LabeledDataset, settings: &EvalSettings) -> Result<Vec<Split>> {
    stratified_kfold(data.labels(), settings.outer_folds, settings.seed, OUTER_STREAM)
}

/// One metric record and one held-out NMSE record per outer fold, in fold
/// order.
pub fn run_evaluation(
    data: &LabeledDataset,
    settings: &EvalSettings,
    tags: &RunTags,
) -> Result<Vec<MetricsRecord>> {
    let splits = outer_splits(data, settings)?;
    let outcomes = splits
        .par_iter()
        .enumerate()
        .map(|(f, split)| {
            evaluate_fold(data, split, f, settings, tags).context(|| format!("outer fold {f}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(outcomes.into_iter().flat_map(|o| o.records).collect())
}

pub const METRICS_HEADER: [&str; 8] = [
    "dataset", "subject", "session", "fold", "theta", "blocks", "metric", "value",
];

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.dataset.as_str(),
            &r.subject,
            &r.session,
            &r.fold.to_string(),
            &r.theta.to_string(),
            &r.blocks.to_string(),
            &r.metric,
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tuning_csv<W: Write>(report: &TuningReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["theta", "blocks", "metric", "mean", "fold_scores", "selected"])?;
    for c in &report.candidates {
        let folds: Vec<String> = c.fold_scores.iter().map(f64::to_string).collect();
        let selected = c.theta == report.theta && c.blocks == report.blocks;
        w.write_record([
            c.theta.to_string(),
            c.blocks.to_string(),
            report.metric.name().to_string(),
            c.mean.to_string(),
            folds.join(";"),
            selected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
