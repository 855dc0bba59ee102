//! Nested hyperparameter search over `(theta, blocks)`.
//!
//! For each `theta` one model with the maximum block count is fitted per
//! inner fold; every truncation `b = 1..=B_max` is scored from that single
//! fit, since the first `b` blocks of a deflation do not depend on how many
//! blocks follow.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bttda::fit_bttda;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result, ResultExt};
use crate::eval::cv::{stratified_kfold, Split};
use crate::eval::metrics::{score_metric, MetricKind};
use crate::hoda::FitOptions;
use crate::pipeline::{FeaturePipeline, LdaShrinkage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub thetas: Vec<f64>,
    pub max_blocks: usize,
}

impl Default for TuningGrid {
    /// `theta` in `{0, 0.1, .., 1}`, up to 16 blocks.
    fn default() -> Self {
        Self {
            thetas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            max_blocks: 16,
        }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.max_blocks == 0 {
            return Err(Error::InvalidArgument(
                "tuning grid needs at least one theta and one block".into(),
            ));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidArgument(format!("theta {t} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Everything the tuner and the evaluation loop need besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub grid: TuningGrid,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub lda: LdaShrinkage,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            grid: TuningGrid::default(),
            outer_folds: 5,
            inner_folds: 5,
            seed: 0,
            fit: FitOptions::default(),
            lda: LdaShrinkage::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub theta: f64,
    pub blocks: usize,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub theta: f64,
    pub blocks: usize,
    pub metric: MetricKind,
    /// Empty when the grid had a single candidate and no search ran.
    pub candidates: Vec<CandidateScore>,
}

/// Scores of the truncations `b = 1..=fitted` on one split.
pub fn score_truncations(
    data: &LabeledDataset,
    split: &Split,
    theta: f64,
    max_blocks: usize,
    fit: &FitOptions,
    lda: LdaShrinkage,
) -> Result<Vec<f64>> {
    let train = data.subset(&split.train)?;
    let test = data.subset(&split.test)?;
    let metric = MetricKind::for_classes(data.classes());
    let bttda = fit_bttda(&train, max_blocks, theta, fit)?;
    let test_features = bttda.model.transform_batch(test.samples())?;
    (1..=bttda.model.blocks.len())
        .map(|b| {
            let width = bttda.model.prefix_len(b);
            let pipeline = FeaturePipeline::fit(
                &bttda.features.columns(0, width).into_owned(),
                train.labels(),
                train.classes(),
                lda,
            )?;
            let scores = pipeline.scores(&test_features.columns(0, width).into_owned())?;
            score_metric(&scores, test.labels(), metric)
        })
        .collect()
}

pub fn tune_hyperparameters(
    data: &LabeledDataset,
    settings: &EvalSettings,
    stream: u64,
) -> Result<TuningReport> {
    let grid = &settings.grid;
    grid.validate()?;
    let metric = MetricKind::for_classes(data.classes());
    if grid.thetas.len() == 1 && grid.max_blocks == 1 {
        return Ok(TuningReport {
            theta: grid.thetas[0],
            blocks: 1,
            metric,
            candidates: Vec::new(),
        });
    }
    if settings.inner_folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 inner folds, got {}",
            settings.inner_folds
        )));
    }
    let splits = stratified_kfold(data.labels(), settings.inner_folds, settings.seed, stream)?;
    let jobs: Vec<(usize, usize)> = (0..grid.thetas.len())
        .flat_map(|t| (0..splits.len()).map(move |f| (t, f)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(t, f)| {
            let theta = grid.thetas[t];
            score_truncations(data, &splits[f], theta, grid.max_blocks, &settings.fit, settings.lda)
                .context(|| format!("theta {theta}, inner fold {f}"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::new();
    for (t, &theta) in grid.thetas.iter().enumerate() {
        let per_fold = &results[t * splits.len()..(t + 1) * splits.len()];
        let available = per_fold.iter().map(Vec::len).min().unwrap_or(0);
        for b in 0..available {
            let fold_scores: Vec<f64> = per_fold.iter().map(|s| s[b]).collect();
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            candidates.push(CandidateScore {
                theta,
                blocks: b + 1,
                fold_scores,
                mean,
            });
        }
    }
    let best = candidates
        .iter()
        .min_by(|a, b| {
            b.mean
                .partial_cmp(&a.mean)
                .unwrap_or(Ordering::Equal)
                .then(a.blocks.cmp(&b.blocks))
                .then(a.theta.total_cmp(&b.theta))
        })
        .ok_or_else(|| Error::InvalidArgument("no candidate could be scored".into()))?;
    Ok(TuningReport {
        theta: best.theta,
        blocks: best.blocks,
        metric,
        candidates,
    })
}
