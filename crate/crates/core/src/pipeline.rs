//! Post-projection processing: whitening PCA, univariate Fisher-score
//! selection and a shrinkage LDA decision classifier, plus the class
//! contrasts used to inspect fitted blocks.

use nalgebra::{Cholesky, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bttda::{fit_bttda, BttdaModel};
use crate::dataset::{class_counts, LabeledDataset};
use crate::discriminant::{ledoit_wolf_alpha, ClassStats};
use crate::error::{Error, Result};
use crate::hoda::FitOptions;
use crate::tensor::{Matrix, Tensor};
use crate::util::argmax;

/// Components with variance below this fraction of the largest are zeroed.
const MIN_RELATIVE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitener {
    pub mean: DVector<f64>,
    /// One row per principal component, scaled to unit variance (zero rows
    /// for degenerate components).
    pub transform: Matrix,
    /// Component variances, descending.
    pub variances: Vec<f64>,
    pub retained: Vec<bool>,
}

impl Whitener {
    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.ncols() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "whitener fitted on {} features, got {}",
                self.mean.len(),
                features.ncols()
            )));
        }
        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.transform.transpose())
    }
}

/// Sample covariance of the rows of `features` (normalized by `N - 1`).
fn covariance(features: &Matrix) -> (DVector<f64>, Matrix) {
    let n = features.nrows();
    let mean = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

/// Whitening PCA retaining every component.
pub fn fit_whitening_pca(features: &Matrix) -> Result<Whitener> {
    if features.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "whitening needs at least 2 samples, got {}",
            features.nrows()
        )));
    }
    let f = features.ncols();
    let (mean, cov) = covariance(features);
    let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i].max(0.0));
    let mut transform = Matrix::zeros(f, f);
    let mut variances = Vec::with_capacity(f);
    let mut retained = Vec::with_capacity(f);
    for (row, &i) in order.iter().enumerate() {
        let var = eig.eigenvalues[i].max(0.0);
        variances.push(var);
        let keep = top > 0.0 && var >= MIN_RELATIVE_VARIANCE * top;
        retained.push(keep);
        if keep {
            let mut v = eig.eigenvectors.column(i).into_owned();
            let pivot = v.iamax();
            if v[pivot] < 0.0 {
                v.neg_mut();
            }
            transform.row_mut(row).copy_from(&(v.transpose() / var.sqrt()));
        }
    }
    Ok(Whitener {
        mean,
        transform,
        variances,
        retained,
    })
}

/// Per-column `sum_c N_c (mean_c - grand)^2 / sum_n (g_n - mean_{c_n})^2`,
/// with the grand mean taken as the mean of class means. 0/0 scores 0 and
/// x/0 scores `+inf`.
pub fn fisher_scores(features: &Matrix, labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fisher scores need at least 2 classes, got {classes}"
        )));
    }
    if features.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let counts = class_counts(labels, classes);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }
    Ok(features
        .column_iter()
        .map(|col| {
            let mut means = vec![0.0; classes];
            for (v, &l) in col.iter().zip(labels) {
                means[l] += v;
            }
            for (m, &c) in means.iter_mut().zip(&counts) {
                *m /= c as f64;
            }
            let grand = means.iter().sum::<f64>() / classes as f64;
            let between: f64 = means
                .iter()
                .zip(&counts)
                .map(|(m, &c)| c as f64 * (m - grand).powi(2))
                .sum();
            let within: f64 = col
                .iter()
                .zip(labels)
                .map(|(v, &l)| (v - means[l]).powi(2))
                .sum();
            match (between > 0.0, within > 0.0) {
                (_, true) => between / within,
                (true, false) => f64::INFINITY,
                (false, false) => 0.0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub keep: Vec<bool>,
    #[serde(with = "lossless_vec")]
    pub scores: Vec<f64>,
}

impl FeatureMask {
    pub fn indices(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.ncols() != self.keep.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask covers {} features, got {}",
                self.keep.len(),
                features.ncols()
            )));
        }
        Ok(features.select_columns(self.indices().iter()))
    }
}

/// Keeps every score above 1, or else the single best one.
pub fn select_discriminant(scores: &[f64]) -> Result<FeatureMask> {
    select_among(scores, &vec![true; scores.len()])
}

/// [`select_discriminant`] restricted to the `eligible` entries.
pub fn select_among(scores: &[f64], eligible: &[bool]) -> Result<FeatureMask> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to select from".into()));
    }
    let mut keep: Vec<bool> = scores
        .iter()
        .zip(eligible)
        .map(|(&s, &e)| e && s > 1.0)
        .collect();
    if !keep.contains(&true) {
        let best = argmax(
            scores
                .iter()
                .zip(eligible)
                .map(|(&s, &e)| if e { s } else { f64::NAN }),
        )
        .unwrap_or(0);
        keep[best] = true;
    }
    Ok(FeatureMask {
        keep,
        scores: scores.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LdaShrinkage {
    Auto,
    Fixed(f64),
}

/// Linear discriminant with a pooled, shrunk covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaClassifier {
    /// `C x F` class means.
    pub means: Matrix,
    pub covariance: Matrix,
    pub priors: Vec<f64>,
    pub shrinkage: f64,
    /// `C x F`: row `c` is `Sigma^-1 mu_c`.
    pub coefficients: Matrix,
    pub intercepts: Vec<f64>,
}

pub fn fit_lda(
    features: &Matrix,
    labels: &[usize],
    classes: usize,
    shrinkage: LdaShrinkage,
) -> Result<LdaClassifier> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "LDA needs at least 2 classes, got {classes}"
        )));
    }
    let (n, f) = features.shape();
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!("{n} rows but {} labels", labels.len())));
    }
    let counts = class_counts(labels, classes);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }
    let mut means = Matrix::zeros(classes, f);
    for (row, &l) in features.row_iter().zip(labels) {
        let mut m = means.row_mut(l);
        m += row;
    }
    for (c, &count) in counts.iter().enumerate() {
        means.row_mut(c).scale_mut(1.0 / count as f64);
    }
    // class-centered observations as columns
    let mut centered = features.transpose();
    for (j, &l) in labels.iter().enumerate() {
        let mut col = centered.column_mut(j);
        col -= means.row(l).transpose();
    }
    let alpha = match shrinkage {
        LdaShrinkage::Auto => ledoit_wolf_alpha(&centered),
        LdaShrinkage::Fixed(a) if (0.0..=1.0).contains(&a) => a,
        LdaShrinkage::Fixed(a) => {
            return Err(Error::InvalidArgument(format!("shrinkage {a} outside [0, 1]")))
        }
    };
    let sample = &centered * centered.transpose() / n as f64;
    let mu = sample.trace() / f as f64;
    let mut covariance = sample * (1.0 - alpha);
    for i in 0..f {
        covariance[(i, i)] += alpha * mu;
    }
    let chol = match Cholesky::new(covariance.clone()) {
        Some(c) => c,
        None => {
            // Singular even after shrinkage: fall back to a small ridge, or the
            // identity when there is no spread at all.
            let ridge = if mu > 0.0 { 1e-10 * mu } else { 1.0 };
            for i in 0..f {
                covariance[(i, i)] += ridge;
            }
            Cholesky::new(covariance.clone()).ok_or_else(|| {
                Error::SingularFit("LDA covariance is not positive definite".into())
            })?
        }
    };
    let coefficients = chol.solve(&means.transpose()).transpose();
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let intercepts = (0..classes)
        .map(|c| -0.5 * coefficients.row(c).dot(&means.row(c)) + priors[c].ln())
        .collect();
    Ok(LdaClassifier {
        means,
        covariance,
        priors,
        shrinkage: alpha,
        coefficients,
        intercepts,
    })
}

impl LdaClassifier {
    pub fn classes(&self) -> usize {
        self.priors.len()
    }

    pub fn width(&self) -> usize {
        self.means.ncols()
    }

    /// `N x C` discriminant scores.
    pub fn scores(&self, features: &Matrix) -> Result<Matrix> {
        lda_scores(self, features)
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self
            .scores(features)?
            .row_iter()
            .map(|r| argmax(r.iter().copied()).unwrap_or(0))
            .collect())
    }

    /// Class 1 minus class 0 discriminant, for binary problems.
    pub fn decision_function(&self, features: &Matrix) -> Result<Vec<f64>> {
        if self.classes() != 2 {
            return Err(Error::InvalidArgument(format!(
                "scalar decision needs 2 classes, model has {}",
                self.classes()
            )));
        }
        Ok(self
            .scores(features)?
            .row_iter()
            .map(|r| r[1] - r[0])
            .collect())
    }
}

pub fn lda_scores(clf: &LdaClassifier, features: &Matrix) -> Result<Matrix> {
    if features.ncols() != clf.width() {
        return Err(Error::ShapeMismatch(format!(
            "LDA fitted on {} features, got {}",
            clf.width(),
            features.ncols()
        )));
    }
    let mut scores = features * clf.coefficients.transpose();
    for mut row in scores.row_iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v += clf.intercepts[c];
        }
    }
    Ok(scores)
}

/// Whitening, selection and classification fitted on extracted features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub whitener: Whitener,
    pub mask: FeatureMask,
    pub lda: LdaClassifier,
}

impl FeaturePipeline {
    pub fn fit(
        features: &Matrix,
        labels: &[usize],
        classes: usize,
        shrinkage: LdaShrinkage,
    ) -> Result<Self> {
        let whitener = fit_whitening_pca(features)?;
        let white = whitener.apply(features)?;
        let scores = fisher_scores(&white, labels, classes)?;
        let mask = select_among(&scores, &whitener.retained)?;
        let lda = fit_lda(&mask.apply(&white)?, labels, classes, shrinkage)?;
        Ok(Self { whitener, mask, lda })
    }

    pub fn scores(&self, features: &Matrix) -> Result<Matrix> {
        let white = self.whitener.apply(features)?;
        self.lda.scores(&self.mask.apply(&white)?)
    }
}

/// A complete decoder: BTTDA feature extraction followed by the feature
/// pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub extractor: BttdaModel,
    pub pipeline: FeaturePipeline,
    pub classes: usize,
}

impl Decoder {
    pub fn fit(
        data: &LabeledDataset,
        blocks: usize,
        theta: f64,
        opts: &FitOptions,
        shrinkage: LdaShrinkage,
    ) -> Result<Self> {
        let fit = fit_bttda(data, blocks, theta, opts)?;
        let pipeline = FeaturePipeline::fit(&fit.features, data.labels(), data.classes(), shrinkage)?;
        Ok(Self {
            extractor: fit.model,
            pipeline,
            classes: data.classes(),
        })
    }

    pub fn scores(&self, samples: &[Tensor]) -> Result<Matrix> {
        self.pipeline.scores(&self.extractor.transform_batch(samples)?)
    }
}

/// Latent class statistics of every block, from replaying the deflation on
/// `data`.
pub fn block_class_stats(model: &BttdaModel, data: &LabeledDataset) -> Result<Vec<ClassStats>> {
    let mut residuals = data.samples().to_vec();
    let mut out = Vec::with_capacity(model.blocks.len());
    for block in &model.blocks {
        let latents = block.backward.transform_all(&residuals)?;
        for (res, g) in residuals.iter_mut().zip(&latents) {
            *res = res.sub(&block.forward.reconstruct_one(g)?)?;
        }
        out.push(ClassStats::compute(&latents, data.labels(), data.classes())?);
    }
    Ok(out)
}

/// `(mean latent of c2 - mean latent of c1)` of block `block` (0-based),
/// expanded through that block's activation patterns.
pub fn class_contrast(
    model: &BttdaModel,
    stats: &[ClassStats],
    block: usize,
    pair: (usize, usize),
) -> Result<Tensor> {
    let b = model.blocks.get(block).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "block {block} out of range for a {}-block model",
            model.blocks.len()
        ))
    })?;
    let st = stats
        .get(block)
        .ok_or_else(|| Error::InvalidArgument(format!("no class statistics for block {block}")))?;
    let (c2, c1) = pair;
    for c in [c2, c1] {
        if c >= st.classes() {
            return Err(Error::InvalidArgument(format!(
                "unknown class {c} ({} classes)",
                st.classes()
            )));
        }
    }
    b.forward.reconstruct_one(&st.means[c2].sub(&st.means[c1])?)
}

mod lossless_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "crate::util::lossless_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| Wrapped(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Wrapped>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}
