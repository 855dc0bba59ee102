//! Block-term tensor discriminant analysis.
//!
//! Blocks are fitted by deflation: HODA extracts latents from the current
//! residual, the forward model rebuilds the part of the residual those
//! latents explain, and the remainder feeds the next block. Features are the
//! vectorized latents of all blocks, concatenated in block order.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::discriminant::total_scatter;
use crate::error::{Error, Result, ResultExt};
use crate::forward::{fit_hoda_forward, ActivationSet};
use crate::hoda::{fit_hoda_backward, FitOptions, HodaModel, InitStrategy};
use crate::tensor::{Matrix, Tensor};

/// A mode whose residual scatter trace is below `ZERO_ENERGY * N` gets rank 1.
const ZERO_ENERGY: f64 = 1e-12;
/// Residual energy (relative to the input) below which no further block can
/// be fitted.
const EXHAUSTED_ENERGY: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub backward: HodaModel,
    pub forward: ActivationSet,
    pub ranks: Vec<usize>,
    /// Training NMSE of the block-term model truncated after this block.
    pub train_nmse: f64,
}

impl Block {
    pub fn feature_len(&self) -> usize {
        self.ranks.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BttdaModel {
    pub blocks: Vec<Block>,
    pub theta: f64,
    pub input_dims: Vec<usize>,
    pub requested_blocks: usize,
    /// Set when fewer blocks than requested were fitted because the residual
    /// was exhausted (always the case for `theta = 1` and more than one block).
    pub truncated: bool,
}

/// A fitted model together with the features it produced for its training
/// samples (`N x F`, rows in sample order).
#[derive(Debug, Clone, PartialEq)]
pub struct BttdaFit {
    pub model: BttdaModel,
    pub features: Matrix,
}

impl BttdaModel {
    pub fn feature_len(&self) -> usize {
        self.blocks.iter().map(Block::feature_len).sum()
    }

    /// Feature width of the first `blocks` blocks.
    pub fn prefix_len(&self, blocks: usize) -> usize {
        self.blocks.iter().take(blocks).map(Block::feature_len).sum()
    }

    /// The model made of the first `blocks` blocks.
    pub fn truncated_to(&self, blocks: usize) -> Result<BttdaModel> {
        if blocks == 0 || blocks > self.blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a {}-block model to {blocks} blocks",
                self.blocks.len()
            )));
        }
        Ok(BttdaModel {
            blocks: self.blocks[..blocks].to_vec(),
            theta: self.theta,
            input_dims: self.input_dims.clone(),
            requested_blocks: blocks,
            truncated: false,
        })
    }

    pub fn nmse_trajectory(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.train_nmse).collect()
    }

    fn check_input(&self, t: &Tensor) -> Result<()> {
        if t.dims() != self.input_dims.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {:?}, got {:?}",
                self.input_dims,
                t.dims()
            )));
        }
        Ok(())
    }

    /// Replays the deflation on one sample, returning the concatenated
    /// features and the block-term reconstruction.
    pub fn deflate(&self, t: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        self.check_input(t)?;
        let mut features = Vec::with_capacity(self.feature_len());
        let mut residual = t.clone();
        for block in &self.blocks {
            let latent = residual.multi_mode_product(&block.backward.projectors(), None)?;
            let explained = latent.multi_mode_product(&block.forward.patterns, None)?;
            residual = residual.sub(&explained)?;
            features.extend_from_slice(latent.data());
        }
        let reconstruction = t.sub(&residual)?;
        Ok((features, reconstruction))
    }

    pub fn transform(&self, t: &Tensor) -> Result<Vec<f64>> {
        bttda_transform(self, t)
    }

    /// Features for a batch of samples, one row each.
    pub fn transform_batch(&self, samples: &[Tensor]) -> Result<Matrix> {
        let width = self.feature_len();
        let mut out = Matrix::zeros(samples.len(), width);
        for (i, s) in samples.iter().enumerate() {
            let f = self.transform(s)?;
            out.row_mut(i).copy_from_slice(&f);
        }
        Ok(out)
    }

    pub fn reconstruct(&self, t: &Tensor) -> Result<Tensor> {
        Ok(self.deflate(t)?.1)
    }
}

pub fn bttda_transform(model: &BttdaModel, t: &Tensor) -> Result<Vec<f64>> {
    Ok(model.deflate(t)?.0)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta {theta} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Per-mode ranks from the eigenvalue energy of the residual total scatter:
/// the smallest `R` whose leading eigenvalues carry strictly more than
/// `theta` of the total. `theta = 0` gives all ones and `theta = 1` full
/// rank.
pub fn select_ranks(residuals: &[Tensor], theta: f64) -> Result<Vec<usize>> {
    check_theta(theta)?;
    let first = residuals.first().ok_or(Error::EmptyDataset)?;
    let n = residuals.len() as f64;
    (0..first.order())
        .map(|k| {
            let d = first.dims()[k];
            if theta == 0.0 {
                return Ok(1);
            }
            if theta == 1.0 {
                return Ok(d);
            }
            let s = total_scatter(residuals, k)?;
            let total = s.trace();
            if total < ZERO_ENERGY * n {
                return Ok(1);
            }
            let mut values: Vec<f64> = SymmetricEigen::new(s)
                .eigenvalues
                .iter()
                .map(|v| v.max(0.0))
                .collect();
            values.sort_by(|a, b| b.total_cmp(a));
            Ok(rank_for_energy(&values, theta))
        })
        .collect()
}

/// Smallest `R` with `sum(values[..R]) / sum(values) > theta`, for values
/// sorted descending.
pub fn rank_for_energy(values: &[f64], theta: f64) -> usize {
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if acc / total > theta {
            return i + 1;
        }
    }
    values.len()
}

/// `sum |X - X_hat|_F^2 / sum |X|_F^2`
pub fn nmse(originals: &[Tensor], reconstructions: &[Tensor]) -> Result<f64> {
    if originals.len() != reconstructions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} originals but {} reconstructions",
            originals.len(),
            reconstructions.len()
        )));
    }
    let mut err = 0.0;
    let mut energy = 0.0;
    for (x, r) in originals.iter().zip(reconstructions) {
        err += x.sub(r)?.squared_norm();
        energy += x.squared_norm();
    }
    if energy == 0.0 {
        return Err(Error::UndefinedRatio(
            "NMSE is undefined for all-zero originals".into(),
        ));
    }
    Ok(err / energy)
}

fn block_options(opts: &FitOptions, block: usize) -> FitOptions {
    let mut o = *opts;
    if let InitStrategy::RandomOrthonormal { seed } = o.init {
        o.init = InitStrategy::RandomOrthonormal {
            seed: seed.wrapping_add(block as u64),
        };
    }
    o
}

pub fn fit_bttda(
    data: &LabeledDataset,
    blocks: usize,
    theta: f64,
    opts: &FitOptions,
) -> Result<BttdaFit> {
    if blocks == 0 {
        return Err(Error::InvalidArgument("need at least one block".into()));
    }
    check_theta(theta)?;
    opts.validate()?;
    if let Some(empty) = data.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }
    let labels = data.labels().to_vec();
    let classes = data.classes();
    let energy: f64 = data.samples().iter().map(Tensor::squared_norm).sum();

    let mut residuals = data.samples().to_vec();
    let mut fitted = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); data.len()];
    let mut truncated = false;
    for b in 0..blocks {
        let ranks = select_ranks(&residuals, theta)?;
        let block_data = LabeledDataset::new(residuals.clone(), labels.clone(), classes)?;
        let o = block_options(opts, b);
        let backward = fit_hoda_backward(&block_data, &ranks, &o)
            .context(|| format!("block {} backward fit", b + 1))?;
        let latents = backward.transform_all(&residuals)?;
        let forward = fit_hoda_forward(&latents, &residuals, &backward.projections, &o)
            .context(|| format!("block {} forward fit", b + 1))?;
        let mut remaining = 0.0;
        for ((res, latent), row) in residuals.iter_mut().zip(&latents).zip(columns.iter_mut()) {
            let explained = forward.reconstruct_one(latent)?;
            *res = res.sub(&explained)?;
            remaining += res.squared_norm();
            row.extend_from_slice(latent.data());
        }
        let train_nmse = if energy > 0.0 { remaining / energy } else { 0.0 };
        fitted.push(Block {
            backward,
            forward,
            ranks,
            train_nmse,
        });
        let more = b + 1 < blocks;
        if more && (theta == 1.0 || remaining <= EXHAUSTED_ENERGY * energy) {
            truncated = true;
            break;
        }
    }
    let width = columns[0].len();
    let features = Matrix::from_fn(data.len(), width, |i, j| columns[i][j]);
    Ok(BttdaFit {
        model: BttdaModel {
            blocks: fitted,
            theta,
            input_dims: data.dims().to_vec(),
            requested_blocks: blocks,
            truncated,
        },
        features,
    })
}
