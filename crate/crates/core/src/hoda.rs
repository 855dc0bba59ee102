//! Backward HODA: per-mode orthonormal projections that maximize the Fisher
//! ratio of the projected (latent) tensors.
//!
//! Each sweep visits the modes in order. For mode `k` the data is projected
//! on every other mode, the partial within/between-class scatters of that
//! partial latent are formed, and the trace-ratio step picks the leading
//! eigenvectors `V_k` of `S_b - phi_k S_w`, where `phi_k` is the ratio
//! reached by the previous `U_k`. The new `U_k` is then the leading
//! eigenbasis of the total scatter compressed onto `span(V_k)`, which removes
//! the arbitrary rotation inside that subspace.

use nalgebra::QR;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::discriminant::{
    centered_fibers, leading_eigenvectors, leading_eigenvectors_by, ledoit_wolf_alpha,
    partial_scatters, shrink_scatter, total_scatter, ClassStats, EigenOrder,
};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor};
use crate::util::{lossless_f64, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Leading eigenvectors of each mode's total scatter.
    PartialHosvd,
    /// Orthonormalized Gaussian matrices drawn from `seed`.
    RandomOrthonormal { seed: u64 },
}

/// Shrinkage applied to the partial within-class scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shrinkage {
    Off,
    Fixed(f64),
    /// Ledoit-Wolf intensity estimated from the class-centered fibers at every
    /// step.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub init: InitStrategy,
    pub shrinkage: Shrinkage,
    /// Which eigenpairs of `S_b - phi S_w` count as leading.
    pub eigen_order: EigenOrder,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 128,
            tolerance: 1e-6,
            init: InitStrategy::PartialHosvd,
            shrinkage: Shrinkage::Off,
            eigen_order: EigenOrder::Algebraic,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if let Shrinkage::Fixed(a) = self.shrinkage {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "shrinkage {a} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HodaDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Projector distance `|U U^T - U' U'^T|_F` of the last sweep, per mode.
    pub update_norms: Vec<f64>,
    #[serde(with = "lossless_f64")]
    pub initial_fisher_ratio: f64,
    #[serde(with = "lossless_f64")]
    pub final_fisher_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HodaModel {
    /// `D_k x R_k` with orthonormal columns.
    pub projections: Vec<Matrix>,
    pub ranks: Vec<usize>,
    pub input_dims: Vec<usize>,
    pub diagnostics: HodaDiagnostics,
}

impl HodaModel {
    /// Projection matrices transposed, ready for [`Tensor::multi_mode_product`].
    pub fn projectors(&self) -> Vec<Matrix> {
        self.projections.iter().map(|u| u.transpose()).collect()
    }

    pub fn transform(&self, t: &Tensor) -> Result<Tensor> {
        hoda_transform(self, t)
    }

    pub fn transform_all(&self, samples: &[Tensor]) -> Result<Vec<Tensor>> {
        let p = self.projectors();
        samples
            .iter()
            .map(|t| {
                self.check_input(t)?;
                t.multi_mode_product(&p, None)
            })
            .collect()
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
}

/// Latent tensor `t x_1 U_1^T x_2 .. x_K U_K^T` with dims `(R_1..R_K)`.
pub fn hoda_transform(model: &HodaModel, t: &Tensor) -> Result<Tensor> {
    model.check_input(t)?;
    t.multi_mode_product(&model.projectors(), None)
}

pub(crate) fn check_ranks(dims: &[usize], ranks: &[usize]) -> Result<()> {
    if ranks.len() != dims.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            dims.len()
        )));
    }
    for (k, (&r, &d)) in ranks.iter().zip(dims).enumerate() {
        if r == 0 || r > d {
            return Err(Error::InvalidArgument(format!(
                "rank {r} for mode {k} must lie in 1..={d}"
            )));
        }
    }
    Ok(())
}

pub fn init_projections(
    data: &LabeledDataset,
    ranks: &[usize],
    strategy: InitStrategy,
) -> Result<Vec<Matrix>> {
    let dims = data.dims();
    check_ranks(dims, ranks)?;
    match strategy {
        InitStrategy::PartialHosvd => (0..dims.len())
            .map(|k| {
                let s = total_scatter(data.samples(), k)?;
                Ok(leading_eigenvectors(&s, ranks[k])?.vectors)
            })
            .collect(),
        InitStrategy::RandomOrthonormal { seed } => {
            let mut rng = stream_rng(seed, 0);
            Ok(dims
                .iter()
                .zip(ranks)
                .map(|(&d, &r)| {
                    let g = Matrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
                    let qr = QR::new(g);
                    let diag = qr.r().diagonal();
                    let mut q = qr.q();
                    for (j, s) in diag.iter().enumerate() {
                        if *s < 0.0 {
                            q.column_mut(j).neg_mut();
                        }
                    }
                    q
                })
                .collect())
        }
    }
}

fn trace_quadratic(u: &Matrix, s: &Matrix) -> f64 {
    (u.transpose() * s * u).trace()
}

fn projector_distance(a: &Matrix, b: &Matrix) -> f64 {
    (a * a.transpose() - b * b.transpose()).norm()
}

/// Fits the backward model.
pub fn fit_hoda_backward(
    data: &LabeledDataset,
    ranks: &[usize],
    opts: &FitOptions,
) -> Result<HodaModel> {
    opts.validate()?;
    let samples = data.samples();
    let labels = data.labels();
    let classes = data.classes();
    let dims = data.dims().to_vec();
    let order = dims.len();
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if data.len() < classes {
        return Err(Error::InvalidArgument(format!(
            "{} samples for {classes} classes",
            data.len()
        )));
    }
    check_ranks(&dims, ranks)?;
    if let Some(empty) = data.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }

    let mut u = init_projections(data, ranks, opts.init)?;
    let totals = (0..order)
        .map(|k| total_scatter(samples, k))
        .collect::<Result<Vec<_>>>()?;
    let initial_fisher_ratio = projected_ratio(samples, labels, classes, &u)?;

    let mut update_norms = vec![f64::INFINITY; order];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        for k in 0..order {
            let projectors: Vec<Matrix> = u.iter().map(|m| m.transpose()).collect();
            let partials = samples
                .iter()
                .map(|x| x.multi_mode_product(&projectors, Some(k)))
                .collect::<Result<Vec<_>>>()?;
            let stats = ClassStats::compute(&partials, labels, classes)?;
            let (s_w, s_b) = partial_scatters(&partials, labels, &stats, k)?;
            let s_w = match opts.shrinkage {
                Shrinkage::Off => s_w,
                Shrinkage::Fixed(a) => shrink_scatter(&s_w, a)?,
                Shrinkage::Auto => {
                    let fibers = centered_fibers(&partials, labels, &stats, k)?;
                    shrink_scatter(&s_w, ledoit_wolf_alpha(&fibers))?
                }
            };
            let num = trace_quadratic(&u[k], &s_b);
            let den = trace_quadratic(&u[k], &s_w);
            let scale = s_w.trace().abs() + s_b.trace().abs();
            if !(den > f64::EPSILON * scale) {
                return Err(Error::SingularFit(format!(
                    "within-class scatter vanishes on the mode-{k} projection \
                     (iteration {iterations}, trace {den:e})"
                )));
            }
            let phi = num / den;
            let v = leading_eigenvectors_by(&(&s_b - &s_w * phi), ranks[k], opts.eigen_order)?
                .vectors;
            // Leading eigenvectors of V V^T S_t V V^T, taken through the
            // equivalent R x R problem V^T S_t V so the basis stays in span(V).
            let rot = leading_eigenvectors(&(v.transpose() * &totals[k] * &v), ranks[k])?.vectors;
            let next = sign_normalized(&v * rot);
            update_norms[k] = projector_distance(&next, &u[k]);
            u[k] = next;
        }
        if update_norms.iter().all(|&d| d < opts.tolerance) {
            converged = true;
            break;
        }
    }

    let final_fisher_ratio = projected_ratio(samples, labels, classes, &u)?;
    Ok(HodaModel {
        projections: u,
        ranks: ranks.to_vec(),
        input_dims: dims,
        diagnostics: HodaDiagnostics {
            iterations,
            converged,
            update_norms,
            initial_fisher_ratio,
            final_fisher_ratio,
        },
    })
}

fn sign_normalized(mut m: Matrix) -> Matrix {
    for mut col in m.column_iter_mut() {
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    m
}

// Fisher ratio of the latents under `u`; NaN when it is 0/0.
fn projected_ratio(samples: &[Tensor], labels: &[usize], classes: usize, u: &[Matrix]) -> Result<f64> {
    let p: Vec<Matrix> = u.iter().map(|m| m.transpose()).collect();
    let latents = samples
        .iter()
        .map(|x| x.multi_mode_product(&p, None))
        .collect::<Result<Vec<_>>>()?;
    match fisher_ratio(&latents, labels, classes) {
        Err(Error::UndefinedRatio(_)) => Ok(f64::NAN),
        other => other,
    }
}

/// Between-class over within-class squared Frobenius spread of `latents`.
///
/// Returns `+inf` when the within-class spread is zero but the class means
/// differ.
pub fn fisher_ratio(latents: &[Tensor], labels: &[usize], classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fisher ratio needs at least 2 classes, got {classes}"
        )));
    }
    let stats = ClassStats::compute(latents, labels, classes)?;
    let mut between = 0.0;
    for (m, &c) in stats.means.iter().zip(&stats.counts) {
        between += c as f64 * m.sub(&stats.grand_mean)?.squared_norm();
    }
    let mut within = 0.0;
    for (g, &l) in latents.iter().zip(labels) {
        within += g.sub(&stats.means[l])?.squared_norm();
    }
    if within == 0.0 {
        if between == 0.0 {
            return Err(Error::UndefinedRatio(
                "all latents coincide with their class means and the grand mean".into(),
            ));
        }
        return Ok(f64::INFINITY);
    }
    Ok(between / within)
}
