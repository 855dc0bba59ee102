//! Forward model: activation patterns `A_k` (`D_k x R_k`) that rebuild the
//! inputs from their latents, `X ~ G x_1 A_1 x_2 .. x_K A_K`, fitted by
//! alternating least squares.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::discriminant::stacked_unfolding;
use crate::error::{Error, Result};
use crate::hoda::FitOptions;
use crate::tensor::{Matrix, Tensor};

/// Gram matrices whose eigenvalue spread exceeds this are solved with a
/// ridge term instead of exactly.
const MAX_GRAM_CONDITION: f64 = 1e12;
const RIDGE_SCALE: f64 = 1e-10;
/// Relative normal-equation residual every mode must reach before the fit
/// may stop early.
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `|A_k - A_k'|_F` of the last sweep, per mode.
    pub update_norms: Vec<f64>,
    /// `|(X_k - A_k Z_k) Z_k^T|_F / |X_k Z_k^T|_F` at exit, per mode.
    pub residuals: Vec<f64>,
    /// Summed squared reconstruction error after each sweep.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSet {
    pub patterns: Vec<Matrix>,
    pub diagnostics: ForwardDiagnostics,
}

impl ActivationSet {
    pub fn ranks(&self) -> Vec<usize> {
        self.patterns.iter().map(|a| a.ncols()).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.patterns.iter().map(|a| a.nrows()).collect()
    }

    pub fn reconstruct_one(&self, latent: &Tensor) -> Result<Tensor> {
        if latent.dims() != self.ranks().as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "patterns expect latents of dims {:?}, got {:?}",
                self.ranks(),
                latent.dims()
            )));
        }
        latent.multi_mode_product(&self.patterns, None)
    }
}

/// `X_hat(n) = G(n) x_1 A_1 .. x_K A_K` for every latent.
pub fn reconstruct(latents: &[Tensor], patterns: &ActivationSet) -> Result<Vec<Tensor>> {
    latents.iter().map(|g| patterns.reconstruct_one(g)).collect()
}

// Normal-equation pieces for mode k: cross = sum X_k Z_k^T, gram = sum Z_k Z_k^T
// with Z = G x_{j != k} A_j.
fn normal_equations(
    latents: &[Tensor],
    originals: &[Tensor],
    patterns: &[Matrix],
    k: usize,
) -> Result<(Matrix, Matrix)> {
    let expanded = latents
        .iter()
        .map(|g| g.multi_mode_product(patterns, Some(k)))
        .collect::<Result<Vec<_>>>()?;
    let z = stacked_unfolding(expanded.iter(), expanded[0].dims(), k)?;
    let x = stacked_unfolding(originals.iter(), originals[0].dims(), k)?;
    Ok((&x * z.transpose(), &z * z.transpose()))
}

/// Least-squares `A` minimizing `sum |X_k - A Z_k|^2` from its normal
/// equations `A gram = cross`.
fn solve_pattern(cross: &Matrix, gram: &Matrix) -> Matrix {
    let r = gram.nrows();
    let trace = gram.trace();
    if !(trace > 0.0) {
        return Matrix::zeros(cross.nrows(), r);
    }
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let ridge = if min <= 0.0 || max / min > MAX_GRAM_CONDITION {
        RIDGE_SCALE * trace / r as f64
    } else {
        0.0
    };
    // A = cross Q diag(1 / (lambda + ridge)) Q^T; ridge = 0 is the exact
    // inverse of a well-conditioned gram.
    let q = &eig.eigenvectors;
    let mut scaled = cross * q;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let denom = lambda + ridge;
        let s = if denom > 0.0 { 1.0 / denom } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * q.transpose()
}

fn relative_residual(cross: &Matrix, gram: &Matrix, a: &Matrix) -> f64 {
    let scale = cross.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (cross - a * gram).norm() / scale
}

pub(crate) fn squared_error(latents: &[Tensor], originals: &[Tensor], patterns: &[Matrix]) -> Result<f64> {
    let mut total = 0.0;
    for (g, x) in latents.iter().zip(originals) {
        total += x.sub(&g.multi_mode_product(patterns, None)?)?.squared_norm();
    }
    Ok(total)
}

/// Fits activation patterns starting from `init` (the backward projections).
///
/// Stops after `max_iterations` sweeps, or once every pattern moved less
/// than `tolerance` in a sweep and every mode satisfies its normal equations
/// to [`STATIONARITY_TOL`].
pub fn fit_hoda_forward(
    latents: &[Tensor],
    originals: &[Tensor],
    init: &[Matrix],
    opts: &FitOptions,
) -> Result<ActivationSet> {
    opts.validate()?;
    if latents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if latents.len() != originals.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} latents but {} originals",
            latents.len(),
            originals.len()
        )));
    }
    let ranks = latents[0].dims().to_vec();
    let dims = originals[0].dims().to_vec();
    if init.len() != dims.len() || ranks.len() != dims.len() {
        return Err(Error::ShapeMismatch(format!(
            "order mismatch: latents {ranks:?}, originals {dims:?}, {} patterns",
            init.len()
        )));
    }
    for (k, a) in init.iter().enumerate() {
        if a.shape() != (dims[k], ranks[k]) {
            return Err(Error::ShapeMismatch(format!(
                "initial pattern {k} is {:?}, expected {:?}",
                a.shape(),
                (dims[k], ranks[k])
            )));
        }
    }
    if let Some(bad) = latents.iter().find(|g| g.dims() != ranks.as_slice()) {
        return Err(Error::ShapeMismatch(format!("latent dims {:?}", bad.dims())));
    }
    if let Some(bad) = originals.iter().find(|x| x.dims() != dims.as_slice()) {
        return Err(Error::ShapeMismatch(format!("original dims {:?}", bad.dims())));
    }

    let order = dims.len();
    let mut patterns = init.to_vec();
    let mut update_norms = vec![f64::INFINITY; order];
    let mut loss_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        for k in 0..order {
            let (cross, gram) = normal_equations(latents, originals, &patterns, k)?;
            let next = solve_pattern(&cross, &gram);
            update_norms[k] = (&next - &patterns[k]).norm();
            patterns[k] = next;
        }
        loss_trace.push(squared_error(latents, originals, &patterns)?);
        if update_norms.iter().all(|&d| d < opts.tolerance)
            && residuals(latents, originals, &patterns)?
                .iter()
                .all(|&r| r <= STATIONARITY_TOL)
        {
            converged = true;
            break;
        }
    }
    let residuals = residuals(latents, originals, &patterns)?;
    Ok(ActivationSet {
        patterns,
        diagnostics: ForwardDiagnostics {
            iterations,
            converged,
            update_norms,
            residuals,
            loss_trace,
        },
    })
}

fn residuals(latents: &[Tensor], originals: &[Tensor], patterns: &[Matrix]) -> Result<Vec<f64>> {
    (0..patterns.len())
        .map(|k| {
            let (cross, gram) = normal_equations(latents, originals, patterns, k)?;
            Ok(relative_residual(&cross, &gram, &patterns[k]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> FitOptions {
        FitOptions::default()
    }

    #[test]
    fn solve_pattern_exact_and_zero() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let z = Matrix::from_row_slice(2, 4, &[1.0, 0.0, 2.0, -1.0, 0.5, 1.0, 0.0, 1.0]);
        let x = &a * &z;
        let got = solve_pattern(&(&x * z.transpose()), &(&z * z.transpose()));
        assert!((got - a).amax() < 1e-12);
        let zero = solve_pattern(&Matrix::zeros(3, 2), &Matrix::zeros(2, 2));
        assert_eq!(zero, Matrix::zeros(3, 2));
    }

    #[test]
    fn solve_pattern_rank_deficient_uses_ridge() {
        // Z has two identical rows: gram is singular.
        let z = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let x = Matrix::from_row_slice(1, 3, &[2.0, 4.0, 6.0]);
        let a = solve_pattern(&(&x * z.transpose()), &(&z * z.transpose()));
        assert!(a.iter().all(|v| v.is_finite()));
        // minimum-norm-like split between the duplicated regressors
        assert!((a[(0, 0)] - 1.0).abs() < 1e-4 && (a[(0, 1)] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_latents_give_zero_patterns() {
        let latents = vec![Tensor::zeros(&[1, 1]).unwrap(); 3];
        let originals: Vec<Tensor> = (0..3)
            .map(|n| Tensor::from_fn(&[2, 3], |i| (n + i[0] + i[1]) as f64).unwrap())
            .collect();
        let init = vec![Matrix::from_element(2, 1, 0.5), Matrix::from_element(3, 1, 0.5)];
        let fit = fit_hoda_forward(&latents, &originals, &init, &opts()).unwrap();
        let rec = reconstruct(&latents, &fit).unwrap();
        for (r, x) in rec.iter().zip(&originals) {
            assert!(r.data().iter().all(|&v| v == 0.0));
            assert_eq!(x.sub(r).unwrap(), *x);
        }
    }

    #[test]
    fn identity_patterns_reconstruct_latents() {
        let g = Tensor::from_fn(&[2, 3], |i| (i[0] * 3 + i[1]) as f64 - 2.0).unwrap();
        let set = ActivationSet {
            patterns: vec![Matrix::identity(2, 2), Matrix::identity(3, 3)],
            diagnostics: ForwardDiagnostics {
                iterations: 0,
                converged: true,
                update_norms: vec![],
                residuals: vec![],
                loss_trace: vec![],
            },
        };
        assert_eq!(reconstruct(&[g.clone()], &set).unwrap()[0], g);
        assert!(set.reconstruct_one(&Tensor::zeros(&[3, 2]).unwrap()).is_err());
    }

    #[test]
    fn reconstruct_matches_matrix_oracle() {
        let g = Tensor::from_fn(&[2, 2], |i| (1 + i[0] + 2 * i[1]) as f64 * 0.5).unwrap();
        let a1 = Matrix::from_fn(3, 2, |i, j| (i as f64 - j as f64) * 0.7 + 0.1);
        let a2 = Matrix::from_fn(4, 2, |i, j| ((i * 2 + j) as f64).cos());
        let set = ActivationSet {
            patterns: vec![a1.clone(), a2.clone()],
            diagnostics: ForwardDiagnostics {
                iterations: 0,
                converged: true,
                update_norms: vec![],
                residuals: vec![],
                loss_trace: vec![],
            },
        };
        let x = set.reconstruct_one(&g).unwrap();
        let oracle = &a1 * g.unfold(0).unwrap() * a2.transpose();
        assert!((x.unfold(0).unwrap() - oracle).amax() < 1e-12);
    }

    #[test]
    fn rejects_misaligned_inputs() {
        let latents = vec![Tensor::zeros(&[1, 1]).unwrap(); 2];
        let originals = vec![Tensor::zeros(&[2, 2]).unwrap(); 3];
        let init = vec![Matrix::zeros(2, 1), Matrix::zeros(2, 1)];
        assert!(fit_hoda_forward(&latents, &originals, &init, &opts()).is_err());
        let originals = vec![Tensor::zeros(&[2, 2]).unwrap(); 2];
        let bad_init = vec![Matrix::zeros(2, 2), Matrix::zeros(2, 1)];
        assert!(fit_hoda_forward(&latents, &originals, &bad_init, &opts()).is_err());
    }
}
