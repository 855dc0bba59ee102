#![allow(dead_code)]

use bttda::util::stream_rng;
use bttda::{BttdaModel, HodaModel, LabeledDataset, Matrix, Tensor};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, 0);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

pub fn gaussian_tensor(dims: &[usize], seed: u64, stream: u64) -> Tensor {
    let mut rng = stream_rng(seed, stream);
    let len = dims.iter().product();
    let data: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(dims.to_vec(), data).unwrap()
}

/// Two Gaussian classes of vectors (order-1 tensors) with a random shared
/// covariance root and shifted means.
pub fn two_class_vectors(dim: usize, per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = stream_rng(seed, 0);
    let root = Matrix::from_fn(dim, dim, |i, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        if i == j {
            1.0 + 0.3 * z
        } else {
            0.3 * z
        }
    });
    let shift = DVector::from_fn(dim, |i, _| if i % 3 == 0 { 0.8 } else { -0.2 });
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2 {
        for _ in 0..per_class {
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let x = &root * z + &shift * c as f64;
            samples.push(Tensor::new(vec![dim], x.as_slice().to_vec()).unwrap());
            labels.push(c);
        }
    }
    LabeledDataset::new(samples, labels, 2).unwrap()
}

/// Closed-form two-class Fisher direction `S_w^{-1} (mu_1 - mu_0)`.
pub fn fisher_lda_direction(data: &LabeledDataset) -> DVector<f64> {
    let d = data.dims()[0];
    let mut means = [DVector::zeros(d), DVector::zeros(d)];
    let mut counts = [0.0; 2];
    for (s, &l) in data.samples().iter().zip(data.labels()) {
        means[l] += DVector::from_column_slice(s.data());
        counts[l] += 1.0;
    }
    for c in 0..2 {
        means[c] /= counts[c];
    }
    let mut sw = Matrix::zeros(d, d);
    for (s, &l) in data.samples().iter().zip(data.labels()) {
        let r = DVector::from_column_slice(s.data()) - &means[l];
        sw += &r * r.transpose();
    }
    let dir = sw.lu().solve(&(&means[1] - &means[0])).unwrap();
    dir.normalize()
}

/// Sine of the largest principal angle between the column spaces of two
/// orthonormal-column matrices.
pub fn subspace_sin(a: &Matrix, b: &Matrix) -> f64 {
    let resid = a - b * (b.transpose() * a);
    resid.svd(false, false).singular_values.max()
}

pub fn orthonormality_error(u: &Matrix) -> f64 {
    (u.transpose() * u - Matrix::identity(u.ncols(), u.ncols())).amax()
}

pub fn max_orthonormality_error(model: &HodaModel) -> f64 {
    model.projections.iter().map(orthonormality_error).fold(0.0, f64::max)
}

pub fn bttda_orthonormality_error(model: &BttdaModel) -> f64 {
    model
        .blocks
        .iter()
        .map(|b| max_orthonormality_error(&b.backward))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
