//! Class statistics, scatter matrices, shrinkage and the symmetric
//! eigen-solver shared by every fit.

use std::cmp::Ordering;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, LabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor};

/// Per-class sample counts and means. The grand mean is the unweighted mean
/// of the class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    pub means: Vec<Tensor>,
    pub grand_mean: Tensor,
}

impl ClassStats {
    pub fn compute(samples: &[Tensor], labels: &[usize], classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if samples.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let dims = samples[0].dims();
        let counts = class_counts(labels, classes);
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(empty));
        }
        let mut means = vec![Tensor::zeros(dims)?; classes];
        for (s, &l) in samples.iter().zip(labels) {
            means[l].add_assign(s)?;
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            *m = m.scaled(1.0 / c as f64);
        }
        let mut grand_mean = Tensor::zeros(dims)?;
        for m in &means {
            grand_mean.add_assign(m)?;
        }
        let grand_mean = grand_mean.scaled(1.0 / classes as f64);
        Ok(Self {
            counts,
            means,
            grand_mean,
        })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn class_statistics(data: &LabeledDataset) -> Result<ClassStats> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "class statistics need at least 2 samples, got {}",
            data.len()
        )));
    }
    ClassStats::compute(data.samples(), data.labels(), data.classes())
}

/// Horizontally stacks the mode-`mode` unfoldings of `tensors`.
pub(crate) fn stacked_unfolding<'a>(
    tensors: impl ExactSizeIterator<Item = &'a Tensor>,
    dims: &[usize],
    mode: usize,
) -> Result<Matrix> {
    let n = tensors.len();
    let d = dims[mode];
    let per: usize = dims.iter().product::<usize>() / d;
    let mut out = Matrix::zeros(d, per * n);
    for (i, t) in tensors.enumerate() {
        if t.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "tensor dims {:?} differ from {:?}",
                t.dims(),
                dims
            )));
        }
        let u = t.unfold(mode)?;
        out.columns_mut(i * per, per).copy_from(&u);
    }
    Ok(out)
}

/// Within-class and between-class scatter of `partials` along `mode`.
///
/// `stats` must be the class statistics of `partials` themselves.
pub fn partial_scatters(
    partials: &[Tensor],
    labels: &[usize],
    stats: &ClassStats,
    mode: usize,
) -> Result<(Matrix, Matrix)> {
    let centered = centered_fibers(partials, labels, stats, mode)?;
    let s_w = &centered * centered.transpose();
    let between = stacked_unfolding(
        stats.means.iter().map(|m| m.sub(&stats.grand_mean)).collect::<Result<Vec<_>>>()?.iter(),
        stats.grand_mean.dims(),
        mode,
    )?;
    let per = between.ncols() / stats.classes();
    let mut weighted = between.clone();
    for (c, &count) in stats.counts.iter().enumerate() {
        weighted.columns_mut(c * per, per).scale_mut(count as f64);
    }
    let s_b = &weighted * between.transpose();
    Ok((symmetrized(s_w), symmetrized(s_b)))
}

/// Mode-`mode` fibers of every partial minus its class mean, stacked as
/// columns.
pub(crate) fn centered_fibers(
    partials: &[Tensor],
    labels: &[usize],
    stats: &ClassStats,
    mode: usize,
) -> Result<Matrix> {
    if partials.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} partials but {} labels",
            partials.len(),
            labels.len()
        )));
    }
    let dims = stats.grand_mean.dims();
    let centered = partials
        .iter()
        .zip(labels)
        .map(|(p, &l)| p.sub(&stats.means[l]))
        .collect::<Result<Vec<_>>>()?;
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: dims.len(),
        });
    }
    stacked_unfolding(centered.iter(), dims, mode)
}

/// Uncentered total scatter `sum_n X_k(n) X_k(n)^T`.
pub fn total_scatter(data: &[Tensor], mode: usize) -> Result<Matrix> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    if mode >= first.order() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: first.order(),
        });
    }
    let stacked = stacked_unfolding(data.iter(), first.dims(), mode)?;
    Ok(symmetrized(&stacked * stacked.transpose()))
}

/// `(1 - alpha) S + alpha * (tr(S) / rows) * I`
pub fn shrink_scatter(s: &Matrix, alpha: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "shrinkage {alpha} outside [0, 1]"
        )));
    }
    let n = s.nrows();
    let target = s.trace() / n as f64;
    let mut out = s * (1.0 - alpha);
    for i in 0..n {
        out[(i, i)] += alpha * target;
    }
    Ok(out)
}

/// Ledoit-Wolf shrinkage intensity toward a scaled identity.
///
/// `observations` holds one centered observation per column.
pub fn ledoit_wolf_alpha(observations: &Matrix) -> f64 {
    let (p, n) = observations.shape();
    if p == 0 || n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let pf = p as f64;
    let cov = observations * observations.transpose() / nf;
    let mu = cov.trace() / pf;
    let cov_sq = cov.norm_squared();
    let delta = (cov_sq - 2.0 * mu * cov.trace() + pf * mu * mu) / pf;
    let fourth: f64 = observations
        .column_iter()
        .map(|c| c.norm_squared().powi(2))
        .sum();
    let beta = ((fourth / nf - cov_sq) / (pf * nf)).min(delta);
    if delta <= 0.0 || beta <= 0.0 {
        return 0.0;
    }
    (beta / delta).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EigenOrder {
    /// Largest `|lambda|` first; ties go to the larger signed value.
    #[default]
    Magnitude,
    /// Largest signed `lambda` first.
    Algebraic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix,
}

const SYMMETRY_TOL: f64 = 1e-9;

/// The `count` leading eigenpairs of a symmetric matrix, by magnitude.
pub fn leading_eigenvectors(s: &Matrix, count: usize) -> Result<EigenResult> {
    leading_eigenvectors_by(s, count, EigenOrder::Magnitude)
}

pub fn leading_eigenvectors_by(s: &Matrix, count: usize, order: EigenOrder) -> Result<EigenResult> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "eigenproblem needs a square matrix, got {}x{}",
            n,
            s.ncols()
        )));
    }
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot take {count} eigenvectors of a {n}x{n} matrix"
        )));
    }
    let scale = s.amax();
    let asymmetry = (s - s.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry, scale });
    }
    let eig = SymmetricEigen::new(symmetrized(s.clone()));
    let mut idx: Vec<usize> = (0..n).collect();
    let vals = &eig.eigenvalues;
    idx.sort_by(|&a, &b| {
        let (x, y) = (vals[a], vals[b]);
        let primary = match order {
            EigenOrder::Magnitude => y.abs().partial_cmp(&x.abs()).unwrap_or(Ordering::Equal),
            EigenOrder::Algebraic => Ordering::Equal,
        };
        primary
            .then(y.partial_cmp(&x).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut vectors = Matrix::zeros(n, count);
    let mut values = Vec::with_capacity(count);
    for (j, &i) in idx.iter().take(count).enumerate() {
        values.push(vals[i]);
        let mut col = eig.eigenvectors.column(i).into_owned();
        // Largest-magnitude entry positive; lowest index wins ties.
        let mut pivot = 0;
        for r in 1..n {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(j, &col);
    }
    Ok(EigenResult { values, vectors })
}

pub(crate) fn symmetrized(s: Matrix) -> Matrix {
    (&s + s.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(values: [f64; 4]) -> Tensor {
        Tensor::new(vec![2, 2], values.to_vec()).unwrap()
    }

    // Cyclic Jacobi rotations: an eigensolver independent of nalgebra's QR.
    fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
        let n = a.nrows();
        let mut a = a.clone();
        let mut v = Matrix::identity(n, n);
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[(i, i)]).collect(), v)
    }

    #[test]
    fn class_statistics_cases() {
        let x = t2([1.0, 2.0, 3.0, 4.0]);
        let data = LabeledDataset::new(vec![x.clone(), x.clone()], vec![0, 1], 2).unwrap();
        let st = class_statistics(&data).unwrap();
        assert_eq!(st.means[0], x);
        assert_eq!(st.means[1], x);
        assert_eq!(st.grand_mean, x);

        let y = t2([3.0, 0.0, 1.0, 2.0]);
        let data = LabeledDataset::new(vec![x.clone(), y.clone()], vec![0, 1], 2).unwrap();
        let st = class_statistics(&data).unwrap();
        assert_eq!(st.grand_mean.data(), &[2.0, 1.0, 2.0, 3.0]);

        // 3 classes with unequal counts; grand mean is the mean of class means.
        let samples = vec![
            t2([0.0; 4]),
            t2([2.0; 4]),
            t2([3.0, 3.0, 3.0, 3.0]),
            t2([6.0, 0.0, 0.0, 0.0]),
            t2([0.0, 6.0, 0.0, 0.0]),
            t2([0.0, 0.0, 6.0, 0.0]),
        ];
        let labels = vec![0, 0, 1, 2, 2, 2];
        let st = ClassStats::compute(&samples, &labels, 3).unwrap();
        assert_eq!(st.counts, vec![2, 1, 3]);
        assert_eq!(st.means[0].data(), &[1.0; 4]);
        assert_eq!(st.means[2].data(), &[2.0, 2.0, 2.0, 0.0]);
        let expected = [(1.0 + 3.0 + 2.0) / 3.0, 2.0, 2.0, (1.0 + 3.0) / 3.0];
        for (a, b) in st.grand_mean.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn class_statistics_errors() {
        let x = t2([0.0; 4]);
        let data = LabeledDataset::new(vec![x.clone(), x.clone()], vec![0, 0], 2).unwrap();
        assert!(matches!(class_statistics(&data), Err(Error::EmptyClass(1))));
        let single = LabeledDataset::new(vec![x], vec![0], 1).unwrap();
        assert!(class_statistics(&single).is_err());
        assert!(matches!(ClassStats::compute(&[], &[], 2), Err(Error::EmptyDataset)));
    }

    fn loop_scatters(samples: &[Tensor], labels: &[usize], classes: usize, mode: usize) -> (Matrix, Matrix) {
        let dims = samples[0].dims().to_vec();
        let d = dims[mode];
        let other = 1 - mode; // order-2 only
        let st = ClassStats::compute(samples, labels, classes).unwrap();
        let mut sw = Matrix::zeros(d, d);
        let mut sb = Matrix::zeros(d, d);
        let idx = |i: usize, j: usize| if mode == 0 { [i, j] } else { [j, i] };
        for (s, &l) in samples.iter().zip(labels) {
            for a in 0..d {
                for b in 0..d {
                    for j in 0..dims[other] {
                        let x = s.get(&idx(a, j)) - st.means[l].get(&idx(a, j));
                        let y = s.get(&idx(b, j)) - st.means[l].get(&idx(b, j));
                        sw[(a, b)] += x * y;
                    }
                }
            }
        }
        for c in 0..classes {
            for a in 0..d {
                for b in 0..d {
                    for j in 0..dims[other] {
                        let x = st.means[c].get(&idx(a, j)) - st.grand_mean.get(&idx(a, j));
                        let y = st.means[c].get(&idx(b, j)) - st.grand_mean.get(&idx(b, j));
                        sb[(a, b)] += st.counts[c] as f64 * x * y;
                    }
                }
            }
        }
        (sw, sb)
    }

    #[test]
    fn partial_scatters_against_loops() {
        let samples = vec![
            t2([1.0, -2.0, 0.5, 3.0]),
            t2([0.0, 1.0, 2.0, -1.0]),
            t2([4.0, 0.5, -3.0, 2.0]),
            t2([2.5, 1.5, 1.0, 0.0]),
        ];
        let labels = vec![0, 1, 0, 1];
        let st = ClassStats::compute(&samples, &labels, 2).unwrap();
        for mode in 0..2 {
            let (sw, sb) = partial_scatters(&samples, &labels, &st, mode).unwrap();
            let (ow, ob) = loop_scatters(&samples, &labels, 2, mode);
            assert!((sw - ow).amax() < 1e-12);
            assert!((sb - ob).amax() < 1e-12);
        }
    }

    #[test]
    fn partial_scatters_degenerate() {
        let x = t2([1.0, 2.0, 3.0, 4.0]);
        let samples = vec![x.clone(), x.clone(), x.clone(), x.clone()];
        let labels = vec![0, 1, 0, 1];
        let st = ClassStats::compute(&samples, &labels, 2).unwrap();
        let (sw, sb) = partial_scatters(&samples, &labels, &st, 0).unwrap();
        assert_eq!(sw.amax(), 0.0);
        assert_eq!(sb.amax(), 0.0);

        let samples = vec![t2([1.0, 0.0, 0.0, 0.0]), t2([-1.0, 0.0, 0.0, 0.0])];
        let labels = vec![0, 0];
        let st = ClassStats::compute(&samples, &labels, 1).unwrap();
        let (sw, sb) = partial_scatters(&samples, &labels, &st, 1).unwrap();
        assert!(sw.amax() > 0.0);
        assert_eq!(sb.amax(), 0.0);
    }

    #[test]
    fn total_scatter_cases() {
        let z = total_scatter(&[Tensor::zeros(&[3, 2]).unwrap()], 0).unwrap();
        assert_eq!(z, Matrix::zeros(3, 3));

        // u v^T has rank-1 mode-0 scatter |v|^2 u u^T
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 3.0];
        let x = Tensor::from_fn(&[3, 2], |i| u[i[0]] * v[i[1]]).unwrap();
        let s = total_scatter(&[x], 0).unwrap();
        let expected = Matrix::from_fn(3, 3, |i, j| u[i] * u[j] * 9.25);
        assert!((s - expected).amax() < 1e-12);

        let samples: Vec<Tensor> = (0..5)
            .map(|n| Tensor::from_fn(&[3, 4], |i| ((n * 7 + i[0] * 3 + i[1]) as f64).sin()).unwrap())
            .collect();
        let s = total_scatter(&samples, 1).unwrap();
        let mut oracle = Matrix::zeros(4, 4);
        for t in &samples {
            for a in 0..4 {
                for b in 0..4 {
                    for i in 0..3 {
                        oracle[(a, b)] += t.get(&[i, a]) * t.get(&[i, b]);
                    }
                }
            }
        }
        assert!((s - oracle).amax() < 1e-12);
        assert!(total_scatter(&[], 0).is_err());
    }

    #[test]
    fn shrink_scatter_cases() {
        let s = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        assert_eq!(shrink_scatter(&s, 0.0).unwrap(), s);
        assert_eq!(shrink_scatter(&s, 1.0).unwrap(), Matrix::identity(2, 2) * 3.0);
        let half = shrink_scatter(&s, 0.5).unwrap();
        assert_eq!(half, Matrix::from_row_slice(2, 2, &[3.5, 0.5, 0.5, 2.5]));
        assert!(shrink_scatter(&s, 1.5).is_err());
        assert!(shrink_scatter(&s, -0.1).is_err());
    }

    #[test]
    fn ledoit_wolf_matches_reference_formula() {
        // sklearn.covariance.ledoit_wolf_shrinkage(X) for these rows,
        // assume_centered=True: 0.25068493150684934
        let x = Matrix::from_row_slice(2, 4, &[1.0, -1.0, 2.0, -2.0, 0.5, 0.0, -0.5, 0.0]);
        let alpha = ledoit_wolf_alpha(&x);
        assert!((alpha - 0.25068493150684934).abs() < 1e-12, "{alpha}");
        assert_eq!(ledoit_wolf_alpha(&Matrix::zeros(3, 5)), 0.0);
    }

    #[test]
    fn eigen_identity_and_magnitude_rule() {
        let r = leading_eigenvectors(&Matrix::identity(3, 3), 2).unwrap();
        assert_eq!(r.values, vec![1.0, 1.0]);
        assert!((r.vectors.transpose() * &r.vectors - Matrix::identity(2, 2)).amax() < 1e-12);

        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -5.0, 1.0]));
        let r = leading_eigenvectors(&d, 1).unwrap();
        assert_eq!(r.values, vec![-5.0]);
        assert_eq!(r.vectors.column(0).as_slice(), &[0.0, 1.0, 0.0]);
        let r = leading_eigenvectors_by(&d, 1, EigenOrder::Algebraic).unwrap();
        assert_eq!(r.values, vec![3.0]);
    }

    #[test]
    fn eigen_errors() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(leading_eigenvectors(&a, 1), Err(Error::NotSymmetric { .. })));
        assert!(leading_eigenvectors(&Matrix::identity(2, 2), 3).is_err());
        assert!(leading_eigenvectors(&Matrix::identity(2, 2), 0).is_err());
    }

    #[test]
    fn eigen_against_jacobi_oracle() {
        // distinct magnitudes, full rank
        let b = Matrix::from_fn(6, 6, |i, j| {
            ((i * i * 7 + j * 3 + 1) as f64 * 0.37).sin() + 0.1 * i as f64 + 0.05 * (j * j) as f64
        });
        let s = &b + b.transpose();
        let (vals, vecs) = jacobi_eigen(&s);
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| vals[b].abs().partial_cmp(&vals[a].abs()).unwrap());
        for count in 1..=6 {
            let r = leading_eigenvectors(&s, count).unwrap();
            let oracle = Matrix::from_fn(6, count, |i, j| vecs[(i, order[j])]);
            for (j, v) in r.values.iter().enumerate() {
                assert!((v - vals[order[j]]).abs() < 1e-10);
            }
            // sin of the largest principal angle
            let resid = &r.vectors - &oracle * (oracle.transpose() * &r.vectors);
            let sin = resid.svd(false, false).singular_values.max();
            assert!(sin < 1e-8, "count {count}: {sin}");
            for j in 0..count {
                let v = r.vectors.column(j);
                let res = (&s * v - v * r.values[j]).norm();
                assert!(res <= 1e-8 * s.norm());
            }
            assert!((r.vectors.transpose() * &r.vectors - Matrix::identity(count, count)).amax() < 1e-10);
        }
    }

    #[test]
    fn eigen_sign_convention() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = leading_eigenvectors(&s, 2).unwrap();
        for j in 0..2 {
            let c = r.vectors.column(j);
            let pivot = c.iamax();
            assert!(c[pivot] > 0.0);
        }
        // tie in magnitude: (1,1)/sqrt2 -> first entry is the pivot
        assert!(r.vectors[(0, 0)] > 0.0);
    }
}
