//! Dense K-way tensors and the multilinear primitives built on them.
//!
//! Storage is first-mode-fastest: entry `(i_0, .., i_{K-1})` lives at offset
//! `i_0 + D_0 * (i_1 + D_1 * (i_2 + ..))`. The mode-`k` unfolding orders its
//! columns by the remaining modes ascending with the lowest remaining mode
//! varying fastest, so the mode-0 unfolding is the flat buffer read as a
//! column-major `D_0 x prod(rest)` matrix.
//!
//! Modes are 0-based throughout the crate.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix. Column-major, which matches the tensor layout.
pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        let mut index = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&index));
            for (i, d) in index.iter_mut().zip(dims) {
                *i += 1;
                if *i < *d {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Inverse of [`Tensor::vectorize`].
    pub fn devectorize(dims: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(dims.to_vec(), values.to_vec())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .rev()
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Flattens to a vector in storage order (first mode fastest).
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same_shape(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.check_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += alpha * b);
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// `(prod of dims before mode, dim of mode, prod of dims after mode)`
    fn split_at_mode(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }

    /// Mode-`mode` unfolding: a `D_mode x prod(other dims)` matrix whose
    /// columns are the mode-`mode` fibers.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let (left, d, right) = self.split_at_mode(mode);
        if left == 1 {
            return Ok(Matrix::from_column_slice(d, right, &self.data));
        }
        let mut out = Matrix::zeros(d, left * right);
        for r in 0..right {
            for i in 0..d {
                let src = &self.data[left * (i + d * r)..][..left];
                for (l, &v) in src.iter().enumerate() {
                    out[(i, l + left * r)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<Tensor> {
        let mut t = Tensor::zeros(dims)?;
        t.check_mode(mode)?;
        let (left, d, right) = t.split_at_mode(mode);
        if m.nrows() != d || m.ncols() != left * right {
            return Err(Error::ShapeMismatch(format!(
                "cannot fold a {}x{} matrix into {dims:?} along mode {mode}",
                m.nrows(),
                m.ncols()
            )));
        }
        if left == 1 {
            t.data.copy_from_slice(m.as_slice());
            return Ok(t);
        }
        for r in 0..right {
            for i in 0..d {
                let dst = &mut t.data[left * (i + d * r)..][..left];
                for (l, v) in dst.iter_mut().enumerate() {
                    *v = m[(i, l + left * r)];
                }
            }
        }
        Ok(t)
    }

    /// Mode product `self x_mode m`: every mode-`mode` fiber `x` is replaced
    /// by `m * x`, so `m` must have `D_mode` columns.
    pub fn mode_product(&self, m: &Matrix, mode: usize) -> Result<Tensor> {
        self.check_mode(mode)?;
        let (left, d, right) = self.split_at_mode(mode);
        if m.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "mode-{mode} product needs {d} columns, matrix is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let rows = m.nrows();
        let mut dims = self.dims.clone();
        dims[mode] = rows;
        let mut data = vec![0.0; left * rows * right];
        if left == 1 {
            let x = DMatrixView::from_slice(&self.data, d, right);
            let y = m * x;
            data.copy_from_slice(y.as_slice());
        } else {
            // Each slab along the trailing modes is a column-major `left x d`
            // matrix; the product acts on it from the right.
            let mt = m.transpose();
            for r in 0..right {
                let x = DMatrixView::from_slice(&self.data[r * left * d..][..left * d], left, d);
                let y = x * &mt;
                data[r * left * rows..][..left * rows].copy_from_slice(y.as_slice());
            }
        }
        Ok(Tensor { dims, data })
    }

    /// Applies `mats[k]` along every mode `k` in ascending order, leaving out
    /// `skip` when given.
    pub fn multi_mode_product(&self, mats: &[Matrix], skip: Option<usize>) -> Result<Tensor> {
        if mats.len() != self.order() {
            return Err(Error::ShapeMismatch(format!(
                "need {} matrices, got {}",
                self.order(),
                mats.len()
            )));
        }
        if let Some(s) = skip {
            self.check_mode(s)?;
        }
        let mut out = self.clone();
        for (k, m) in mats.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            out = out.mode_product(m, k)?;
        }
        Ok(out)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "tensor dims must be nonempty and positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Frobenius norm of a tensor.
pub fn frobenius_norm(t: &Tensor) -> f64 {
    t.frobenius_norm()
}
