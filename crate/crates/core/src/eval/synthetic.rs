//! Synthetic labeled tensors: planted rank-1 class effects plus
//! Kronecker-structured Gaussian noise.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor};
use crate::util::stream_rng;

/// A rank-1 pattern `v_1 o v_2 o .. o v_K` whose amplitude depends on the
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    /// One unit vector per mode.
    pub vectors: Vec<Vec<f64>>,
    /// Amplitude per class.
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub dims: Vec<usize>,
    pub per_class: usize,
    pub classes: usize,
    pub effects: Vec<Effect>,
    pub sigma: f64,
    /// Per-mode square roots `L_k` of the noise covariances `L_k L_k^T`;
    /// `None` means white noise.
    pub noise_roots: Option<Vec<Matrix>>,
    pub seed: u64,
}

impl SyntheticConfig {
    /// `effect_amplitudes.len()` rank-1 effects with disjoint per-mode
    /// supports. Effect `e` is a flat unit vector on the `e`-th slice of every
    /// mode, with amplitude `a_e * c / (C - 1)` for class `c`.
    pub fn planted(
        dims: &[usize],
        per_class: usize,
        classes: usize,
        effect_amplitudes: &[f64],
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let count = effect_amplitudes.len();
        if let Some(&d) = dims.iter().find(|&&d| d < count) {
            return Err(Error::InvalidArgument(format!(
                "a mode of size {d} cannot hold {count} disjoint effects"
            )));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        let effects = effect_amplitudes
            .iter()
            .enumerate()
            .map(|(e, &amp)| Effect {
                vectors: dims
                    .iter()
                    .map(|&d| {
                        let lo = e * d / count;
                        let hi = (e + 1) * d / count;
                        let norm = ((hi - lo) as f64).sqrt();
                        (0..d)
                            .map(|i| if (lo..hi).contains(&i) { 1.0 / norm } else { 0.0 })
                            .collect()
                    })
                    .collect(),
                amplitudes: (0..classes)
                    .map(|c| amp * c as f64 / (classes - 1) as f64)
                    .collect(),
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            per_class,
            classes,
            effects,
            sigma,
            noise_roots: None,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad dims {:?}", self.dims)));
        }
        if self.per_class == 0 || self.classes == 0 {
            return Err(Error::InvalidArgument(
                "need at least one class and one sample per class".into(),
            ));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma {} < 0", self.sigma)));
        }
        for (i, e) in self.effects.iter().enumerate() {
            if e.amplitudes.len() != self.classes {
                return Err(Error::InvalidArgument(format!(
                    "effect {i} has {} amplitudes for {} classes",
                    e.amplitudes.len(),
                    self.classes
                )));
            }
            if e.vectors.len() != self.dims.len() {
                return Err(Error::InvalidArgument(format!(
                    "effect {i} has {} vectors for {} modes",
                    e.vectors.len(),
                    self.dims.len()
                )));
            }
            for (k, (v, &d)) in e.vectors.iter().zip(&self.dims).enumerate() {
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if v.len() != d || (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "effect {i} mode {k}: need a unit vector of length {d}"
                    )));
                }
            }
        }
        if let Some(roots) = &self.noise_roots {
            if roots.len() != self.dims.len()
                || roots.iter().zip(&self.dims).any(|(r, &d)| r.shape() != (d, d))
            {
                return Err(Error::InvalidArgument(
                    "noise roots must be one D_k x D_k matrix per mode".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Draws the dataset; samples are grouped by class in label order.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let patterns = cfg
        .effects
        .iter()
        .map(|e| Tensor::from_fn(&cfg.dims, |idx| idx.iter().zip(&e.vectors).map(|(&i, v)| v[i]).product()))
        .collect::<Result<Vec<_>>>()?;
    let len: usize = cfg.dims.iter().product();
    let mut samples = Vec::with_capacity(cfg.per_class * cfg.classes);
    let mut labels = Vec::with_capacity(samples.capacity());
    for c in 0..cfg.classes {
        for _ in 0..cfg.per_class {
            let z: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut noise = Tensor::new(cfg.dims.clone(), z)?;
            if let Some(roots) = &cfg.noise_roots {
                noise = noise.multi_mode_product(roots, None)?;
            }
            let mut x = noise.scaled(cfg.sigma);
            for (p, e) in patterns.iter().zip(&cfg.effects) {
                x.axpy(e.amplitudes[c], p)?;
            }
            samples.push(x);
            labels.push(c);
        }
    }
    LabeledDataset::new(samples, labels, cfg.classes)
}
