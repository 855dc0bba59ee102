use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `N` equally shaped tensors with 0-based class labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Tensor>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Tensor>, labels: Vec<usize>, classes: usize) -> Result<Self> {
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
        if let Some(bad) = samples.iter().find(|s| s.dims() != dims) {
            return Err(Error::ShapeMismatch(format!(
                "sample dims {:?} differ from {:?}",
                bad.dims(),
                dims
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            samples,
            labels,
            classes,
        })
    }

    /// Infers the class count as `max(label) + 1`.
    pub fn from_labels(samples: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(samples, labels, classes)
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        self.samples[0].dims()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.classes)
    }

    /// Copies out the samples at `indices`, keeping the class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(samples, labels, self.classes)
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.samples.clone(), labels, self.classes)
    }
}

pub(crate) fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}
