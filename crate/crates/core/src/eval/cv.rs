use rand::seq::SliceRandom;

use crate::dataset::class_counts;
use crate::error::{Error, Result};
use crate::util::stream_rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified `k`-fold split.
///
/// Each class is shuffled on stream `stream` of `seed`; the shuffled
/// classes are laid end to end and dealt round-robin over the folds, so every
/// fold holds each class within one sample of its proportional share.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64, stream: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need k >= 2, got {k}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let counts = class_counts(labels, classes);
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 && n < k {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {n} samples, fewer than {k} folds"
            )));
        }
    }
    let mut rng = stream_rng(seed, stream);
    let mut dealt = Vec::with_capacity(labels.len());
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        dealt.extend(members);
    }
    let mut fold_of = vec![0; labels.len()];
    for (pos, &i) in dealt.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| fold_of[i] == f);
            Split { train, test }
        })
        .collect())
}
