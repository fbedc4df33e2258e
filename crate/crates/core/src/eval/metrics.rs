use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::numerics::{dot, norm, Matrix};

/// Fraction of classes counted as head (most frequent) and as tail (least
/// frequent) by training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadTailSplit {
    pub fraction: f64,
}

impl Default for HeadTailSplit {
    fn default() -> Self {
        Self { fraction: 1.0 / 3.0 }
    }
}

impl HeadTailSplit {
    /// `(head, tail)` class lists. Ties in count keep the lower class index
    /// nearer the head.
    pub fn classes(&self, train_counts: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(self.fraction > 0.0 && self.fraction <= 0.5) {
            return Err(Error::config(format!(
                "head/tail fraction must be in (0, 0.5], got {}",
                self.fraction
            )));
        }
        let c = train_counts.len();
        let k = ((c as f64 * self.fraction).floor() as usize).max(1).min(c);
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| train_counts[b].cmp(&train_counts[a]).then(a.cmp(&b)));
        let head = order[..k].to_vec();
        let tail = order[c - k..].to_vec();
        Ok((head, tail))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1: f64,
    /// Accuracy per class; 0 for classes without test samples.
    pub per_class_acc: Vec<f64>,
    pub test_counts: Vec<usize>,
    pub head_classes: Vec<usize>,
    pub tail_classes: Vec<usize>,
    pub head_acc: f64,
    pub tail_acc: f64,
    /// Mean cosine similarity of each normalized feature to its class centroid.
    pub intra_class_compactness: f64,
    /// Mean cosine distance `1 − cos` over pairs of class centroids.
    pub inter_class_separability: f64,
}

/// Row-wise argmax predictions. Ties go to the lowest class index.
pub fn predictions(logits: &Matrix) -> Vec<usize> {
    logits.argmax_rows()
}

pub fn accuracy_from_logits(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(
            "accuracy",
            format!("{} logit rows for {} labels", logits.rows(), labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::config("cannot evaluate on an empty set"));
    }
    let hits = predictions(logits)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Top-1 accuracy of the classifier branch on `ds`.
pub fn accuracy(model: &HybridModel, ds: &Dataset) -> Result<f64> {
    accuracy_from_logits(&model.logits(ds.features())?, ds.labels())
}

/// `(compactness, separability)` of features under cosine geometry. Every row
/// is normalized first; all-zero rows contribute a similarity of 0.
pub fn feature_geometry(features: &Matrix, labels: &[usize], num_classes: usize) -> (f64, f64) {
    let d = features.cols();
    let unit: Vec<Vec<f64>> = features
        .row_iter()
        .map(|r| {
            let n = norm(r);
            if n > 0.0 {
                r.iter().map(|v| v / n).collect()
            } else {
                vec![0.0; d]
            }
        })
        .collect();
    let mut centroids = vec![vec![0.0; d]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (u, &y) in unit.iter().zip(labels) {
        counts[y] += 1;
        for (c, v) in centroids[y].iter_mut().zip(u) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let cosine = |a: &[f64], b: &[f64]| {
        let (na, nb) = (norm(a), norm(b));
        if na > 0.0 && nb > 0.0 {
            dot(a, b) / (na * nb)
        } else {
            0.0
        }
    };
    let compact = if unit.is_empty() {
        0.0
    } else {
        unit.iter()
            .zip(labels)
            .map(|(u, &y)| cosine(u, &centroids[y]))
            .sum::<f64>()
            / unit.len() as f64
    };
    let present: Vec<usize> = (0..num_classes).filter(|&c| counts[c] > 0).collect();
    let mut pairs = 0usize;
    let mut dist = 0.0;
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            dist += 1.0 - cosine(&centroids[a], &centroids[b]);
            pairs += 1;
        }
    }
    let separability = if pairs == 0 { 0.0 } else { dist / pairs as f64 };
    (compact, separability)
}

/// Accuracy metrics from precomputed logits plus geometry of `features`.
pub fn evaluate_outputs(
    logits: &Matrix,
    features: &Matrix,
    labels: &[usize],
    train_counts: &[usize],
    split: HeadTailSplit,
) -> Result<EvalReport> {
    let classes = train_counts.len();
    if logits.cols() != classes {
        return Err(Error::shape(
            "evaluate",
            format!("{} logit columns for {classes} classes", logits.cols()),
        ));
    }
    if features.rows() != labels.len() {
        return Err(Error::shape(
            "evaluate",
            format!("{} feature rows for {} labels", features.rows(), labels.len()),
        ));
    }
    let top1 = accuracy_from_logits(logits, labels)?;
    let preds = predictions(logits);
    let mut hits = vec![0usize; classes];
    let mut test_counts = vec![0usize; classes];
    for (&p, &y) in preds.iter().zip(labels) {
        if y >= classes {
            return Err(Error::Range(format!("label {y} with {classes} classes")));
        }
        test_counts[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let per_class_acc: Vec<f64> = hits
        .iter()
        .zip(&test_counts)
        .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect();
    let group_acc = |group: &[usize]| {
        let present: Vec<f64> = group
            .iter()
            .filter(|&&c| test_counts[c] > 0)
            .map(|&c| per_class_acc[c])
            .collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    };
    let (head_classes, tail_classes) = split.classes(train_counts)?;
    let (compact, separability) = feature_geometry(features, labels, classes);
    Ok(EvalReport {
        top1,
        head_acc: group_acc(&head_classes),
        tail_acc: group_acc(&tail_classes),
        per_class_acc,
        test_counts,
        head_classes,
        tail_classes,
        intra_class_compactness: compact,
        inter_class_separability: separability,
    })
}

/// Classifier accuracy and backbone-feature geometry on `test`, with head and
/// tail classes taken from the training-set counts.
pub fn evaluate(model: &HybridModel, test: &Dataset, train_counts: &[usize]) -> Result<EvalReport> {
    evaluate_with(model, test, train_counts, HeadTailSplit::default())
}

pub fn evaluate_with(
    model: &HybridModel,
    test: &Dataset,
    train_counts: &[usize],
    split: HeadTailSplit,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::config("cannot evaluate on an empty test set"));
    }
    if train_counts.len() != model.config.num_classes {
        return Err(Error::config(format!(
            "{} training counts for a {}-class model",
            train_counts.len(),
            model.config.num_classes
        )));
    }
    let features = model.features(test.features())?;
    let logits = model.classifier.infer(&features)?;
    evaluate_outputs(&logits, &features, test.labels(), train_counts, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], classes: usize) -> Matrix {
        let mut m = Matrix::zeros(labels.len(), classes);
        for (i, &y) in labels.iter().enumerate() {
            m.set(i, y, 1.0);
        }
        m
    }

    #[test]
    fn oracle_logits_are_perfect() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let logits = one_hot(&labels, 3);
        let r = evaluate_outputs(&logits, &logits, &labels, &[5, 3, 1], HeadTailSplit::default())
            .unwrap();
        assert_eq!(r.top1, 1.0);
        assert!(r.per_class_acc.iter().all(|&a| a == 1.0));
        assert_eq!(r.head_classes, vec![0]);
        assert_eq!(r.tail_classes, vec![2]);
        assert!((r.intra_class_compactness - 1.0).abs() < 1e-12);
        assert!((r.inter_class_separability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_class_zero_gives_one_over_c() {
        let classes = 4;
        let labels: Vec<usize> = (0..40).map(|i| i % classes).collect();
        let logits = one_hot(&vec![0; 40], classes);
        let r = evaluate_outputs(&logits, &logits, &labels, &[1; 4], HeadTailSplit::default())
            .unwrap();
        assert_eq!(r.top1, 0.25);
        assert_eq!(r.per_class_acc, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn top1_is_count_weighted_mean_of_per_class() {
        let labels = vec![0, 0, 0, 1, 2, 2];
        let preds = vec![0, 1, 0, 1, 0, 2];
        let logits = one_hot(&preds, 3);
        let r = evaluate_outputs(&logits, &logits, &labels, &[3, 1, 2], HeadTailSplit::default())
            .unwrap();
        let weighted: f64 = r
            .per_class_acc
            .iter()
            .zip(&r.test_counts)
            .map(|(a, &n)| a * n as f64)
            .sum::<f64>()
            / labels.len() as f64;
        assert!((r.top1 - weighted).abs() < 1e-15);
        assert!(r.per_class_acc.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn empty_set_is_an_error() {
        let m = Matrix::zeros(0, 3);
        assert!(evaluate_outputs(&m, &m, &[], &[1, 1, 1], HeadTailSplit::default()).is_err());
    }

    #[test]
    fn head_tail_thirds() {
        let counts = [500, 300, 180, 108, 65, 39, 23, 14, 8, 5];
        let (h, t) = HeadTailSplit::default().classes(&counts).unwrap();
        assert_eq!(h, vec![0, 1, 2]);
        assert_eq!(t, vec![7, 8, 9]);
    }
}
