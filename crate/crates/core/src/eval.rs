//! Codebook-as-classifier evaluation and the relative-contrast diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Codebook, FeatureSet};
use crate::objective::{lp_distance, map_points, nearest_index};
use crate::scalar::Scalar;

/// Majority label of the labeled points assigned to each quant. Ties go to
/// the lowest class id; quants without labeled points stay unassigned.
pub fn label_quants<T: Scalar>(
    codebook: &Codebook<T>,
    data: &FeatureSet<T>,
) -> Result<Vec<Option<u32>>> {
    let labels = data
        .labels()
        .filter(|l| l.labeled_count() > 0)
        .ok_or_else(|| Error::MissingLabels("no labeled points to label quants".into()))?;
    if data.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: data.dim(),
        });
    }
    let classes = labels.class_count() as usize;
    let mut votes = vec![vec![0usize; classes]; codebook.len()];
    let nearest = map_points(data, codebook.len() * data.dim(), |i, x| {
        labels.get(i).map(|_| nearest_index(x, codebook).0)
    });
    for (i, k) in nearest.into_iter().enumerate() {
        if let (Some(k), Some(c)) = (k, labels.get(i)) {
            votes[k][c as usize] += 1;
        }
    }
    Ok(votes
        .iter()
        .map(|v| {
            let best = v.iter().copied().max().unwrap_or(0);
            (best > 0).then(|| v.iter().position(|&n| n == best).unwrap() as u32)
        })
        .collect())
}

/// Label of the nearest assigned quant under the codebook's norm; lowest
/// index on ties.
pub fn classify<T: Scalar>(
    point: &[T],
    codebook: &Codebook<T>,
    quant_labels: &[Option<u32>],
) -> Result<u32> {
    if point.len() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: point.len(),
        });
    }
    if quant_labels.len() != codebook.len() {
        return Err(Error::DimensionMismatch {
            expected: codebook.len(),
            found: quant_labels.len(),
        });
    }
    classify_unchecked(point, codebook, quant_labels)
        .ok_or_else(|| Error::MissingLabels("every quant is unassigned".into()))
}

fn classify_unchecked<T: Scalar>(
    point: &[T],
    codebook: &Codebook<T>,
    quant_labels: &[Option<u32>],
) -> Option<u32> {
    let p = codebook.norm_order();
    let mut best: Option<(T, u32)> = None;
    for (y, label) in codebook.rows().zip(quant_labels) {
        let Some(label) = *label else { continue };
        let d = lp_distance(point, y, p);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, label));
        }
    }
    best.map(|(_, l)| l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub quant_labels: Vec<Option<u32>>,
    /// `confusion_matrix[truth][predicted]`.
    pub confusion_matrix: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScores>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub evaluated: u64,
}

fn confusion(predictions: &[u32], truths: &[u32], classes: u32) -> Result<Vec<Vec<u64>>> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: predictions.len(),
        });
    }
    let l = classes as usize;
    let mut m = vec![vec![0u64; l]; l];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::InvalidConfig(format!(
                "class id {} outside [0, {classes})",
                p.max(t)
            )));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

fn class_scores(m: &[Vec<u64>]) -> Vec<ClassScores> {
    (0..m.len())
        .map(|c| {
            let tp = m[c][c] as f64;
            let support: u64 = m[c].iter().sum();
            let predicted: u64 = m.iter().map(|row| row[c]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

fn support_weighted(scores: &[ClassScores]) -> f64 {
    let total: u64 = scores.iter().map(|s| s.support).sum();
    if total == 0 {
        return 0.0;
    }
    scores
        .iter()
        .map(|s| s.f1 * s.support as f64 / total as f64)
        .sum()
}

/// Support-weighted mean of per-class F1 scores.
pub fn weighted_f1(predictions: &[u32], truths: &[u32], classes: u32) -> Result<f64> {
    Ok(support_weighted(&class_scores(&confusion(predictions, truths, classes)?)))
}

/// Unweighted mean of per-class F1 over classes with nonzero support.
pub fn macro_f1(predictions: &[u32], truths: &[u32], classes: u32) -> Result<f64> {
    let scores = class_scores(&confusion(predictions, truths, classes)?);
    let present: Vec<f64> = scores.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    Ok(if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    })
}

/// Micro-averaged F1, which for single-label data equals accuracy.
pub fn micro_f1(predictions: &[u32], truths: &[u32], classes: u32) -> Result<f64> {
    let m = confusion(predictions, truths, classes)?;
    let correct: u64 = (0..m.len()).map(|c| m[c][c]).sum();
    Ok(if truths.is_empty() {
        0.0
    } else {
        correct as f64 / truths.len() as f64
    })
}

/// Labels the quants from `train`, classifies every labeled point of
/// `test`, and scores the predictions.
pub fn evaluate<T: Scalar>(
    codebook: &Codebook<T>,
    train: &FeatureSet<T>,
    test: &FeatureSet<T>,
) -> Result<EvaluationReport> {
    let quant_labels = label_quants(codebook, train)?;
    evaluate_with_labels(codebook, &quant_labels, test)
}

pub fn evaluate_with_labels<T: Scalar>(
    codebook: &Codebook<T>,
    quant_labels: &[Option<u32>],
    test: &FeatureSet<T>,
) -> Result<EvaluationReport> {
    let labels = test
        .labels()
        .filter(|l| l.labeled_count() > 0)
        .ok_or_else(|| Error::MissingLabels("test set has no labeled points".into()))?;
    if test.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: test.dim(),
        });
    }
    if quant_labels.iter().all(Option::is_none) {
        return Err(Error::MissingLabels("every quant is unassigned".into()));
    }
    let classes = labels
        .class_count()
        .max(quant_labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0));
    let predicted = map_points(test, codebook.len() * test.dim(), |i, x| {
        labels
            .get(i)
            .map(|t| (classify_unchecked(x, codebook, quant_labels).expect("assigned quant"), t))
    });
    let (predictions, truths): (Vec<u32>, Vec<u32>) = predicted.into_iter().flatten().unzip();
    let m = confusion(&predictions, &truths, classes)?;
    let per_class = class_scores(&m);
    Ok(EvaluationReport {
        quant_labels: quant_labels.to_vec(),
        weighted_f1: support_weighted(&per_class),
        macro_f1: macro_f1(&predictions, &truths, classes)?,
        micro_f1: micro_f1(&predictions, &truths, classes)?,
        evaluated: truths.len() as u64,
        confusion_matrix: m,
        per_class,
    })
}

/// `(max d(ξ_i, y_k) − min d(ξ_i, y_k)) / min d(ξ_i, y_k)` over all pairs,
/// with the codebook's norm.
pub fn contrast_ratio<T: Scalar>(data: &FeatureSet<T>, codebook: &Codebook<T>) -> Result<T> {
    if data.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: data.dim(),
        });
    }
    let p = codebook.norm_order();
    let per_point = map_points(data, codebook.len() * data.dim(), |i, x| {
        let mut lo = (T::infinity(), 0);
        let mut hi = T::neg_infinity();
        for (k, y) in codebook.rows().enumerate() {
            let d = lp_distance(x, y, p);
            if d < lo.0 {
                lo = (d, k);
            }
            hi = hi.max(d);
        }
        (i, lo, hi)
    });
    let mut min = T::infinity();
    let mut max = T::neg_infinity();
    for (i, (lo, k), hi) in per_point {
        if lo == T::zero() {
            return Err(Error::UndefinedContrast { point: i, center: k });
        }
        min = min.min(lo);
        max = max.max(hi);
    }
    Ok((max - min) / min)
}
