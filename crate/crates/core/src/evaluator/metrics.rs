use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cache_adapter::{clamped_count, CacheAdapter, NORM_TOLERANCE};
use crate::error::{Error, Result};
use crate::feature_store::FeatureMatrix;

/// Classes with more training rows than this are "many-shot".
pub const MANY_SHOT_ABOVE: usize = 100;
/// Classes with fewer training rows than this are "few-shot".
pub const FEW_SHOT_BELOW: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub acc: f64,
    pub classes: usize,
    pub test_rows: usize,
}

/// Accuracy by training-count group. An empty group is `None`, not 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub many: Option<GroupStat>,
    pub medium: Option<GroupStat>,
    pub few: Option<GroupStat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent.
    pub overall_acc: f64,
    /// Percent per class; `None` for classes without test rows.
    pub per_class_acc: Vec<Option<f64>>,
    pub per_class_count: Vec<usize>,
    pub group_acc: Option<GroupAccuracy>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Similarities above 1 that the affinity function clamped.
    pub clamped_similarities: usize,
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    // Strict comparison keeps the lowest index on ties.
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

pub fn predict(logits: &Array2<f64>) -> Vec<usize> {
    logits.outer_iter().map(argmax).collect()
}

pub fn accuracy_percent(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predict(logits).iter().zip(labels).filter(|(p, l)| p == l).count();
    100.0 * hits as f64 / labels.len() as f64
}

/// Argmax predictions of the full logits over `test`.
pub fn evaluate(adapter: &CacheAdapter, test: &FeatureMatrix) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    let classes = adapter.num_classes();
    test.check_labels(classes)?;
    test.check_normalized("test set", NORM_TOLERANCE)?;
    let f = test.to_array();
    let logits = adapter.full_logits(&f)?;
    let clamped = clamped_count(&adapter.similarities(&f)?);

    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&truth, pred) in test.labels().iter().zip(predict(&logits)) {
        confusion[truth as usize][pred] += 1;
    }
    let per_class_count: Vec<usize> = confusion.iter().map(|r| r.iter().sum::<u64>() as usize).collect();
    let per_class_acc = confusion
        .iter()
        .enumerate()
        .map(|(c, r)| (per_class_count[c] > 0).then(|| 100.0 * r[c] as f64 / per_class_count[c] as f64))
        .collect();
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        overall_acc: 100.0 * correct as f64 / test.rows() as f64,
        per_class_acc,
        per_class_count,
        group_acc: None,
        confusion,
        clamped_similarities: clamped,
    })
}

pub fn evaluate_with_groups(
    adapter: &CacheAdapter,
    test: &FeatureMatrix,
    class_train_counts: &[usize],
) -> Result<EvalReport> {
    let mut report = evaluate(adapter, test)?;
    report.group_acc = Some(group_accuracy(&report.confusion, class_train_counts)?);
    Ok(report)
}

/// Groups classes by training count: many `> 100`, medium `20..=100`,
/// few `< 20`. Accuracy is over test rows whose true class is in the group.
pub fn group_accuracy(confusion: &[Vec<u64>], class_train_counts: &[usize]) -> Result<GroupAccuracy> {
    if confusion.len() != class_train_counts.len() {
        return Err(Error::DimensionMismatch {
            context: "class train counts".into(),
            expected: confusion.len(),
            found: class_train_counts.len(),
        });
    }
    let mut acc = [(0u64, 0u64, 0usize); 3];
    for (c, &count) in class_train_counts.iter().enumerate() {
        let g = if count > MANY_SHOT_ABOVE {
            0
        } else if count >= FEW_SHOT_BELOW {
            1
        } else {
            2
        };
        acc[g].0 += confusion[c][c];
        acc[g].1 += confusion[c].iter().sum::<u64>();
        acc[g].2 += 1;
    }
    let stat = |(hits, rows, classes): (u64, u64, usize)| {
        (classes > 0).then(|| GroupStat {
            acc: if rows > 0 {
                100.0 * hits as f64 / rows as f64
            } else {
                0.0
            },
            classes,
            test_rows: rows as usize,
        })
    };
    Ok(GroupAccuracy {
        many: stat(acc[0]),
        medium: stat(acc[1]),
        few: stat(acc[2]),
    })
}
