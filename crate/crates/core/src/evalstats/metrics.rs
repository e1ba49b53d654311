use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub class: T,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    /// Union of observed true and predicted classes, ascending.
    pub per_class: Vec<PerClass<T>>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("y_true has {0} elements, y_pred has {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision, recall and F1 per class, macro-averaged over the
/// class universe. Zero denominators count as 0.
pub fn macro_metrics<T: Ord + Clone>(y_true: &[T], y_pred: &[T]) -> Result<ClassMetrics<T>, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let universe: BTreeSet<&T> = y_true.iter().chain(y_pred).collect();
    let mut per_class = Vec::with_capacity(universe.len());
    for c in universe {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (t, p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(PerClass {
            class: c.clone(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        });
    }
    let k = per_class.len() as f64;
    let mean = |f: fn(&PerClass<T>) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    Ok(ClassMetrics {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = macro_metrics(&['A', 'A', 'B'], &['A', 'B', 'B']).unwrap();
        assert_eq!((m.per_class[0].tp, m.per_class[0].fp, m.per_class[0].fn_), (1, 0, 1));
        assert_eq!((m.per_class[1].tp, m.per_class[1].fp, m.per_class[1].fn_), (1, 1, 0));
        assert!((m.macro_precision - 0.75).abs() < 1e-15);
        assert!((m.macro_recall - 0.75).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_disjoint() {
        let m = macro_metrics(&[1, 2, 3], &[1, 2, 3]).unwrap();
        assert_eq!((m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0));
        let m = macro_metrics(&[1, 1, 2], &[3, 4, 5]).unwrap();
        assert_eq!(m.macro_f1, 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(macro_metrics::<u8>(&[], &[]).unwrap_err(), MetricsError::Empty);
        assert_eq!(macro_metrics(&[1], &[1, 2]).unwrap_err(), MetricsError::LengthMismatch(1, 2));
    }
}
