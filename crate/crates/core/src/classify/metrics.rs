use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifyError, Result};
use crate::scalar::Field;

/// Classification metrics in any field scalar; exact with `Ratio<i64>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T> {
    pub accuracy: T,
    pub precision: Vec<T>,
    pub recall: Vec<T>,
    pub f1: Vec<T>,
    pub support: Vec<u64>,
    pub precision_macro: T,
    pub recall_macro: T,
    pub f1_macro: T,
    pub precision_weighted: T,
    pub recall_weighted: T,
    pub f1_weighted: T,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

fn div<T: Field>(a: T, b: T) -> T {
    if b == T::zero() {
        T::zero()
    } else {
        a / b
    }
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if predictions.len() != labels.len() {
        return Err(ClassifyError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= n_classes || y >= n_classes {
            return Err(ClassifyError::InvalidDataset(format!("class {} out of range 0..{n_classes}", p.max(y))));
        }
        m[y][p] += 1;
    }
    Ok(m)
}

/// Per-class precision and recall with 0/0 read as 0; macro means are
/// unweighted, weighted means use class support.
pub fn evaluate<T: Field>(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Metrics<T>> {
    let confusion = confusion_matrix(predictions, labels, n_classes)?;
    let n = |v: u64| T::from_count(v as usize);
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();
    let support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted: Vec<u64> = (0..n_classes).map(|c| confusion.iter().map(|row| row[c]).sum()).collect();
    let mut precision = Vec::with_capacity(n_classes);
    let mut recall = Vec::with_capacity(n_classes);
    let mut f1 = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = n(confusion[c][c]);
        let p = div(tp, n(predicted[c]));
        let r = div(tp, n(support[c]));
        precision.push(p);
        recall.push(r);
        f1.push(div((T::one() + T::one()) * p * r, p + r));
    }
    let k = T::from_count(n_classes);
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / k;
    let weighted =
        |v: &[T]| div(v.iter().zip(&support).fold(T::zero(), |a, (&x, &s)| a + x * n(s)), n(total));
    Ok(Metrics {
        accuracy: div(n(trace), n(total)),
        precision_macro: mean(&precision),
        recall_macro: mean(&recall),
        f1_macro: mean(&f1),
        precision_weighted: weighted(&precision),
        recall_weighted: weighted(&recall),
        f1_weighted: weighted(&f1),
        precision,
        recall,
        f1,
        support,
        confusion,
    })
}

/// One model row: validation and test accuracy plus test-set metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub precision_weighted: f64,
    pub f1_weighted: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn new(model: &str, val: &Metrics<f64>, test: &Metrics<f64>) -> Self {
        Self {
            model: model.to_string(),
            val_accuracy: val.accuracy,
            test_accuracy: test.accuracy,
            precision_macro: test.precision_macro,
            recall_macro: test.recall_macro,
            f1_macro: test.f1_macro,
            precision_weighted: test.precision_weighted,
            f1_weighted: test.f1_weighted,
            confusion: test.confusion.clone(),
        }
    }

    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let c = self.confusion.len();
        let mut header = vec!["true\\pred".to_string()];
        header.extend((0..c).map(|i| i.to_string()));
        w.write_record(&header)?;
        for (i, row) in self.confusion.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn from_confusion(m: &[[usize; 3]; 3]) -> (Vec<usize>, Vec<usize>) {
        let (mut p, mut y) = (vec![], vec![]);
        for (t, row) in m.iter().enumerate() {
            for (c, &k) in row.iter().enumerate() {
                for _ in 0..k {
                    y.push(t);
                    p.push(c);
                }
            }
        }
        (p, y)
    }

    #[test]
    fn three_class_fixture() {
        let (p, y) = from_confusion(&[[5, 1, 0], [0, 4, 2], [1, 0, 7]]);
        let m = evaluate::<Q>(&p, &y, 3).unwrap();
        assert_eq!(m.accuracy, Q::new(4, 5));
        assert_eq!(m.precision, vec![Q::new(5, 6), Q::new(4, 5), Q::new(7, 9)]);
        assert_eq!(m.recall, vec![Q::new(5, 6), Q::new(2, 3), Q::new(7, 8)]);
        assert_eq!(m.precision_macro, Q::new(217, 270));
        assert_eq!(m.f1, vec![Q::new(5, 6), Q::new(8, 11), Q::new(14, 17)]);
        // (5/6*6 + 4/5*6 + 7/9*8) / 20
        assert_eq!(m.precision_weighted, Q::new(721, 900));
        let f = evaluate::<f64>(&p, &y, 3).unwrap();
        assert!((f.precision_macro - 0.803_703_703_703_7).abs() < 1e-12);
    }

    #[test]
    fn all_zero_predictions() {
        let y = vec![0, 0, 1, 1];
        let m = evaluate::<Q>(&[0; 4], &y, 2).unwrap();
        assert_eq!(m.accuracy, Q::new(1, 2));
        assert_eq!(m.f1_macro, Q::new(1, 3));
        assert_eq!(m.precision[1], Q::new(0, 1));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(evaluate::<f64>(&[0], &[0, 1], 2), Err(ClassifyError::LengthMismatch { .. })));
    }
}
