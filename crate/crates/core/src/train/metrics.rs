//! Identifier accuracy, formal-property accuracy and confusion counts.
//!
//! All functions take per-example label sequences. Gold positions marked
//! `None` are ignored in numerators and denominators alike.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::OUTSIDE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("example {index}: {predicted} predictions for {gold} gold labels")]
    LengthMismatch { index: usize, predicted: usize, gold: usize },
    #[error("example {index} has no gold formal-property position")]
    NoRelation { index: usize },
}

/// Where a formal-property prediction has to appear to count as correct.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpMatch {
    /// The prediction at the gold relation position equals the gold id.
    #[default]
    RelationPosition,
    /// The gold id is predicted at some scorable position.
    AnyPosition,
}

fn check_lengths<P: AsRef<[usize]>, G: AsRef<[Option<usize>]>>(predicted: &[P], gold: &[G]) -> Result<(), MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            index: predicted.len().min(gold.len()),
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    for (index, (p, g)) in predicted.iter().zip(gold).enumerate() {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p.len() != g.len() {
            return Err(MetricsError::LengthMismatch {
                index,
                predicted: p.len(),
                gold: g.len(),
            });
        }
    }
    Ok(())
}

/// Token accuracy over scorable positions of the whole batch.
pub fn acc_idf<P: AsRef<[usize]>, G: AsRef<[Option<usize>]>>(predicted: &[P], gold: &[G]) -> Result<f64, MetricsError> {
    check_lengths(predicted, gold)?;
    let mut correct = 0usize;
    let mut scorable = 0usize;
    for (p, g) in predicted.iter().zip(gold) {
        for (&p, g) in p.as_ref().iter().zip(g.as_ref()) {
            if let Some(g) = *g {
                scorable += 1;
                correct += usize::from(p == g);
            }
        }
    }
    if scorable == 0 {
        return Err(MetricsError::EmptyBatch);
    }
    Ok(correct as f64 / scorable as f64)
}

/// Fraction of examples whose formal property is predicted correctly.
/// Each example needs exactly one gold non-`O` position; the first is used.
pub fn acc_fprop<P: AsRef<[usize]>, G: AsRef<[Option<usize>]>>(
    predicted: &[P],
    gold: &[G],
    mode: FpMatch,
) -> Result<f64, MetricsError> {
    check_lengths(predicted, gold)?;
    if predicted.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let mut correct = 0usize;
    for (index, (p, g)) in predicted.iter().zip(gold).enumerate() {
        let (p, g) = (p.as_ref(), g.as_ref());
        let (pos, gold_id) = g
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&id| id != OUTSIDE).map(|id| (i, id)))
            .ok_or(MetricsError::NoRelation { index })?;
        let hit = match mode {
            FpMatch::RelationPosition => p[pos] == gold_id,
            FpMatch::AnyPosition => p.iter().zip(g).any(|(&p, g)| g.is_some() && p == gold_id),
        };
        correct += usize::from(hit);
    }
    Ok(correct as f64 / predicted.len() as f64)
}

/// Square confusion matrix, rows indexed by gold label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn record(&mut self, gold: usize, predicted: usize) {
        self.counts[gold][predicted] += 1;
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold][predicted]
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        self.counts[gold].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn errors(&self) -> u64 {
        self.total() - self.correct()
    }
}

/// Identifier and formal-property confusion over scorable positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub identifier: ConfusionMatrix,
    pub formal_property: ConfusionMatrix,
}

impl ErrorDistribution {
    pub fn new(identifier_labels: Vec<String>, fp_labels: Vec<String>) -> Self {
        Self {
            identifier: ConfusionMatrix::new(identifier_labels),
            formal_property: ConfusionMatrix::new(fp_labels),
        }
    }
}

/// Fills one confusion matrix; labels outside the matrix are a caller bug.
pub fn confusion<P: AsRef<[usize]>, G: AsRef<[Option<usize>]>>(
    matrix: &mut ConfusionMatrix,
    predicted: &[P],
    gold: &[G],
) -> Result<(), MetricsError> {
    check_lengths(predicted, gold)?;
    for (p, g) in predicted.iter().zip(gold) {
        for (&p, g) in p.as_ref().iter().zip(g.as_ref()) {
            if let Some(g) = *g {
                matrix.record(g, p);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_accuracy_hand_count() {
        let gold = [vec![Some(0), Some(1), Some(2), Some(0)]];
        assert_eq!(acc_idf(&[vec![0, 1, 0, 0]], &gold).unwrap(), 0.75);
        assert_eq!(acc_idf(&[vec![0, 1, 2, 0]], &gold).unwrap(), 1.0);
    }

    #[test]
    fn ignored_positions_do_not_count() {
        let gold = [vec![None, Some(1), None, Some(0)]];
        assert_eq!(acc_idf(&[vec![2, 1, 2, 2]], &gold).unwrap(), 0.5);
        assert_eq!(acc_idf(&[vec![1]], &[vec![None]]), Err(MetricsError::EmptyBatch));
        let empty: [Vec<usize>; 0] = [];
        let empty_gold: [Vec<Option<usize>>; 0] = [];
        assert_eq!(acc_idf(&empty, &empty_gold), Err(MetricsError::EmptyBatch));
    }

    #[test]
    fn fp_accuracy_per_example() {
        let gold = [
            vec![None, Some(0), Some(3), Some(0)],
            vec![None, Some(5), Some(0), Some(0)],
            vec![Some(0), Some(0), Some(7)],
            vec![Some(2), Some(0)],
        ];
        let predicted = [vec![0, 0, 3, 0], vec![0, 0, 5, 0], vec![7, 0, 0], vec![2, 0]];
        assert_eq!(acc_fprop(&predicted, &gold, FpMatch::RelationPosition).unwrap(), 0.5);
        // example 1 predicts 5 at a scorable position; example 2 at position 0
        assert_eq!(acc_fprop(&predicted, &gold, FpMatch::AnyPosition).unwrap(), 1.0);
    }

    #[test]
    fn fp_accuracy_errors() {
        let gold = [vec![Some(0), Some(0)]];
        assert_eq!(
            acc_fprop(&[vec![0, 0]], &gold, FpMatch::RelationPosition),
            Err(MetricsError::NoRelation { index: 0 })
        );
        assert!(matches!(
            acc_fprop(&[vec![0]], &gold, FpMatch::RelationPosition),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn confusion_rows_match_gold_counts() {
        let mut m = ConfusionMatrix::new(vec!["O".into(), "a".into(), "b".into()]);
        let gold = [vec![Some(0), Some(1), None, Some(2), Some(0)]];
        confusion(&mut m, &[vec![0, 0, 1, 2, 1]], &gold).unwrap();
        assert_eq!((m.row_sum(0), m.row_sum(1), m.row_sum(2)), (2, 1, 1));
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.errors(), 2);
    }
}
