use serde::{Deserialize, Serialize};

use super::Model;
use crate::data::Conversation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScore>,
    pub waf1: f64,
    pub accuracy: f64,
    pub samples: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let c = confusion.len();
        if c == 0 || confusion.iter().any(|row| row.len() != c) {
            return Err(Error::Argument("confusion matrix must be square and non-empty".into()));
        }
        let samples: u64 = confusion.iter().flatten().sum();
        if samples == 0 {
            return Err(Error::Argument("cannot score an empty evaluation set".into()));
        }
        let per_class: Vec<ClassScore> = (0..c)
            .map(|j| {
                let tp = confusion[j][j];
                let support: u64 = confusion[j].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[j]).sum();
                // 2TP / (2TP + FP + FN) equals 2PR / (P + R) whenever the latter is defined
                ClassScore {
                    support,
                    predicted,
                    precision: ratio(tp, predicted),
                    recall: ratio(tp, support),
                    f1: ratio(2 * tp, support + predicted),
                }
            })
            .collect();
        let weighted: f64 = per_class.iter().map(|s| s.support as f64 * s.f1).sum();
        let correct: u64 = (0..c).map(|j| confusion[j][j]).sum();
        Ok(Self {
            waf1: weighted / samples as f64,
            accuracy: ratio(correct, samples),
            per_class,
            confusion,
            samples,
        })
    }

    pub fn from_predictions(gold: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::dim("predictions", gold.len(), predicted.len()));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= classes || p >= classes {
                return Err(Error::Index {
                    index: g.max(p),
                    len: classes,
                });
            }
            confusion[g][p] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Eval-mode metrics over a slice of conversations.
pub fn evaluate(model: &Model, convs: &[&Conversation]) -> Result<Metrics> {
    let mut gold = Vec::new();
    let mut predicted = Vec::new();
    for conv in convs {
        gold.extend(conv.labels()?);
        predicted.extend(model.predict_conversation(conv)?);
    }
    if gold.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty slice".into()));
    }
    Metrics::from_predictions(&gold, &predicted, model.spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_matrix_weighted_f1() {
        // class 0: 2 of 2 right (F1 1); class 1: 1 of 3 right, the rest
        // called class 2 (F1 0.5); class 2 never gold
        let m = Metrics::from_confusion(vec![vec![2, 0, 0], vec![0, 1, 2], vec![0, 0, 0]]).unwrap();
        assert_eq!(m.per_class[0].f1, 1.0);
        assert_eq!(m.per_class[1].f1, 0.5);
        assert_eq!(m.per_class[2].f1, 0.0);
        assert_eq!(m.waf1, 0.7);
        assert_eq!(m.accuracy, 0.6);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = Metrics::from_predictions(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        assert_eq!(m.waf1, 1.0);
        assert!(Metrics::from_predictions(&[], &[], 2).is_err());
        assert!(Metrics::from_predictions(&[0], &[3], 2).is_err());
        assert!(Metrics::from_confusion(vec![vec![1, 0]]).is_err());
    }

    proptest! {
        #[test]
        fn order_free_and_bounded(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60), seed in any::<u64>()) {
            let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let a = Metrics::from_predictions(&gold, &pred, 4).unwrap();
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let g2: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
            let p2: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
            let b = Metrics::from_predictions(&g2, &p2, 4).unwrap();
            prop_assert_eq!(&a.confusion, &b.confusion);
            prop_assert_eq!(a.waf1, b.waf1);
            prop_assert!((0.0..=1.0).contains(&a.waf1));
            prop_assert_eq!(a.confusion.iter().flatten().sum::<u64>(), pairs.len() as u64);
        }
    }
}
