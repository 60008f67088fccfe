use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::RelationId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("precision is undefined for an empty sample")]
    DivisionUndefined,
    #[error("sample of {requested} requested from a population of {population}")]
    SampleTooLarge { requested: usize, population: usize },
    #[error("sampled relation {0} has no label")]
    MissingLabel(RelationId),
}

/// `TP / (TP + FP)`.
pub fn precision(tp: u64, fp: u64) -> Result<f64, EvalError> {
    if tp + fp == 0 {
        return Err(EvalError::DivisionUndefined);
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

/// Seeded uniform sample without replacement, in drawn order.
pub fn sample_relations<T: Clone>(population: &[T], size: usize, seed: u64) -> Result<Vec<T>, EvalError> {
    if size > population.len() {
        return Err(EvalError::SampleTooLarge {
            requested: size,
            population: population.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = population.to_vec();
    let (chosen, _) = pool.partial_shuffle(&mut rng, size);
    Ok(chosen.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub seed: u64,
    pub sample: Vec<RelationId>,
    pub true_positives: u64,
    pub false_positives: u64,
    pub precision: f64,
}

/// Draw `sample_size` relations from `population` and score them against `labels`.
pub fn evaluate_precision(
    population: &[RelationId],
    labels: &BTreeMap<RelationId, bool>,
    sample_size: usize,
    seed: u64,
) -> Result<PrecisionReport, EvalError> {
    let sample = sample_relations(population, sample_size, seed)?;
    let (mut tp, mut fp) = (0, 0);
    for id in &sample {
        match labels.get(id) {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => return Err(EvalError::MissingLabel(*id)),
        }
    }
    Ok(PrecisionReport {
        seed,
        precision: precision(tp, fp)?,
        sample,
        true_positives: tp,
        false_positives: fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn counts_to_precision() {
        assert_eq!(precision(154, 46), Ok(0.77));
        assert_eq!(precision(3, 0), Ok(1.0));
        assert_eq!(precision(0, 0), Err(EvalError::DivisionUndefined));
    }

    #[test]
    fn sample_is_reproducible_and_unique() {
        let pop: Vec<RelationId> = (1..=4484).map(RelationId).collect();
        let a = sample_relations(&pop, 200, 42).unwrap();
        let b = sample_relations(&pop, 200, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), 200);
        let c = sample_relations(&pop, 200, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let pop: Vec<u32> = (0..50).collect();
        let s = sample_relations(&pop, 50, 1).unwrap();
        assert_ne!(s, pop);
        let mut sorted = s.clone();
        sorted.sort();
        assert_eq!(sorted, pop);
        assert!(sample_relations(&pop, 51, 1).is_err());
    }

    #[test]
    fn empty_sample_is_undefined() {
        let labels = BTreeMap::new();
        assert_eq!(
            evaluate_precision(&[RelationId(1)], &labels, 0, 1),
            Err(EvalError::DivisionUndefined)
        );
        assert_eq!(
            evaluate_precision(&[RelationId(1)], &labels, 1, 1),
            Err(EvalError::MissingLabel(RelationId(1)))
        );
    }

    #[test]
    fn all_true_labels() {
        let pop: Vec<RelationId> = (1..=30).map(RelationId).collect();
        let labels = pop.iter().map(|id| (*id, true)).collect();
        let r = evaluate_precision(&pop, &labels, 12, 9).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.true_positives, 12);
    }
}
