//! Classifier two-sample test: cross-validated held-out accuracy of an MLP
//! separating two sample sets. Accuracy near 0.5 means the sets are
//! statistically indistinguishable.

use super::MetricsError;
use crate::classifier::{BinaryClassifier, ClassifierConfig};
use crate::seeds::{derive, derive2, STREAM_CLASSIFIER, STREAM_SHUFFLE};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MIN_PER_SIDE: usize = 100;
const FOLDS: usize = 5;

fn shuffled_rows(rows: &[f64], dim: usize, seed: u64) -> Vec<f64> {
    let n = rows.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = Vec::with_capacity(rows.len());
    for i in order {
        out.extend_from_slice(&rows[i * dim..(i + 1) * dim]);
    }
    out
}

/// Rows of fold `f` and the remaining rows, split as evenly as possible.
fn fold_split(rows: &[f64], dim: usize, f: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() / dim;
    let start = f * n / FOLDS;
    let end = (f + 1) * n / FOLDS;
    let held = rows[start * dim..end * dim].to_vec();
    let mut rest = rows[..start * dim].to_vec();
    rest.extend_from_slice(&rows[end * dim..]);
    (held, rest)
}

/// Five-fold cross-validated accuracy of a two-hidden-layer MLP (10 d units
/// per layer) distinguishing `samples_p` from `samples_q`, both row-major
/// with `dim` columns. Pooled over held-out rows.
pub fn c2st_accuracy(
    samples_p: &[f64],
    samples_q: &[f64],
    dim: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    if dim == 0 || samples_p.len() % dim != 0 || samples_q.len() % dim != 0 {
        return Err(MetricsError::InvalidInput(
            "sample buffers must be a multiple of the dimension".into(),
        ));
    }
    let k_p = samples_p.len() / dim;
    let k_q = samples_q.len() / dim;
    if k_p < MIN_PER_SIDE || k_q < MIN_PER_SIDE {
        return Err(MetricsError::TooFewSamples { needed: MIN_PER_SIDE, got: k_p.min(k_q) });
    }
    let rows_p = shuffled_rows(samples_p, dim, derive2(seed, STREAM_SHUFFLE, 0));
    let rows_q = shuffled_rows(samples_q, dim, derive2(seed, STREAM_SHUFFLE, 1));

    let mut config = ClassifierConfig::new(&[10 * dim, 10 * dim], 0);
    config.epochs = 60;
    let mut correct = 0usize;
    let mut total = 0usize;
    for f in 0..FOLDS {
        let (test_p, train_p) = fold_split(&rows_p, dim, f);
        let (test_q, train_q) = fold_split(&rows_q, dim, f);
        config.seed = derive(derive2(seed, STREAM_CLASSIFIER, f as u64), 1);
        let clf = BinaryClassifier::train(&train_p, &train_q, dim, &config)?;
        correct += clf.logits(&test_p)?.iter().filter(|l| **l < 0.0).count();
        correct += clf.logits(&test_q)?.iter().filter(|l| **l >= 0.0).count();
        total += test_p.len() / dim + test_q.len() / dim;
    }
    Ok(correct as f64 / total as f64)
}
