//! A small logistic-loss MLP binary classifier, shared by the two-sample
//! test and the density-ratio estimator. Inputs are z-scored with
//! statistics from the training rows; training mirrors the main loops:
//! seeded shuffles, Adam, fixed epoch budget.

use crate::autodiff::Tape;
use crate::nn::{Activation, MLPArchitecture, MlpNet, OutputTransform};
use crate::seeds::{derive, derive2, STREAM_INIT, STREAM_SHUFFLE};
use crate::tensor::Tensor;
use crate::training::adam::{adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::training::{TrainError, CRITIC_CLAMP};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ClassifierConfig {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        ClassifierConfig {
            hidden: hidden.to_vec(),
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 128,
            seed,
        }
    }
}

/// Feed-forward classifier with logit output; probabilities are sigmoids of
/// the logit.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifier {
    net: MlpNet,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl BinaryClassifier {
    /// Trains on two row-major blocks of rows: `class0` gets label 0,
    /// `class1` label 1.
    pub fn train(
        class0: &[f64],
        class1: &[f64],
        dim: usize,
        config: &ClassifierConfig,
    ) -> Result<Self, TrainError> {
        if dim == 0 || class0.len() % dim != 0 || class1.len() % dim != 0 {
            return Err(TrainError::InvalidConfig(
                "classifier rows must be a multiple of the dimension".into(),
            ));
        }
        let n0 = class0.len() / dim;
        let n1 = class1.len() / dim;
        if n0 == 0 || n1 == 0 {
            return Err(TrainError::InvalidConfig(
                "both classifier classes must be nonempty".into(),
            ));
        }
        if config.batch_size == 0 || config.learning_rate < 0.0 {
            return Err(TrainError::InvalidConfig("bad classifier configuration".into()));
        }
        let n = n0 + n1;

        // Standardization statistics over all training rows.
        let mut mean = vec![0.0; dim];
        for row in class0.chunks(dim).chain(class1.chunks(dim)) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut sd = vec![0.0; dim];
        for row in class0.chunks(dim).chain(class1.chunks(dim)) {
            for (s, (v, m)) in sd.iter_mut().zip(row.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in sd.iter_mut() {
            *s = (*s / n as f64).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }

        let mut rows = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for row in class0.chunks(dim) {
            rows.extend(row.iter().zip(mean.iter().zip(&sd)).map(|(v, (m, s))| (v - m) / s));
            labels.push(0.0);
        }
        for row in class1.chunks(dim) {
            rows.extend(row.iter().zip(mean.iter().zip(&sd)).map(|(v, (m, s))| (v - m) / s));
            labels.push(1.0);
        }

        let arch = MLPArchitecture::uniform(
            dim,
            &config.hidden,
            Activation::LeakyRelu,
            1,
            OutputTransform::Identity,
        );
        let mut net = MlpNet::init(arch, derive(config.seed, STREAM_INIT))?;
        let mut adam = AdamState::new(&net.tensors());

        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..config.epochs {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive2(config.seed, STREAM_SHUFFLE, epoch as u64));
            order.shuffle(&mut rng);
            for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
                let b = chunk.len();
                let mut x = Vec::with_capacity(b * dim);
                let mut t = Vec::with_capacity(b);
                for &i in chunk {
                    x.extend_from_slice(&rows[i * dim..(i + 1) * dim]);
                    t.push(labels[i]);
                }
                let tape = Tape::new();
                let bound = net.bind(&tape);
                let logits = bound.forward(&tape.constant(Tensor::matrix(b, dim, x)))?;
                let prob = logits.sigmoid()?.clamp_unit(CRITIC_CLAMP)?;
                let target = tape.constant(Tensor::matrix(b, 1, t.clone()));
                let target_c =
                    tape.constant(Tensor::matrix(b, 1, t.iter().map(|v| 1.0 - v).collect()));
                let loss = target
                    .mul(&prob.ln()?)?
                    .add(&target_c.mul(&prob.one_minus()?.ln()?)?)?
                    .mean()?
                    .scale(-1.0)?;
                if !loss.item().is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
                }
                let grads = tape.backward(&loss)?;
                let params = bound.param_vars();
                let grad_tensors: Vec<Tensor> =
                    params.iter().map(|p| grads.get(p).unwrap().clone()).collect();
                let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
                adam_update(
                    &mut net.tensors_mut(),
                    &grad_refs,
                    &mut adam,
                    config.learning_rate,
                    ADAM_BETA1,
                    ADAM_BETA2,
                    ADAM_EPS,
                );
            }
        }
        Ok(BinaryClassifier { net, mean, sd })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Raw log-odds of class 1 for a batch of rows (row-major).
    pub fn logits(&self, rows: &[f64]) -> Result<Vec<f64>, TrainError> {
        let dim = self.input_dim();
        if dim == 0 || rows.len() % dim != 0 {
            return Err(TrainError::InvalidConfig(
                "prediction rows must be a multiple of the dimension".into(),
            ));
        }
        let n = rows.len() / dim;
        let z: Vec<f64> = rows
            .chunks(dim)
            .flat_map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.sd))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect::<Vec<f64>>()
            })
            .collect();
        let tape = Tape::new();
        let bound = self.net.bind(&tape);
        let out = bound.forward(&tape.constant(Tensor::matrix(n, dim, z)))?;
        Ok(out.value().into_data())
    }

    pub fn logit(&self, row: &[f64]) -> Result<f64, TrainError> {
        Ok(self.logits(row)?[0])
    }

    /// P(class 1 | row).
    pub fn prob_class1(&self, row: &[f64]) -> Result<f64, TrainError> {
        let l = self.logit(row)?;
        Ok(1.0 / (1.0 + (-l).exp()))
    }

    /// Accuracy on labeled blocks at the 0.5 threshold.
    pub fn accuracy(&self, class0: &[f64], class1: &[f64]) -> Result<f64, TrainError> {
        let l0 = self.logits(class0)?;
        let l1 = self.logits(class1)?;
        let correct = l0.iter().filter(|v| **v < 0.0).count()
            + l1.iter().filter(|v| **v >= 0.0).count();
        Ok(correct as f64 / (l0.len() + l1.len()) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_rows(n: usize, shift: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn separable_classes_reach_high_accuracy() {
        let a = normal_rows(300, -3.0, 1);
        let b = normal_rows(300, 3.0, 2);
        let clf =
            BinaryClassifier::train(&a, &b, 1, &ClassifierConfig::new(&[8], 5)).unwrap();
        assert!(clf.accuracy(&a, &b).unwrap() > 0.95);
        assert!(clf.prob_class1(&[3.0]).unwrap() > 0.9);
        assert!(clf.prob_class1(&[-3.0]).unwrap() < 0.1);
    }

    #[test]
    fn training_is_deterministic() {
        let a = normal_rows(120, 0.0, 3);
        let b = normal_rows(120, 1.0, 4);
        let cfg = ClassifierConfig::new(&[6, 6], 11);
        let c1 = BinaryClassifier::train(&a, &b, 1, &cfg).unwrap();
        let c2 = BinaryClassifier::train(&a, &b, 1, &cfg).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn empty_classes_are_rejected() {
        let a = normal_rows(10, 0.0, 3);
        assert!(BinaryClassifier::train(&a, &[], 1, &ClassifierConfig::new(&[4], 0)).is_err());
        assert!(BinaryClassifier::train(&a, &a, 3, &ClassifierConfig::new(&[4], 0)).is_err());
    }

    #[test]
    fn constant_features_do_not_produce_nan() {
        let a = vec![1.0; 50];
        let b = vec![1.0; 50];
        let clf =
            BinaryClassifier::train(&a, &b, 1, &ClassifierConfig::new(&[4], 7)).unwrap();
        let p = clf.prob_class1(&[1.0]).unwrap();
        assert!(p.is_finite());
        assert!((p - 0.5).abs() < 0.2, "indistinguishable classes should stay near 0.5");
    }
}
