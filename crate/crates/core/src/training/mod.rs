//! Minibatch training loops: scoring-rule minimization for the conditional
//! generator and the adversarial baseline.
//!
//! Both loops share the same skeleton: a seeded validation split, seeded
//! epoch shuffles, Adam updates, and optional early stopping on the
//! validation loss. A fixed base seed makes an entire run bitwise
//! reproducible.

pub mod adam;

use crate::autodiff::{AdError, Tape, Var};
use crate::nn::{CriticNet, GeneratorNet, NnError};
use crate::scoring::{score_estimate, ScoreError, ScoringRule};
use crate::seeds::{derive, derive2, derive3, hash_f64s, STREAM_LATENT, STREAM_SHUFFLE, STREAM_SPLIT, STREAM_VALIDATION};
use crate::tensor::Tensor;
use adam::{adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Validation losses must drop by more than this to count as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

/// Samples drawn per validation pair when probing the adversarial
/// generator with the energy score.
pub const GAN_VAL_M: usize = 10;

/// Critic outputs are clamped to [eps, 1 - eps] before taking logs.
pub const CRITIC_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Number of consecutive validation checks without improvement after
    /// which training stops.
    pub patience: usize,
}

/// Stop rule over a stream of validation losses: tracks the best loss seen
/// and stops after `patience` checks without strict improvement. Weights are
/// not restored to the best epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopTracker {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopTracker {
    pub fn new(patience: usize) -> Self {
        EarlyStopTracker { patience, best: None, best_epoch: 0, stale: 0 }
    }

    /// Records one validation loss; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        match self.best {
            Some(best) if best - val_loss <= MIN_IMPROVEMENT => {
                self.stale += 1;
                self.stale >= self.patience
            }
            _ => {
                self.best = Some(val_loss);
                self.best_epoch = epoch;
                self.stale = 0;
                false
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best.map(|v| (self.best_epoch, v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SRTrainConfig {
    pub rule: ScoringRule,
    /// Generator samples per (theta, y) pair in the estimator.
    pub m: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Fraction of pairs held out for validation, in [0, 1).
    pub validation_fraction: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

impl SRTrainConfig {
    pub fn new(rule: ScoringRule, seed: u64) -> Self {
        SRTrainConfig {
            rule,
            m: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            max_epochs: 200,
            validation_fraction: 0.1,
            early_stopping: Some(EarlyStopping { patience: 10 }),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.rule.validate()?;
        if self.m < 2 {
            return Err(TrainError::InvalidConfig(format!(
                "estimator needs at least 2 samples per pair, got m = {}",
                self.m
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::InvalidConfig(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GANTrainConfig {
    pub generator_lr: f64,
    pub critic_lr: f64,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

impl GANTrainConfig {
    pub fn new(seed: u64) -> Self {
        GANTrainConfig {
            generator_lr: 1e-3,
            critic_lr: 1e-3,
            critic_steps: 1,
            batch_size: 128,
            max_epochs: 200,
            validation_fraction: 0.1,
            early_stopping: Some(EarlyStopping { patience: 10 }),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, lr) in [("generator", self.generator_lr), ("critic", self.critic_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(TrainError::InvalidConfig(format!(
                    "{name} learning rate must be finite and non-negative, got {lr}"
                )));
            }
        }
        if self.critic_steps == 0 {
            return Err(TrainError::InvalidConfig("critic steps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::InvalidConfig(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// One epoch's summary. `val_loss` is NaN when no validation split exists;
/// `wall_time_sec` is cumulative since the start of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Number of epochs actually run.
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

impl TrainReport {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.val_loss).filter(|v| v.is_finite())
    }
}

/// Renders a history as CSV with a fixed header. NaN validation losses
/// (no validation split) print as `nan`. Wall-clock times stay in memory
/// only so the rendered artifact is a pure function of config and seed.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    out
}

/// Latent seed for one (theta, y) pair: keyed on the pair's contents so that
/// identical pairs reuse identical draws within a batch, and on
/// `batch_seed` so that draws are fresh across batches and epochs.
pub fn pair_latent_seed(batch_seed: u64, theta: &[f64], y: &[f64]) -> u64 {
    hash_f64s(hash_f64s(batch_seed, theta), y)
}

/// A scoring-rule minibatch loss held on its tape, ready for backward.
pub struct SrBatchLoss {
    pub tape: Tape,
    pub loss: Var,
    /// Generator parameters bound on the tape, in [`crate::nn::MlpNet::tensors`] order.
    pub params: Vec<Var>,
}

/// Builds the minibatch objective: the mean over pairs of the m-sample
/// scoring-rule estimate of the generator's conditional samples against the
/// pair's parameter value. Each pair gets its own latent draws via
/// [`pair_latent_seed`].
pub fn sr_batch_loss(
    generator: &GeneratorNet,
    pairs: &[(&[f64], &[f64])],
    rule: &ScoringRule,
    m: usize,
    batch_seed: u64,
) -> Result<SrBatchLoss, TrainError> {
    sr_batch_loss_weighted(generator, pairs, None, rule, m, batch_seed)
}

/// As [`sr_batch_loss`], with an optional non-negative weight per pair
/// multiplying its score before averaging. Used by importance-weighted
/// sequential rounds.
pub fn sr_batch_loss_weighted(
    generator: &GeneratorNet,
    pairs: &[(&[f64], &[f64])],
    weights: Option<&[f64]>,
    rule: &ScoringRule,
    m: usize,
    batch_seed: u64,
) -> Result<SrBatchLoss, TrainError> {
    rule.validate()?;
    if m < 2 {
        return Err(TrainError::InvalidConfig(format!(
            "estimator needs at least 2 samples per pair, got m = {m}"
        )));
    }
    if pairs.is_empty() {
        return Err(TrainError::InvalidConfig("empty batch".into()));
    }
    if let Some(w) = weights {
        if w.len() != pairs.len() {
            return Err(TrainError::InvalidConfig(format!(
                "{} weights for {} pairs",
                w.len(),
                pairs.len()
            )));
        }
    }
    let tape = Tape::new();
    let bound = generator.bind(&tape);
    let mut acc: Option<Var> = None;
    for (i, (theta, y)) in pairs.iter().enumerate() {
        let seed = pair_latent_seed(batch_seed, theta, y);
        let samples = bound.sample(&tape, y, m, seed)?;
        let mut score = score_estimate(rule, &samples, theta)?;
        if let Some(w) = weights {
            score = score.scale(w[i])?;
        }
        acc = Some(match acc {
            Some(a) => a.add(&score)?,
            None => score,
        });
    }
    let loss = acc.unwrap().scale(1.0 / pairs.len() as f64)?;
    let params = bound.param_vars();
    Ok(SrBatchLoss { tape, loss, params })
}

/// Average scoring-rule loss over `pairs` without keeping gradients,
/// evaluated in chunks to bound tape size. Latent draws are keyed on
/// `seed` and pair contents, so repeated calls with the same seed are
/// comparable across epochs.
pub fn sr_validation_loss(
    generator: &GeneratorNet,
    pairs: &[(&[f64], &[f64])],
    rule: &ScoringRule,
    m: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::InvalidConfig("empty validation set".into()));
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(256) {
        let batch = sr_batch_loss(generator, chunk, rule, m, seed)?;
        total += batch.loss.item() * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, STREAM_SPLIT));
    perm.shuffle(&mut rng);
    let n_val = (validation_fraction * n as f64).floor() as usize;
    let val = perm[..n_val].to_vec();
    let train = perm[n_val..].to_vec();
    (train, val)
}

fn collect_grads(batch_params: &[Var], grads: &crate::autodiff::GradientMap) -> Vec<Tensor> {
    batch_params
        .iter()
        .map(|p| grads.get(p).expect("parameter gradient present").clone())
        .collect()
}

fn apply_adam(net_tensors: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) {
    let grad_refs: Vec<&Tensor> = grads.iter().collect();
    adam_update(net_tensors, &grad_refs, state, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
}

/// Trains the generator by scoring-rule minimization. See
/// [`train_sr_weighted`] for the importance-weighted variant this wraps.
pub fn train_sr(
    generator: &mut GeneratorNet,
    pairs: &[(&[f64], &[f64])],
    config: &SRTrainConfig,
) -> Result<TrainReport, TrainError> {
    train_sr_weighted(generator, pairs, None, config)
}

/// Scoring-rule training with optional per-pair weights. The pairs are
/// split into train and validation sets with a seeded permutation, shuffled
/// each epoch, and consumed in minibatches; after each epoch the validation
/// loss is evaluated with a fixed latent seed and fed to the early-stopping
/// rule. Weights follow their pairs through the split.
pub fn train_sr_weighted(
    generator: &mut GeneratorNet,
    pairs: &[(&[f64], &[f64])],
    weights: Option<&[f64]>,
    config: &SRTrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::InvalidConfig("no training pairs".into()));
    }
    if let Some(w) = weights {
        if w.len() != pairs.len() {
            return Err(TrainError::InvalidConfig(format!(
                "{} weights for {} pairs",
                w.len(),
                pairs.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TrainError::InvalidConfig(
                "pair weights must be finite and non-negative".into(),
            ));
        }
    }
    let (train_idx, val_idx) = split_indices(pairs.len(), config.validation_fraction, config.seed);
    if train_idx.is_empty() {
        return Err(TrainError::InvalidConfig("validation split leaves no training pairs".into()));
    }
    if config.early_stopping.is_some() && val_idx.is_empty() {
        return Err(TrainError::InvalidConfig(
            "early stopping requires a non-empty validation split".into(),
        ));
    }
    let val_pairs: Vec<(&[f64], &[f64])> = val_idx.iter().map(|&i| pairs[i]).collect();
    let val_seed = derive(config.seed, STREAM_VALIDATION);

    let mut adam = AdamState::new(&generator.mlp.tensors());
    let mut tracker = config.early_stopping.map(|es| EarlyStopTracker::new(es.patience));
    let mut history = Vec::new();
    let mut early_stopped = false;
    let start = Instant::now();

    for epoch in 1..=config.max_epochs {
        let mut order = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive2(config.seed, STREAM_SHUFFLE, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_pairs: Vec<(&[f64], &[f64])> = chunk.iter().map(|&i| pairs[i]).collect();
            let batch_weights: Option<Vec<f64>> =
                weights.map(|w| chunk.iter().map(|&i| w[i]).collect());
            let batch_seed = derive3(config.seed, STREAM_LATENT, epoch as u64, bi as u64);
            let batch = sr_batch_loss_weighted(
                generator,
                &batch_pairs,
                batch_weights.as_deref(),
                &config.rule,
                config.m,
                batch_seed,
            )?;
            let value = batch.loss.item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += value * chunk.len() as f64;
            let grad_map = batch.tape.backward(&batch.loss)?;
            let grads = collect_grads(&batch.params, &grad_map);
            apply_adam(&mut generator.mlp.tensors_mut(), &grads, &mut adam, config.learning_rate);
        }
        let train_loss = loss_sum / train_idx.len() as f64;

        let val_loss = if val_pairs.is_empty() {
            f64::NAN
        } else {
            let v = sr_validation_loss(generator, &val_pairs, &config.rule, config.m, val_seed)?;
            if !v.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX });
            }
            v
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_time_sec: start.elapsed().as_secs_f64(),
        });
        if let Some(tracker) = tracker.as_mut() {
            if tracker.observe(epoch, val_loss) {
                early_stopped = true;
                break;
            }
        }
    }

    let best = tracker.as_ref().and_then(|t| t.best());
    Ok(TrainReport {
        epochs_run: history.len(),
        history,
        early_stopped,
        best_epoch: best.map(|(e, _)| e),
        best_val_loss: best.map(|(_, v)| v),
    })
}

/// Both adversarial losses on one tape, sharing a single forward pass of
/// generator and critic.
pub struct GanBatchLosses {
    pub tape: Tape,
    /// Binary cross-entropy of the critic: minimized in psi.
    pub critic_loss: Var,
    /// Non-saturating direction is not used; the generator minimizes
    /// mean log(1 - c(fake)), the exact negation of its critic term.
    pub generator_loss: Var,
    pub generator_params: Vec<Var>,
    pub critic_params: Vec<Var>,
}

/// Builds the adversarial minibatch losses. Each pair contributes one real
/// row [theta | y] and one fake row [g(z, y) | y] with a single latent draw
/// keyed on the pair contents and `batch_seed`. Critic outputs are clamped
/// away from {0, 1} before taking logs.
pub fn gan_batch_losses(
    generator: &GeneratorNet,
    critic: &CriticNet,
    pairs: &[(&[f64], &[f64])],
    batch_seed: u64,
) -> Result<GanBatchLosses, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::InvalidConfig("empty batch".into()));
    }
    let p = generator.parameter_dim();
    let d = generator.data_dim;
    if critic.mlp.arch.input_dim != p + d {
        return Err(TrainError::InvalidConfig(format!(
            "critic input dim {} does not match parameter dim {} + data dim {}",
            critic.mlp.arch.input_dim, p, d
        )));
    }
    for (theta, y) in pairs {
        if theta.len() != p || y.len() != d {
            return Err(TrainError::InvalidConfig(format!(
                "pair with dims ({}, {}) does not match generator dims ({}, {})",
                theta.len(),
                y.len(),
                p,
                d
            )));
        }
    }
    let n = pairs.len();
    let lz = generator.latent.dim;

    let tape = Tape::new();
    let bg = generator.bind(&tape);
    let bc = critic.bind(&tape);

    // One latent draw per pair, assembled into a single batched forward.
    let mut gen_input = Vec::with_capacity(n * (lz + d));
    let mut real_rows = Vec::with_capacity(n * (p + d));
    for (theta, y) in pairs {
        let z = generator.latent.sample(1, pair_latent_seed(batch_seed, theta, y));
        gen_input.extend_from_slice(z.data());
        gen_input.extend_from_slice(y);
        real_rows.extend_from_slice(theta);
        real_rows.extend_from_slice(y);
    }
    let gen_input = tape.constant(Tensor::matrix(n, lz + d, gen_input));
    let fake_theta = bg.mlp.forward(&gen_input)?;

    // Fake rows [g(z, y) | y] reuse the same conditioning columns.
    let fake_rows = if d == 0 {
        fake_theta
    } else {
        let y_cols = tape.constant(Tensor::matrix(
            n,
            d,
            pairs.iter().flat_map(|(_, y)| y.iter().copied()).collect(),
        ));
        fake_theta.concat(&y_cols, 1)?
    };
    let real_rows = tape.constant(Tensor::matrix(n, p + d, real_rows));

    let c_real = bc.score_rows(&real_rows)?.clamp_unit(CRITIC_CLAMP)?;
    let c_fake = bc.score_rows(&fake_rows)?.clamp_unit(CRITIC_CLAMP)?;

    let log_one_minus_fake = c_fake.one_minus()?.ln()?;
    let critic_loss = c_real.ln()?.add(&log_one_minus_fake)?.mean()?.scale(-1.0)?;
    let generator_loss = log_one_minus_fake.mean()?;

    Ok(GanBatchLosses {
        tape,
        critic_loss,
        generator_loss,
        generator_params: bg.param_vars(),
        critic_params: bc.param_vars(),
    })
}

/// Adversarial training: per minibatch, `critic_steps` critic updates with
/// fresh latent draws, then one generator update. The validation probe is
/// the energy score of [`GAN_VAL_M`] generator samples per held-out pair,
/// which drives early stopping; `train_loss` in the history records the
/// generator loss.
pub fn train_gan(
    generator: &mut GeneratorNet,
    critic: &mut CriticNet,
    pairs: &[(&[f64], &[f64])],
    config: &GANTrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::InvalidConfig("no training pairs".into()));
    }
    let (train_idx, val_idx) = split_indices(pairs.len(), config.validation_fraction, config.seed);
    if train_idx.is_empty() {
        return Err(TrainError::InvalidConfig("validation split leaves no training pairs".into()));
    }
    if config.early_stopping.is_some() && val_idx.is_empty() {
        return Err(TrainError::InvalidConfig(
            "early stopping requires a non-empty validation split".into(),
        ));
    }
    let val_pairs: Vec<(&[f64], &[f64])> = val_idx.iter().map(|&i| pairs[i]).collect();
    let val_seed = derive(config.seed, STREAM_VALIDATION);
    let probe_rule = ScoringRule::energy();

    let mut adam_g = AdamState::new(&generator.mlp.tensors());
    let mut adam_c = AdamState::new(&critic.mlp.tensors());
    let mut tracker = config.early_stopping.map(|es| EarlyStopTracker::new(es.patience));
    let mut history = Vec::new();
    let mut early_stopped = false;
    let start = Instant::now();

    for epoch in 1..=config.max_epochs {
        let mut order = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive2(config.seed, STREAM_SHUFFLE, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_pairs: Vec<(&[f64], &[f64])> = chunk.iter().map(|&i| pairs[i]).collect();
            let step_seed = |s: u64| {
                derive(derive3(config.seed, STREAM_LATENT, epoch as u64, bi as u64), s)
            };

            for s in 0..config.critic_steps {
                let batch = gan_batch_losses(generator, critic, &batch_pairs, step_seed(s as u64))?;
                if !batch.critic_loss.item().is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
                }
                let grad_map = batch.tape.backward(&batch.critic_loss)?;
                let grads = collect_grads(&batch.critic_params, &grad_map);
                apply_adam(&mut critic.mlp.tensors_mut(), &grads, &mut adam_c, config.critic_lr);
            }

            let batch =
                gan_batch_losses(generator, critic, &batch_pairs, step_seed(config.critic_steps as u64))?;
            let value = batch.generator_loss.item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += value * chunk.len() as f64;
            let grad_map = batch.tape.backward(&batch.generator_loss)?;
            let grads = collect_grads(&batch.generator_params, &grad_map);
            apply_adam(&mut generator.mlp.tensors_mut(), &grads, &mut adam_g, config.generator_lr);
        }
        let train_loss = loss_sum / train_idx.len() as f64;

        let val_loss = if val_pairs.is_empty() {
            f64::NAN
        } else {
            let v = sr_validation_loss(generator, &val_pairs, &probe_rule, GAN_VAL_M, val_seed)?;
            if !v.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX });
            }
            v
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_time_sec: start.elapsed().as_secs_f64(),
        });
        if let Some(tracker) = tracker.as_mut() {
            if tracker.observe(epoch, val_loss) {
                early_stopped = true;
                break;
            }
        }
    }

    let best = tracker.as_ref().and_then(|t| t.best());
    Ok(TrainReport {
        epochs_run: history.len(),
        history,
        early_stopped,
        best_epoch: best.map(|(e, _)| e),
        best_val_loss: best.map(|(_, v)| v),
    })
}
