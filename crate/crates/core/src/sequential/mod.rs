//! Multi-round training focused on a single observation: each round draws
//! parameters from the current posterior approximation at the target
//! observation, simulates fresh data, and retrains on everything gathered
//! so far with classifier-estimated density-ratio weights that correct the
//! proposal back to the prior.


use crate::classifier::{BinaryClassifier, ClassifierConfig};
use crate::nn::{GeneratorNet, NnError};
use crate::seeds::{
    derive, derive2, STREAM_CLASSIFIER, STREAM_EVAL, STREAM_PRIOR, STREAM_ROUND, STREAM_SIM,
};
use crate::simulators::dataset::Dataset;
use crate::simulators::{Model, SimError};
use crate::training::{
    sr_batch_loss_weighted, train_sr_weighted, SRTrainConfig, SrBatchLoss, TrainError,
    TrainReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A round aborts when the effective sample size of the fresh proposal
/// draws' weights falls below this fraction of the proposal batch.
pub const ESS_ABORT_FRACTION: f64 = 0.05;

/// Log-ratio estimates are clamped to this magnitude so the exponential
/// stays finite and strictly positive.
const LOG_RATIO_CLAMP: f64 = 500.0;

const ORACLE_PROBE_DRAWS: usize = 1000;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("invalid sequential configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "importance weights degenerate in round {round}: \
         effective sample fraction {ess_fraction:.4}"
    )]
    WeightDegeneracy { round: usize, ess_fraction: f64 },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Settings for one sequential run. The oracle posterior mean at `y0`, when
/// known, enables the per-round accuracy diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub rounds: usize,
    pub sims_per_round: usize,
    pub y0: Vec<f64>,
    pub base: SRTrainConfig,
    pub oracle_mean: Option<Vec<f64>>,
}

impl RoundConfig {
    pub fn new(rounds: usize, sims_per_round: usize, y0: Vec<f64>, base: SRTrainConfig) -> Self {
        RoundConfig { rounds, sims_per_round, y0, base, oracle_mean: None }
    }

    pub fn validate(&self) -> Result<(), SeqError> {
        if self.rounds == 0 {
            return Err(SeqError::InvalidConfig("need at least one round".into()));
        }
        if self.sims_per_round < 2 {
            return Err(SeqError::InvalidConfig(
                "need at least two simulations per round".into(),
            ));
        }
        self.base.validate()?;
        Ok(())
    }
}

/// Density-ratio estimate r(theta) = numerator density / denominator
/// density, read off a probabilistic classifier trained to separate draws
/// from the two densities.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimator {
    classifier: BinaryClassifier,
    log_count_correction: f64,
}

/// Fits the ratio classifier on `samples_num` (numerator density) against
/// `samples_den` (denominator density), both row-major with `dim` columns.
pub fn fit_ratio_classifier(
    samples_num: &[f64],
    samples_den: &[f64],
    dim: usize,
    seed: u64,
) -> Result<RatioEstimator, SeqError> {
    if samples_num.is_empty() || samples_den.is_empty() {
        return Err(SeqError::InvalidConfig(
            "both ratio classifier classes must be nonempty".into(),
        ));
    }
    let config = ClassifierConfig::new(&[64, 64], seed);
    let classifier = BinaryClassifier::train(samples_den, samples_num, dim, &config)?;
    let n_num = samples_num.len() / dim;
    let n_den = samples_den.len() / dim;
    Ok(RatioEstimator {
        classifier,
        log_count_correction: (n_den as f64 / n_num as f64).ln(),
    })
}

impl RatioEstimator {
    /// log r(theta); the classifier logit is the log odds of the numerator
    /// class, shifted by the class-count correction.
    pub fn log_estimate(&self, theta: &[f64]) -> Result<f64, SeqError> {
        let logit = self.classifier.logit(theta)?;
        Ok((logit + self.log_count_correction).clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP))
    }

    /// r(theta), strictly positive and finite for finite inputs.
    pub fn estimate(&self, theta: &[f64]) -> Result<f64, SeqError> {
        Ok(self.log_estimate(theta)?.exp())
    }

    /// Ratio estimates for a row-major batch of parameter rows.
    pub fn estimate_batch(&self, thetas: &[f64]) -> Result<Vec<f64>, SeqError> {
        let logits = self.classifier.logits(thetas)?;
        Ok(logits
            .iter()
            .map(|l| (l + self.log_count_correction).clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp())
            .collect())
    }
}

/// Scoring-rule batch loss with each pair scaled by the estimated density
/// ratio at its parameter value. Weights enter as constants: no gradient
/// flows into the classifier.
pub fn weighted_sr_loss(
    generator: &GeneratorNet,
    pairs: &[(&[f64], &[f64])],
    rule: &crate::scoring::ScoringRule,
    m: usize,
    batch_seed: u64,
    ratio: &RatioEstimator,
) -> Result<SrBatchLoss, SeqError> {
    let mut weights = Vec::with_capacity(pairs.len());
    for (theta, _) in pairs {
        weights.push(ratio.estimate(theta)?);
    }
    Ok(sr_batch_loss_weighted(generator, pairs, Some(&weights), rule, m, batch_seed)?)
}

/// Effective sample size of a weight vector, (sum w)^2 / (sum w^2), as a
/// fraction of its length.
pub fn effective_sample_fraction(weights: &[f64]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    if sum_sq == 0.0 {
        return 0.0;
    }
    (sum * sum) / (sum_sq * weights.len() as f64)
}

/// Per-round diagnostics. `posterior_mean_error` is the mean absolute
/// deviation of the generator's posterior mean at `y0` from the oracle
/// mean, or NaN when no oracle mean is configured.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub ess_fraction: f64,
    pub val_loss: f64,
    pub posterior_mean_error: f64,
}

pub fn diagnostics_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from("round,ess_fraction,val_loss,posterior_mean_error\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.round, r.ess_fraction, r.val_loss, r.posterior_mean_error
        ));
    }
    out
}

/// Everything produced by a sequential run: a generator snapshot, training
/// report, and diagnostics record per round, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialResult {
    pub generators: Vec<GeneratorNet>,
    pub reports: Vec<TrainReport>,
    pub records: Vec<RoundRecord>,
}

impl SequentialResult {
    pub fn final_generator(&self) -> &GeneratorNet {
        self.generators.last().expect("at least one round")
    }
}

/// Runs `config.rounds` rounds of sequential training. Round 1 trains on
/// prior-predictive pairs; every later round draws parameters from the
/// current generator at `y0`, simulates, refits the prior-vs-proposal ratio
/// classifier on the accumulated draws, and retrains the same network on
/// all pairs gathered so far under the estimated weights.
pub fn run_sequential(
    model: &Model,
    generator: &mut GeneratorNet,
    config: &RoundConfig,
) -> Result<SequentialResult, SeqError> {
    config.validate()?;
    let p = model.parameter_dim();
    let d = model.data_dim();
    if config.y0.len() != d {
        return Err(SeqError::InvalidConfig(format!(
            "target observation has {} values, model emits {d}",
            config.y0.len()
        )));
    }
    if generator.parameter_dim() != p || generator.data_dim != d {
        return Err(SeqError::InvalidConfig(
            "generator dimensions do not match the model".into(),
        ));
    }
    if let Some(om) = &config.oracle_mean {
        if om.len() != p {
            return Err(SeqError::InvalidConfig(
                "oracle mean dimension does not match the model".into(),
            ));
        }
    }

    let n_round = config.sims_per_round;
    let mut all_theta: Vec<f64> = Vec::with_capacity(config.rounds * n_round * p);
    let mut all_y: Vec<f64> = Vec::with_capacity(config.rounds * n_round * d);
    let mut result = SequentialResult {
        generators: Vec::with_capacity(config.rounds),
        reports: Vec::with_capacity(config.rounds),
        records: Vec::with_capacity(config.rounds),
    };

    for round in 1..=config.rounds {
        let round_seed = derive2(config.base.seed, STREAM_ROUND, round as u64);
        let mut round_cfg = config.base.clone();
        round_cfg.seed = round_seed;

        let (report, ess_fraction) = if round == 1 {
            let data = Dataset::generate(model, n_round, round_seed)?;
            all_theta.extend_from_slice(&data.theta);
            all_y.extend_from_slice(&data.y);
            let pairs = collect_pairs(&all_theta, &all_y, p, d);
            (train_sr_weighted(generator, &pairs, None, &round_cfg)?, 1.0)
        } else {
            let proposal = generator
                .sample_posterior(&config.y0, n_round, derive(round_seed, STREAM_PRIOR))?;
            for (i, theta) in proposal.data().chunks(p).enumerate() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive2(round_seed, STREAM_SIM, i as u64));
                let y = model.simulate(theta, &mut rng)?;
                all_theta.extend_from_slice(theta);
                all_y.extend(y);
            }

            // Prior-vs-cumulative-proposal classifier: the accumulated
            // parameter draws are the denominator sample.
            let n_acc = all_theta.len() / p;
            let mut prior_rows = Vec::with_capacity(n_acc * p);
            let mut rng = ChaCha8Rng::seed_from_u64(derive(round_seed, STREAM_CLASSIFIER));
            for _ in 0..n_acc {
                prior_rows.extend(model.sample_prior(&mut rng));
            }
            let ratio = fit_ratio_classifier(
                &prior_rows,
                &all_theta,
                p,
                derive(round_seed, STREAM_CLASSIFIER),
            )?;
            let weights = ratio.estimate_batch(&all_theta)?;

            let fresh = &weights[weights.len() - n_round..];
            let ess_fraction = effective_sample_fraction(fresh);
            if ess_fraction < ESS_ABORT_FRACTION {
                return Err(SeqError::WeightDegeneracy { round, ess_fraction });
            }

            let pairs = collect_pairs(&all_theta, &all_y, p, d);
            (train_sr_weighted(generator, &pairs, Some(&weights), &round_cfg)?, ess_fraction)
        };

        let posterior_mean_error = match &config.oracle_mean {
            Some(oracle) => {
                let draws = generator.sample_posterior(
                    &config.y0,
                    ORACLE_PROBE_DRAWS,
                    derive(round_seed, STREAM_EVAL),
                )?;
                let mut err = 0.0;
                for (j, o) in oracle.iter().enumerate() {
                    let mean = draws.data().chunks(p).map(|row| row[j]).sum::<f64>()
                        / ORACLE_PROBE_DRAWS as f64;
                    err += (mean - o).abs();
                }
                err / p as f64
            }
            None => f64::NAN,
        };

        result.records.push(RoundRecord {
            round,
            ess_fraction,
            val_loss: report.best_val_loss.unwrap_or(f64::NAN),
            posterior_mean_error,
        });
        result.reports.push(report);
        result.generators.push(generator.clone());
    }
    Ok(result)
}

fn collect_pairs<'a>(
    theta: &'a [f64],
    y: &'a [f64],
    p: usize,
    d: usize,
) -> Vec<(&'a [f64], &'a [f64])> {
    theta.chunks(p).zip(y.chunks(d)).collect()
}
