//! Coverage-based calibration error and simulation-based calibration.

use super::MetricsError;
use crate::seeds::{derive2, STREAM_EVAL, STREAM_PRIOR, STREAM_SIM};
use crate::simulators::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of coverage levels on the evaluation grid.
const ALPHA_GRID: usize = 100;

/// Lowest-order-statistic empirical quantile: the k-th smallest value with
/// k = ceil(m p). Exactly equivariant under strictly monotone transforms,
/// which makes the calibration error invariant under them.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let k = (m as f64 * p).ceil() as usize;
    sorted[k.clamp(1, m) - 1]
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Median over 100 equally spaced credible levels alpha in (0,1) of the
/// absolute difference between alpha and the fraction of pairs whose truth
/// falls inside the central alpha-credible interval of its sample set.
pub fn calibration_error(truths: &[f64], samples: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if truths.is_empty() || truths.len() != samples.len() {
        return Err(MetricsError::InvalidInput(format!(
            "{} truths vs {} sample sets",
            truths.len(),
            samples.len()
        )));
    }
    let n_post = samples[0].len();
    if n_post == 0 || samples.iter().any(|s| s.len() != n_post) {
        return Err(MetricsError::InvalidInput(
            "every pair needs the same positive number of posterior draws".into(),
        ));
    }
    let mut sorted: Vec<Vec<f64>> = samples.to_vec();
    for s in sorted.iter_mut() {
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite posterior draws"));
    }
    let n = truths.len() as f64;
    let mut errors = Vec::with_capacity(ALPHA_GRID);
    for k in 1..=ALPHA_GRID {
        let alpha = k as f64 / (ALPHA_GRID + 1) as f64;
        let covered = truths
            .iter()
            .zip(&sorted)
            .filter(|(t, s)| {
                let lo = empirical_quantile(s, (1.0 - alpha) / 2.0);
                let hi = empirical_quantile(s, (1.0 + alpha) / 2.0);
                lo <= **t && **t <= hi
            })
            .count();
        errors.push((covered as f64 / n - alpha).abs());
    }
    Ok(median(&mut errors))
}

/// Ranks of prior draws among approximate-posterior draws, one array per
/// parameter component, each value in `0..=n_draws`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbcResult {
    /// Component-major: `ranks[j][i]` is the rank of component `j` at
    /// prior draw `i`.
    pub ranks: Vec<Vec<usize>>,
    pub n_draws: usize,
}

/// For each of `n_priors` prior draws: simulate an observation, draw
/// `n_draws` samples from `sampler(y, n_draws, seed)`, and record per
/// component how many samples fall strictly below the prior draw.
pub fn sbc_ranks<F>(
    model: &Model,
    n_priors: usize,
    n_draws: usize,
    seed: u64,
    mut sampler: F,
) -> Result<SbcResult, MetricsError>
where
    F: FnMut(&[f64], usize, u64) -> Result<Vec<f64>, MetricsError>,
{
    if n_priors == 0 {
        return Err(MetricsError::InvalidInput("need at least one prior draw".into()));
    }
    if n_draws < 10 {
        return Err(MetricsError::InvalidInput(
            "need at least ten posterior draws per rank".into(),
        ));
    }
    let p = model.parameter_dim();
    let mut ranks = vec![Vec::with_capacity(n_priors); p];
    for i in 0..n_priors {
        let mut prior_rng =
            ChaCha8Rng::seed_from_u64(derive2(seed, STREAM_PRIOR, i as u64));
        let theta = model.sample_prior(&mut prior_rng);
        let mut sim_rng = ChaCha8Rng::seed_from_u64(derive2(seed, STREAM_SIM, i as u64));
        let y = model.simulate(&theta, &mut sim_rng)?;
        let draws = sampler(&y, n_draws, derive2(seed, STREAM_EVAL, i as u64))?;
        if draws.len() != n_draws * p {
            return Err(MetricsError::InvalidInput(format!(
                "sampler returned {} values, expected {}",
                draws.len(),
                n_draws * p
            )));
        }
        for (j, target) in ranks.iter_mut().enumerate() {
            let r = draws.chunks(p).filter(|row| row[j] < theta[j]).count();
            target.push(r);
        }
    }
    Ok(SbcResult { ranks, n_draws })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov-Smirnov test of `values` against the discrete uniform
/// distribution on `{0, .., categories-1}`, with the asymptotic p-value.
pub fn ks_uniform(values: &[usize], categories: usize) -> Result<KsTest, MetricsError> {
    if values.is_empty() || categories == 0 {
        return Err(MetricsError::InvalidInput("empty uniformity test".into()));
    }
    if let Some(v) = values.iter().find(|v| **v >= categories) {
        return Err(MetricsError::InvalidInput(format!(
            "value {v} outside the {categories} categories"
        )));
    }
    let n = values.len();
    let mut counts = vec![0usize; categories];
    for &v in values {
        counts[v] += 1;
    }
    let mut cumulative = 0usize;
    let mut statistic: f64 = 0.0;
    for (k, c) in counts.iter().enumerate() {
        cumulative += c;
        let empirical = cumulative as f64 / n as f64;
        let theoretical = (k + 1) as f64 / categories as f64;
        statistic = statistic.max((empirical - theoretical).abs());
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    Ok(KsTest { statistic, p_value: ks_survival(lambda) })
}

/// Asymptotic Kolmogorov survival function 2 sum_j (-1)^(j-1) exp(-2 j^2 x^2),
/// clamped to [0, 1].
fn ks_survival(lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev_term = f64::INFINITY;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * 2.0 * term;
        if 2.0 * term < 1e-3 * prev_term || 2.0 * term < 1e-8 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        prev_term = 2.0 * term;
        sign = -sign;
    }
    1.0
}
