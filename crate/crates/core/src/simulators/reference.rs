//! Reference posterior samplers, one per model: exact draws where the
//! posterior is tractable, an exact inversion sampler for the two-moons
//! model, and sampling importance resampling for the rest.

use super::linalg;
use super::{
    check_y, ConjugateGaussian, GridToy, Model, SimError, Slcp, TwoMoons, SLCP_BOUND,
    TWO_MOONS_BOUND, TWO_MOONS_OFFSET, TWO_MOONS_RADIUS_MEAN, TWO_MOONS_RADIUS_SD,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Proposals used by the sampling-importance-resampling reference.
pub const SIR_PROPOSALS: usize = 200_000;

/// A Gaussian posterior in closed form: mean vector and row-major
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws n samples (row-major n x dim), jittering the covariance if it
    /// is numerically semi-definite.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, SimError> {
        let dim = self.dim();
        let (chol, _) = linalg::cholesky_with_jitter(dim, &self.cov)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(linalg::mvn_sample(&self.mean, &chol, n, &mut rng))
    }
}

/// Exact posterior draws for the conjugate Gaussian model.
pub fn conjugate_reference(
    model: &ConjugateGaussian,
    y: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    check_y(y, 1)?;
    let mean = model.posterior_mean(y[0]);
    let sd = model.posterior_sd();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Exact two-moons posterior draws by inverting the simulator.
///
/// Draw the simulator's latent pair (a, r) and form the crescent point p.
/// Conditioned on the observation, p determines |t1 + t2| (which must be
/// non-negative, else the latent is rejected) and t2 - t1; a fair coin
/// picks the sign of t1 + t2, and the solved parameter is accepted if it
/// falls inside the prior box. The measure-preserving change of variables
/// from p to the parameter has unit Jacobian, so accepted draws follow the
/// posterior exactly.
pub fn two_moons_reference(
    _model: &TwoMoons,
    y: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    check_y(y, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * 2);
    let mut attempts = 0u64;
    let max_attempts = 100_000 + 20_000 * n as u64;
    let sqrt2 = 2.0f64.sqrt();
    while out.len() < n * 2 {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SimError::ReferenceFailure(format!(
                "two-moons inversion accepted {} of {} attempts",
                out.len() / 2,
                attempts
            )));
        }
        let (p1, p2) = TwoMoons::crescent_point(&mut rng);
        let u = p1 - y[0];
        if u < 0.0 {
            continue;
        }
        let s_abs = sqrt2 * u;
        let t = sqrt2 * (y[1] - p2);
        let s = if rng.random_bool(0.5) { s_abs } else { -s_abs };
        let t1 = (s - t) / 2.0;
        let t2 = (s + t) / 2.0;
        if t1.abs() <= TWO_MOONS_BOUND && t2.abs() <= TWO_MOONS_BOUND {
            out.push(t1);
            out.push(t2);
        }
    }
    Ok(out)
}

/// Unnormalized two-moons posterior log density at `theta` for observation
/// `y`: the push-forward density of the crescent point evaluated at the
/// point implied by (theta, y), with a flat prior over the box.
pub fn two_moons_log_posterior(theta: &[f64], y: &[f64]) -> f64 {
    if theta[0].abs() > TWO_MOONS_BOUND || theta[1].abs() > TWO_MOONS_BOUND {
        return f64::NEG_INFINITY;
    }
    let (s1, s2) = TwoMoons::shift(theta);
    let p1 = y[0] - s1;
    let p2 = y[1] - s2;
    let dx = p1 - TWO_MOONS_OFFSET;
    let radius = (dx * dx + p2 * p2).sqrt();
    if radius == 0.0 {
        return f64::NEG_INFINITY;
    }
    let angle = p2.atan2(dx);
    if angle.abs() >= PI / 2.0 {
        return f64::NEG_INFINITY;
    }
    let z = (radius - TWO_MOONS_RADIUS_MEAN) / TWO_MOONS_RADIUS_SD;
    // f_r(radius) * f_a(angle) / radius, in logs, dropping constants.
    -0.5 * z * z - radius.ln()
}

/// Systematic resampling: returns n indices whose counts are proportional
/// to the weights up to +-1.
pub fn systematic_resample(
    weights: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, SimError> {
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite())
    {
        return Err(SimError::ReferenceFailure(
            "resampling weights must be non-negative with a positive finite sum".into(),
        ));
    }
    let start: f64 = rng.random_range(0.0..1.0);
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut idx = 0;
    for k in 0..n {
        let target = (start + k as f64) * step;
        while cum < target && idx + 1 < weights.len() {
            idx += 1;
            cum += weights[idx];
        }
        out.push(idx);
    }
    Ok(out)
}

/// Effective sample size of a weight vector: (sum w)^2 / sum w^2.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Approximate posterior draws by sampling importance resampling with the
/// prior as proposal: weights are the analytic likelihood. Errors if the
/// effective sample size collapses.
pub fn slcp_reference(
    _model: &Slcp,
    y: &[f64],
    n: usize,
    seed: u64,
    proposals: usize,
) -> Result<Vec<f64>, SimError> {
    check_y(y, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut thetas = Vec::with_capacity(proposals * 5);
    let mut log_w = Vec::with_capacity(proposals);
    for _ in 0..proposals {
        let theta: Vec<f64> =
            (0..5).map(|_| rng.random_range(-SLCP_BOUND..SLCP_BOUND)).collect();
        log_w.push(Slcp::log_likelihood(&theta, y)?);
        thetas.extend_from_slice(&theta);
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SimError::ReferenceFailure("all proposal likelihoods vanished".into()));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
    let ess = effective_sample_size(&weights);
    if ess < 25.0 {
        return Err(SimError::ReferenceFailure(format!(
            "importance resampling collapsed: effective sample size {ess:.1} from {proposals} proposals"
        )));
    }
    let picks = systematic_resample(&weights, n, &mut rng)?;
    let mut out = Vec::with_capacity(n * 5);
    for i in picks {
        out.extend_from_slice(&thetas[i * 5..(i + 1) * 5]);
    }
    Ok(out)
}

/// Closed-form Gaussian posterior for the grid model: with prior
/// N(0, S) and observation y = A theta + noise, the posterior is
/// N(S A' K^{-1} y, S - S A' K^{-1} A S) with K = A S A' + noise^2 I.
/// Formulated against the observation-space Gram matrix so the
/// ill-conditioned prior covariance is never inverted.
pub fn grid_posterior(model: &GridToy, y: &[f64]) -> Result<GaussianPosterior, SimError> {
    let n = model.n_cells();
    check_y(y, n)?;
    let s = model.prior_covariance();
    let a = model.smoothing_matrix();
    let at = linalg::transpose(n, n, &a);
    // M = A S (n x n), K = M A' + sigma^2 I.
    let m = linalg::matmul(n, n, n, &a, &s);
    let mut k = linalg::matmul(n, n, n, &m, &at);
    let nv = model.noise_sd() * model.noise_sd();
    for i in 0..n {
        k[i * n + i] += nv;
    }
    let (l, _) = linalg::cholesky_with_jitter(n, &k)?;
    // mean = M' K^{-1} y
    let u = linalg::chol_solve(n, &l, y);
    let mt = linalg::transpose(n, n, &m);
    let mean: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| mt[i * n + j] * u[j]).sum())
        .collect();
    // cov = S - M' K^{-1} M, column-by-column solves against the factor.
    let mut cov = s.clone();
    for col in 0..n {
        let rhs: Vec<f64> = (0..n).map(|r| m[r * n + col]).collect();
        let x = linalg::chol_solve(n, &l, &rhs);
        for row in 0..n {
            let corr: f64 = (0..n).map(|j| mt[row * n + j] * x[j]).sum();
            cov[row * n + col] -= corr;
        }
    }
    // Symmetrize away round-off so downstream factorizations see an exactly
    // symmetric matrix.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (cov[i * n + j] + cov[j * n + i]);
            cov[i * n + j] = avg;
            cov[j * n + i] = avg;
        }
    }
    Ok(GaussianPosterior { mean, cov })
}

impl Model {
    /// Reference posterior draws for observation `y`, row-major n x p.
    /// Exact for the conjugate, two-moons, and grid models; sampling
    /// importance resampling with [`SIR_PROPOSALS`] proposals for the rest.
    pub fn reference_posterior(
        &self,
        y: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Vec<f64>, SimError> {
        match self {
            Model::ConjugateGaussian(m) => conjugate_reference(m, y, n, seed),
            Model::TwoMoons(m) => two_moons_reference(m, y, n, seed),
            Model::Slcp(m) => slcp_reference(m, y, n, seed, SIR_PROPOSALS),
            Model::GridToy(m) => grid_posterior(m, y)?.sample(n, seed),
        }
    }
}
