//! Benchmark simulation models: priors over parameters and stochastic
//! forward simulators, plus dataset generation and reference posteriors.
//!
//! Every model exposes the same surface through [`Model`]: prior sampling,
//! simulation, log prior density, and (in [`reference`]) a reference
//! posterior sampler used to judge inference quality.

pub mod dataset;
pub mod linalg;
pub mod reference;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("parameter vector has length {got}, expected {expected}")]
    WrongParameterDim { got: usize, expected: usize },
    #[error("observation vector has length {got}, expected {expected}")]
    WrongDataDim { got: usize, expected: usize },
    #[error("parameter vector contains a non-finite value")]
    NonFiniteParameter,
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("reference sampler failed: {0}")]
    ReferenceFailure(String),
}

fn check_theta(theta: &[f64], expected: usize) -> Result<(), SimError> {
    if theta.len() != expected {
        return Err(SimError::WrongParameterDim { got: theta.len(), expected });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFiniteParameter);
    }
    Ok(())
}

fn check_y(y: &[f64], expected: usize) -> Result<(), SimError> {
    if y.len() != expected {
        return Err(SimError::WrongDataDim { got: y.len(), expected });
    }
    Ok(())
}

/// Normal-normal model with known observation noise: theta ~ N(mu0,
/// sigma0^2), y | theta ~ N(theta, sigma^2). The posterior is Gaussian in
/// closed form, making this the go-to sanity model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateGaussian {
    mu0: f64,
    sigma0: f64,
    sigma: f64,
}

impl ConjugateGaussian {
    pub fn new(mu0: f64, sigma0: f64, sigma: f64) -> Result<Self, SimError> {
        if !mu0.is_finite() {
            return Err(SimError::InvalidModel("prior mean must be finite".into()));
        }
        for (name, v) in [("prior", sigma0), ("noise", sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidModel(format!(
                    "{name} standard deviation must be positive and finite, got {v}"
                )));
            }
        }
        Ok(ConjugateGaussian { mu0, sigma0, sigma })
    }

    /// The standard configuration: mu0 = 0, sigma0 = 1, sigma = 1.
    pub fn standard() -> Self {
        ConjugateGaussian { mu0: 0.0, sigma0: 1.0, sigma: 1.0 }
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn posterior_mean(&self, y: f64) -> f64 {
        let v0 = self.sigma0 * self.sigma0;
        let v = self.sigma * self.sigma;
        (v0 * y + v * self.mu0) / (v0 + v)
    }

    pub fn posterior_var(&self) -> f64 {
        let v0 = self.sigma0 * self.sigma0;
        let v = self.sigma * self.sigma;
        v0 * v / (v0 + v)
    }

    pub fn posterior_sd(&self) -> f64 {
        self.posterior_var().sqrt()
    }
}

/// Crescent-shaped bimodal posterior in two dimensions. The simulator draws
/// an angle a ~ U(-pi/2, pi/2) and radius r ~ N(0.1, 0.01^2), forms
/// p = (r cos a + 0.25, r sin a), and shifts it by
/// (-|t1 + t2|, t2 - t1) / sqrt(2). The absolute value folds two parameter
/// values onto each observation, so posteriors have two moon-shaped modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TwoMoons;

pub const TWO_MOONS_RADIUS_MEAN: f64 = 0.1;
pub const TWO_MOONS_RADIUS_SD: f64 = 0.01;
pub const TWO_MOONS_OFFSET: f64 = 0.25;
pub const TWO_MOONS_BOUND: f64 = 1.0;

impl TwoMoons {
    /// The crescent point p before the parameter-dependent shift.
    fn crescent_point(rng: &mut ChaCha8Rng) -> (f64, f64) {
        let a = rng.random_range(-PI / 2.0..PI / 2.0);
        let r = TWO_MOONS_RADIUS_MEAN + TWO_MOONS_RADIUS_SD * rng.sample::<f64, _>(StandardNormal);
        (r * a.cos() + TWO_MOONS_OFFSET, r * a.sin())
    }

    /// Parameter-dependent shift added to the crescent point.
    pub fn shift(theta: &[f64]) -> (f64, f64) {
        let s = theta[0] + theta[1];
        let t = theta[1] - theta[0];
        (-s.abs() / 2.0f64.sqrt(), t / 2.0f64.sqrt())
    }
}

/// Simple likelihood, complex posterior: a 2D Gaussian whose mean, scales,
/// and correlation are functions of a 5D parameter, observed as four iid
/// points concatenated into an 8D observation. Squared scale parameters
/// make the posterior multimodal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Slcp;

pub const SLCP_BOUND: f64 = 3.0;
pub const SLCP_REPEATS: usize = 4;

impl Slcp {
    pub fn conditional_mean(theta: &[f64]) -> [f64; 2] {
        [theta[0], theta[1]]
    }

    /// Lower Cholesky factor of the conditional covariance: scales are the
    /// squares of the third and fourth parameters, the correlation is the
    /// tanh of the fifth.
    pub fn conditional_chol(theta: &[f64]) -> [[f64; 2]; 2] {
        let s1 = theta[2] * theta[2];
        let s2 = theta[3] * theta[3];
        let rho = theta[4].tanh();
        [[s1, 0.0], [rho * s2, s2 * (1.0 - rho * rho).sqrt()]]
    }

    /// Log likelihood of an 8D observation (four iid 2D points) given the
    /// parameter; -inf where the conditional covariance degenerates.
    pub fn log_likelihood(theta: &[f64], y: &[f64]) -> Result<f64, SimError> {
        check_theta(theta, 5)?;
        check_y(y, 2 * SLCP_REPEATS)?;
        let m = Self::conditional_mean(theta);
        let s1 = theta[2] * theta[2];
        let s2 = theta[3] * theta[3];
        let rho = theta[4].tanh();
        let omr2 = 1.0 - rho * rho;
        if s1 < 1e-12 || s2 < 1e-12 || omr2 < 1e-12 {
            return Ok(f64::NEG_INFINITY);
        }
        let log_det = 2.0 * (s1.ln() + s2.ln()) + omr2.ln();
        let mut total = 0.0;
        for k in 0..SLCP_REPEATS {
            let z1 = (y[2 * k] - m[0]) / s1;
            let z2 = (y[2 * k + 1] - m[1]) / s2;
            let quad = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / omr2;
            total += -(2.0f64 * PI).ln() - 0.5 * log_det - 0.5 * quad;
        }
        Ok(total)
    }
}

/// Gaussian-process prior over values on a line of cells, observed through
/// an edge-truncated moving average plus noise. Both the prior and the
/// likelihood are Gaussian, so the posterior is available in closed form
/// despite the high dimension; local observation structure makes it a
/// natural target for patched scoring rules.
#[derive(Debug, Clone, PartialEq)]
pub struct GridToy {
    n_cells: usize,
    length_scale: f64,
    noise_sd: f64,
    prior_chol: Vec<f64>,
}

pub const GRID_CELLS: usize = 40;
pub const GRID_LENGTH_SCALE: f64 = 5.0;
pub const GRID_NOISE_SD: f64 = 0.1;
pub const GRID_WINDOW: usize = 3;

impl GridToy {
    pub fn new(n_cells: usize, length_scale: f64, noise_sd: f64) -> Result<Self, SimError> {
        if n_cells == 0 {
            return Err(SimError::InvalidModel("grid needs at least one cell".into()));
        }
        if !(length_scale.is_finite() && length_scale > 0.0) {
            return Err(SimError::InvalidModel(format!(
                "length scale must be positive and finite, got {length_scale}"
            )));
        }
        if !(noise_sd.is_finite() && noise_sd > 0.0) {
            return Err(SimError::InvalidModel(format!(
                "noise standard deviation must be positive and finite, got {noise_sd}"
            )));
        }
        let mut model = GridToy { n_cells, length_scale, noise_sd, prior_chol: Vec::new() };
        let cov = model.prior_covariance();
        let (chol, _) = linalg::cholesky_with_jitter(n_cells, &cov)?;
        model.prior_chol = chol;
        Ok(model)
    }

    /// The standard configuration: 40 cells, length scale 5, noise 0.1.
    pub fn standard() -> Self {
        GridToy::new(GRID_CELLS, GRID_LENGTH_SCALE, GRID_NOISE_SD).unwrap()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    /// Squared-exponential prior covariance over cell indices.
    pub fn prior_covariance(&self) -> Vec<f64> {
        let n = self.n_cells;
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = i as f64 - j as f64;
                cov[i * n + j] = (-d * d / (2.0 * self.length_scale * self.length_scale)).exp();
            }
        }
        cov
    }

    fn window(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        let half = GRID_WINDOW / 2;
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(self.n_cells - 1);
        lo..=hi
    }

    /// The linear observation operator: row i averages the cells in the
    /// edge-truncated window centered on cell i.
    pub fn smoothing_matrix(&self) -> Vec<f64> {
        let n = self.n_cells;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let w = self.window(i);
            let len = (w.end() - w.start() + 1) as f64;
            for j in w {
                a[i * n + j] = 1.0 / len;
            }
        }
        a
    }
}

/// One of the available simulation models, dispatching the shared surface.
#[derive(Debug, Clone)]
pub enum Model {
    ConjugateGaussian(ConjugateGaussian),
    TwoMoons(TwoMoons),
    Slcp(Slcp),
    GridToy(GridToy),
}

impl Model {
    /// Looks a model up by its canonical name with its standard
    /// configuration.
    pub fn by_name(name: &str) -> Result<Model, SimError> {
        match name {
            "conjugate_gaussian" => Ok(Model::ConjugateGaussian(ConjugateGaussian::standard())),
            "two_moons" => Ok(Model::TwoMoons(TwoMoons)),
            "slcp" => Ok(Model::Slcp(Slcp)),
            "grid_toy" => Ok(Model::GridToy(GridToy::standard())),
            other => Err(SimError::UnknownModel(other.into())),
        }
    }

    pub const NAMES: [&'static str; 4] = ["conjugate_gaussian", "two_moons", "slcp", "grid_toy"];

    pub fn name(&self) -> &'static str {
        match self {
            Model::ConjugateGaussian(_) => "conjugate_gaussian",
            Model::TwoMoons(_) => "two_moons",
            Model::Slcp(_) => "slcp",
            Model::GridToy(_) => "grid_toy",
        }
    }

    pub fn parameter_dim(&self) -> usize {
        match self {
            Model::ConjugateGaussian(_) => 1,
            Model::TwoMoons(_) => 2,
            Model::Slcp(_) => 5,
            Model::GridToy(g) => g.n_cells,
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            Model::ConjugateGaussian(_) => 1,
            Model::TwoMoons(_) => 2,
            Model::Slcp(_) => 2 * SLCP_REPEATS,
            Model::GridToy(g) => g.n_cells,
        }
    }

    /// Box bounds of the prior support for bounded priors, None otherwise.
    pub fn parameter_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Model::ConjugateGaussian(_) | Model::GridToy(_) => None,
            Model::TwoMoons(_) => {
                Some((vec![-TWO_MOONS_BOUND; 2], vec![TWO_MOONS_BOUND; 2]))
            }
            Model::Slcp(_) => Some((vec![-SLCP_BOUND; 5], vec![SLCP_BOUND; 5])),
        }
    }

    pub fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Model::ConjugateGaussian(m) => {
                vec![m.mu0 + m.sigma0 * rng.sample::<f64, _>(StandardNormal)]
            }
            Model::TwoMoons(_) => (0..2)
                .map(|_| rng.random_range(-TWO_MOONS_BOUND..TWO_MOONS_BOUND))
                .collect(),
            Model::Slcp(_) => {
                (0..5).map(|_| rng.random_range(-SLCP_BOUND..SLCP_BOUND)).collect()
            }
            Model::GridToy(g) => {
                let eps: Vec<f64> =
                    (0..g.n_cells).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = g.n_cells;
                (0..n)
                    .map(|i| (0..=i).map(|k| g.prior_chol[i * n + k] * eps[k]).sum())
                    .collect()
            }
        }
    }

    pub fn simulate(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimError> {
        check_theta(theta, self.parameter_dim())?;
        Ok(match self {
            Model::ConjugateGaussian(m) => {
                vec![theta[0] + m.sigma * rng.sample::<f64, _>(StandardNormal)]
            }
            Model::TwoMoons(_) => {
                let (p1, p2) = TwoMoons::crescent_point(rng);
                let (s1, s2) = TwoMoons::shift(theta);
                vec![p1 + s1, p2 + s2]
            }
            Model::Slcp(_) => {
                let m = Slcp::conditional_mean(theta);
                let l = Slcp::conditional_chol(theta);
                let mut y = Vec::with_capacity(2 * SLCP_REPEATS);
                for _ in 0..SLCP_REPEATS {
                    let e1: f64 = rng.sample(StandardNormal);
                    let e2: f64 = rng.sample(StandardNormal);
                    y.push(m[0] + l[0][0] * e1);
                    y.push(m[1] + l[1][0] * e1 + l[1][1] * e2);
                }
                y
            }
            Model::GridToy(g) => {
                let a = g.smoothing_matrix();
                let n = g.n_cells;
                (0..n)
                    .map(|i| {
                        let smooth: f64 =
                            (0..n).map(|j| a[i * n + j] * theta[j]).sum();
                        smooth + g.noise_sd * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            }
        })
    }

    /// Log prior density, -inf outside the support.
    pub fn log_prior(&self, theta: &[f64]) -> Result<f64, SimError> {
        check_theta(theta, self.parameter_dim())?;
        Ok(match self {
            Model::ConjugateGaussian(m) => {
                let z = (theta[0] - m.mu0) / m.sigma0;
                -0.5 * (2.0 * PI).ln() - m.sigma0.ln() - 0.5 * z * z
            }
            Model::TwoMoons(_) => {
                if theta.iter().all(|v| v.abs() <= TWO_MOONS_BOUND) {
                    -(2.0 * TWO_MOONS_BOUND).ln() * 2.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Model::Slcp(_) => {
                if theta.iter().all(|v| v.abs() <= SLCP_BOUND) {
                    -(2.0 * SLCP_BOUND).ln() * 5.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Model::GridToy(g) => {
                let n = g.n_cells;
                // Solve L v = theta; the quadratic form is |v|^2.
                let v = linalg::forward_sub(n, &g.prior_chol, theta);
                let log_det: f64 = (0..n).map(|i| g.prior_chol[i * n + i].ln()).sum();
                let quad: f64 = v.iter().map(|x| x * x).sum();
                -0.5 * n as f64 * (2.0 * PI).ln() - log_det - 0.5 * quad
            }
        })
    }
}

#[cfg(test)]
mod tests;
