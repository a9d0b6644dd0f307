//! Posterior evaluation: accuracy of posterior means (NRMSE, R^2),
//! quantile-based calibration error, simulation-based calibration ranks
//! with a uniformity test, and a classifier two-sample test.

mod c2st;
mod calibration;
mod point;

pub use c2st::c2st_accuracy;
pub use calibration::{calibration_error, ks_uniform, sbc_ranks, KsTest, SbcResult};
pub use point::{nrmse, r_squared, Nrmse};

use crate::nn::{GeneratorNet, NnError};
use crate::seeds::{derive2, STREAM_EVAL};
use crate::simulators::SimError;
use crate::training::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid metrics input: {0}")]
    InvalidInput(String),
    #[error("truths are all equal; variance-based metrics are undefined")]
    DegenerateTruths,
    #[error("need at least {needed} samples per side, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Held-out pairs together with a posterior sample matrix per pair.
/// Every pair carries the same number of posterior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    truths: Vec<f64>,  // n x p
    ys: Vec<f64>,      // n x d
    samples: Vec<f64>, // n x (n_post x p)
    n: usize,
    p: usize,
    d: usize,
    n_post: usize,
}

impl EvaluationSet {
    pub fn new(
        truths: Vec<f64>,
        ys: Vec<f64>,
        samples: Vec<f64>,
        p: usize,
        d: usize,
        n_post: usize,
    ) -> Result<Self, MetricsError> {
        if p == 0 || n_post == 0 {
            return Err(MetricsError::InvalidInput(
                "parameter dimension and draw count must be positive".into(),
            ));
        }
        if truths.len() % p != 0 {
            return Err(MetricsError::InvalidInput("truth buffer not a multiple of p".into()));
        }
        let n = truths.len() / p;
        if n < 2 {
            return Err(MetricsError::InvalidInput("need at least two evaluation pairs".into()));
        }
        if ys.len() != n * d {
            return Err(MetricsError::InvalidInput("observation buffer has wrong length".into()));
        }
        if samples.len() != n * n_post * p {
            return Err(MetricsError::InvalidInput("sample buffer has wrong length".into()));
        }
        Ok(EvaluationSet { truths, ys, samples, n, p, d, n_post })
    }

    /// Draws `n_post` posterior samples from `generator` at each observation.
    /// Draw seeds are derived per pair, so extending the pair list leaves
    /// earlier sample matrices unchanged.
    pub fn from_generator(
        generator: &GeneratorNet,
        pairs: &[(&[f64], &[f64])],
        n_post: usize,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        let p = generator.parameter_dim();
        let d = generator.data_dim;
        let mut truths = Vec::with_capacity(pairs.len() * p);
        let mut ys = Vec::with_capacity(pairs.len() * d);
        let mut samples = Vec::with_capacity(pairs.len() * n_post * p);
        for (i, (theta, y)) in pairs.iter().enumerate() {
            if theta.len() != p || y.len() != d {
                return Err(MetricsError::InvalidInput(format!(
                    "pair {i} has dimensions {}x{}, expected {p}x{d}",
                    theta.len(),
                    y.len()
                )));
            }
            truths.extend_from_slice(theta);
            ys.extend_from_slice(y);
            let draws = generator.sample_posterior(y, n_post, derive2(seed, STREAM_EVAL, i as u64))?;
            samples.extend_from_slice(draws.data());
        }
        EvaluationSet::new(truths, ys, samples, p, d, n_post)
    }

    /// As [`from_generator`](Self::from_generator) but with an arbitrary
    /// sampler `(y, n_post, seed) -> row-major draws`.
    pub fn from_sampler<F>(
        pairs: &[(&[f64], &[f64])],
        p: usize,
        d: usize,
        n_post: usize,
        seed: u64,
        mut sampler: F,
    ) -> Result<Self, MetricsError>
    where
        F: FnMut(&[f64], usize, u64) -> Result<Vec<f64>, MetricsError>,
    {
        let mut truths = Vec::with_capacity(pairs.len() * p);
        let mut ys = Vec::with_capacity(pairs.len() * d);
        let mut samples = Vec::with_capacity(pairs.len() * n_post * p);
        for (i, (theta, y)) in pairs.iter().enumerate() {
            truths.extend_from_slice(theta);
            ys.extend_from_slice(y);
            let draws = sampler(y, n_post, derive2(seed, STREAM_EVAL, i as u64))?;
            if draws.len() != n_post * p {
                return Err(MetricsError::InvalidInput(format!(
                    "sampler returned {} values for pair {i}, expected {}",
                    draws.len(),
                    n_post * p
                )));
            }
            samples.extend(draws);
        }
        EvaluationSet::new(truths, ys, samples, p, d, n_post)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn parameter_dim(&self) -> usize {
        self.p
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.ys[i * self.d..(i + 1) * self.d]
    }

    /// True parameter values of one component across pairs.
    pub fn truth_component(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.truths[i * self.p + j]).collect()
    }

    /// Posterior draws of one component, one vector per pair.
    pub fn sample_component(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let base = i * self.n_post * self.p;
                (0..self.n_post).map(|k| self.samples[base + k * self.p + j]).collect()
            })
            .collect()
    }

    /// Posterior-mean point estimates of one component across pairs.
    pub fn mean_component(&self, j: usize) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let base = i * self.n_post * self.p;
                (0..self.n_post).map(|k| self.samples[base + k * self.p + j]).sum::<f64>()
                    / self.n_post as f64
            })
            .collect()
    }

    /// All posterior draws of pair `i`, row-major n_post x p.
    pub fn samples_for(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_post * self.p..(i + 1) * self.n_post * self.p]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMetrics {
    /// 1-based component index.
    pub component: usize,
    pub nrmse: Nrmse,
    pub r_squared: f64,
    pub calibration_error: f64,
}

/// Per-component and averaged evaluation metrics. Wall time and the early
/// stop epoch are filled in by the caller when known; wall time never
/// enters the serialized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_component: Vec<ComponentMetrics>,
    pub avg_nrmse: f64,
    pub avg_r_squared: f64,
    pub avg_calibration_error: f64,
    pub wall_time_sec: Option<f64>,
    pub early_stop_epoch: Option<usize>,
}

impl MetricsReport {
    pub fn compute(eval: &EvaluationSet) -> Result<Self, MetricsError> {
        let mut per_component = Vec::with_capacity(eval.p);
        for j in 0..eval.p {
            let truths = eval.truth_component(j);
            let means = eval.mean_component(j);
            per_component.push(ComponentMetrics {
                component: j + 1,
                nrmse: nrmse(&truths, &means)?,
                r_squared: r_squared(&truths, &means)?,
                calibration_error: calibration_error(&truths, &eval.sample_component(j))?,
            });
        }
        let k = per_component.len() as f64;
        Ok(MetricsReport {
            avg_nrmse: per_component.iter().map(|c| c.nrmse.value).sum::<f64>() / k,
            avg_r_squared: per_component.iter().map(|c| c.r_squared).sum::<f64>() / k,
            avg_calibration_error: per_component.iter().map(|c| c.calibration_error).sum::<f64>()
                / k,
            per_component,
            wall_time_sec: None,
            early_stop_epoch: None,
        })
    }
}

/// One serialized metric row.
pub fn metrics_csv_row(
    method: &str,
    model: &str,
    n_train: usize,
    m: usize,
    metric: &str,
    component: &str,
    value: f64,
) -> String {
    format!("{method},{model},{n_train},{m},{metric},{component},{value}\n")
}

pub const METRICS_CSV_HEADER: &str = "method,model,n_train,m,metric,component,value\n";

/// Long-format CSV for a report: one row per metric and component plus a
/// `mean` row per metric. Components with a degenerate truth range report
/// `rmse_unnormalized` instead of `nrmse`.
pub fn metrics_csv(
    report: &MetricsReport,
    method: &str,
    model: &str,
    n_train: usize,
    m: usize,
) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    for c in &report.per_component {
        let name = if c.nrmse.normalized { "nrmse" } else { "rmse_unnormalized" };
        let comp = c.component.to_string();
        out.push_str(&metrics_csv_row(method, model, n_train, m, name, &comp, c.nrmse.value));
        out.push_str(&metrics_csv_row(method, model, n_train, m, "r_squared", &comp, c.r_squared));
        out.push_str(&metrics_csv_row(
            method,
            model,
            n_train,
            m,
            "calibration_error",
            &comp,
            c.calibration_error,
        ));
    }
    out.push_str(&metrics_csv_row(method, model, n_train, m, "nrmse", "mean", report.avg_nrmse));
    out.push_str(&metrics_csv_row(
        method,
        model,
        n_train,
        m,
        "r_squared",
        "mean",
        report.avg_r_squared,
    ));
    out.push_str(&metrics_csv_row(
        method,
        model,
        n_train,
        m,
        "calibration_error",
        "mean",
        report.avg_calibration_error,
    ));
    if let Some(epoch) = report.early_stop_epoch {
        out.push_str(&metrics_csv_row(
            method,
            model,
            n_train,
            m,
            "early_stop_epoch",
            "all",
            epoch as f64,
        ));
    }
    out
}
