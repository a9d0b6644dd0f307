//! Point-estimate accuracy metrics over one parameter component.

use super::MetricsError;

/// Root-mean-square error, normalized by the truth range when possible.
/// `normalized` is false when the truths share a single value and the raw
/// RMSE is reported instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    pub normalized: bool,
}

fn check_lengths(truths: &[f64], predictions: &[f64]) -> Result<(), MetricsError> {
    if truths.len() != predictions.len() {
        return Err(MetricsError::InvalidInput(format!(
            "{} truths vs {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    if truths.len() < 2 {
        return Err(MetricsError::InvalidInput("need at least two pairs".into()));
    }
    Ok(())
}

pub fn nrmse(truths: &[f64], predictions: &[f64]) -> Result<Nrmse, MetricsError> {
    check_lengths(truths, predictions)?;
    let n = truths.len() as f64;
    let mse =
        truths.iter().zip(predictions).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / n;
    let rmse = mse.sqrt();
    let lo = truths.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = truths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        Ok(Nrmse { value: rmse / range, normalized: true })
    } else {
        Ok(Nrmse { value: rmse, normalized: false })
    }
}

/// Fraction of truth variance explained by the predictions:
/// 1 - sum (t_i - p_i)^2 / sum (t_i - mean t)^2. At most 1; unbounded below.
pub fn r_squared(truths: &[f64], predictions: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(truths, predictions)?;
    let n = truths.len() as f64;
    let mean = truths.iter().sum::<f64>() / n;
    let ss_tot = truths.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>();
    if ss_tot == 0.0 {
        return Err(MetricsError::DegenerateTruths);
    }
    let ss_res = truths.iter().zip(predictions).map(|(t, p)| (t - p) * (t - p)).sum::<f64>();
    Ok(1.0 - ss_res / ss_tot)
}
