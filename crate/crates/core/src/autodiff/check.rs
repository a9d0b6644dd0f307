//! Finite-difference validation of tape gradients.

use super::{AdError, Tape, Var};
use crate::tensor::Tensor;

/// When both the analytic and the numeric derivative are below this
/// magnitude, the component is accepted regardless of relative error.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub passed: bool,
    /// Largest relative discrepancy over components (0 when all components
    /// hit the absolute floor).
    pub max_rel_err: f64,
    /// Component index attaining `max_rel_err`.
    pub worst_component: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences at `point`.
///
/// `f` is called with a fresh tape and a gradient-enabled leaf holding the
/// evaluation point; it must return a scalar var on that tape. `eps` is the
/// central-difference step and `rtol` the relative tolerance; components
/// where both derivatives are below an absolute floor pass unconditionally.
pub fn gradient_check<F>(f: F, point: &Tensor, eps: f64, rtol: f64) -> Result<GradCheckReport, AdError>
where
    F: Fn(&Tape, &Var) -> Result<Var, AdError>,
{
    let eval = |t: &Tensor| -> Result<f64, AdError> {
        let tape = Tape::new();
        let x = tape.param(t.clone());
        let y = f(&tape, &x)?;
        if y.numel() != 1 {
            return Err(AdError::NonScalarRoot { shape: y.shape().to_vec() });
        }
        Ok(y.item())
    };

    let analytic = {
        let tape = Tape::new();
        let x = tape.param(point.clone());
        let y = f(&tape, &x)?;
        if y.numel() != 1 {
            return Err(AdError::NonScalarRoot { shape: y.shape().to_vec() });
        }
        let grads = tape.backward(&y)?;
        grads.get(&x).expect("leaf gradient").data().to_vec()
    };

    let mut numeric = Vec::with_capacity(point.numel());
    for i in 0..point.numel() {
        let mut hi = point.clone();
        hi.data_mut()[i] += eps;
        let mut lo = point.clone();
        lo.data_mut()[i] -= eps;
        numeric.push((eval(&hi)? - eval(&lo)?) / (2.0 * eps));
    }

    let mut max_rel = 0.0;
    let mut worst = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let denom = a.abs().max(n.abs());
        if denom < ABS_FLOOR {
            continue;
        }
        let rel = (a - n).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        passed: max_rel <= rtol,
        max_rel_err: max_rel,
        worst_component: worst,
        analytic,
        numeric,
    })
}
