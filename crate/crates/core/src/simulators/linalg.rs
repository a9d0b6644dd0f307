//! Small dense linear algebra for the simulation models and reference
//! posteriors: row-major matrices, Cholesky factorization, triangular
//! solves, and multivariate normal sampling. Dimensions here are tens, not
//! thousands, so plain loops are plenty.

use super::SimError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// C = A (m x k) * B (k x n), all row-major.
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += av * b[l * n + j];
            }
        }
    }
    c
}

pub fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), rows * cols);
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or an
/// error if a pivot is not strictly positive.
pub fn cholesky_lower(n: usize, a: &[f64]) -> Result<Vec<f64>, SimError> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(SimError::NotPositiveDefinite);
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Cholesky with escalating diagonal jitter for matrices that are positive
/// definite in exact arithmetic but numerically semi-definite. Returns the
/// factor and the jitter that was added.
pub fn cholesky_with_jitter(n: usize, a: &[f64]) -> Result<(Vec<f64>, f64), SimError> {
    if let Ok(l) = cholesky_lower(n, a) {
        return Ok((l, 0.0));
    }
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max).max(1.0);
    let mut jitter = 1e-12 * scale;
    for _ in 0..8 {
        let mut aj = a.to_vec();
        for i in 0..n {
            aj[i * n + i] += jitter;
        }
        if let Ok(l) = cholesky_lower(n, &aj) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(SimError::NotPositiveDefinite)
}

/// Solves L x = b with L lower triangular.
pub fn forward_sub(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

/// Solves L^T x = b with L lower triangular.
pub fn back_sub(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

/// Solves (L L^T) x = b.
pub fn chol_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    back_sub(n, l, &forward_sub(n, l, b))
}

/// Draws `count` rows from N(mean, L L^T) as a row-major count x dim block.
pub fn mvn_sample(mean: &[f64], chol: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = mean.len();
    assert_eq!(chol.len(), dim * dim);
    let mut out = Vec::with_capacity(count * dim);
    let mut eps = vec![0.0; dim];
    for _ in 0..count {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let mut v = mean[i];
            for k in 0..=i {
                v += chol[i * dim + k] * eps[k];
            }
            out.push(v);
        }
    }
    out
}
