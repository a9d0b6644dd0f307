//! Numeric kernels for tape operations: forward evaluation and the
//! corresponding gradient accumulation rules.

/// C = A (m x k) * B (k x n), row-major.
pub(super) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// dA[i,l] += dot(G[i,:], B[l,:]) for C = A*B.
pub(super) fn matmul_grad_a(m: usize, k: usize, n: usize, g: &[f64], b: &[f64], da: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for l in 0..k {
            let brow = &b[l * n..(l + 1) * n];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            da[i * k + l] += acc;
        }
    }
}

/// dB[l,j] += sum_i A[i,l] * G[i,j] for C = A*B.
pub(super) fn matmul_grad_b(m: usize, k: usize, n: usize, a: &[f64], g: &[f64], db: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let dbrow = &mut db[l * n..(l + 1) * n];
            for (dv, &gv) in dbrow.iter_mut().zip(grow) {
                *dv += av * gv;
            }
        }
    }
}

/// D[i,j] = ||a_i - b_j||^2 for A (m x p), B (k x p).
pub(super) fn pairwise_sqdist(m: usize, k: usize, p: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * p..(i + 1) * p];
        for j in 0..k {
            let brow = &b[j * p..(j + 1) * p];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                let diff = av - bv;
                acc += diff * diff;
            }
            d[i * k + j] = acc;
        }
    }
    d
}

/// Gradients of the pairwise squared distance:
/// dA[i,:] += 2*G[i,j]*(a_i - b_j), dB[j,:] -= 2*G[i,j]*(a_i - b_j).
pub(super) fn pairwise_sqdist_grads(
    m: usize,
    k: usize,
    p: usize,
    a: &[f64],
    b: &[f64],
    g: &[f64],
    da: &mut [f64],
    db: &mut [f64],
) {
    for i in 0..m {
        let arow = &a[i * p..(i + 1) * p];
        let darow = &mut da[i * p..(i + 1) * p];
        for j in 0..k {
            let gv = g[i * k + j];
            if gv == 0.0 {
                continue;
            }
            let brow = &b[j * p..(j + 1) * p];
            let dbrow = &mut db[j * p..(j + 1) * p];
            for t in 0..p {
                let diff = 2.0 * gv * (arow[t] - brow[t]);
                darow[t] += diff;
                dbrow[t] -= diff;
            }
        }
    }
}

pub(super) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sums `src` (shaped `from`) replicated along leading axes into `dst`
/// (shaped `to`'s suffix): the reverse of a broadcast from `from` to `to`.
pub(super) fn broadcast_grad(from_numel: usize, g: &[f64], dst: &mut [f64]) {
    for (i, gv) in g.iter().enumerate() {
        dst[i % from_numel] += gv;
    }
}

/// Replicates `src` until `target_numel` elements are filled (suffix rule:
/// the source is tiled along the leading axes).
pub(super) fn broadcast_forward(src: &[f64], target_numel: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(target_numel);
    while out.len() < target_numel {
        out.extend_from_slice(src);
    }
    out
}
