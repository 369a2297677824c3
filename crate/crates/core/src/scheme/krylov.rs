//! Restarted GMRES with right preconditioning and a block-Jacobi preconditioner.

use crate::error::{NsfError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual_norm: f64,
    pub initial_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x`; stops once `‖b - A x‖₂ ≤ tol_abs`.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    x: &mut [f64],
    tol_abs: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let m = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut gvec) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);
    let mut total = 0;

    let residual = |apply: &mut A, x: &[f64], r: &mut [f64], w: &mut [f64]| {
        if x.iter().all(|&v| v == 0.0) {
            r.copy_from_slice(b);
        } else {
            apply(x, w);
            for k in 0..n {
                r[k] = b[k] - w[k];
            }
        }
        norm(r)
    };

    let mut beta = residual(&mut apply, x, &mut r, &mut w);
    let initial_norm = beta;
    loop {
        if beta <= tol_abs || total >= max_iter {
            return GmresOutcome {
                iterations: total,
                residual_norm: beta,
                initial_norm,
                converged: beta <= tol_abs,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        gvec.iter_mut().for_each(|v| *v = 0.0);
        gvec[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            total += 1;
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(&w, v);
                hess[i][k] = hik;
                for (wq, vq) in w.iter_mut().zip(v) {
                    *wq -= hik * vq;
                }
            }
            let wn = norm(&w);
            hess[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + hess[k + 1][k] * hess[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];
            k_used = k + 1;
            let est = gvec[k + 1].abs();
            if est <= tol_abs || total >= max_iter || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = gvec[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (u, v) in update.iter_mut().zip(&basis[j]) {
                *u += yj * v;
            }
        }
        precond(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        beta = residual(&mut apply, x, &mut r, &mut w);
    }
}

/// Inverses of small dense diagonal blocks.
pub struct BlockJacobi {
    size: usize,
    inverses: Vec<f64>,
}

impl BlockJacobi {
    pub fn new(blocks: &[f64], size: usize) -> Result<Self> {
        let mut inverses = vec![0.0; blocks.len()];
        for (blk, inv) in blocks
            .chunks_exact(size * size)
            .zip(inverses.chunks_exact_mut(size * size))
        {
            invert_dense(blk, inv, size)?;
        }
        Ok(BlockJacobi { size, inverses })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let s = self.size;
        for ((rb, zb), inv) in r
            .chunks_exact(s)
            .zip(z.chunks_exact_mut(s))
            .zip(self.inverses.chunks_exact(s * s))
        {
            for i in 0..s {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += inv[i * s + j] * rb[j];
                }
                zb[i] = acc;
            }
        }
    }
}

/// Gauss–Jordan elimination with partial pivoting.
fn invert_dense(a: &[f64], inv: &mut [f64], n: usize) -> Result<()> {
    let mut stack = [0.0f64; 25];
    let mut heap = Vec::new();
    let m: &mut [f64] = if n * n <= stack.len() {
        &mut stack[..n * n]
    } else {
        heap.resize(n * n, 0.0);
        &mut heap
    };
    m.copy_from_slice(a);
    inv.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        let pv = m[pivot * n + col];
        if pv == 0.0 || !pv.is_finite() {
            return Err(NsfError::LinearSolveFailure {
                iterations: 0,
                relative_residual: f64::INFINITY,
            });
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
        }
        for j in 0..n {
            m[col * n + j] /= pv;
            inv[col * n + j] /= pv;
        }
        for i in 0..n {
            if i != col {
                let f = m[i * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[i * n + j] -= f * m[col * n + j];
                        inv[i * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Ok(())
}
