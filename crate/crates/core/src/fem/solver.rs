//! Krylov solvers with Jacobi preconditioning.
//!
//! The contract is residual based: a returned `x` satisfies
//! `‖Ax − b‖₂ ≤ rtol·‖b‖₂`, or `x = 0` when `b = 0`. Symmetric positive
//! definite systems use preconditioned CG. General systems use BiCGStab and
//! fall back to restarted GMRES when BiCGStab breaks down or stalls.

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverHint {
    Spd,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required relative residual.
    pub rtol: f64,
    /// Iteration cap; `None` means `10·n`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            max_iter: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.mul(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

/// Solves `A x = b` with default options and a zero initial guess.
pub fn solve_sparse(a: &SparseMatrix, b: &[f64], hint: SolverHint) -> Result<Vec<f64>> {
    solve_sparse_with(a, b, hint, &SolverOptions::default(), None)
}

pub fn solve_sparse_with(
    a: &SparseMatrix,
    b: &[f64],
    hint: SolverHint,
    opts: &SolverOptions,
    x0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(Error::InvalidArgument(format!(
            "system of dimension {n} given a right-hand side of length {}",
            b.len()
        )));
    }
    if !b.iter().all(|v| v.is_finite()) || !a.all_finite() {
        return Err(Error::Solver {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    // iterate a bit past the target so the true residual check has margin
    let target = 0.1 * opts.rtol * bnorm;
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);

    let mut used = match hint {
        SolverHint::Spd => pcg(a, b, &mut x, &inv_diag, target, max_iter),
        SolverHint::General => {
            let it = bicgstab(a, b, &mut x, &inv_diag, target, max_iter);
            if norm(&residual(a, &x, b)) <= opts.rtol * bnorm && x.iter().all(|v| v.is_finite()) {
                it
            } else {
                if !x.iter().all(|v| v.is_finite()) {
                    x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
                }
                it + gmres(a, b, &mut x, &inv_diag, target, max_iter, 60)
            }
        }
    };
    let mut rnorm = norm(&residual(a, &x, b));
    if rnorm > opts.rtol * bnorm && hint == SolverHint::Spd {
        used += gmres(a, b, &mut x, &inv_diag, target, max_iter, 60);
        rnorm = norm(&residual(a, &x, b));
    }
    if rnorm <= opts.rtol * bnorm && x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Solver {
            iterations: used,
            residual: rnorm / bnorm,
        })
    }
}

fn pcg(a: &SparseMatrix, b: &[f64], x: &mut [f64], inv_diag: &[f64], target: f64, max_iter: usize) -> usize {
    let n = b.len();
    let mut r = residual(a, x, b);
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= target {
            return it;
        }
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return it;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    max_iter
}

fn bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    target: f64,
    max_iter: usize,
) -> usize {
    let n = b.len();
    let mut r = residual(a, x, b);
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= target {
            return it;
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
            return it;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        a.mul_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return it;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return it + 1;
        }
        for i in 0..n {
            z[i] = s[i] * inv_diag[i];
        }
        a.mul_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return it;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    max_iter
}

/// Right-preconditioned restarted GMRES(m) with modified Gram–Schmidt.
fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    target: f64,
    max_iter: usize,
    restart: usize,
) -> usize {
    let n = b.len();
    let m = restart.min(n.max(1));
    let mut total = 0;
    let mut w = vec![0.0; n];
    let mut zt = vec![0.0; n];
    while total < max_iter {
        let r = residual(a, x, b);
        let beta = norm(&r);
        if beta <= target || !beta.is_finite() {
            return total;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            for i in 0..n {
                zt[i] = basis[k][i] * inv_diag[i];
            }
            a.mul_into(&zt, &mut w);
            for (j, q) in basis.iter().enumerate() {
                h[j][k] = dot(&w, q);
                for i in 0..n {
                    w[i] -= h[j][k] * q[i];
                }
            }
            h[k + 1][k] = norm(&w);
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            let next_norm = h[k + 1][k];
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= target || next_norm == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / next_norm).collect());
        }
        // back substitution
        let mut yk = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * yk[j];
            }
            yk[i] = acc / h[i][i];
        }
        for (j, yj) in yk.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * basis[j][i] * inv_diag[i];
            }
        }
        if k_used == 0 {
            return total;
        }
    }
    total
}
