//! Restarted, right-preconditioned GMRES.
//!
//! Right preconditioning keeps the tracked residual equal to the true
//! residual `b - A x`, so the returned relative residual certifies the
//! inexact-Newton condition `||A y - b|| <= eta ||b||` directly.

use super::vecops;
use crate::scalar::{lit, Scalar};

/// Matrix-free operator interface shared by the block matrix and test
/// operators.
pub trait LinOp<S> {
    fn n(&self) -> usize;
    fn apply(&self, x: &[S], y: &mut [S]);
}

/// Preconditioner action z = M^{-1} r.
pub trait Precond<S>: Sync {
    fn apply(&self, r: &[S], z: &mut [S]);
}

pub struct IdentityPrecond;

impl<S: Scalar> Precond<S> for IdentityPrecond {
    fn apply(&self, r: &[S], z: &mut [S]) {
        z.copy_from_slice(r);
    }
}

#[derive(Clone, Debug)]
pub struct GmresConfig<S> {
    pub restart: usize,
    pub max_iters: usize,
    pub rtol: S,
}

#[derive(Clone, Debug)]
pub struct GmresResult<S> {
    pub iterations: usize,
    pub converged: bool,
    /// Final true relative residual ||b - A x|| / ||b||.
    pub rel_residual: S,
    /// Least-squares residual estimate after each inner iteration.
    pub history: Vec<S>,
}

/// Solve A x = b with right-preconditioned restarted GMRES; `x` holds the
/// initial guess on entry (typically zero) and the solution on return.
pub fn gmres<S: Scalar>(
    op: &dyn LinOp<S>,
    m: &dyn Precond<S>,
    b: &[S],
    cfg: &GmresConfig<S>,
    x: &mut [S],
) -> GmresResult<S> {
    let n = op.n();
    debug_assert_eq!(b.len(), n);
    debug_assert_eq!(x.len(), n);
    let b_norm = vecops::norm2(b);
    let mut history = Vec::new();
    if !(b_norm > S::zero()) {
        for xi in x.iter_mut() {
            *xi = S::zero();
        }
        return GmresResult { iterations: 0, converged: true, rel_residual: S::zero(), history };
    }
    let tiny = lit::<S>(1e-300);
    let restart = cfg.restart.max(1).min(n);
    let mut total_iters = 0usize;
    let mut work = vec![S::zero(); n];

    loop {
        // r = b - A x
        op.apply(x, &mut work);
        let mut r = vec![S::zero(); n];
        vecops::sub(b, &work, &mut r);
        let r_norm = vecops::norm2(&r);
        let rel = r_norm / b_norm;
        if rel <= cfg.rtol {
            return GmresResult { iterations: total_iters, converged: true, rel_residual: rel, history };
        }
        if total_iters >= cfg.max_iters {
            return GmresResult { iterations: total_iters, converged: false, rel_residual: rel, history };
        }

        let mut v: Vec<Vec<S>> = Vec::with_capacity(restart + 1);
        let mut z: Vec<Vec<S>> = Vec::with_capacity(restart);
        let mut h = vec![vec![S::zero(); restart + 1]; restart];
        let mut cs = vec![S::zero(); restart];
        let mut sn = vec![S::zero(); restart];
        let mut g = vec![S::zero(); restart + 1];
        g[0] = r_norm;
        vecops::scale_in_place(S::one() / r_norm, &mut r);
        v.push(r);

        let mut k = 0usize;
        while k < restart && total_iters < cfg.max_iters {
            total_iters += 1;
            // w = A M^{-1} v_k
            let mut zk = vec![S::zero(); n];
            m.apply(&v[k], &mut zk);
            let mut w = vec![S::zero(); n];
            op.apply(&zk, &mut w);
            z.push(zk);

            // modified Gram-Schmidt
            for j in 0..=k {
                let hjk = vecops::dot(&v[j], &w);
                h[k][j] = hjk;
                vecops::axpy(-hjk, &v[j], &mut w);
            }
            let w_norm = vecops::norm2(&w);
            h[k][k + 1] = w_norm;

            let breakdown = w_norm < tiny;
            if !breakdown {
                vecops::scale_in_place(S::one() / w_norm, &mut w);
                v.push(w);
            }

            // apply stored Givens rotations, then a new one
            for j in 0..k {
                let t = cs[j] * h[k][j] + sn[j] * h[k][j + 1];
                h[k][j + 1] = -sn[j] * h[k][j] + cs[j] * h[k][j + 1];
                h[k][j] = t;
            }
            let (c, s) = givens(h[k][k], h[k][k + 1]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c * h[k][k] + s * h[k][k + 1];
            h[k][k + 1] = S::zero();
            let t = c * g[k] + s * g[k + 1];
            g[k + 1] = -s * g[k] + c * g[k + 1];
            g[k] = t;

            k += 1;
            let est = g[k].abs() / b_norm;
            history.push(est);
            if breakdown || est <= cfg.rtol {
                break;
            }
        }

        // back substitution and solution update x += M^{-1} V y = Z y
        let mut y = vec![S::zero(); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k {
                acc -= h[j][i] * y[j];
            }
            if h[i][i].abs() > tiny {
                y[i] = acc / h[i][i];
            }
        }
        for i in 0..k {
            vecops::axpy(y[i], &z[i], x);
        }
        if k == 0 {
            // no Krylov progress possible
            return GmresResult { iterations: total_iters, converged: false, rel_residual: rel, history };
        }
    }
}

fn givens<S: Scalar>(a: S, b: S) -> (S, S) {
    if b.abs() < lit(1e-300) {
        return (S::one(), S::zero());
    }
    let r = (a * a + b * b).sqrt();
    (a / r, b / r)
}
