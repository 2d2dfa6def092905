//! Scalar CSR storage and partitioned ILU(0).
//!
//! The factorization restricts elimination to the coarse partition a row
//! lives in (couplings across partition boundaries are dropped), so each
//! partition factors and sweeps independently. The partition layout comes
//! from the grid, not from the worker count, which keeps the preconditioner
//! and therefore all iteration counts identical at any thread count.

use super::block::Partitioning;
use super::vecops;
use super::LinearError;
use crate::scalar::{lit, Scalar};
use rayon::prelude::*;

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Clone, Debug)]
pub struct ScalarCsr<S> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<S>,
    diag: Vec<usize>,
}

impl<S: Scalar> ScalarCsr<S> {
    pub fn from_sorted(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, vals: Vec<S>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for p in row_ptr[r]..row_ptr[r + 1] {
                if col_idx[p] == r {
                    diag[r] = p;
                    break;
                }
            }
        }
        ScalarCsr { n, row_ptr, col_idx, vals, diag }
    }

    pub fn get(&self, r: usize, c: usize) -> Option<S> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|p| self.vals[range.start + p])
    }

    pub fn spmv(&self, x: &[S], y: &mut [S]) {
        const ROWS_PER_CHUNK: usize = 2048;
        y.par_chunks_mut(ROWS_PER_CHUNK).enumerate().for_each(|(ci, yc)| {
            let base = ci * ROWS_PER_CHUNK;
            for (o, yi) in yc.iter_mut().enumerate() {
                let r = base + o;
                let mut acc = S::zero();
                for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[p] * x[self.col_idx[p]];
                }
                *yi = acc;
            }
        });
    }
}

/// ILU(0) factors over the CSR pattern, partition-local.
pub struct Ilu0<S> {
    pattern: ScalarCsr<S>,
    /// scalar-row ranges, as produced by `Partitioning::scalar_parts`
    parts: Vec<std::ops::Range<usize>>,
    /// partition id per row, for fast membership tests
    part_of: Vec<u32>,
}

impl<S: Scalar> Ilu0<S> {
    /// Factor `a` in ILU(0) form. A vanishing pivot triggers one retry with
    /// the whole diagonal shifted by `1e-8 * max|row|`, then an error.
    pub fn factor(a: &ScalarCsr<S>, part: &Partitioning) -> Result<Self, LinearError> {
        Self::factor_with_parts(a, part.scalar_parts())
    }

    /// Factor with explicit scalar-row partitions (used for the pressure
    /// subsystem whose row space differs from the full system).
    pub fn factor_with_parts(
        a: &ScalarCsr<S>,
        parts: Vec<std::ops::Range<usize>>,
    ) -> Result<Self, LinearError> {
        let mut part_of = vec![0u32; a.n];
        for (pi, r) in parts.iter().enumerate() {
            for row in r.clone() {
                part_of[row] = pi as u32;
            }
        }
        match Self::try_factor(a, &parts, &part_of, S::zero()) {
            Ok(f) => Ok(Self { pattern: f, parts, part_of }),
            Err(_) => {
                let shift = lit::<S>(1e-8);
                let f = Self::try_factor(a, &parts, &part_of, shift)
                    .map_err(|row| LinearError::ZeroPivot { row })?;
                Ok(Self { pattern: f, parts, part_of })
            }
        }
    }

    fn try_factor(
        a: &ScalarCsr<S>,
        parts: &[std::ops::Range<usize>],
        part_of: &[u32],
        rel_shift: S,
    ) -> Result<ScalarCsr<S>, usize> {
        let mut f = a.clone();
        if rel_shift > S::zero() {
            for r in 0..f.n {
                let mut row_max = S::zero();
                for p in f.row_ptr[r]..f.row_ptr[r + 1] {
                    row_max = row_max.max(f.vals[p].abs());
                }
                let d = f.diag[r];
                if d != usize::MAX {
                    let s = rel_shift * row_max;
                    f.vals[d] = f.vals[d] + if f.vals[d] >= S::zero() { s } else { -s };
                }
            }
        }
        // partitions never reference each other's rows, so factor them in
        // parallel over disjoint slices of the value storage
        let row_ptr = &f.row_ptr;
        let col_idx = &f.col_idx;
        let diag = &f.diag;
        let val_splits: Vec<(std::ops::Range<usize>, &mut [S])> = {
            let mut out = Vec::new();
            let mut rest: &mut [S] = &mut f.vals;
            let mut consumed = 0usize;
            for range in parts {
                let lo = row_ptr[range.start];
                let hi = row_ptr[range.end];
                let (_, tail) = rest.split_at_mut(lo - consumed);
                let (mine, tail2) = tail.split_at_mut(hi - lo);
                out.push((range.clone(), mine));
                rest = tail2;
                consumed = hi;
            }
            out
        };
        let results: Vec<Result<(), usize>> = val_splits
            .into_par_iter()
            .map(|(range, vals)| {
                let base = row_ptr[range.start];
                factor_range_slices(row_ptr, col_idx, diag, vals, base, &range, part_of)
            })
            .collect();
        for r in results {
            r?;
        }
        Ok(f)
    }

    /// z = (LU)^{-1} r within each partition.
    pub fn apply(&self, r: &[S], z: &mut [S]) {
        debug_assert_eq!(r.len(), self.pattern.n);
        let f = &self.pattern;
        let part_of = &self.part_of;
        let z_splits: Vec<(std::ops::Range<usize>, &mut [S])> = {
            let mut out = Vec::new();
            let mut rest: &mut [S] = z;
            let mut consumed = 0usize;
            for range in &self.parts {
                let (_, tail) = rest.split_at_mut(range.start - consumed);
                let (mine, tail2) = tail.split_at_mut(range.end - range.start);
                out.push((range.clone(), mine));
                rest = tail2;
                consumed = range.end;
            }
            out
        };
        z_splits.into_par_iter().for_each(|(range, zc)| {
            let my_part = part_of[range.start];
            // forward solve L y = r (unit diagonal L)
            for row in range.clone() {
                let mut acc = r[row];
                for p in f.row_ptr[row]..f.row_ptr[row + 1] {
                    let c = f.col_idx[p];
                    if c >= row {
                        break;
                    }
                    if part_of[c] == my_part {
                        acc -= f.vals[p] * zc[c - range.start];
                    }
                }
                zc[row - range.start] = acc;
            }
            // backward solve U z = y
            for row in range.clone().rev() {
                let mut acc = zc[row - range.start];
                let d = f.diag[row];
                for p in (d + 1)..f.row_ptr[row + 1] {
                    let c = f.col_idx[p];
                    if part_of[c] == my_part {
                        acc -= f.vals[p] * zc[c - range.start];
                    }
                }
                zc[row - range.start] = acc / f.vals[d];
            }
        });
    }
}

/// ILU(0) elimination of `range` rows, dropping couplings to other
/// partitions. `vals` is the value slice of exactly these rows; `base` is
/// the global value index of its first entry.
fn factor_range_slices<S: Scalar>(
    row_ptr: &[usize],
    col_idx: &[usize],
    diag: &[usize],
    vals: &mut [S],
    base: usize,
    range: &std::ops::Range<usize>,
    part_of: &[u32],
) -> Result<(), usize> {
    let my_part = part_of[range.start];
    for i in range.clone() {
        // eliminate with every prior row k of this partition present in row i
        let row_lo = row_ptr[i];
        let row_hi = row_ptr[i + 1];
        for p in row_lo..row_hi {
            let k = col_idx[p];
            if k >= i {
                break;
            }
            if part_of[k] != my_part {
                continue;
            }
            let dk = diag[k];
            if dk == usize::MAX {
                return Err(k);
            }
            let pivot = vals[dk - base];
            if pivot == S::zero() || !pivot.is_finite() {
                return Err(k);
            }
            let factor = vals[p - base] / pivot;
            vals[p - base] = factor;
            // row_i -= factor * row_k, restricted to row_i's pattern
            let krange = (dk + 1)..row_ptr[k + 1];
            let mut ip = p + 1;
            for kp in krange {
                let kc = col_idx[kp];
                if part_of[kc] != my_part {
                    continue;
                }
                while ip < row_hi && col_idx[ip] < kc {
                    ip += 1;
                }
                if ip >= row_hi {
                    break;
                }
                if col_idx[ip] == kc {
                    let update = factor * vals[kp - base];
                    vals[ip - base] -= update;
                }
            }
        }
        let di = diag[i];
        if di == usize::MAX {
            return Err(i);
        }
        let piv = vals[di - base];
        if piv == S::zero() || !piv.is_finite() {
            return Err(i);
        }
    }
    Ok(())
}

/// Preconditioned conjugate gradients on a scalar CSR system; loose-tolerance
/// workhorse for the CPR pressure stage. The operator is mildly nonsymmetric
/// there, so the loop bails out early when the residual stops improving.
pub fn pcg<S: Scalar>(
    a: &ScalarCsr<S>,
    m: &Ilu0<S>,
    b: &[S],
    rtol: S,
    max_iters: usize,
    x: &mut [S],
) -> usize {
    let n = a.n;
    for xi in x.iter_mut() {
        *xi = S::zero();
    }
    let b_norm = vecops::norm2(b);
    if !(b_norm > S::zero()) {
        return 0;
    }
    let mut r = b.to_vec();
    let mut z = vec![S::zero(); n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = vecops::dot(&r, &z);
    let mut ap = vec![S::zero(); n];
    let mut best = vecops::norm2(&r);
    let mut since_best = 0usize;
    for it in 0..max_iters {
        let r_norm = vecops::norm2(&r);
        if r_norm <= rtol * b_norm {
            return it;
        }
        if r_norm < best * lit(0.95) {
            best = r_norm;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 5 {
                return it;
            }
        }
        a.spmv(&p, &mut ap);
        let pap = vecops::dot(&p, &ap);
        if pap == S::zero() || !pap.is_finite() {
            return it;
        }
        let alpha = rz / pap;
        vecops::axpy(alpha, &p, x);
        vecops::axpy(-alpha, &ap, &mut r);
        m.apply(&r, &mut z);
        let rz_new = vecops::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    max_iters
}
