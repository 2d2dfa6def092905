//! Per-row decoupling of the block system.
//!
//! Every cell block row is left-multiplied by the inverse of its diagonal
//! block, computed by Gauss-Jordan elimination with partial pivoting, so the
//! decoupled system has identity diagonal blocks and an unchanged solution
//! set. Well rows are normalized by their scalar diagonal.

use super::block::{mat4_mul, BlockMatrix, BLOCK};
use super::LinearError;
use crate::scalar::{lit, Scalar};

/// Invert a dense row-major 4x4 block in place via Gauss-Jordan with partial
/// pivoting. Returns `None` when a pivot underflows.
pub fn invert4<S: Scalar>(m: &[S; BLOCK * BLOCK]) -> Option<[S; BLOCK * BLOCK]> {
    let mut a = *m;
    let mut inv = [S::zero(); BLOCK * BLOCK];
    for i in 0..BLOCK {
        inv[i * BLOCK + i] = S::one();
    }
    for col in 0..BLOCK {
        // pivot search in the remaining rows
        let mut piv = col;
        let mut best = a[col * BLOCK + col].abs();
        for r in col + 1..BLOCK {
            let v = a[r * BLOCK + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > lit::<S>(1e-300)) || !best.is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..BLOCK {
                a.swap(col * BLOCK + c, piv * BLOCK + c);
                inv.swap(col * BLOCK + c, piv * BLOCK + c);
            }
        }
        let d = a[col * BLOCK + col];
        let dinv = S::one() / d;
        for c in 0..BLOCK {
            a[col * BLOCK + c] *= dinv;
            inv[col * BLOCK + c] *= dinv;
        }
        for r in 0..BLOCK {
            if r == col {
                continue;
            }
            let f = a[r * BLOCK + col];
            if f == S::zero() {
                continue;
            }
            for c in 0..BLOCK {
                a[r * BLOCK + c] -= f * a[col * BLOCK + c];
                inv[r * BLOCK + c] -= f * inv[col * BLOCK + c];
            }
        }
    }
    Some(inv)
}

/// Apply the decoupling transform `D^{-1} A x = D^{-1} b` in place.
///
/// After this call every cell diagonal block is the identity (to round-off)
/// and the well diagonal entries are one. Inversion and row scaling run in
/// parallel over fixed chunks.
pub fn decouple_in_place<S: Scalar>(a: &mut BlockMatrix<S>, b: &mut [S]) -> Result<(), LinearError> {
    use rayon::prelude::*;
    debug_assert_eq!(b.len(), a.n_unknowns());
    let nb = a.n_cells * BLOCK;
    let inverses: Vec<Option<[S; BLOCK * BLOCK]>> =
        (0..a.n_cells).into_par_iter().map(|row| invert4(a.diag_block(row))).collect();
    let mut transforms = Vec::with_capacity(a.n_cells);
    for (cell, inv) in inverses.into_iter().enumerate() {
        transforms.push(inv.ok_or(LinearError::SingularDiagonal { cell })?);
    }
    a.scale_rows_by(&transforms);
    b[..nb]
        .par_chunks_mut(BLOCK)
        .zip(transforms.par_iter())
        .for_each(|(seg, inv)| {
            let mut out = [S::zero(); BLOCK];
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = S::zero();
                for c in 0..BLOCK {
                    acc += inv[r * BLOCK + c] * seg[c];
                }
                *o = acc;
            }
            seg.copy_from_slice(&out);
        });
    for w in 0..a.n_wells {
        let d = a.well_diag(w);
        if !(d.abs() > lit::<S>(1e-300)) || !d.is_finite() {
            return Err(LinearError::SingularWellRow { well: w });
        }
        let inv = S::one() / d;
        a.scale_well_row(w, inv);
        b[nb + w] *= inv;
    }
    Ok(())
}

/// Max-norm distance of every post-decoupling diagonal block from identity;
/// exposed for invariant checks.
pub fn diag_identity_error<S: Scalar>(a: &BlockMatrix<S>) -> S {
    let mut worst = S::zero();
    for row in 0..a.n_cells {
        let d = a.diag_block(row);
        for r in 0..BLOCK {
            for c in 0..BLOCK {
                let want = if r == c { S::one() } else { S::zero() };
                worst = worst.max((d[r * BLOCK + c] - want).abs());
            }
        }
    }
    for w in 0..a.n_wells {
        worst = worst.max((a.well_diag(w) - S::one()).abs());
    }
    worst
}

/// Verification helper: inv * m compared against identity, max-norm.
pub fn inverse_residual<S: Scalar>(m: &[S; BLOCK * BLOCK], inv: &[S; BLOCK * BLOCK]) -> S {
    let prod = mat4_mul(inv, m);
    let mut worst = S::zero();
    for r in 0..BLOCK {
        for c in 0..BLOCK {
            let want = if r == c { S::one() } else { S::zero() };
            worst = worst.max((prod[r * BLOCK + c] - want).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert4_roundtrip() {
        let m = [
            4.0, 1.0, 0.2, 0.0, //
            0.3, 3.0, 0.1, 0.5, //
            0.0, 0.2, 5.0, 1.0, //
            0.1, 0.0, 0.7, 2.0,
        ];
        let inv = invert4(&m).unwrap();
        assert!(inverse_residual(&m, &inv) < 1e-13);
    }

    #[test]
    fn invert4_rejects_singular() {
        let mut m = [0.0; 16];
        m[0] = 1.0;
        m[5] = 1.0;
        m[10] = 1.0; // last row all zero
        assert!(invert4(&m).is_none());
    }

    #[test]
    fn invert4_needs_pivoting() {
        // zero leading entry forces a row swap
        let m = [
            0.0, 2.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 3.0, 0.0, //
            0.0, 0.0, 0.0, 4.0,
        ];
        let inv = invert4(&m).unwrap();
        assert!(inverse_residual(&m, &inv) < 1e-14);
    }
}
