//! Deterministic dense vector kernels.
//!
//! Reductions accumulate fixed-size chunk partials and combine them in chunk
//! order, so dot products and norms are bitwise identical at any worker
//! count. Element-wise updates parallelize over the same disjoint chunks.

use crate::scalar::Scalar;
use rayon::prelude::*;

const CHUNK: usize = 8192;

#[inline]
fn chunks(n: usize) -> usize {
    n.div_ceil(CHUNK).max(1)
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<S> = (0..chunks(a.len()))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(a.len());
            let mut acc = S::zero();
            for i in lo..hi {
                acc += a[i] * b[i];
            }
            acc
        })
        .collect();
    let mut total = S::zero();
    for p in partials {
        total += p;
    }
    total
}

pub fn norm2<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

pub fn norm_inf<S: Scalar>(a: &[S]) -> S {
    let partials: Vec<S> = (0..chunks(a.len()))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(a.len());
            let mut m = S::zero();
            for i in lo..hi {
                m = m.max(a[i].abs());
            }
            m
        })
        .collect();
    let mut total = S::zero();
    for p in partials {
        total = total.max(p);
    }
    total
}

/// y += alpha * x
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(yc, xc)| {
        for (yi, xi) in yc.iter_mut().zip(xc) {
            *yi += alpha * *xi;
        }
    });
}

pub fn scale_in_place<S: Scalar>(alpha: S, x: &mut [S]) {
    x.par_chunks_mut(CHUNK).for_each(|xc| {
        for xi in xc.iter_mut() {
            *xi *= alpha;
        }
    });
}

/// out = a - b
pub fn sub<S: Scalar>(a: &[S], b: &[S], out: &mut [S]) {
    out.par_chunks_mut(CHUNK)
        .zip(a.par_chunks(CHUNK))
        .zip(b.par_chunks(CHUNK))
        .for_each(|((oc, ac), bc)| {
            for ((oi, ai), bi) in oc.iter_mut().zip(ac).zip((*bc).iter()) {
                *oi = *ai - *bi;
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_sequential_and_is_chunk_stable() {
        let n = 3 * CHUNK + 17;
        let a: Vec<f64> = (0..n).map(|i| ((i * 2654435761 % 1000) as f64) * 1e-3 - 0.5).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 40503 % 997) as f64) * 1e-3 - 0.3).collect();
        let d = dot(&a, &b);
        let pools: Vec<_> = [1usize, 2, 4]
            .iter()
            .map(|&t| {
                rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| dot(&a, &b))
            })
            .collect();
        for p in pools {
            assert_eq!(d.to_bits(), p.to_bits());
        }
    }

    #[test]
    fn axpy_and_norms() {
        let x = vec![1.0, -2.0, 3.0];
        let mut y = vec![0.5, 0.5, 0.5];
        axpy(2.0, &x, &mut y);
        assert_eq!(y, vec![2.5, -3.5, 6.5]);
        assert!((norm2::<f64>(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
        assert_eq!(norm_inf(&y), 6.5);
    }
}
