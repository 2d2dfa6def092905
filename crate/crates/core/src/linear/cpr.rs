//! CPR-FPF two-level preconditioner.
//!
//! Three stages per application on the decoupled system: a block-ILU(0)
//! smoothing sweep (F), a pressure-subsystem correction (P) restricted to the
//! configured pressure unknowns of every cell, and a second ILU(0) sweep (F).
//! The pressure subsystem is solved loosely with ILU(0)-preconditioned CG.
//! Stage choices are pluggable through [`PressureSolver`].

use super::block::{BlockMatrix, Partitioning, BLOCK};
use super::gmres::{LinOp, Precond};
use super::ilu::{pcg, Ilu0, ScalarCsr};
use super::vecops;
use super::LinearError;
use crate::scalar::{lit, Scalar};

/// Pressure-stage solver selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureSolver {
    /// ILU(0)-preconditioned CG, bounded iterations, loose tolerance.
    IluCg { max_iters: usize },
}

impl Default for PressureSolver {
    fn default() -> Self {
        PressureSolver::IluCg { max_iters: 30 }
    }
}

#[derive(Clone, Debug)]
pub struct CprConfig<S> {
    /// Which of the four cell unknowns form the pressure set
    /// (default: fracture and matrix pressure, indices 0 and 2).
    pub pressure_set: Vec<usize>,
    pub pressure_solver: PressureSolver,
    pub pressure_rtol: S,
}

impl<S: Scalar> Default for CprConfig<S> {
    fn default() -> Self {
        CprConfig {
            pressure_set: vec![0, 2],
            pressure_solver: PressureSolver::default(),
            pressure_rtol: lit(0.1),
        }
    }
}

impl<S: Scalar> CprConfig<S> {
    pub fn validate(&self) -> Result<(), LinearError> {
        if self.pressure_set.is_empty()
            || self.pressure_set.iter().any(|&u| u >= BLOCK)
            || self.pressure_set.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(LinearError::InvalidPressureSet);
        }
        Ok(())
    }
}

/// One-iteration state of the preconditioner; rebuilt for every Jacobian.
pub struct CprFpf<'a, S> {
    a: &'a BlockMatrix<S>,
    part: &'a Partitioning,
    smoother: Ilu0<S>,
    app: ScalarCsr<S>,
    app_ilu: Ilu0<S>,
    pressure_set: Vec<usize>,
    n_p: usize,
    cfg: CprConfig<S>,
}

impl<'a, S: Scalar> CprFpf<'a, S> {
    pub fn setup(
        a: &'a BlockMatrix<S>,
        part: &'a Partitioning,
        cfg: CprConfig<S>,
    ) -> Result<Self, LinearError> {
        cfg.validate()?;
        let full = a.to_scalar_csr();
        let smoother = Ilu0::factor(&full, part)?;
        let (app, p_parts) = extract_pressure_system(a, part, &cfg.pressure_set);
        let n_p = app.n;
        let app_ilu = Ilu0::factor_with_parts(&app, p_parts)?;
        Ok(CprFpf { a, part, smoother, app, app_ilu, pressure_set: cfg.pressure_set.clone(), n_p, cfg })
    }

    fn restrict(&self, full: &[S], p: &mut [S]) {
        let np = self.pressure_set.len();
        for cell in 0..self.a.n_cells {
            for (s, &u) in self.pressure_set.iter().enumerate() {
                p[cell * np + s] = full[cell * BLOCK + u];
            }
        }
    }

    fn prolong_add(&self, p: &[S], full: &mut [S]) {
        let np = self.pressure_set.len();
        for cell in 0..self.a.n_cells {
            for (s, &u) in self.pressure_set.iter().enumerate() {
                full[cell * BLOCK + u] += p[cell * np + s];
            }
        }
    }
}

impl<'a, S: Scalar> Precond<S> for CprFpf<'a, S> {
    fn apply(&self, r: &[S], z: &mut [S]) {
        let n = self.a.n_unknowns();
        debug_assert_eq!(r.len(), n);
        // stage F: smoothing sweep
        self.smoother.apply(r, z);
        // stage P: pressure correction on the updated residual
        let mut az = vec![S::zero(); n];
        self.a.spmv(z, &mut az, self.part);
        let mut r1 = vec![S::zero(); n];
        vecops::sub(r, &az, &mut r1);
        let mut rp = vec![S::zero(); self.n_p];
        self.restrict(&r1, &mut rp);
        let mut dp = vec![S::zero(); self.n_p];
        match self.cfg.pressure_solver {
            PressureSolver::IluCg { max_iters } => {
                pcg(&self.app, &self.app_ilu, &rp, self.cfg.pressure_rtol, max_iters, &mut dp);
            }
        }
        self.prolong_add(&dp, z);
        // stage F: smooth the remaining residual
        self.a.spmv(z, &mut az, self.part);
        vecops::sub(r, &az, &mut r1);
        let mut dz = vec![S::zero(); n];
        self.smoother.apply(&r1, &mut dz);
        vecops::axpy(S::one(), &dz, z);
    }
}

/// Restriction of the cell-block system to the pressure unknowns; well rows
/// and columns stay with the smoother stages. Returns the pressure matrix
/// and its scalar-row partition ranges.
fn extract_pressure_system<S: Scalar>(
    a: &BlockMatrix<S>,
    part: &Partitioning,
    pressure_set: &[usize],
) -> (ScalarCsr<S>, Vec<std::ops::Range<usize>>) {
    use rayon::prelude::*;
    let np = pressure_set.len();
    let n_rows = a.n_cells * np;
    let mut row_ptr = vec![0usize; n_rows + 1];
    for cell in 0..a.n_cells {
        let len = a.row_cols(cell).len() * np;
        for s in 0..np {
            row_ptr[cell * np + s + 1] = len;
        }
    }
    for i in 0..n_rows {
        row_ptr[i + 1] += row_ptr[i];
    }
    let total = row_ptr[n_rows];
    let mut col_idx = vec![0usize; total];
    let mut vals = vec![S::zero(); total];

    const CELLS_PER_CHUNK: usize = 256;
    let mut jobs: Vec<(usize, &mut [usize], &mut [S])> = Vec::new();
    {
        let mut rest_c: &mut [usize] = &mut col_idx;
        let mut rest_v: &mut [S] = &mut vals;
        let mut consumed = 0usize;
        let mut cell = 0usize;
        while cell < a.n_cells {
            let hi = (cell + CELLS_PER_CHUNK).min(a.n_cells);
            let lo_off = row_ptr[cell * np];
            let hi_off = row_ptr[hi * np];
            let (_, tc) = rest_c.split_at_mut(lo_off - consumed);
            let (mc, tc2) = tc.split_at_mut(hi_off - lo_off);
            let (_, tv) = rest_v.split_at_mut(lo_off - consumed);
            let (mv, tv2) = tv.split_at_mut(hi_off - lo_off);
            jobs.push((cell, mc, mv));
            rest_c = tc2;
            rest_v = tv2;
            consumed = hi_off;
            cell = hi;
        }
    }
    jobs.into_par_iter().for_each(|(cell_lo, chunk_cols, chunk_vals)| {
        let cell_hi = (cell_lo + CELLS_PER_CHUNK).min(a.n_cells);
        let mut k = 0usize;
        for cell in cell_lo..cell_hi {
            for &ur in pressure_set {
                for (col_cell, b) in a.row_blocks(cell) {
                    for (s, &uc) in pressure_set.iter().enumerate() {
                        chunk_cols[k] = col_cell * np + s;
                        chunk_vals[k] = b[ur * BLOCK + uc];
                        k += 1;
                    }
                }
            }
        }
    });
    let csr = ScalarCsr::from_sorted(n_rows, row_ptr, col_idx, vals);
    let p_parts = part.parts.iter().map(|r| r.start * np..r.end * np).collect();
    (csr, p_parts)
}

/// Plain block-ILU(0) preconditioner over the full bordered system, used as
/// the baseline the CPR variant is measured against.
pub struct IluPrecond<S> {
    ilu: Ilu0<S>,
}

impl<S: Scalar> IluPrecond<S> {
    pub fn setup(a: &BlockMatrix<S>, part: &Partitioning) -> Result<Self, LinearError> {
        let full = a.to_scalar_csr();
        Ok(IluPrecond { ilu: Ilu0::factor(&full, part)? })
    }
}

impl<S: Scalar> Precond<S> for IluPrecond<S> {
    fn apply(&self, r: &[S], z: &mut [S]) {
        self.ilu.apply(r, z);
    }
}

impl<S: Scalar> LinOp<S> for (&BlockMatrix<S>, &Partitioning) {
    fn n(&self) -> usize {
        self.0.n_unknowns()
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        self.0.spmv(x, y, self.1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::gmres::{gmres, GmresConfig};

    #[test]
    fn cpr_apply_is_linear_at_zero_and_identity() {
        // identity diagonal blocks, no couplings: M^{-1} r = r, and r = 0 -> z = 0
        let mut a = BlockMatrix::<f64>::from_pattern(2, &[vec![], vec![]], &[]);
        for row in 0..2 {
            let d = a.diag_block_mut(row);
            for i in 0..4 {
                d[i * 4 + i] = 1.0;
            }
        }
        let part = Partitioning::single(2, 0);
        let cpr = CprFpf::setup(&a, &part, CprConfig::default()).unwrap();
        let r = vec![1.0, -2.0, 3.0, 0.5, 0.0, 1.0, 2.0, -1.0];
        let mut z = vec![0.0; 8];
        cpr.apply(&r, &mut z);
        for (zi, ri) in z.iter().zip(&r) {
            assert!((zi - ri).abs() < 1e-12);
        }
        let mut z0 = vec![7.0; 8];
        cpr.apply(&[0.0; 8], &mut z0);
        assert!(z0.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn cpr_accelerates_gmres_on_block_system() {
        let (mut a, b) = crate::linear::block::random_system(24, 2, 99);
        let mut rhs = b.clone();
        let part = Partitioning::single(24, 2);
        crate::linear::decouple::decouple_in_place(&mut a, &mut rhs).unwrap();
        let cfg = GmresConfig { restart: 30, max_iters: 200, rtol: 1e-8 };

        let ilu = IluPrecond::setup(&a, &part).unwrap();
        let mut x1 = vec![0.0; a.n_unknowns()];
        let r1 = gmres(&(&a, &part), &ilu, &rhs, &cfg, &mut x1);

        let cpr = CprFpf::setup(&a, &part, CprConfig::default()).unwrap();
        let mut x2 = vec![0.0; a.n_unknowns()];
        let r2 = gmres(&(&a, &part), &cpr, &rhs, &cfg, &mut x2);

        assert!(r1.converged && r2.converged);
        assert!(r2.iterations <= r1.iterations);
    }
}
