//! Simulation unknowns at one time level.

use crate::linear::BLOCK;
use crate::scalar::{lit, Scalar};

/// Per-cell unknowns (fracture pressure/saturation, matrix
/// pressure/saturation) plus one bottom-hole pressure per well. Oil
/// saturation is `1 - s_w` in each continuum and is never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct State<S> {
    pub p_f: Vec<S>,
    pub s_wf: Vec<S>,
    pub p_m: Vec<S>,
    pub s_wm: Vec<S>,
    pub p_bh: Vec<S>,
}

/// Newton-update safeguards: per-iteration caps on cell pressure and
/// saturation moves, with saturations clamped into [0, 1]. Bottom-hole
/// pressures are left uncapped.
#[derive(Clone, Copy, Debug)]
pub struct Damping<S> {
    pub max_dp: S,
    pub max_ds: S,
}

impl<S: Scalar> Default for Damping<S> {
    fn default() -> Self {
        Damping { max_dp: lit(500.0), max_ds: lit(0.2) }
    }
}

/// What the damping logic did to one update.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateStats {
    pub pressure_caps: usize,
    pub saturation_caps: usize,
    pub saturation_clamps: usize,
}

impl UpdateStats {
    pub fn damped(&self) -> bool {
        self.pressure_caps + self.saturation_caps + self.saturation_clamps > 0
    }
}

impl<S: Scalar> State<S> {
    pub fn constant(n_cells: usize, n_wells: usize, p_f: S, s_wf: S, p_m: S, s_wm: S) -> Self {
        State {
            p_f: vec![p_f; n_cells],
            s_wf: vec![s_wf; n_cells],
            p_m: vec![p_m; n_cells],
            s_wm: vec![s_wm; n_cells],
            p_bh: vec![S::zero(); n_wells],
        }
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.p_f.len()
    }

    #[inline]
    pub fn n_wells(&self) -> usize {
        self.p_bh.len()
    }

    #[inline]
    pub fn n_unknowns(&self) -> usize {
        BLOCK * self.n_cells() + self.n_wells()
    }

    /// Flatten into the global unknown ordering (cells by block, wells last).
    pub fn to_vec(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.n_unknowns());
        for c in 0..self.n_cells() {
            out.push(self.p_f[c]);
            out.push(self.s_wf[c]);
            out.push(self.p_m[c]);
            out.push(self.s_wm[c]);
        }
        out.extend_from_slice(&self.p_bh);
        out
    }

    pub fn from_vec(v: &[S], n_cells: usize, n_wells: usize) -> Self {
        debug_assert_eq!(v.len(), BLOCK * n_cells + n_wells);
        let mut st = State::constant(n_cells, n_wells, S::zero(), S::zero(), S::zero(), S::zero());
        for c in 0..n_cells {
            st.p_f[c] = v[BLOCK * c];
            st.s_wf[c] = v[BLOCK * c + 1];
            st.p_m[c] = v[BLOCK * c + 2];
            st.s_wm[c] = v[BLOCK * c + 3];
        }
        st.p_bh.copy_from_slice(&v[BLOCK * n_cells..]);
        st
    }

    /// Apply a Newton correction with damping and saturation clamping.
    pub fn apply_update(&mut self, y: &[S], damping: &Damping<S>) -> UpdateStats {
        debug_assert_eq!(y.len(), self.n_unknowns());
        let mut stats = UpdateStats::default();
        let cap = |dv: S, max: S, hits: &mut usize| {
            if dv > max {
                *hits += 1;
                max
            } else if dv < -max {
                *hits += 1;
                -max
            } else {
                dv
            }
        };
        for c in 0..self.n_cells() {
            let dpf = cap(y[BLOCK * c], damping.max_dp, &mut stats.pressure_caps);
            let dsf = cap(y[BLOCK * c + 1], damping.max_ds, &mut stats.saturation_caps);
            let dpm = cap(y[BLOCK * c + 2], damping.max_dp, &mut stats.pressure_caps);
            let dsm = cap(y[BLOCK * c + 3], damping.max_ds, &mut stats.saturation_caps);
            self.p_f[c] += dpf;
            self.p_m[c] += dpm;
            let swf = self.s_wf[c] + dsf;
            let swm = self.s_wm[c] + dsm;
            self.s_wf[c] = clamp01(swf, &mut stats.saturation_clamps);
            self.s_wm[c] = clamp01(swm, &mut stats.saturation_clamps);
        }
        let nb = BLOCK * self.n_cells();
        for w in 0..self.n_wells() {
            self.p_bh[w] += y[nb + w];
        }
        stats
    }

    /// Largest relative difference against another state, for restart and
    /// regression checks.
    pub fn max_rel_diff(&self, other: &State<S>) -> S {
        let mut worst = S::zero();
        let fields = [
            (&self.p_f, &other.p_f),
            (&self.s_wf, &other.s_wf),
            (&self.p_m, &other.p_m),
            (&self.s_wm, &other.s_wm),
            (&self.p_bh, &other.p_bh),
        ];
        for (a, b) in fields {
            for (x, y) in a.iter().zip(b.iter()) {
                let denom = x.abs().max(y.abs()).max(S::one());
                worst = worst.max((*x - *y).abs() / denom);
            }
        }
        worst
    }
}

#[inline]
fn clamp01<S: Scalar>(v: S, hits: &mut usize) -> S {
    if v < S::zero() {
        *hits += 1;
        S::zero()
    } else if v > S::one() {
        *hits += 1;
        S::one()
    } else {
        v
    }
}
