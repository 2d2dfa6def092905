//! Unit system, PVT property evaluation and rock-fluid table lookups.
//!
//! Everything here is a pure function of pressure or saturation plus static
//! parameters, returning the value together with its analytic derivative so
//! the assembly can build an exact Jacobian. All evaluation is reentrant and
//! safe to call concurrently.
//!
//! Field units throughout: psi, ft, mD, cp, lbm/ft³, STB/day, bbl/day.

use crate::scalar::{lit, Scalar};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Reservoir barrels per cubic foot of stock-tank fluid.
pub const FT3_PER_BBL: f64 = 5.614583;

#[derive(Debug, Error)]
pub enum PropError {
    #[error("invalid PVT parameter: {0}")]
    InvalidPvt(String),
    #[error("invalid rock parameter: {0}")]
    InvalidRock(String),
    #[error("invalid saturation table: {0}")]
    InvalidTable(String),
}

/// A property value bundled with its derivative w.r.t. the evaluation variable.
#[derive(Clone, Copy, Debug, Default)]
pub struct WithDeriv<S> {
    pub value: S,
    pub deriv: S,
}

/// Unit-system constants of the field-unit formulation.
///
/// `darcy` converts mD·ft·psi/cp into bbl/day; `gravity` converts lbm/ft³
/// into a psi/ft pressure gradient.
#[derive(Clone, Copy, Debug)]
pub struct UnitConstants<S> {
    pub darcy: S,
    pub gravity: S,
}

impl<S: Scalar> Default for UnitConstants<S> {
    fn default() -> Self {
        UnitConstants {
            darcy: lit(0.001127),
            gravity: lit(1.0 / 144.0),
        }
    }
}

/// Formation-volume-factor model used to turn a reference B and a constant
/// compressibility into B(p).
///
/// The exponential form keeps density positive at any pressure; the
/// linearized form is available for cross-checks against simulators that
/// truncate the expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FvfModel {
    Exponential,
    Linearized,
}

/// Constant-compressibility PVT description of one liquid phase.
#[derive(Clone, Copy, Debug)]
pub struct FluidPvt<S> {
    /// Reference pressure at which `b_ref` is quoted, psi.
    pub p_ref: S,
    /// Formation volume factor at `p_ref`, RB/STB.
    pub b_ref: S,
    /// Phase compressibility, 1/psi.
    pub compressibility: S,
    /// Constant viscosity, cp.
    pub viscosity: S,
    /// Stock-tank mass density, lbm/ft³.
    pub density_sc: S,
    pub model: FvfModel,
}

impl<S: Scalar> FluidPvt<S> {
    pub fn validate(&self) -> Result<(), PropError> {
        if !(self.b_ref > S::zero()) {
            return Err(PropError::InvalidPvt("B_ref must be > 0".into()));
        }
        if self.compressibility < S::zero() {
            return Err(PropError::InvalidPvt("compressibility must be >= 0".into()));
        }
        if !(self.viscosity > S::zero()) {
            return Err(PropError::InvalidPvt("viscosity must be > 0".into()));
        }
        if !(self.density_sc > S::zero()) {
            return Err(PropError::InvalidPvt("stock-tank density must be > 0".into()));
        }
        Ok(())
    }

    /// Formation volume factor B(p) with dB/dp.
    pub fn fvf(&self, p: S) -> WithDeriv<S> {
        let dp = p - self.p_ref;
        match self.model {
            FvfModel::Exponential => {
                let b = self.b_ref * (-self.compressibility * dp).exp();
                WithDeriv { value: b, deriv: -self.compressibility * b }
            }
            FvfModel::Linearized => {
                let b = self.b_ref * (S::one() - self.compressibility * dp);
                WithDeriv { value: b, deriv: -self.b_ref * self.compressibility }
            }
        }
    }

    /// Reservoir mass density rho(p) = rho_sc / B(p) with d(rho)/dp.
    pub fn density(&self, p: S) -> WithDeriv<S> {
        let b = self.fvf(p);
        let rho = self.density_sc / b.value;
        WithDeriv {
            value: rho,
            deriv: -rho * b.deriv / b.value,
        }
    }

    /// Mass of one stock-tank barrel, lbm/STB. Converts mass rates to
    /// surface-volume rates independently of pressure (rho(p)·B(p) = rho_sc).
    pub fn mass_per_stb(&self) -> S {
        self.density_sc * lit(FT3_PER_BBL)
    }
}

static POROSITY_CLAMPS: AtomicU64 = AtomicU64::new(0);

/// Number of porosity evaluations clamped into (0, 1] since process start
/// (or the last [`reset_porosity_clamp_count`]).
pub fn porosity_clamp_count() -> u64 {
    POROSITY_CLAMPS.load(Ordering::Relaxed)
}

pub fn reset_porosity_clamp_count() {
    POROSITY_CLAMPS.store(0, Ordering::Relaxed);
}

/// Linear rock-compaction model phi(p) = phi_ref·(1 + c_r·(p − p_ref)).
#[derive(Clone, Copy, Debug)]
pub struct RockCompressibility<S> {
    pub phi_ref: S,
    pub c_r: S,
    pub p_ref: S,
}

impl<S: Scalar> RockCompressibility<S> {
    pub fn validate(&self) -> Result<(), PropError> {
        if !(self.phi_ref > S::zero() && self.phi_ref < S::one()) {
            return Err(PropError::InvalidRock("phi_ref must lie in (0, 1)".into()));
        }
        if self.c_r < S::zero() {
            return Err(PropError::InvalidRock("c_r must be >= 0".into()));
        }
        Ok(())
    }

    /// Porosity with d(phi)/dp, clamped into (0, 1]. Clamping events bump a
    /// process-wide diagnostics counter; the derivative is zeroed when the
    /// clamp engages.
    pub fn porosity(&self, p: S) -> WithDeriv<S> {
        let phi = self.phi_ref * (S::one() + self.c_r * (p - self.p_ref));
        let floor = lit(1e-12);
        if phi > S::one() {
            POROSITY_CLAMPS.fetch_add(1, Ordering::Relaxed);
            WithDeriv { value: S::one(), deriv: S::zero() }
        } else if phi < floor {
            POROSITY_CLAMPS.fetch_add(1, Ordering::Relaxed);
            WithDeriv { value: floor, deriv: S::zero() }
        } else {
            WithDeriv { value: phi, deriv: self.phi_ref * self.c_r }
        }
    }
}

/// One saturation-table row.
#[derive(Clone, Copy, Debug)]
pub struct SatRow<S> {
    pub sw: S,
    pub krw: S,
    pub kro: S,
    pub pcow: S,
}

/// Result of a saturation-function lookup: relative permeabilities and the
/// oil-water capillary pressure, each with d/ds_w.
#[derive(Clone, Copy, Debug)]
pub struct SatValues<S> {
    pub krw: WithDeriv<S>,
    pub kro: WithDeriv<S>,
    pub pcow: WithDeriv<S>,
}

/// Piecewise-linear water/oil relative permeability and capillary pressure
/// table, strictly increasing in s_w.
#[derive(Clone, Debug)]
pub struct SatFuncTable<S> {
    rows: Vec<SatRow<S>>,
}

impl<S: Scalar> SatFuncTable<S> {
    pub fn from_rows(rows: Vec<SatRow<S>>) -> Result<Self, PropError> {
        if rows.len() < 2 {
            return Err(PropError::InvalidTable("need at least two rows".into()));
        }
        for w in rows.windows(2) {
            if !(w[1].sw > w[0].sw) {
                return Err(PropError::InvalidTable("s_w must be strictly increasing".into()));
            }
            if w[1].krw < w[0].krw {
                return Err(PropError::InvalidTable("k_rw must be non-decreasing".into()));
            }
            if w[1].kro > w[0].kro {
                return Err(PropError::InvalidTable("k_ro must be non-increasing".into()));
            }
        }
        for r in &rows {
            let ok = |k: S| k >= S::zero() && k <= S::one();
            if !(ok(r.krw) && ok(r.kro)) {
                return Err(PropError::InvalidTable("relative permeabilities must lie in [0, 1]".into()));
            }
        }
        Ok(SatFuncTable { rows })
    }

    /// Sample a two-phase Corey model into a table with `n_points` nodes over
    /// the mobile range [swc, 1 − sor]; capillary pressure is zero.
    pub fn corey(
        swc: S,
        sor: S,
        krw_max: S,
        kro_max: S,
        nw: S,
        no: S,
        n_points: usize,
    ) -> Result<Self, PropError> {
        let n = n_points.max(2);
        let span = S::one() - swc - sor;
        if !(span > S::zero()) {
            return Err(PropError::InvalidTable("swc + sor must be < 1".into()));
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let frac = lit::<S>(i as f64) / lit::<S>((n - 1) as f64);
            let sw = swc + span * frac;
            let se = frac;
            rows.push(SatRow {
                sw,
                krw: krw_max * se.powf(nw),
                kro: kro_max * (S::one() - se).powf(no),
                pcow: S::zero(),
            });
        }
        // endpoint rounding can leave krw(swc) at a denormal-sized value
        rows[0].krw = S::zero();
        rows[n - 1].kro = S::zero();
        Self::from_rows(rows)
    }

    pub fn rows(&self) -> &[SatRow<S>] {
        &self.rows
    }

    pub fn sw_min(&self) -> S {
        self.rows[0].sw
    }

    pub fn sw_max(&self) -> S {
        self.rows[self.rows.len() - 1].sw
    }

    /// Piecewise-linear interpolation at `sw`.
    ///
    /// Outside the table range all values clamp to the endpoint rows with
    /// zero derivatives. Exactly on an interior or last node the left
    /// segment's slope is used; on the first node the right segment's slope
    /// is used (there is no segment to the left of it).
    pub fn eval(&self, sw: S) -> SatValues<S> {
        let rows = &self.rows;
        let n = rows.len();
        let flat = |r: &SatRow<S>| SatValues {
            krw: WithDeriv { value: r.krw, deriv: S::zero() },
            kro: WithDeriv { value: r.kro, deriv: S::zero() },
            pcow: WithDeriv { value: r.pcow, deriv: S::zero() },
        };
        if sw < rows[0].sw {
            return flat(&rows[0]);
        }
        if sw > rows[n - 1].sw {
            return flat(&rows[n - 1]);
        }
        // segment index: node tie-break resolves to the left segment
        let mut hi = 1;
        while hi < n - 1 && sw > rows[hi].sw {
            hi += 1;
        }
        let lo = hi - 1;
        let (a, b) = (&rows[lo], &rows[hi]);
        let dsw = b.sw - a.sw;
        let t = (sw - a.sw) / dsw;
        let seg = |va: S, vb: S| WithDeriv {
            value: va + (vb - va) * t,
            deriv: (vb - va) / dsw,
        };
        SatValues {
            krw: seg(a.krw, b.krw),
            kro: seg(a.kro, b.kro),
            pcow: seg(a.pcow, b.pcow),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oil_ex1() -> FluidPvt<f64> {
        FluidPvt {
            p_ref: 15.0,
            b_ref: 1.036,
            compressibility: 1.313e-5,
            viscosity: 40.0,
            density_sc: 58.0,
            model: FvfModel::Exponential,
        }
    }

    fn two_row_table() -> SatFuncTable<f64> {
        SatFuncTable::from_rows(vec![
            SatRow { sw: 0.2, krw: 0.0, kro: 0.9, pcow: 5.0 },
            SatRow { sw: 0.8, krw: 0.6, kro: 0.0, pcow: 0.0 },
        ])
        .unwrap()
    }

    #[test]
    fn oil_density_at_reference() {
        let rho = oil_ex1().density(15.0);
        assert!((rho.value - 58.0 / 1.036).abs() < 1e-12);
        assert!((rho.value - 55.984).abs() < 1e-3);
    }

    #[test]
    fn incompressible_density_is_constant() {
        let mut pvt = oil_ex1();
        pvt.compressibility = 0.0;
        for p in [15.0, 500.0, 9000.0] {
            let rho = pvt.density(p);
            assert_eq!(rho.value, 58.0 / 1.036);
            assert_eq!(rho.deriv, 0.0);
        }
    }

    #[test]
    fn oil_density_compressed() {
        // rho_sc / (B_ref * exp(-c * 1985))
        let rho = oil_ex1().density(2000.0);
        let expect = 58.0 / (1.036 * (-1.313e-5_f64 * 1985.0).exp());
        assert!((rho.value - expect).abs() / expect < 1e-14);
    }

    #[test]
    fn water_density_reference_and_fd_derivative() {
        let pvt = FluidPvt::<f64> {
            p_ref: 15.0,
            b_ref: 1.0,
            compressibility: 3.0e-6,
            viscosity: 0.5,
            density_sc: 62.4,
            model: FvfModel::Exponential,
        };
        assert_eq!(pvt.density(15.0).value, 62.4);
        let p = 2345.0;
        let h = 1e-3;
        let fd = (pvt.density(p + h).value - pvt.density(p - h).value) / (2.0 * h);
        let an = pvt.density(p).deriv;
        assert!((an - fd).abs() / an.abs() < 1e-6);
        // analytic derivative equals rho * c for the exponential model
        assert!((an - pvt.density(p).value * 3.0e-6).abs() < 1e-15);
    }

    #[test]
    fn linearized_fvf_cross_check() {
        let mut pvt = oil_ex1();
        pvt.model = FvfModel::Linearized;
        let p = 1200.0;
        let b = pvt.fvf(p);
        assert!((b.value - 1.036 * (1.0 - 1.313e-5 * (p - 15.0))).abs() < 1e-14);
        assert!((b.deriv + 1.036 * 1.313e-5).abs() < 1e-18);
        // both models agree at the reference point and to first order nearby
        let exp = oil_ex1();
        assert_eq!(exp.fvf(15.0).value, pvt.fvf(15.0).value);
        assert!((exp.density(16.0).value - pvt.density(16.0).value).abs() < 1e-8);
    }

    #[test]
    fn porosity_reference_point_and_linear_growth() {
        let rock = RockCompressibility::<f64> { phi_ref: 0.1392, c_r: 3e-6, p_ref: 15.0 };
        assert_eq!(rock.porosity(15.0).value, 0.1392);
        let rock2 = RockCompressibility::<f64> { phi_ref: 0.039585, c_r: 3e-6, p_ref: 15.0 };
        let got = rock2.porosity(2015.0).value;
        assert!((got - 0.039585 * (1.0 + 3e-6 * 2000.0)).abs() < 1e-15);
        let frozen = RockCompressibility::<f64> { phi_ref: 0.25, c_r: 0.0, p_ref: 15.0 };
        assert_eq!(frozen.porosity(9.0e4).value, 0.25);
    }

    #[test]
    fn porosity_clamp_records_diagnostics() {
        reset_porosity_clamp_count();
        let rock = RockCompressibility::<f64> { phi_ref: 0.9, c_r: 1e-3, p_ref: 0.0 };
        let v = rock.porosity(1.0e6);
        assert_eq!(v.value, 1.0);
        assert_eq!(v.deriv, 0.0);
        assert!(porosity_clamp_count() >= 1);
    }

    #[test]
    fn satfunc_interpolates_and_clamps() {
        let tab = two_row_table();
        // exactly at first node
        let at0 = tab.eval(0.2);
        assert_eq!(at0.krw.value, 0.0);
        assert_eq!(at0.kro.value, 0.9);
        assert_eq!(at0.pcow.value, 5.0);
        // midpoint: hand linear interpolation
        let mid = tab.eval(0.5);
        assert!((mid.krw.value - 0.3).abs() < 1e-15);
        assert!((mid.kro.value - 0.45).abs() < 1e-15);
        assert!((mid.pcow.value - 2.5).abs() < 1e-15);
        assert!((mid.krw.deriv - 1.0).abs() < 1e-15);
        // clamp beyond the last node
        let hi = tab.eval(0.9);
        assert_eq!(hi.krw.value, 0.6);
        assert_eq!(hi.kro.value, 0.0);
        assert_eq!(hi.krw.deriv, 0.0);
        assert_eq!(hi.kro.deriv, 0.0);
    }

    #[test]
    fn satfunc_rejects_bad_tables() {
        assert!(SatFuncTable::from_rows(vec![
            SatRow { sw: 0.5, krw: 0.0, kro: 1.0, pcow: 0.0 },
            SatRow { sw: 0.5, krw: 0.1, kro: 0.9, pcow: 0.0 },
        ])
        .is_err());
        assert!(SatFuncTable::from_rows(vec![
            SatRow { sw: 0.2, krw: 0.5, kro: 1.0, pcow: 0.0 },
            SatRow { sw: 0.8, krw: 0.1, kro: 0.9, pcow: 0.0 },
        ])
        .is_err());
        assert!(SatFuncTable::<f64>::from_rows(vec![SatRow {
            sw: 0.2,
            krw: 0.0,
            kro: 1.0,
            pcow: 0.0
        }])
        .is_err());
    }

    #[test]
    fn corey_table_endpoints() {
        let tab = SatFuncTable::<f64>::corey(0.2, 0.2, 0.6, 1.0, 2.0, 2.0, 21).unwrap();
        assert_eq!(tab.sw_min(), 0.2);
        assert!((tab.sw_max() - 0.8).abs() < 1e-12);
        assert_eq!(tab.eval(0.2).krw.value, 0.0);
        assert_eq!(tab.eval(0.8).kro.value, 0.0);
        assert!((tab.eval(0.8).krw.value - 0.6).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn densities_positive_and_finite(p in 1.0f64..1.0e5) {
            let o = oil_ex1().density(p);
            prop_assert!(o.value.is_finite() && o.value > 0.0);
            let rock = RockCompressibility { phi_ref: 0.1392, c_r: 3e-6, p_ref: 15.0 };
            let phi = rock.porosity(p).value;
            prop_assert!(phi.is_finite() && phi > 0.0 && phi <= 1.0);
        }

        #[test]
        fn derivatives_match_central_differences(p in 1.0f64..1.0e5) {
            let h = (1e-6 * p.abs()).max(1e-4);
            let pvt = oil_ex1();
            let fd = (pvt.density(p + h).value - pvt.density(p - h).value) / (2.0 * h);
            let an = pvt.density(p).deriv;
            prop_assert!((an - fd).abs() <= 1e-6 * an.abs().max(fd.abs()));
            let rock = RockCompressibility { phi_ref: 0.1392, c_r: 3e-6, p_ref: 15.0 };
            let fd = (rock.porosity(p + h).value - rock.porosity(p - h).value) / (2.0 * h);
            let an = rock.porosity(p).deriv;
            prop_assert!((an - fd).abs() <= 1e-6 * an.abs().max(fd.abs()).max(1e-12));
        }

        #[test]
        fn oil_density_strictly_increasing(p in 1.0f64..9.0e4) {
            let pvt = oil_ex1();
            prop_assert!(pvt.density(p + 10.0).value > pvt.density(p).value);
        }

        #[test]
        fn satfunc_monotone(sw_a in 0.0f64..1.0, sw_b in 0.0f64..1.0) {
            let tab = SatFuncTable::<f64>::corey(0.1, 0.15, 0.7, 0.95, 2.0, 2.0, 17).unwrap();
            let (lo, hi) = if sw_a <= sw_b { (sw_a, sw_b) } else { (sw_b, sw_a) };
            let a = tab.eval(lo);
            let b = tab.eval(hi);
            prop_assert!(b.krw.value >= a.krw.value - 1e-14);
            prop_assert!(b.kro.value <= a.kro.value + 1e-14);
        }
    }
}
