//! Sink-source well model: effective radii, well indices, perforation rates
//! with exact derivatives, constraint equations and switching checks.
//!
//! Wells perforate the fracture continuum only. Rates are mass rates
//! (consistent with the flux terms); surface-volume conversion divides by the
//! stock-tank mass of one barrel, which is pressure-independent because
//! `rho(p) * B(p) = rho_sc` identically.

use crate::dual::Dual;
use crate::grid::{Axis, Grid};
use crate::props::{FluidPvt, SatFuncTable, UnitConstants};
use crate::scalar::{lit, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WellError {
    #[error("well '{well}': anisotropy ratio undefined (zero off-axis permeability)")]
    ZeroOffAxisPerm { well: String },
    #[error("well '{well}': non-physical well geometry (ln(r_e/r_w) + skin <= 0)")]
    NonPhysicalGeometry { well: String },
    #[error("well '{well}': invalid parameter: {what}")]
    Invalid { well: String, what: String },
    #[error("well '{well}' perforates cell {cell} outside the grid")]
    PerforationOutsideGrid { well: String, cell: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WellKind {
    Injector,
    Producer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlMode {
    Rate,
    Bhp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadiusModel {
    Circle,
    Peaceman,
}

/// Either a deck-given kh in mD·ft or the perforated cell's k·dz.
#[derive(Clone, Copy, Debug)]
pub enum KhSpec<S> {
    Value(S),
    Auto,
}

#[derive(Clone, Copy, Debug)]
pub struct PerfGeometry<S> {
    pub k_h: KhSpec<S>,
    pub r_w: S,
    pub skin: S,
    pub w_frac: S,
    pub w_g: S,
    pub radius_model: RadiusModel,
    pub direction: Axis,
}

#[derive(Clone, Copy, Debug)]
pub enum WellIndexSpec<S> {
    /// Deck-given well index, mD·ft; geometry ignored.
    Explicit(S),
    Geometry(PerfGeometry<S>),
}

#[derive(Clone, Debug)]
pub struct Perforation<S> {
    pub cell: usize,
    pub index: WellIndexSpec<S>,
}

#[derive(Clone, Debug)]
pub struct WellSpec<S> {
    pub name: String,
    pub kind: WellKind,
    pub perforations: Vec<Perforation<S>>,
    /// Surface-rate limit: water rate for injectors, oil rate for producers.
    pub max_rate: S,
    /// BHP floor for producers, ceiling for injectors.
    pub bhp_limit: S,
    /// Defaults to the depth of the first perforated cell.
    pub ref_depth: Option<S>,
    pub initial_mode: ControlMode,
}

/// Per-well data that changes during the run: the active constraint and the
/// lagged wellbore mixture density for the hydrostatic correction.
#[derive(Clone, Copy, Debug)]
pub struct WellRuntime<S> {
    pub mode: ControlMode,
    pub mix_density: S,
}

/// Eq-style circle effective radius: r_e = w_g sqrt(A_r / (pi w_frac)).
pub fn effective_radius_circle<S: Scalar>(w_g: S, area: S, w_frac: S) -> S {
    w_g * (area / (lit::<S>(std::f64::consts::PI) * w_frac)).sqrt()
}

/// Peaceman effective radius for a well along `direction`; `d` and `k` are
/// the cell sizes and permeabilities along x, y, z.
pub fn effective_radius_peaceman<S: Scalar>(
    d: [S; 3],
    k: [S; 3],
    direction: Axis,
    well: &str,
) -> Result<S, WellError> {
    let (a, b) = match direction {
        Axis::Z => (0usize, 1usize),
        Axis::Y => (0, 2),
        Axis::X => (1, 2),
    };
    if !(k[a] > S::zero()) || !(k[b] > S::zero()) {
        return Err(WellError::ZeroOffAxisPerm { well: well.to_string() });
    }
    let quarter = lit::<S>(0.25);
    let ratio_ba = k[b] / k[a];
    let ratio_ab = k[a] / k[b];
    let num = (d[a] * d[a] * ratio_ba.sqrt() + d[b] * d[b] * ratio_ab.sqrt()).sqrt();
    let den = ratio_ba.powf(quarter) + ratio_ab.powf(quarter);
    Ok(lit::<S>(0.28) * num / den)
}

/// Well index W_i = 2 pi k_h w_frac / (ln(r_e / r_w) + skin), mD·ft.
pub fn well_index<S: Scalar>(k_h: S, w_frac: S, r_e: S, r_w: S, skin: S, well: &str) -> Result<S, WellError> {
    let log_term = (r_e / r_w).ln() + skin;
    if !(log_term > S::zero()) {
        return Err(WellError::NonPhysicalGeometry { well: well.to_string() });
    }
    Ok(lit::<S>(2.0 * std::f64::consts::PI) * k_h * w_frac / log_term)
}

/// Resolve a perforation's well index against the grid: explicit deck values
/// pass through, geometric ones evaluate Eqs-of-state of the fracture cell.
pub fn resolve_well_index<S: Scalar>(
    spec: &WellSpec<S>,
    perf: &Perforation<S>,
    grid: &Grid<S>,
) -> Result<S, WellError> {
    if perf.cell >= grid.n_cells() {
        return Err(WellError::PerforationOutsideGrid { well: spec.name.clone(), cell: perf.cell });
    }
    match &perf.index {
        WellIndexSpec::Explicit(wi) => Ok(*wi),
        WellIndexSpec::Geometry(geom) => {
            let sizes = grid.cell_sizes(perf.cell);
            let perm = grid.fracture[perf.cell].perm;
            if !(geom.r_w > S::zero()) {
                return Err(WellError::Invalid { well: spec.name.clone(), what: "r_w must be > 0".into() });
            }
            if !(geom.w_frac > S::zero()) || geom.w_frac > S::one() {
                return Err(WellError::Invalid { well: spec.name.clone(), what: "w_frac must lie in (0, 1]".into() });
            }
            let k_h = match geom.k_h {
                KhSpec::Value(v) => v,
                KhSpec::Auto => {
                    // conventional k * h of the perforated interval
                    let along = geom.direction.index();
                    let (ka, kb) = match geom.direction {
                        Axis::Z => (perm[0], perm[1]),
                        Axis::Y => (perm[0], perm[2]),
                        Axis::X => (perm[1], perm[2]),
                    };
                    (ka * kb).sqrt() * sizes[along]
                }
            };
            let r_e = match geom.radius_model {
                RadiusModel::Circle => {
                    let (a, b) = match geom.direction {
                        Axis::Z => (sizes[0], sizes[1]),
                        Axis::Y => (sizes[0], sizes[2]),
                        Axis::X => (sizes[1], sizes[2]),
                    };
                    effective_radius_circle(geom.w_g, a * b, geom.w_frac)
                }
                RadiusModel::Peaceman => {
                    effective_radius_peaceman(sizes, perm, geom.direction, &spec.name)?
                }
            };
            well_index(k_h, geom.w_frac, r_e, geom.r_w, geom.skin, &spec.name)
        }
    }
}

/// Hydrostatic wellbore correction from the reference depth to a perforation.
pub fn perforation_pressure<S: Scalar>(
    p_bh: S,
    ref_depth: S,
    perf_depth: S,
    mix_density: S,
    units: &UnitConstants<S>,
) -> S {
    p_bh + mix_density * units.gravity * (perf_depth - ref_depth)
}

/// Derivative slots of the well dual numbers.
pub const W_PF: usize = 0;
pub const W_SWF: usize = 1;
pub const W_PBH: usize = 2;

/// Mass rate of one phase through one perforation, positive into the cell.
///
/// Derivative slots: (fracture pressure, fracture water saturation, p_bh).
/// Mobility is upstream-weighted: cell properties when the cell feeds the
/// well, injected-fluid properties (endpoint k_rw = 1, water PVT at cell
/// pressure) when an injector feeds the cell. Producers always use cell
/// mobilities, so backflow through a producer perforation carries cell fluid.
/// At `p == p_b` the producing branch applies (one-sided evaluation).
#[allow(clippy::too_many_arguments)]
pub fn perforation_rate<S: Scalar>(
    kind: WellKind,
    is_water: bool,
    wi_darcy: S,
    oil: &FluidPvt<S>,
    water: &FluidPvt<S>,
    sat: &SatFuncTable<S>,
    p_f: Dual<S, 4>,
    s_wf: Dual<S, 4>,
    p_perf: Dual<S, 4>,
) -> Dual<S, 4> {
    let drawdown = p_perf - p_f;
    let injecting = kind == WellKind::Injector && drawdown.v > S::zero();
    let mobility_rho = if injecting {
        if is_water {
            // injected water at endpoint relative permeability
            let rho = Dual::chain(water.density(p_f.v), &p_f);
            rho.scale(S::one() / water.viscosity)
        } else {
            Dual::constant(S::zero())
        }
    } else {
        let sv = sat.eval(s_wf.v);
        if is_water {
            let krw = Dual::chain(sv.krw, &s_wf);
            let p_w = p_f - Dual::chain(sv.pcow, &s_wf);
            let rho = Dual::chain(water.density(p_w.v), &p_w);
            (krw * rho).scale(S::one() / water.viscosity)
        } else {
            let kro = Dual::chain(sv.kro, &s_wf);
            let rho = Dual::chain(oil.density(p_f.v), &p_f);
            (kro * rho).scale(S::one() / oil.viscosity)
        }
    };
    (mobility_rho * drawdown).scale(wi_darcy)
}

/// Post-convergence constraint check: does the converged step violate the
/// inactive limit, and which mode should the well switch to?
///
/// `surface_rate` is the controlled phase's surface rate with the well's
/// natural sign convention (production positive for producers, injection
/// positive for injectors).
pub fn constraint_violation<S: Scalar>(
    spec: &WellSpec<S>,
    mode: ControlMode,
    p_bh: S,
    surface_rate: S,
    tol: S,
) -> Option<ControlMode> {
    match (mode, spec.kind) {
        (ControlMode::Rate, WellKind::Producer) => {
            (p_bh < spec.bhp_limit - tol).then_some(ControlMode::Bhp)
        }
        (ControlMode::Rate, WellKind::Injector) => {
            (p_bh > spec.bhp_limit + tol).then_some(ControlMode::Bhp)
        }
        (ControlMode::Bhp, _) => {
            (surface_rate > spec.max_rate + tol).then_some(ControlMode::Rate)
        }
    }
}

/// First-guess bottom-hole pressure for a rate-controlled well, from the
/// target rate and an endpoint-mobility estimate of well deliverability.
/// Keeps the first Newton iterate on the correct side of the upstream switch.
pub fn initial_bhp_guess<S: Scalar>(
    spec: &WellSpec<S>,
    wi_darcy_total: S,
    p_cell: S,
    oil: &FluidPvt<S>,
    water: &FluidPvt<S>,
    sat: &SatFuncTable<S>,
    mode: ControlMode,
) -> S {
    if mode == ControlMode::Bhp {
        return spec.bhp_limit;
    }
    match spec.kind {
        WellKind::Injector => {
            let rho = water.density(p_cell).value;
            let lam = rho / water.viscosity;
            let mass_target = spec.max_rate * water.mass_per_stb();
            let dp = mass_target / (wi_darcy_total * lam).max(lit(1e-12));
            p_cell + dp
        }
        WellKind::Producer => {
            let kro = sat.eval(sat.sw_min()).kro.value.max(lit(0.01));
            let rho = oil.density(p_cell).value;
            let lam = kro * rho / oil.viscosity;
            let mass_target = spec.max_rate * oil.mass_per_stb();
            let dp = mass_target / (wi_darcy_total * lam).max(lit(1e-12));
            (p_cell - dp).max(spec.bhp_limit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::props::FvfModel;

    fn pvt(mu: f64, rho: f64) -> FluidPvt<f64> {
        FluidPvt {
            p_ref: 15.0,
            b_ref: 1.0,
            compressibility: 0.0,
            viscosity: mu,
            density_sc: rho,
            model: FvfModel::Exponential,
        }
    }

    #[test]
    fn circle_radius_unit_case() {
        let r: f64 = effective_radius_circle(1.0, std::f64::consts::PI, 1.0);
        assert!((r - 1.0).abs() < 1e-15);
        let r2: f64 = effective_radius_circle(1.0, 102.04f64 * 102.04, 1.0);
        assert!((r2 - 102.04 / std::f64::consts::PI.sqrt()).abs() < 1e-10);
        assert!((r2 - 57.57).abs() < 0.01);
        // doubling the area scales by sqrt(2)
        let r3: f64 = effective_radius_circle(1.0, 2.0 * 102.04f64 * 102.04, 1.0);
        assert!((r3 - r2 * 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn peaceman_radius_isotropic() {
        let d = [102.04, 102.04, 100.0];
        let k = [395.85, 395.85, 395.85];
        let r = effective_radius_peaceman(d, k, Axis::Z, "w").unwrap();
        let expect = 0.28 * 2.0f64.sqrt() * 102.04 / 2.0;
        assert!((r - expect).abs() < 1e-12);
        assert!((r - 0.198 * 102.04).abs() < 0.15);
    }

    #[test]
    fn peaceman_radius_symmetry_and_errors() {
        let r1: f64 =
            effective_radius_peaceman([50.0, 80.0, 10.0], [100.0, 400.0, 1.0], Axis::Z, "w").unwrap();
        let r2 =
            effective_radius_peaceman([80.0, 50.0, 10.0], [400.0, 100.0, 1.0], Axis::Z, "w").unwrap();
        assert!((r1 - r2).abs() < 1e-12);
        assert!(effective_radius_peaceman::<f64>([1.0, 1.0, 1.0], [0.0, 1.0, 1.0], Axis::Z, "w").is_err());
    }

    #[test]
    fn well_index_log_unit_case() {
        let k_h = 123.0;
        let r_w = 0.25;
        let wi = well_index(k_h, 1.0, std::f64::consts::E * r_w, r_w, 0.0, "w").unwrap();
        assert!((wi - 2.0 * std::f64::consts::PI * k_h).abs() < 1e-9);
        let wi2 = well_index(100.0, 1.0, 20.20, 0.25, 0.0, "w").unwrap();
        assert!((wi2 - 2.0 * std::f64::consts::PI * 100.0 / (80.8f64).ln()).abs() < 1e-9);
        assert!((wi2 - 143.0).abs() < 0.2);
        assert!(well_index(100.0, 1.0, 0.2, 0.25, 0.0, "w").is_err());
    }

    #[test]
    fn well_index_monotone_in_skin_and_radius() {
        let base = well_index(100.0, 1.0, 20.0, 0.25, 0.0, "w").unwrap();
        assert!(well_index(100.0, 1.0, 20.0, 0.25, 2.0, "w").unwrap() < base);
        assert!(well_index(100.0, 1.0, 40.0, 0.25, 0.0, "w").unwrap() < base);
    }

    #[test]
    fn perforation_pressure_hydrostatic() {
        let u = UnitConstants::<f64>::default();
        assert_eq!(perforation_pressure(1000.0, 2000.0, 2000.0, 62.4, &u), 1000.0);
        let p = perforation_pressure(1000.0, 2000.0, 2100.0, 62.4, &u);
        assert!((p - (1000.0 + 62.4 / 144.0 * 100.0)).abs() < 1e-12);
        assert!((p - 1043.33).abs() < 0.01);
    }

    #[test]
    fn perforation_rate_sign_and_zero() {
        let oil = pvt(40.0, 58.0);
        let water = pvt(0.5, 62.4);
        let sat = SatFuncTable::corey(0.1, 0.1, 0.6, 0.9, 2.0, 2.0, 11).unwrap();
        let p = Dual::var(2000.0, W_PF);
        let s = Dual::var(0.4, W_SWF);
        // equal pressures: zero rate
        let pb = Dual::var(2000.0, W_PBH);
        for is_water in [false, true] {
            let q = perforation_rate(WellKind::Producer, is_water, 200.0 * 0.001127, &oil, &water, &sat, p, s, pb);
            assert_eq!(q.v, 0.0);
        }
        // producer drawdown: both phase rates out of the cell (negative)
        let pb = Dual::var(1500.0, W_PBH);
        for is_water in [false, true] {
            let q = perforation_rate(WellKind::Producer, is_water, 200.0 * 0.001127, &oil, &water, &sat, p, s, pb);
            assert!(q.v <= 0.0);
        }
    }

    #[test]
    fn perforation_rate_fixed_mobility_magnitude() {
        // constant-kr table gives lambda = kr * rho / mu exactly
        let oil = pvt(1.0, 1.0 / crate::props::FT3_PER_BBL); // mass_per_stb = 1
        let water = pvt(1.0, 1.0 / crate::props::FT3_PER_BBL);
        let sat = SatFuncTable::from_rows(vec![
            crate::props::SatRow { sw: 0.0, krw: 1.0, kro: 1.0, pcow: 0.0 },
            crate::props::SatRow { sw: 1.0, krw: 1.0, kro: 1.0, pcow: 0.0 },
        ])
        .unwrap();
        let p = Dual::var(2000.0, W_PF);
        let s = Dual::var(0.5, W_SWF);
        let pb = Dual::var(1900.0, W_PBH);
        let q = perforation_rate(WellKind::Producer, false, 0.001127 * 200.0, &oil, &water, &sat, p, s, pb);
        // lambda * rho = 1 * rho / 1; |q| = 0.001127 * 200 * rho * 100
        let rho = 1.0 / crate::props::FT3_PER_BBL;
        assert!((q.v + 0.001127 * 200.0 * rho * 100.0).abs() < 1e-12);
        // derivative wrt p_bh is the rate slope
        assert!((q.d[W_PBH] - 0.001127 * 200.0 * rho).abs() < 1e-12);
    }

    #[test]
    fn constraint_switching_rules() {
        let spec = WellSpec {
            name: "P1".into(),
            kind: WellKind::Producer,
            perforations: vec![],
            max_rate: 300.0,
            bhp_limit: 15.0,
            ref_depth: None,
            initial_mode: ControlMode::Rate,
        };
        // rate-mode producer below the BHP floor flips to BHP control
        assert_eq!(
            constraint_violation(&spec, ControlMode::Rate, 10.0, 300.0, 1e-6),
            Some(ControlMode::Bhp)
        );
        assert_eq!(constraint_violation(&spec, ControlMode::Rate, 100.0, 300.0, 1e-6), None);
        // BHP-mode producer above the rate limit flips back
        assert_eq!(
            constraint_violation(&spec, ControlMode::Bhp, 15.0, 400.0, 1e-6),
            Some(ControlMode::Rate)
        );
        assert_eq!(constraint_violation(&spec, ControlMode::Bhp, 15.0, 200.0, 1e-6), None);
    }
}
