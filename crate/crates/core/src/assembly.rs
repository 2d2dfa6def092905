//! Fully implicit residual and Jacobian assembly for the dual-porosity
//! two-phase system.
//!
//! Residual ordering per cell: (oil fracture, water fracture, oil matrix,
//! water matrix), then one equation per well. Sign convention, all terms
//! moved to the left-hand side:
//!
//! ```text
//! R_of = acc_of - sum_faces F_o,in + q_o,mf - q_o,well
//! R_wf = acc_wf - sum_faces F_w,in + q_w,mf - q_w,well
//! R_om = acc_om - q_o,mf
//! R_wm = acc_wm - q_w,mf
//! ```
//!
//! with `q_mf = coeff * (lambda rho)_upstream * (p_phase,f - p_phase,m)` so
//! the fracture and matrix transfer contributions cancel exactly within a
//! cell, and face fluxes evaluated once in a canonical (low cell, high cell)
//! frame so the two incident rows receive bitwise-opposite contributions.
//!
//! Cell equations are scaled by dt/V by default, making the Newton tolerance
//! mesh-insensitive; rate equations scale by the rate target and BHP
//! equations by the pressure limit.
//!
//! Parallelism: cell rows are assembled over fixed grid-derived chunks, each
//! worker writing only rows it owns; both endpoints of a cross-chunk face
//! evaluate the identical canonical flux. Results are bitwise reproducible
//! at any worker count.

use crate::dual::Dual;
use crate::grid::Grid;
use crate::linear::block::CellRowsMut;
use crate::linear::{BlockMatrix, Partitioning, BLOCK};
use crate::props::{FluidPvt, SatFuncTable, UnitConstants};
use crate::scalar::{lit, Scalar};
use crate::state::State;
use crate::wells::{
    perforation_rate, resolve_well_index, ControlMode, WellError, WellKind, WellRuntime,
    WellSpec, W_PBH, W_PF, W_SWF,
};
use rayon::prelude::*;

/// Fluid and rock-fluid description shared by every cell.
#[derive(Clone, Debug)]
pub struct FluidSystem<S> {
    pub oil: FluidPvt<S>,
    pub water: FluidPvt<S>,
    pub sat_matrix: SatFuncTable<S>,
    pub sat_fracture: SatFuncTable<S>,
    pub units: UnitConstants<S>,
}

/// Per-well, per-phase rates at one state, reported in the well's natural
/// sign convention (production positive for producers, injection positive
/// for injectors). Computed through the same perforation-rate code path as
/// the residual.
#[derive(Clone, Copy, Debug)]
pub struct WellRates<S> {
    /// Mass rates into the perforated cells (negative for producers).
    pub oil_mass_into_cells: S,
    pub water_mass_into_cells: S,
    /// Surface rates, STB/day, well-convention signs.
    pub oil_surface: S,
    pub water_surface: S,
    /// Reservoir-volume water rate, bbl/day, well-convention sign.
    pub water_reservoir_bbl: S,
}

// dual slots for cell-local terms
const C_PF: usize = 0;
const C_SWF: usize = 1;
const C_PM: usize = 2;
const C_SWM: usize = 3;
// dual slots for face terms
const F_PLO: usize = 0;
const F_SLO: usize = 1;
const F_PHI: usize = 2;
const F_SHI: usize = 3;

type D4<S> = Dual<S, 4>;

/// Residual and Jacobian builder bound to one grid, fluid system and well
/// list. Construction resolves well indices and reference depths.
pub struct Assembler<'a, S> {
    pub grid: &'a Grid<S>,
    pub fluid: &'a FluidSystem<S>,
    pub wells: Vec<WellSpec<S>>,
    /// darcy * WI per (well, perforation)
    wi_darcy: Vec<Vec<S>>,
    ref_depth: Vec<S>,
    /// (well, perforation) pairs incident to each cell
    cell_perfs: Vec<Vec<(usize, usize)>>,
    pub scaling: bool,
}

impl<'a, S: Scalar> Assembler<'a, S> {
    pub fn new(
        grid: &'a Grid<S>,
        fluid: &'a FluidSystem<S>,
        wells: Vec<WellSpec<S>>,
        scaling: bool,
    ) -> Result<Self, WellError> {
        let mut wi_darcy = Vec::with_capacity(wells.len());
        let mut ref_depth = Vec::with_capacity(wells.len());
        let mut cell_perfs = vec![Vec::new(); grid.n_cells()];
        for (w, spec) in wells.iter().enumerate() {
            if spec.perforations.is_empty() {
                return Err(WellError::Invalid {
                    well: spec.name.clone(),
                    what: "well needs at least one perforation".into(),
                });
            }
            if spec.max_rate < S::zero() {
                return Err(WellError::Invalid {
                    well: spec.name.clone(),
                    what: "rate limit must be >= 0".into(),
                });
            }
            let mut wi_row = Vec::with_capacity(spec.perforations.len());
            for (p, perf) in spec.perforations.iter().enumerate() {
                let wi = resolve_well_index(spec, perf, grid)?;
                wi_row.push(fluid.units.darcy * wi);
                cell_perfs[perf.cell].push((w, p));
            }
            wi_darcy.push(wi_row);
            ref_depth.push(spec.ref_depth.unwrap_or(grid.depth[spec.perforations[0].cell]));
        }
        Ok(Assembler { grid, fluid, wells, wi_darcy, ref_depth, cell_perfs, scaling })
    }

    /// Total darcy-scaled well index, for deliverability estimates.
    pub fn total_wi_darcy(&self, well: usize) -> S {
        let mut acc = S::zero();
        for v in &self.wi_darcy[well] {
            acc += *v;
        }
        acc
    }

    pub fn ref_depth(&self, well: usize) -> S {
        self.ref_depth[well]
    }

    /// Allocate a block system matching this problem's sparsity.
    pub fn new_system(&self) -> (BlockMatrix<S>, Vec<S>) {
        let n = self.grid.n_cells();
        let mut neighbors = vec![Vec::new(); n];
        for c in &self.grid.connections {
            neighbors[c.cell_i].push(c.cell_j);
            neighbors[c.cell_j].push(c.cell_i);
        }
        let well_cells: Vec<Vec<usize>> = self
            .wells
            .iter()
            .map(|w| w.perforations.iter().map(|p| p.cell).collect())
            .collect();
        let a = BlockMatrix::from_pattern(n, &neighbors, &well_cells);
        let r = vec![S::zero(); a.n_unknowns()];
        (a, r)
    }

    /// Fill `a` and `r` with the Jacobian and residual at `state`.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        &self,
        state: &State<S>,
        old: &State<S>,
        dt: S,
        rt: &[WellRuntime<S>],
        part: &Partitioning,
        a: &mut BlockMatrix<S>,
        r: &mut [S],
    ) {
        debug_assert_eq!(rt.len(), self.wells.len());
        a.zero_values();
        for v in r.iter_mut() {
            *v = S::zero();
        }
        let n = self.grid.n_cells();
        let (r_cells, r_wells) = r.split_at_mut(n * BLOCK);

        // parallel cell pass: each chunk owns its rows of A and r, and
        // returns its well-border column contributions for a sequential merge
        let views = a.cell_rows_chunks(&part.chunks);
        let r_views: Vec<&mut [S]> = {
            let mut out = Vec::with_capacity(part.chunks.len());
            let mut rest = r_cells;
            for range in &part.chunks {
                let (mine, tail) = rest.split_at_mut((range.end - range.start) * BLOCK);
                out.push(mine);
                rest = tail;
            }
            out
        };
        let border: Vec<Vec<(usize, usize, [S; BLOCK])>> = views
            .into_par_iter()
            .zip(r_views)
            .map(|(mut view, r_chunk)| {
                let mut wellcols = Vec::new();
                let range = view.range.clone();
                for cell in range {
                    self.assemble_cell(cell, state, old, dt, rt, &mut view, r_chunk, &mut wellcols);
                }
                wellcols
            })
            .collect();
        for chunk in border {
            for (w, cell, col) in chunk {
                let dst = a.well_col_mut(w, cell);
                for (d, s) in dst.iter_mut().zip(col) {
                    *d += s;
                }
            }
        }

        // sequential well-equation pass
        for (w, spec) in self.wells.iter().enumerate() {
            self.assemble_well_row(w, spec, state, &rt[w], a, &mut r_wells[w]);
        }
    }

    /// Residual-only evaluation into `r` (used by finite-difference checks
    /// and reporting); shares every term with `assemble`.
    #[allow(clippy::too_many_arguments)]
    pub fn residual(
        &self,
        state: &State<S>,
        old: &State<S>,
        dt: S,
        rt: &[WellRuntime<S>],
        part: &Partitioning,
        scratch: &mut BlockMatrix<S>,
        r: &mut [S],
    ) {
        self.assemble(state, old, dt, rt, part, scratch, r);
    }

    fn row_factor(&self, cell: usize, dt: S) -> S {
        if self.scaling {
            dt / self.grid.volume[cell]
        } else {
            S::one()
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble_cell(
        &self,
        cell: usize,
        state: &State<S>,
        old: &State<S>,
        dt: S,
        rt: &[WellRuntime<S>],
        view: &mut CellRowsMut<'_, S>,
        r_chunk: &mut [S],
        wellcols: &mut Vec<(usize, usize, [S; BLOCK])>,
    ) {
        let g = self.grid;
        let f = self.fluid;
        let v_over_dt = g.volume[cell] / dt;
        let factor = self.row_factor(cell, dt);
        let chunk_base = view.range.start;

        let p_f = D4::var(state.p_f[cell], C_PF);
        let s_wf = D4::var(state.s_wf[cell], C_SWF);
        let p_m = D4::var(state.p_m[cell], C_PM);
        let s_wm = D4::var(state.s_wm[cell], C_SWM);

        let mut res = [D4::constant(S::zero()); BLOCK];

        // accumulation, both continua
        let (acc_of, acc_wf) = accumulation_pair(
            &f.oil,
            &f.water,
            &g.fracture[cell].rock,
            &f.sat_fracture,
            p_f,
            s_wf,
            old.p_f[cell],
            old.s_wf[cell],
            v_over_dt,
        );
        let (acc_om, acc_wm) = accumulation_pair(
            &f.oil,
            &f.water,
            &g.matrix[cell].rock,
            &f.sat_matrix,
            p_m,
            s_wm,
            old.p_m[cell],
            old.s_wm[cell],
            v_over_dt,
        );
        res[0] = res[0] + acc_of;
        res[1] = res[1] + acc_wf;
        res[2] = res[2] + acc_om;
        res[3] = res[3] + acc_wm;

        // matrix-fracture transfer
        let (q_o_mf, q_w_mf) = self.transfer_fluxes(cell, p_f, s_wf, p_m, s_wm);
        res[0] = res[0] + q_o_mf;
        res[1] = res[1] + q_w_mf;
        res[2] = res[2] - q_o_mf;
        res[3] = res[3] - q_w_mf;

        // fracture face fluxes; canonical evaluation on (lo, hi)
        for &ci in &g.cell_connections[cell] {
            let conn = &g.connections[ci];
            let (lo, hi) = (conn.cell_i, conn.cell_j);
            let p_lo = D4::var(state.p_f[lo], F_PLO);
            let s_lo = D4::var(state.s_wf[lo], F_SLO);
            let p_hi = D4::var(state.p_f[hi], F_PHI);
            let s_hi = D4::var(state.s_wf[hi], F_SHI);
            let (f_o, f_w) = self.face_fluxes(conn.trans, g.depth[lo], g.depth[hi], p_lo, s_lo, p_hi, s_hi);
            // f_* is the rate into `lo`; rows subtract inflow
            let (into_self, other) = if cell == lo { (true, hi) } else { (false, lo) };
            for (row, flux) in [(0usize, f_o), (1usize, f_w)] {
                let signed = if into_self { -flux.v } else { flux.v };
                res[row] = res[row] + D4::constant(signed);
                // derivative slots: (p_lo, s_lo, p_hi, s_hi); own cols vs neighbor cols
                let (own, nbr) = if cell == lo {
                    ([flux.d[F_PLO], flux.d[F_SLO]], [flux.d[F_PHI], flux.d[F_SHI]])
                } else {
                    ([flux.d[F_PHI], flux.d[F_SHI]], [flux.d[F_PLO], flux.d[F_SLO]])
                };
                let sign = if into_self { -S::one() } else { S::one() };
                let diag = view.diag_mut(cell);
                diag[row * BLOCK + C_PF] += sign * own[0] * factor;
                diag[row * BLOCK + C_SWF] += sign * own[1] * factor;
                let off = view.block_mut(cell, other);
                off[row * BLOCK + C_PF] += sign * nbr[0] * factor;
                off[row * BLOCK + C_SWF] += sign * nbr[1] * factor;
            }
        }

        // well sink/source terms on the fracture rows
        for &(w, perf) in &self.cell_perfs[cell] {
            let spec = &self.wells[w];
            let wi = self.wi_darcy[w][perf];
            let head = rt[w].mix_density * f.units.gravity * (g.depth[cell] - self.ref_depth[w]);
            let p_perf = D4::var(state.p_bh[w], W_PBH) + D4::constant(head);
            let p_fw = D4::var(state.p_f[cell], W_PF);
            let s_fw = D4::var(state.s_wf[cell], W_SWF);
            let q_o = perforation_rate(spec.kind, false, wi, &f.oil, &f.water, &f.sat_fracture, p_fw, s_fw, p_perf);
            let q_w = perforation_rate(spec.kind, true, wi, &f.oil, &f.water, &f.sat_fracture, p_fw, s_fw, p_perf);
            let mut col = [S::zero(); BLOCK];
            for (row, q) in [(0usize, q_o), (1usize, q_w)] {
                res[row] = res[row] - D4::constant(q.v);
                let diag = view.diag_mut(cell);
                diag[row * BLOCK + C_PF] -= q.d[W_PF] * factor;
                diag[row * BLOCK + C_SWF] -= q.d[W_SWF] * factor;
                col[row] = -q.d[W_PBH] * factor;
            }
            wellcols.push((w, cell, col));
        }

        // write the cell-local rows: residual plus the dual partials that
        // target this cell's own four unknowns
        let diag = view.diag_mut(cell);
        for row in 0..BLOCK {
            for colu in 0..BLOCK {
                diag[row * BLOCK + colu] += res[row].d[colu] * factor;
            }
            r_chunk[(cell - chunk_base) * BLOCK + row] = res[row].v * factor;
        }
    }

    /// Transfer mass rates, positive fracture -> matrix (enters the fracture
    /// rows with + sign and the matrix rows with - sign).
    fn transfer_fluxes(
        &self,
        cell: usize,
        p_f: D4<S>,
        s_wf: D4<S>,
        p_m: D4<S>,
        s_wm: D4<S>,
    ) -> (D4<S>, D4<S>) {
        let f = self.fluid;
        let coeff = self.grid.transfer_coeff[cell];
        if coeff == S::zero() {
            return (D4::constant(S::zero()), D4::constant(S::zero()));
        }

        // oil: phase pressures are the primary pressures
        let dp_o = p_f - p_m;
        let lam_o = if p_m.v > p_f.v {
            // matrix side is upstream
            let sv = f.sat_matrix.eval(s_wm.v);
            let kro = D4::chain(sv.kro, &s_wm);
            let rho = D4::chain(f.oil.density(p_m.v), &p_m);
            (kro * rho).scale(S::one() / f.oil.viscosity)
        } else {
            let sv = f.sat_fracture.eval(s_wf.v);
            let kro = D4::chain(sv.kro, &s_wf);
            let rho = D4::chain(f.oil.density(p_f.v), &p_f);
            (kro * rho).scale(S::one() / f.oil.viscosity)
        };
        let q_o = (lam_o * dp_o).scale(coeff);

        // water: capillary pressure of each continuum's own table
        let sv_f = f.sat_fracture.eval(s_wf.v);
        let sv_m = f.sat_matrix.eval(s_wm.v);
        let p_wf = p_f - D4::chain(sv_f.pcow, &s_wf);
        let p_wm = p_m - D4::chain(sv_m.pcow, &s_wm);
        let dp_w = p_wf - p_wm;
        let lam_w = if p_wm.v > p_wf.v {
            let krw = D4::chain(sv_m.krw, &s_wm);
            let rho = D4::chain(f.water.density(p_wm.v), &p_wm);
            (krw * rho).scale(S::one() / f.water.viscosity)
        } else {
            let krw = D4::chain(sv_f.krw, &s_wf);
            let rho = D4::chain(f.water.density(p_wf.v), &p_wf);
            (krw * rho).scale(S::one() / f.water.viscosity)
        };
        let q_w = (lam_w * dp_w).scale(coeff);
        (q_o, q_w)
    }

    /// Upwinded two-phase mass fluxes through one face, positive into `lo`.
    #[allow(clippy::too_many_arguments)]
    fn face_fluxes(
        &self,
        trans: S,
        z_lo: S,
        z_hi: S,
        p_lo: D4<S>,
        s_lo: D4<S>,
        p_hi: D4<S>,
        s_hi: D4<S>,
    ) -> (D4<S>, D4<S>) {
        let f = self.fluid;
        if trans == S::zero() {
            return (D4::constant(S::zero()), D4::constant(S::zero()));
        }
        let g_dz = f.units.gravity * (z_hi - z_lo);
        let half = lit::<S>(0.5);

        // oil
        let rho_o_lo = D4::chain(f.oil.density(p_lo.v), &p_lo);
        let rho_o_hi = D4::chain(f.oil.density(p_hi.v), &p_hi);
        let rho_bar_o = (rho_o_lo + rho_o_hi).scale(half);
        let dphi_o = (p_hi - p_lo) - rho_bar_o.scale(g_dz);
        let lam_o = if dphi_o.v > S::zero() {
            let sv = f.sat_fracture.eval(s_hi.v);
            (D4::chain(sv.kro, &s_hi) * rho_o_hi).scale(S::one() / f.oil.viscosity)
        } else {
            let sv = f.sat_fracture.eval(s_lo.v);
            (D4::chain(sv.kro, &s_lo) * rho_o_lo).scale(S::one() / f.oil.viscosity)
        };
        let f_o = (lam_o * dphi_o).scale(trans);

        // water, with phase pressure p_w = p - pcow(s_w)
        let sv_lo = f.sat_fracture.eval(s_lo.v);
        let sv_hi = f.sat_fracture.eval(s_hi.v);
        let p_w_lo = p_lo - D4::chain(sv_lo.pcow, &s_lo);
        let p_w_hi = p_hi - D4::chain(sv_hi.pcow, &s_hi);
        let rho_w_lo = D4::chain(f.water.density(p_w_lo.v), &p_w_lo);
        let rho_w_hi = D4::chain(f.water.density(p_w_hi.v), &p_w_hi);
        let rho_bar_w = (rho_w_lo + rho_w_hi).scale(half);
        let dphi_w = (p_w_hi - p_w_lo) - rho_bar_w.scale(g_dz);
        let lam_w = if dphi_w.v > S::zero() {
            (D4::chain(sv_hi.krw, &s_hi) * rho_w_hi).scale(S::one() / f.water.viscosity)
        } else {
            (D4::chain(sv_lo.krw, &s_lo) * rho_w_lo).scale(S::one() / f.water.viscosity)
        };
        let f_w = (lam_w * dphi_w).scale(trans);
        (f_o, f_w)
    }

    fn assemble_well_row(
        &self,
        w: usize,
        spec: &WellSpec<S>,
        state: &State<S>,
        rt: &WellRuntime<S>,
        a: &mut BlockMatrix<S>,
        r_w: &mut S,
    ) {
        match rt.mode {
            ControlMode::Bhp => {
                let scale = S::one() / spec.bhp_limit.abs().max(S::one());
                *r_w = (state.p_bh[w] - spec.bhp_limit) * scale;
                *a.well_diag_mut(w) = scale;
                // row blocks stay zero
            }
            ControlMode::Rate => {
                // controlled phase: water for injectors, oil for producers;
                // production-positive for producers, injection-positive for
                // injectors
                let f = self.fluid;
                let is_water = spec.kind == WellKind::Injector;
                let mps = if is_water { f.water.mass_per_stb() } else { f.oil.mass_per_stb() };
                let sign = match spec.kind {
                    WellKind::Producer => -S::one(),
                    WellKind::Injector => S::one(),
                };
                let scale = S::one() / spec.max_rate.abs().max(S::one());
                let mut total = -spec.max_rate;
                let mut diag = S::zero();
                for (perf, p) in spec.perforations.iter().enumerate() {
                    let cell = p.cell;
                    let wi = self.wi_darcy[w][perf];
                    let head =
                        rt.mix_density * f.units.gravity * (self.grid.depth[cell] - self.ref_depth[w]);
                    let p_perf = D4::var(state.p_bh[w], W_PBH) + D4::constant(head);
                    let p_fw = D4::var(state.p_f[cell], W_PF);
                    let s_fw = D4::var(state.s_wf[cell], W_SWF);
                    let q = perforation_rate(
                        spec.kind,
                        is_water,
                        wi,
                        &f.oil,
                        &f.water,
                        &f.sat_fracture,
                        p_fw,
                        s_fw,
                        p_perf,
                    );
                    let conv = sign / mps;
                    total += q.v * conv;
                    let row = a.well_row_mut(w, cell);
                    row[C_PF] += q.d[W_PF] * conv * scale;
                    row[C_SWF] += q.d[W_SWF] * conv * scale;
                    diag += q.d[W_PBH] * conv * scale;
                }
                *r_w = total * scale;
                *a.well_diag_mut(w) = diag;
            }
        }
    }

    /// Phase rates per well at `state`, same code path as the residual terms.
    pub fn well_rates(&self, state: &State<S>, rt: &[WellRuntime<S>]) -> Vec<WellRates<S>> {
        let f = self.fluid;
        let mut out = Vec::with_capacity(self.wells.len());
        for (w, spec) in self.wells.iter().enumerate() {
            let mut oil_mass = S::zero();
            let mut water_mass = S::zero();
            let mut water_res_bbl = S::zero();
            for (perf, p) in spec.perforations.iter().enumerate() {
                let cell = p.cell;
                let wi = self.wi_darcy[w][perf];
                let head =
                    rt[w].mix_density * f.units.gravity * (self.grid.depth[cell] - self.ref_depth[w]);
                let p_perf = D4::var(state.p_bh[w], W_PBH) + D4::constant(head);
                let p_fw = D4::var(state.p_f[cell], W_PF);
                let s_fw = D4::var(state.s_wf[cell], W_SWF);
                let q_o = perforation_rate(spec.kind, false, wi, &f.oil, &f.water, &f.sat_fracture, p_fw, s_fw, p_perf);
                let q_w = perforation_rate(spec.kind, true, wi, &f.oil, &f.water, &f.sat_fracture, p_fw, s_fw, p_perf);
                oil_mass += q_o.v;
                water_mass += q_w.v;
                let rho_w = f.water.density(state.p_f[cell]).value;
                water_res_bbl += q_w.v / (rho_w * lit(crate::props::FT3_PER_BBL));
            }
            let sign = match spec.kind {
                WellKind::Producer => -S::one(),
                WellKind::Injector => S::one(),
            };
            out.push(WellRates {
                oil_mass_into_cells: oil_mass,
                water_mass_into_cells: water_mass,
                oil_surface: sign * oil_mass / f.oil.mass_per_stb(),
                water_surface: sign * water_mass / f.water.mass_per_stb(),
                water_reservoir_bbl: sign * water_res_bbl,
            });
        }
        out
    }

    /// Produced-fluid mixture density at the perforations, rate-weighted;
    /// used to lag the wellbore hydrostatic correction between Newton
    /// iterates. Injectors always carry water density.
    pub fn wellbore_mix_density(&self, state: &State<S>, rt: &[WellRuntime<S>]) -> Vec<S> {
        let f = self.fluid;
        let rates = self.well_rates(state, rt);
        self.wells
            .iter()
            .zip(rates)
            .map(|(spec, q)| match spec.kind {
                WellKind::Injector => f.water.density(state.p_f[spec.perforations[0].cell]).value,
                WellKind::Producer => {
                    let qo = q.oil_mass_into_cells.abs();
                    let qw = q.water_mass_into_cells.abs();
                    let total = qo + qw;
                    let p = state.p_f[spec.perforations[0].cell];
                    if total > S::zero() {
                        (f.oil.density(p).value * qo + f.water.density(p).value * qw) / total
                    } else {
                        f.oil.density(p).value
                    }
                }
            })
            .collect()
    }

    /// Phase mass in place, (oil, water), evaluated from a state snapshot
    /// with the same property formulas as the accumulation terms.
    pub fn mass_in_place(&self, state: &State<S>) -> (S, S) {
        let g = self.grid;
        let f = self.fluid;
        let per_cell: Vec<(S, S)> = (0..g.n_cells())
            .into_par_iter()
            .map(|c| {
                let mut oil = S::zero();
                let mut water = S::zero();
                for (p, s_w, rock, sat) in [
                    (state.p_f[c], state.s_wf[c], &g.fracture[c].rock, &f.sat_fracture),
                    (state.p_m[c], state.s_wm[c], &g.matrix[c].rock, &f.sat_matrix),
                ] {
                    let phi = rock.porosity(p).value;
                    let pc = sat.eval(s_w).pcow.value;
                    let rho_o = f.oil.density(p).value;
                    let rho_w = f.water.density(p - pc).value;
                    oil += g.volume[c] * phi * (S::one() - s_w) * rho_o;
                    water += g.volume[c] * phi * s_w * rho_w;
                }
                (oil, water)
            })
            .collect();
        let mut oil = S::zero();
        let mut water = S::zero();
        for (o, w) in per_cell {
            oil += o;
            water += w;
        }
        (oil, water)
    }
}

/// Backward-Euler accumulation pair for one continuum of one cell, already
/// multiplied by V/dt.
#[allow(clippy::too_many_arguments)]
fn accumulation_pair<S: Scalar>(
    oil: &FluidPvt<S>,
    water: &FluidPvt<S>,
    rock: &crate::props::RockCompressibility<S>,
    sat: &SatFuncTable<S>,
    p: D4<S>,
    s_w: D4<S>,
    p_old: S,
    s_w_old: S,
    v_over_dt: S,
) -> (D4<S>, D4<S>) {
    let phi = D4::chain(rock.porosity(p.v), &p);
    let sv = sat.eval(s_w.v);
    let pc = D4::chain(sv.pcow, &s_w);
    let p_w = p - pc;
    let rho_o = D4::chain(oil.density(p.v), &p);
    let rho_w = D4::chain(water.density(p_w.v), &p_w);
    let s_o = D4::constant(S::one()) - s_w;

    let phi_old = rock.porosity(p_old).value;
    let pc_old = sat.eval(s_w_old).pcow.value;
    let rho_o_old = oil.density(p_old).value;
    let rho_w_old = water.density(p_old - pc_old).value;
    let old_o = phi_old * (S::one() - s_w_old) * rho_o_old;
    let old_w = phi_old * s_w_old * rho_w_old;

    let acc_o = (phi * s_o * rho_o - D4::constant(old_o)).scale(v_over_dt);
    let acc_w = (phi * s_w * rho_w - D4::constant(old_w)).scale(v_over_dt);
    (acc_o, acc_w)
}
