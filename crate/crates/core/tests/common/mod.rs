//! Shared oracles for the integration suites: dense direct solves,
//! finite-difference Jacobians, an independent single-porosity reference
//! simulator and the Welge fractional-flow construction. Everything here is
//! deliberately simple and separate from the library's solution path.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use fracflow::assembly::Assembler;
use fracflow::linear::Partitioning;
use fracflow::state::State;
use fracflow::wells::WellRuntime;
use std::path::PathBuf;

pub fn deck_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../decks").join(name)
}

/// Deterministic uniform pseudo-random numbers in [-1, 1).
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }
    pub fn uniform(&mut self) -> f64 {
        0.5 * (self.next() + 1.0)
    }
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system in oracle");
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    x
}

/// Column-by-column central-difference Jacobian of the assembled residual:
/// pressure-like unknowns use h = 1e-2 psi, saturations h = 1e-6.
pub fn fd_jacobian(
    asm: &Assembler<'_, f64>,
    old: &State<f64>,
    state: &State<f64>,
    dt: f64,
    rt: &[WellRuntime<f64>],
    part: &Partitioning,
) -> Vec<Vec<f64>> {
    let n = state.n_unknowns();
    let n_cells = state.n_cells();
    let n_wells = state.n_wells();
    let (mut scratch, _) = asm.new_system();
    let mut r_plus = vec![0.0; n];
    let mut r_minus = vec![0.0; n];
    let mut jac = vec![vec![0.0; n]; n];
    let base = state.to_vec();
    for col in 0..n {
        let is_saturation = col < 4 * n_cells && (col % 4 == 1 || col % 4 == 3);
        let h = if is_saturation { 1e-6 } else { 1e-2 };
        let mut v = base.clone();
        v[col] += h;
        let sp = State::from_vec(&v, n_cells, n_wells);
        asm.assemble(&sp, old, dt, rt, part, &mut scratch, &mut r_plus);
        v[col] = base[col] - h;
        let sm = State::from_vec(&v, n_cells, n_wells);
        asm.assemble(&sm, old, dt, rt, part, &mut scratch, &mut r_minus);
        for row in 0..n {
            jac[row][col] = (r_plus[row] - r_minus[row]) / (2.0 * h);
        }
    }
    jac
}

/// Entry-wise comparison per the acceptance rule: relative error below
/// `tol_rel` except for entries under `abs_floor`, which get `tol_small`;
/// entries where both sides sit under the floor count as matching.
pub struct JacCompare {
    pub max_rel: f64,
    pub worst: (usize, usize, f64, f64),
    pub failures: usize,
}

pub fn compare_jacobians(
    analytic: &[Vec<f64>],
    fd: &[Vec<f64>],
    tol_rel: f64,
    abs_floor: f64,
    tol_small: f64,
) -> JacCompare {
    let mut out = JacCompare { max_rel: 0.0, worst: (0, 0, 0.0, 0.0), failures: 0 };
    for (r, (ar, fr)) in analytic.iter().zip(fd).enumerate() {
        for (c, (&a, &f)) in ar.iter().zip(fr).enumerate() {
            let denom = a.abs().max(f.abs());
            if denom < abs_floor {
                continue;
            }
            let rel = (a - f).abs() / denom;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = (r, c, a, f);
            }
            let tol = if a.abs() < abs_floor || f.abs() < abs_floor { tol_small } else { tol_rel };
            if rel > tol {
                out.failures += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Independent single-porosity two-phase reference simulator (fracture-only
// physics; wells on fixed BHP). Hand-rolled property formulas, FD Jacobian,
// dense direct solves.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
pub struct RefFluid {
    pub p_ref: f64,
    pub b_ref: f64,
    pub comp: f64,
    pub visc: f64,
    pub dens_sc: f64,
}

impl RefFluid {
    fn density(&self, p: f64) -> f64 {
        self.dens_sc / (self.b_ref * (-self.comp * (p - self.p_ref)).exp())
    }
}

#[derive(Clone)]
pub struct RefTable {
    pub rows: Vec<[f64; 4]>, // sw, krw, kro, pcow
}

impl RefTable {
    /// Corey sampling with the same node layout as the production tables.
    pub fn corey(swc: f64, sor: f64, krw_max: f64, kro_max: f64, nw: f64, no: f64, n: usize) -> Self {
        let span = 1.0 - swc - sor;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let frac = i as f64 / (n - 1) as f64;
            let sw = swc + span * frac;
            rows.push([sw, krw_max * frac.powf(nw), kro_max * (1.0 - frac).powf(no), 0.0]);
        }
        rows[0][1] = 0.0;
        let last = rows.len() - 1;
        rows[last][2] = 0.0;
        RefTable { rows }
    }

    fn eval(&self, sw: f64) -> (f64, f64, f64) {
        let rows = &self.rows;
        let n = rows.len();
        if sw < rows[0][0] {
            return (rows[0][1], rows[0][2], rows[0][3]);
        }
        if sw > rows[n - 1][0] {
            return (rows[n - 1][1], rows[n - 1][2], rows[n - 1][3]);
        }
        let mut hi = 1;
        while hi < n - 1 && sw > rows[hi][0] {
            hi += 1;
        }
        let (a, b) = (&rows[hi - 1], &rows[hi]);
        let t = (sw - a[0]) / (b[0] - a[0]);
        (
            a[1] + (b[1] - a[1]) * t,
            a[2] + (b[2] - a[2]) * t,
            a[3] + (b[3] - a[3]) * t,
        )
    }
}

pub struct RefWell {
    pub cell: usize,
    /// darcy-scaled well index
    pub wi_darcy: f64,
    pub bhp: f64,
}

/// 1D/2D single-layer single-porosity model: no gravity, no capillary
/// pressure in the flux (table pcow still honored), fixed-BHP wells.
pub struct RefSim {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub perm: f64,
    pub poro_ref: f64,
    pub crock: f64,
    pub rock_pref: f64,
    pub oil: RefFluid,
    pub water: RefFluid,
    pub table: RefTable,
    pub wells: Vec<RefWell>,
}

impl RefSim {
    fn n(&self) -> usize {
        self.nx * self.ny
    }

    fn porosity(&self, p: f64) -> f64 {
        self.poro_ref * (1.0 + self.crock * (p - self.rock_pref))
    }

    fn trans(&self, axis: usize) -> f64 {
        let (d, area) = match axis {
            0 => (self.dx, self.dy * self.dz),
            _ => (self.dy, self.dx * self.dz),
        };
        0.001127 / (d / (self.perm * area))
    }

    /// Residual of (oil, water) equations per cell, scaled by dt/V like the
    /// production assembly.
    pub fn residual(&self, x: &[f64], old: &[f64], dt: f64) -> Vec<f64> {
        let n = self.n();
        let v = self.dx * self.dy * self.dz;
        let mut r = vec![0.0; 2 * n];
        let idx = |i: usize, j: usize| i + self.nx * j;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let c = idx(i, j);
                let (p, sw) = (x[2 * c], x[2 * c + 1]);
                let (po, so) = (old[2 * c], old[2 * c + 1]);
                let phi = self.porosity(p);
                let phi_o = self.porosity(po);
                let (_, _, pc) = self.table.eval(sw);
                let (_, _, pc_o) = self.table.eval(so);
                r[2 * c] += phi * (1.0 - sw) * self.oil.density(p) - phi_o * (1.0 - so) * self.oil.density(po);
                r[2 * c + 1] += phi * sw * self.water.density(p - pc) - phi_o * so * self.water.density(po - pc_o);
            }
        }
        // fluxes: upstream-weighted two-point, no gravity
        let add_face = |ca: usize, cb: usize, t: f64, r: &mut Vec<f64>| {
            let (pa, sa) = (x[2 * ca], x[2 * ca + 1]);
            let (pb, sb) = (x[2 * cb], x[2 * cb + 1]);
            // oil
            let dphi_o = pb - pa;
            let (up_s, up_p) = if dphi_o > 0.0 { (sb, pb) } else { (sa, pa) };
            let (_, kro, _) = self.table.eval(up_s);
            let f_o = t * kro * self.oil.density(up_p) / self.oil.visc * dphi_o;
            r[2 * ca] -= f_o * dt / v;
            r[2 * cb] += f_o * dt / v;
            // water with phase pressure
            let (_, _, pca) = self.table.eval(sa);
            let (_, _, pcb) = self.table.eval(sb);
            let (pwa, pwb) = (pa - pca, pb - pcb);
            let dphi_w = pwb - pwa;
            let (up_s, up_pw) = if dphi_w > 0.0 { (sb, pwb) } else { (sa, pwa) };
            let (krw, _, _) = self.table.eval(up_s);
            let f_w = t * krw * self.water.density(up_pw) / self.water.visc * dphi_w;
            r[2 * ca + 1] -= f_w * dt / v;
            r[2 * cb + 1] += f_w * dt / v;
        };
        let tx = self.trans(0);
        let ty = self.trans(1);
        for j in 0..self.ny {
            for i in 0..self.nx {
                if i + 1 < self.nx {
                    add_face(idx(i, j), idx(i + 1, j), tx, &mut r);
                }
                if j + 1 < self.ny {
                    add_face(idx(i, j), idx(i, j + 1), ty, &mut r);
                }
            }
        }
        // fixed-BHP wells, injected water at endpoint mobility
        for w in &self.wells {
            let c = w.cell;
            let (p, sw) = (x[2 * c], x[2 * c + 1]);
            let dp = w.bhp - p;
            if dp > 0.0 {
                // water injection
                let q_w = w.wi_darcy * self.water.density(p) / self.water.visc * dp;
                r[2 * c + 1] -= q_w * dt / v;
            } else {
                let (krw, kro, pc) = self.table.eval(sw);
                let q_o = w.wi_darcy * kro * self.oil.density(p) / self.oil.visc * dp;
                let q_w = w.wi_darcy * krw * self.water.density(p - pc) / self.water.visc * dp;
                r[2 * c] -= q_o * dt / v;
                r[2 * c + 1] -= q_w * dt / v;
            }
        }
        r
    }

    /// One backward-Euler step via Newton with an FD Jacobian and dense
    /// solves; converges the max-norm below `tol`.
    pub fn step(&self, old: &[f64], dt: f64, tol: f64) -> Vec<f64> {
        let n2 = 2 * self.n();
        let mut x = old.to_vec();
        for _ in 0..60 {
            let r = self.residual(&x, old, dt);
            let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm < tol {
                return x;
            }
            let mut jac = vec![vec![0.0; n2]; n2];
            for col in 0..n2 {
                let h = if col % 2 == 0 { 1e-4 } else { 1e-8 };
                let mut xp = x.clone();
                xp[col] += h;
                let rp = self.residual(&xp, old, dt);
                xp[col] = x[col] - h;
                let rm = self.residual(&xp, old, dt);
                for row in 0..n2 {
                    jac[row][col] = (rp[row] - rm[row]) / (2.0 * h);
                }
            }
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let y = dense_solve(jac, rhs);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi += yi;
            }
        }
        panic!("reference simulator did not converge");
    }
}

// ---------------------------------------------------------------------------
// Welge / fractional-flow construction for the linear waterflood benchmark.
// ---------------------------------------------------------------------------

pub struct CoreyFlow {
    pub swc: f64,
    pub sor: f64,
    pub krw_max: f64,
    pub kro_max: f64,
    pub nw: f64,
    pub no: f64,
    pub mu_w: f64,
    pub mu_o: f64,
}

impl CoreyFlow {
    pub fn fw(&self, sw: f64) -> f64 {
        let se = ((sw - self.swc) / (1.0 - self.swc - self.sor)).clamp(0.0, 1.0);
        let lw = self.krw_max * se.powf(self.nw) / self.mu_w;
        let lo = self.kro_max * (1.0 - se).powf(self.no) / self.mu_o;
        if lw + lo == 0.0 {
            0.0
        } else {
            lw / (lw + lo)
        }
    }

    /// Shock front saturation by the tangent construction from the initial
    /// saturation `swi`, on a fine enumeration grid.
    pub fn front_saturation(&self, swi: f64) -> f64 {
        let mut best_s = swi;
        let mut best_slope = 0.0;
        let fw_i = self.fw(swi);
        let steps = 200_000;
        for k in 1..=steps {
            let s = swi + (1.0 - self.sor - swi) * (k as f64) / (steps as f64);
            let slope = (self.fw(s) - fw_i) / (s - swi);
            if slope >= best_slope {
                best_slope = slope;
                best_s = s;
            }
        }
        best_s
    }

    /// Dimensionless shock position per pore volume injected.
    pub fn shock_velocity(&self, swi: f64) -> f64 {
        let sf = self.front_saturation(swi);
        (self.fw(sf) - self.fw(swi)) / (sf - swi)
    }
}
