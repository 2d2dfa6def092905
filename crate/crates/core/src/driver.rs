//! Simulation orchestration: deck building, initialization, adaptive time
//! stepping with constraint switching, reporting and checkpoint/restart.

use crate::assembly::{Assembler, FluidSystem};
use crate::deck::{
    self, ForcingSpec, KhEntry, PrecondSpec, SatFuncSpec, ScheduleSection, SimDeck, SpacingEntry,
    WellAction,
};
use crate::grid::{
    build_grid, ContinuumRock, Grid, GridDims, GridProps, ShapeFactorModel, TransferPerm,
};
use crate::linear::{BlockMatrix, CprConfig, Partitioning};
use crate::newton::{solve_timestep, ForcingRule, LinearConfig, NewtonConfig, PrecondChoice};
use crate::props::{FluidPvt, FvfModel, RockCompressibility, SatFuncTable, SatRow, UnitConstants};
use crate::report::{
    plot_script, write_csv, write_snapshot, write_summary, CumTotals, ReportRow, RunSummary,
    WellReport,
};
use crate::scalar::{lit, to_f64, Scalar};
use crate::state::{Damping, State};
use crate::wells::{
    constraint_violation, initial_bhp_guess, ControlMode, KhSpec, PerfGeometry, Perforation,
    RadiusModel, WellIndexSpec, WellKind, WellRuntime, WellSpec,
};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Deck(#[from] deck::DeckError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Prop(#[from] crate::props::PropError),
    #[error(transparent)]
    Well(#[from] crate::wells::WellError),
    #[error(transparent)]
    Linear(#[from] crate::linear::LinearError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("restart error: {0}")]
    Restart(String),
    #[error("{0}")]
    Usage(String),
}

/// Adaptive timestep control: grow on success, cut on failure, never step
/// past a schedule or report date.
#[derive(Clone, Copy, Debug)]
pub struct TimestepController<S> {
    pub dt_init: S,
    pub dt_min: S,
    pub dt_max: S,
    pub grow: S,
    pub cut: S,
    pub max_cuts: usize,
}

impl<S: Scalar> Default for TimestepController<S> {
    fn default() -> Self {
        TimestepController {
            dt_init: lit(1.0),
            dt_min: lit(0.01),
            dt_max: lit(50.0),
            grow: lit(2.0),
            cut: lit(0.5),
            max_cuts: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InitCond<S> {
    pub p_f: S,
    pub p_m: S,
    pub s_wf: S,
    pub s_wm: S,
}

/// Fully built, runnable model.
pub struct SimModel<S> {
    pub title: String,
    pub grid: Grid<S>,
    pub fluid: FluidSystem<S>,
    pub wells: Vec<WellSpec<S>>,
    pub newton: NewtonConfig<S>,
    pub linear: LinearConfig<S>,
    pub controller: TimestepController<S>,
    pub schedule: ScheduleSection<S>,
    pub init: InitCond<S>,
    pub scaling: bool,
    pub partitioning: Partitioning,
    pub snapshots_every: usize,
}

fn sat_table_from_spec<S: Scalar>(spec: &SatFuncSpec<S>) -> Result<SatFuncTable<S>, SimError> {
    let tab = match spec {
        SatFuncSpec::Corey { swc, sor, krw_max, kro_max, nw, no, n_points } => {
            SatFuncTable::corey(*swc, *sor, *krw_max, *kro_max, *nw, *no, *n_points)?
        }
        SatFuncSpec::Table(rows) => SatFuncTable::from_rows(
            rows.iter()
                .map(|r| SatRow { sw: r[0], krw: r[1], kro: r[2], pcow: r[3] })
                .collect(),
        )?,
    };
    Ok(tab)
}

impl<S: Scalar> SimModel<S> {
    pub fn from_deck(deck: &SimDeck<S>) -> Result<Self, SimError> {
        let g = &deck.grid;
        let dz = g.dz.expand(g.nz);
        let half = lit::<S>(0.5);
        let top_face = if g.tops_is_center { g.tops - half * dz[0] } else { g.tops };
        let dims = GridDims {
            nx: g.nx,
            ny: g.ny,
            nz: g.nz,
            dx: g.dx.expand(g.nx),
            dy: g.dy.expand(g.ny),
            dz,
            top_depth: top_face,
        };
        let n = dims.n_cells();
        let units = UnitConstants::default();

        let mk_rock = |r: &deck::RockSection<S>| -> Result<Vec<ContinuumRock<S>>, SimError> {
            let rock = RockCompressibility { phi_ref: r.poro, c_r: r.crock, p_ref: r.pref };
            rock.validate()?;
            Ok(vec![ContinuumRock { perm: r.perm, rock }; n])
        };
        let shape = match deck.fracture_extras.shape {
            deck::ShapeSpec::Kazemi => ShapeFactorModel::Kazemi,
            deck::ShapeSpec::WarrenRoot { sets, spacing } => ShapeFactorModel::WarrenRoot { sets, spacing },
            deck::ShapeSpec::Sigma(v) => ShapeFactorModel::Direct(v),
        };
        let spacing = deck.fracture_extras.spacing.map(|sp| {
            sp.map(|e| match e {
                SpacingEntry::Value(v) => Some(v),
                SpacingEntry::Inactive => None,
            })
        });
        let grid = build_grid(
            &dims,
            GridProps {
                matrix: mk_rock(&deck.matrix)?,
                fracture: mk_rock(&deck.fracture)?,
                shape_factor: shape,
                spacing,
                transfer_perm: if deck.fracture_extras.transfer_perm_avg {
                    TransferPerm::Average
                } else {
                    TransferPerm::XDir
                },
            },
            &units,
        )?;

        let model = if deck.pvt.linear_fvf { FvfModel::Linearized } else { FvfModel::Exponential };
        let mk_pvt = |l: &deck::PvtLine<S>| {
            let pvt = FluidPvt {
                p_ref: l.pref,
                b_ref: l.bref,
                compressibility: l.comp,
                viscosity: l.visc,
                density_sc: l.dens,
                model,
            };
            pvt.validate().map(|_| pvt)
        };
        let fluid = FluidSystem {
            oil: mk_pvt(&deck.pvt.oil)?,
            water: mk_pvt(&deck.pvt.water)?,
            sat_matrix: sat_table_from_spec(&deck.sat_matrix)?,
            sat_fracture: sat_table_from_spec(&deck.sat_fracture)?,
            units,
        };

        let mut wells = Vec::with_capacity(deck.wells.len());
        for w in &deck.wells {
            let perfs = w
                .perfs
                .iter()
                .map(|p| {
                    let cell = grid.index(p.i - 1, p.j - 1, p.k - 1);
                    let index = match p.wi {
                        Some(wi) => WellIndexSpec::Explicit(wi),
                        None => WellIndexSpec::Geometry(PerfGeometry {
                            k_h: match p.kh.expect("validated") {
                                KhEntry::Value(v) => KhSpec::Value(v),
                                KhEntry::Auto => KhSpec::Auto,
                            },
                            r_w: p.rw.expect("validated"),
                            skin: p.skin,
                            w_frac: p.wfrac,
                            w_g: p.wg,
                            radius_model: if p.radius_peaceman {
                                RadiusModel::Peaceman
                            } else {
                                RadiusModel::Circle
                            },
                            direction: p.direction,
                        }),
                    };
                    Perforation { cell, index }
                })
                .collect();
            let bhp_default = match w.kind {
                WellKind::Producer => S::neg_infinity(),
                WellKind::Injector => S::infinity(),
            };
            wells.push(WellSpec {
                name: w.name.clone(),
                kind: w.kind,
                perforations: perfs,
                max_rate: w.rate_max.unwrap_or_else(S::infinity),
                bhp_limit: w.bhp_limit.unwrap_or(bhp_default),
                ref_depth: w.ref_depth,
                initial_mode: w.mode,
            });
        }

        let s = &deck.solver;
        let mut newton = NewtonConfig::<S>::default();
        if let Some(eps) = s.epsilon {
            newton.epsilon = eps;
        }
        if let Some(m) = s.max_newton {
            newton.max_iters = m;
        }
        if let Some(f) = s.forcing {
            newton = newton.with_forcing(forcing_rule(f));
        }
        let mut damping = Damping::default();
        if let Some(v) = s.max_dp {
            damping.max_dp = v;
        }
        if let Some(v) = s.max_ds {
            damping.max_ds = v;
        }
        newton.damping = damping;

        let mut linear = LinearConfig::<S>::default();
        if let Some(r) = s.gmres_restart {
            linear.restart = r.max(1);
        }
        if let Some(m) = s.gmres_max_iter {
            linear.max_iters = m.max(1);
        }
        if let Some(p) = s.precond {
            linear.precond = match p {
                PrecondSpec::Cpr => PrecondChoice::CprFpf,
                PrecondSpec::Ilu0 => PrecondChoice::Ilu0,
                PrecondSpec::None => PrecondChoice::None,
            };
        }
        if let Some(set) = &s.pressure_set {
            linear.cpr = CprConfig { pressure_set: set.clone(), ..CprConfig::default() };
        }

        let mut controller = TimestepController::<S>::default();
        if let Some(v) = s.dt_init {
            controller.dt_init = v;
        }
        if let Some(v) = s.dt_min {
            controller.dt_min = v;
        }
        if let Some(v) = s.dt_max {
            controller.dt_max = v;
        }
        if let Some(v) = s.dt_grow {
            controller.grow = v;
        }
        if let Some(v) = s.dt_cut {
            controller.cut = v;
        }
        if let Some(v) = s.max_cuts {
            controller.max_cuts = v;
        }

        let partitioning =
            Partitioning::for_grid(deck.grid.nx, deck.grid.ny, deck.grid.nz, wells.len(), s.partitions);

        Ok(SimModel {
            title: deck.title.clone(),
            grid,
            fluid,
            wells,
            newton,
            linear,
            controller,
            schedule: deck.schedule.clone(),
            init: InitCond {
                p_f: deck.init.p_f,
                p_m: deck.init.p_m,
                s_wf: deck.init.s_wf,
                s_wm: deck.init.s_wm,
            },
            scaling: s.residual_scaling.unwrap_or(true),
            partitioning,
            snapshots_every: deck.output.snapshots_every,
        })
    }

    /// Constant-field initial state; saturations outside the table range are
    /// clamped with a warning returned alongside.
    pub fn initialize(&self) -> (State<S>, Vec<String>) {
        let n = self.grid.n_cells();
        let mut warnings = Vec::new();
        let clamp = |s: S, tab: &SatFuncTable<S>, what: &str, warnings: &mut Vec<String>| {
            if s < tab.sw_min() {
                warnings.push(format!("initial {what} {} below table range, clamped to {}", s, tab.sw_min()));
                tab.sw_min()
            } else if s > tab.sw_max() {
                warnings.push(format!("initial {what} {} above table range, clamped to {}", s, tab.sw_max()));
                tab.sw_max()
            } else {
                s
            }
        };
        let s_wf = clamp(self.init.s_wf, &self.fluid.sat_fracture, "s_wf", &mut warnings);
        let s_wm = clamp(self.init.s_wm, &self.fluid.sat_matrix, "s_wm", &mut warnings);
        let state = State::constant(n, self.wells.len(), self.init.p_f, s_wf, self.init.p_m, s_wm);
        (state, warnings)
    }
}

fn forcing_rule<S: Scalar>(f: ForcingSpec<S>) -> ForcingRule<S> {
    match f {
        ForcingSpec::Ew1 => ForcingRule::EW1,
        ForcingSpec::Ew2 => ForcingRule::EW2,
        ForcingSpec::Ew3 { gamma, beta } => ForcingRule::EW3 { gamma, beta },
        ForcingSpec::Constant(v) => ForcingRule::Constant(v),
    }
}

/// Run-time options beyond the deck: worker count, output locations, debug
/// captures and checkpoint/restart.
#[derive(Clone, Debug, Default)]
pub struct RunOptions<S> {
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 or 1 runs single-threaded.
    pub threads: usize,
    pub forcing_override: Option<ForcingSpec<S>>,
    pub snapshots_every: Option<usize>,
    pub dump_linear_systems: bool,
    /// Accepted-step numbers (1-based) whose first decoupled Newton system is
    /// captured into the result.
    pub capture_steps: Vec<usize>,
    pub checkpoint_out: Option<PathBuf>,
    pub restart_from: Option<PathBuf>,
}

/// A captured decoupled linear system (first Newton iteration of a step).
pub struct CapturedSystem<S> {
    pub step: usize,
    pub matrix: BlockMatrix<S>,
    pub rhs: Vec<S>,
}

pub struct RunResult<S> {
    pub summary: RunSummary,
    pub rows: Vec<ReportRow<S>>,
    pub final_state: State<S>,
    pub captured: Vec<CapturedSystem<S>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    time: f64,
    dt_next: f64,
    accepted_steps: usize,
    p_f: Vec<f64>,
    s_wf: Vec<f64>,
    p_m: Vec<f64>,
    s_wm: Vec<f64>,
    p_bh: Vec<f64>,
    modes: Vec<String>,
    mix_density: Vec<f64>,
    cum_oil_prod: f64,
    cum_water_prod: f64,
    cum_oil_inj: f64,
    cum_water_inj: f64,
    cum_mass_oil: f64,
    cum_mass_water: f64,
    initial_mass_oil: f64,
    initial_mass_water: f64,
}

/// Parse a deck file; exposed alongside [`run_model`] for the CLI.
pub fn parse_deck<S: Scalar>(path: &Path) -> Result<SimDeck<S>, SimError> {
    Ok(deck::parse_deck_file(path)?)
}

pub fn run_deck<S: Scalar>(deck: &SimDeck<S>, opts: &RunOptions<S>) -> Result<RunResult<S>, SimError> {
    let mut model = SimModel::from_deck(deck)?;
    if let Some(f) = opts.forcing_override {
        model.newton = model.newton.with_forcing(forcing_rule(f));
    }
    run_model(&model, opts)
}

pub fn run_model<S: Scalar>(model: &SimModel<S>, opts: &RunOptions<S>) -> Result<RunResult<S>, SimError> {
    let threads = opts.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::Convergence(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_inner(model, opts))
}

struct WellTotals<S> {
    cum: CumTotals<S>,
    /// Net mass added to the reservoir per phase, for the balance check.
    mass_oil: S,
    mass_water: S,
}

fn run_inner<S: Scalar>(model: &SimModel<S>, opts: &RunOptions<S>) -> Result<RunResult<S>, SimError> {
    let wall_start = std::time::Instant::now();

    // fail on unwritable output before any time marching
    let mut log: Option<std::fs::File> = None;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        log = Some(std::fs::File::create(dir.join("run.log"))?);
    }

    let part = &model.partitioning;
    let mut wells_current = model.wells.clone();
    let mut asm = Assembler::new(&model.grid, &model.fluid, wells_current.clone(), model.scaling)?;
    let (mut a, _) = asm.new_system();

    let (mut state, warnings) = model.initialize();
    let mut rt: Vec<WellRuntime<S>> = Vec::with_capacity(model.wells.len());
    for (w, spec) in wells_current.iter().enumerate() {
        let p_cell = state.p_f[spec.perforations[0].cell];
        state.p_bh[w] = initial_bhp_guess(
            spec,
            asm.total_wi_darcy(w),
            p_cell,
            &model.fluid.oil,
            &model.fluid.water,
            &model.fluid.sat_fracture,
            spec.initial_mode,
        );
        rt.push(WellRuntime { mode: spec.initial_mode, mix_density: model.fluid.water.density(p_cell).value });
    }
    let mix0 = asm.wellbore_mix_density(&state, &rt);
    for (r, m) in rt.iter_mut().zip(mix0) {
        r.mix_density = m;
    }

    let (m_oil_0, m_water_0) = asm.mass_in_place(&state);
    let mut totals = WellTotals {
        cum: CumTotals::default(),
        mass_oil: S::zero(),
        mass_water: S::zero(),
    };
    let mut initial_mass = (m_oil_0, m_water_0);

    let mut t = S::zero();
    let mut dt_next = model.controller.dt_init.min(model.controller.dt_max);
    let mut accepted: usize = 0;
    let mut summary = RunSummary::default();
    let mut rows: Vec<ReportRow<S>> = Vec::new();
    let mut captured: Vec<CapturedSystem<S>> = Vec::new();

    // restart replaces the fresh initial state
    if let Some(path) = &opts.restart_from {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| SimError::Restart(e.to_string()))?;
        let n = model.grid.n_cells();
        if ck.p_f.len() != n || ck.p_bh.len() != model.wells.len() {
            return Err(SimError::Restart("checkpoint does not match the deck dimensions".into()));
        }
        state = State {
            p_f: ck.p_f.iter().map(|v| lit(*v)).collect(),
            s_wf: ck.s_wf.iter().map(|v| lit(*v)).collect(),
            p_m: ck.p_m.iter().map(|v| lit(*v)).collect(),
            s_wm: ck.s_wm.iter().map(|v| lit(*v)).collect(),
            p_bh: ck.p_bh.iter().map(|v| lit(*v)).collect(),
        };
        for (w, mode) in ck.modes.iter().enumerate() {
            rt[w].mode = match mode.as_str() {
                "RATE" => ControlMode::Rate,
                "BHP" => ControlMode::Bhp,
                other => return Err(SimError::Restart(format!("unknown mode '{other}'"))),
            };
            rt[w].mix_density = lit(ck.mix_density[w]);
        }
        t = lit(ck.time);
        dt_next = lit::<S>(ck.dt_next).min(model.controller.dt_max);
        accepted = ck.accepted_steps;
        totals.cum = CumTotals {
            oil_produced_stb: lit(ck.cum_oil_prod),
            water_produced_stb: lit(ck.cum_water_prod),
            oil_injected_stb: lit(ck.cum_oil_inj),
            water_injected_stb: lit(ck.cum_water_inj),
        };
        totals.mass_oil = lit(ck.cum_mass_oil);
        totals.mass_water = lit(ck.cum_mass_water);
        initial_mass = (lit(ck.initial_mass_oil), lit(ck.initial_mass_water));
        // replay schedule changes up to the restart time
        for ch in &model.schedule.changes {
            if ch.time <= t {
                apply_change(&mut wells_current, ch);
            }
        }
        asm = Assembler::new(&model.grid, &model.fluid, wells_current.clone(), model.scaling)?;
    }

    // event boundaries the stepper must hit exactly
    let mut boundaries: Vec<S> = Vec::new();
    if let Some(interval) = model.schedule.report_interval {
        if interval > S::zero() {
            let mut k = 1usize;
            loop {
                let b = interval * lit::<S>(k as f64);
                if b >= model.schedule.t_stop {
                    break;
                }
                boundaries.push(b);
                k += 1;
            }
        }
    }
    for ch in &model.schedule.changes {
        boundaries.push(ch.time);
    }
    boundaries.push(model.schedule.t_stop);
    boundaries.sort_by(|x, y| x.partial_cmp(y).expect("finite times"));
    boundaries.dedup();

    let t_stop = model.schedule.t_stop;
    let snapshots_every = opts.snapshots_every.unwrap_or(model.snapshots_every);
    let mut schedule_idx = model.schedule.changes.iter().filter(|c| c.time <= t).count();
    let mut consecutive_cuts = 0usize;

    while t < t_stop - t_stop * lit(1e-12) {
        // apply schedule changes that fire at the current time
        let mut wells_changed = false;
        while schedule_idx < model.schedule.changes.len()
            && model.schedule.changes[schedule_idx].time <= t + t_stop * lit(1e-12)
        {
            apply_change(&mut wells_current, &model.schedule.changes[schedule_idx]);
            schedule_idx += 1;
            wells_changed = true;
        }
        if wells_changed {
            asm = Assembler::new(&model.grid, &model.fluid, wells_current.clone(), model.scaling)?;
        }

        let next_boundary = boundaries
            .iter()
            .copied()
            .find(|b| *b > t + t_stop * lit(1e-12))
            .unwrap_or(t_stop);
        let mut dt = dt_next.min(next_boundary - t).max(model.controller.dt_min.min(next_boundary - t));

        // solve this step, re-solving on constraint switches
        let mut switches_this_step = 0usize;
        let step_no = accepted + 1;
        let capture_this = opts.capture_steps.contains(&step_no);
        loop {
            let mut captured_now: Option<(BlockMatrix<S>, Vec<S>)> = None;
            let mut first_dump: Option<(BlockMatrix<S>, Vec<S>)> = None;
            let mut hook = |l: usize, m: &BlockMatrix<S>, b: &[S]| {
                if l == 1 {
                    if capture_this {
                        captured_now = Some((m.clone(), b.to_vec()));
                    }
                    if opts.dump_linear_systems {
                        first_dump = Some((m.clone(), b.to_vec()));
                    }
                }
            };
            let want_hook = capture_this || opts.dump_linear_systems;
            let (candidate, report) = solve_timestep(
                &asm,
                &state,
                state.clone(),
                dt,
                &mut rt,
                &model.newton,
                &model.linear,
                part,
                &mut a,
                want_hook.then_some(&mut hook as &mut dyn FnMut(usize, &BlockMatrix<S>, &[S])),
            );
            summary.newton_total += report.iterations;
            summary.linear_total += report.linear_total();

            if report.converged() {
                // check the inactive constraints at the converged state
                let rates = asm.well_rates(&candidate, &rt);
                let tol = lit::<S>(1e-9);
                let mut flipped = false;
                for (w, spec) in asm.wells.iter().enumerate() {
                    let controlled = match spec.kind {
                        WellKind::Producer => rates[w].oil_surface,
                        WellKind::Injector => rates[w].water_surface,
                    };
                    if let Some(new_mode) =
                        constraint_violation(spec, rt[w].mode, candidate.p_bh[w], controlled, tol)
                    {
                        rt[w].mode = new_mode;
                        flipped = true;
                    }
                }
                if flipped {
                    switches_this_step += 1;
                    summary.constraint_switches += 1;
                    if switches_this_step <= 3 {
                        // re-solve the same step under the new control set
                        for (w, spec) in asm.wells.iter().enumerate() {
                            if rt[w].mode == ControlMode::Bhp {
                                state.p_bh[w] = spec.bhp_limit;
                            }
                        }
                        continue;
                    }
                    // too many switches: fall through to a timestep cut
                } else {
                    // accepted
                    t += dt;
                    if let Some(b) = boundaries.iter().find(|b| (**b - t).abs() <= t_stop * lit(1e-12)) {
                        t = *b; // land exactly on the boundary
                    }
                    accepted += 1;
                    summary.time_steps = accepted;
                    state = candidate;
                    if let Some((m, b)) = captured_now.take() {
                        captured.push(CapturedSystem { step: step_no, matrix: m, rhs: b });
                    }
                    if let Some((m, b)) = first_dump.take() {
                        if let Some(dir) = &opts.out_dir {
                            let path = dir.join(format!("linsys_step{step_no:05}.txt"));
                            let mut f = std::fs::File::create(path)?;
                            crate::linear::dump::write_system(&mut f, &m, &b)?;
                        }
                    }

                    let rates = asm.well_rates(&state, &rt);
                    for (w, spec) in asm.wells.iter().enumerate() {
                        let q = &rates[w];
                        match spec.kind {
                            WellKind::Producer => {
                                totals.cum.oil_produced_stb += q.oil_surface * dt;
                                totals.cum.water_produced_stb += q.water_surface * dt;
                            }
                            WellKind::Injector => {
                                totals.cum.water_injected_stb += q.water_surface * dt;
                                totals.cum.oil_injected_stb += q.oil_surface * dt;
                            }
                        }
                        totals.mass_oil += q.oil_mass_into_cells * dt;
                        totals.mass_water += q.water_mass_into_cells * dt;
                    }
                    let (m_oil, m_water) = asm.mass_in_place(&state);
                    let mbe_oil = ((m_oil - initial_mass.0) - totals.mass_oil).abs()
                        / initial_mass.0.max(lit(1e-30));
                    let mbe_water = ((m_water - initial_mass.1) - totals.mass_water).abs()
                        / initial_mass.1.max(lit(1e-30));

                    rows.push(ReportRow {
                        time: t,
                        wells: asm
                            .wells
                            .iter()
                            .enumerate()
                            .map(|(w, _)| WellReport {
                                oil_rate_stb: rates[w].oil_surface,
                                water_rate_stb: rates[w].water_surface,
                                water_rate_bbl: rates[w].water_reservoir_bbl,
                                bhp: state.p_bh[w],
                                mode: rt[w].mode,
                            })
                            .collect(),
                        cum: totals.cum,
                        mbe_oil,
                        mbe_water,
                    });

                    if let Some(f) = log.as_mut() {
                        writeln!(
                            f,
                            "step {accepted}: t = {:.4} dt = {:.4} newton = {} linear = {} switches = {} |R| = {:.3e}",
                            to_f64(t),
                            to_f64(dt),
                            report.iterations,
                            report.linear_total(),
                            switches_this_step,
                            to_f64(*report.residual_norms.last().unwrap_or(&S::zero())),
                        )?;
                    }
                    if snapshots_every > 0 && accepted.is_multiple_of(snapshots_every) {
                        if let Some(dir) = &opts.out_dir {
                            let path = dir.join(format!("snapshot_{accepted:05}.vtk"));
                            let mut f = std::fs::File::create(path)?;
                            write_snapshot(&mut f, &model.title, t, &model.grid, &state)?;
                        }
                    }

                    consecutive_cuts = 0;
                    dt_next = (dt * model.controller.grow).min(model.controller.dt_max);
                    break;
                }
            }

            // failure path: cut the step
            consecutive_cuts += 1;
            summary.timestep_cuts += 1;
            let reason = report
                .failure_detail
                .clone()
                .unwrap_or_else(|| format!("{:?} after {} iterations", report.outcome, report.iterations));
            if let Some(f) = log.as_mut() {
                writeln!(f, "cut at t = {:.4}: dt {} -> {} ({reason})", to_f64(t), to_f64(dt), to_f64(dt * model.controller.cut))?;
            }
            dt *= model.controller.cut;
            switches_this_step = 0;
            if dt < model.controller.dt_min || consecutive_cuts > model.controller.max_cuts {
                if let Some(dir) = &opts.out_dir {
                    let path = dir.join("failed_state.json");
                    let _ = std::fs::write(&path, checkpoint_json(&state, &rt, t, dt_next, accepted, &totals, initial_mass));
                }
                return Err(SimError::Convergence(format!(
                    "timestep underflow at t = {} days after {} cuts: {reason}",
                    to_f64(t),
                    consecutive_cuts
                )));
            }
        }

    }

    summary.wall_seconds = wall_start.elapsed().as_secs_f64();

    if let Some(dir) = &opts.out_dir {
        let mut f = std::fs::File::create(dir.join("wells.csv"))?;
        write_csv(&mut f, &asm.wells, &rows)?;
        let mut f = std::fs::File::create(dir.join("summary.txt"))?;
        write_summary(&mut f, &model.title, &summary)?;
        std::fs::write(dir.join("plot.py"), plot_script(&asm.wells))?;
    }
    if let Some(path) = &opts.checkpoint_out {
        std::fs::write(path, checkpoint_json(&state, &rt, t, dt_next, accepted, &totals, initial_mass))?;
    }

    Ok(RunResult { summary, rows, final_state: state, captured, warnings })
}

fn apply_change<S: Scalar>(wells: &mut [WellSpec<S>], ch: &deck::ScheduleChange<S>) {
    for w in wells.iter_mut() {
        if w.name == ch.well {
            match ch.action {
                WellAction::SetRateMax(v) => w.max_rate = v,
                WellAction::SetBhpLimit(v) => w.bhp_limit = v,
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn checkpoint_json<S: Scalar>(
    state: &State<S>,
    rt: &[WellRuntime<S>],
    t: S,
    dt_next: S,
    accepted: usize,
    totals: &WellTotals<S>,
    initial_mass: (S, S),
) -> String {
    let ck = Checkpoint {
        time: to_f64(t),
        dt_next: to_f64(dt_next),
        accepted_steps: accepted,
        p_f: state.p_f.iter().map(|v| to_f64(*v)).collect(),
        s_wf: state.s_wf.iter().map(|v| to_f64(*v)).collect(),
        p_m: state.p_m.iter().map(|v| to_f64(*v)).collect(),
        s_wm: state.s_wm.iter().map(|v| to_f64(*v)).collect(),
        p_bh: state.p_bh.iter().map(|v| to_f64(*v)).collect(),
        modes: rt
            .iter()
            .map(|r| match r.mode {
                ControlMode::Rate => "RATE".to_string(),
                ControlMode::Bhp => "BHP".to_string(),
            })
            .collect(),
        mix_density: rt.iter().map(|r| to_f64(r.mix_density)).collect(),
        cum_oil_prod: to_f64(totals.cum.oil_produced_stb),
        cum_water_prod: to_f64(totals.cum.water_produced_stb),
        cum_oil_inj: to_f64(totals.cum.oil_injected_stb),
        cum_water_inj: to_f64(totals.cum.water_injected_stb),
        cum_mass_oil: to_f64(totals.mass_oil),
        cum_mass_water: to_f64(totals.mass_water),
        initial_mass_oil: to_f64(initial_mass.0),
        initial_mass_water: to_f64(initial_mass.1),
    };
    serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
}
