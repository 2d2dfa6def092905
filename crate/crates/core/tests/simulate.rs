//! End-to-end behavioral tests beyond the acceptance criteria: solver
//! invariants, schedule exactness, well-constraint bookkeeping and the CLI
//! surface.

mod common;

use common::deck_path;
use fracflow::deck::parse_deck_str;
use fracflow::driver::{RunOptions, SimModel};
use fracflow::newton::{solve_timestep, ForcingRule};
use fracflow::wells::{initial_bhp_guess, ControlMode, WellRuntime};
use std::process::Command;

fn options() -> RunOptions<f64> {
    RunOptions { threads: 1, ..Default::default() }
}

/// With tight constant forcing the Newton iteration is quadratic once
/// damping disengages: ||b_{l+1}|| / ||b_l||^2 stays bounded over the last
/// iterations of a converging run.
#[test]
fn newton_converges_superlinearly_with_tight_forcing() {
    let text = std::fs::read_to_string(deck_path("ex1.deck")).unwrap();
    let text = text.replace("EPSILON 1.0e-6", "EPSILON 1.0e-9\n  FORCING CONST 1.0e-8");
    let deck = parse_deck_str::<f64>(&text, "ex1-tight.deck").unwrap();
    let model = SimModel::from_deck(&deck).unwrap();
    assert_eq!(model.newton.forcing, ForcingRule::Constant(1e-8));
    let asm = fracflow::Assembler::new(&model.grid, &model.fluid, model.wells.clone(), true).unwrap();
    let (mut a, _) = asm.new_system();
    let (mut state, _) = model.initialize();
    let mut rt = Vec::new();
    for (w, spec) in model.wells.iter().enumerate() {
        state.p_bh[w] = initial_bhp_guess(
            spec,
            asm.total_wi_darcy(w),
            state.p_f[spec.perforations[0].cell],
            &model.fluid.oil,
            &model.fluid.water,
            &model.fluid.sat_fracture,
            spec.initial_mode,
        );
        rt.push(WellRuntime { mode: spec.initial_mode, mix_density: 62.4 });
    }
    let (_, report) = solve_timestep(
        &asm,
        &state.clone(),
        state,
        1.0,
        &mut rt,
        &model.newton,
        &model.linear,
        &model.partitioning,
        &mut a,
        None,
    );
    assert!(report.converged());
    let norms = &report.residual_norms;
    assert!(norms.len() >= 3, "need at least two iterations, got {}", norms.len() - 1);
    let tail = &norms[norms.len().saturating_sub(4)..];
    for w in tail.windows(2) {
        let ratio = w[1] / (w[0] * w[0]);
        assert!(ratio < 1e3, "quadratic ratio {ratio:.3e} unbounded (norms {norms:?})");
    }
}

/// Every report date is hit by a step boundary exactly, and the row count is
/// the accepted step count (report dates deduplicate into step boundaries).
#[test]
fn schedule_dates_are_hit_exactly() {
    let deck = fracflow::parse_deck(&deck_path("ex1.deck")).unwrap();
    let result = fracflow::run_deck(&deck, &options()).unwrap();
    assert_eq!(result.rows.len(), result.summary.time_steps);
    for k in 1..=80 {
        let date = 10.0 * k as f64;
        assert!(
            result.rows.iter().any(|r| r.time == date),
            "report date {date} missed by the step boundaries"
        );
    }
}

/// One constraint active per well per converged step; the inactive one holds
/// as an inequality in every report row.
#[test]
fn inactive_well_constraints_hold_as_inequalities() {
    let deck = fracflow::parse_deck(&deck_path("ex1.deck")).unwrap();
    let result = fracflow::run_deck(&deck, &options()).unwrap();
    let tol = 1e-6;
    for row in &result.rows {
        // injector: rate target 500, ceiling 5e4
        let inj = &row.wells[0];
        match inj.mode {
            ControlMode::Rate => {
                assert!((inj.water_rate_stb - 500.0).abs() < 1e-3);
                assert!(inj.bhp <= 5.0e4 + tol);
            }
            ControlMode::Bhp => assert!(inj.water_rate_stb <= 500.0 + 1e-3),
        }
        for prod in [&row.wells[1], &row.wells[2]] {
            match prod.mode {
                ControlMode::Rate => {
                    assert!((prod.oil_rate_stb - 300.0).abs() < 1e-3);
                    assert!(prod.bhp >= 15.0 - tol);
                }
                ControlMode::Bhp => {
                    assert!((prod.bhp - 15.0).abs() < tol);
                    assert!(prod.oil_rate_stb <= 300.0 + 1e-3);
                }
            }
        }
    }
}

/// Injected totals respect the rate limit over the whole run.
#[test]
fn injector_cumulative_respects_limit() {
    let deck = fracflow::parse_deck(&deck_path("ex1.deck")).unwrap();
    let result = fracflow::run_deck(&deck, &options()).unwrap();
    let last = result.rows.last().unwrap();
    assert!(last.cum.water_injected_stb <= 500.0 * 800.0 * (1.0 + 1e-9));
    // cumulative quantities never decrease
    for w in result.rows.windows(2) {
        assert!(w[1].cum.oil_produced_stb >= w[0].cum.oil_produced_stb - 1e-9);
        assert!(w[1].cum.water_injected_stb >= w[0].cum.water_injected_stb - 1e-9);
    }
}

/// A mid-run schedule change takes effect at its exact date.
#[test]
fn schedule_change_applies_at_date() {
    let text = std::fs::read_to_string(deck_path("ex1.deck")).unwrap();
    let text = text.replace("TSTOP 800.0", "TSTOP 100.0\n  AT 50.0 WELL INJ1 RATE_MAX 250.0");
    let deck = parse_deck_str::<f64>(&text, "ex1-sched.deck").unwrap();
    let result = fracflow::run_deck(&deck, &options()).unwrap();
    for row in &result.rows {
        if row.time <= 50.0 + 1e-9 {
            assert!((row.wells[0].water_rate_stb - 500.0).abs() < 1e-3, "t = {}", row.time);
        } else {
            assert!((row.wells[0].water_rate_stb - 250.0).abs() < 1e-3, "t = {}", row.time);
        }
    }
}

#[test]
fn ex2_runs_and_declines_from_low_pressure() {
    let deck = fracflow::parse_deck(&deck_path("ex2.deck")).unwrap();
    let result = fracflow::run_deck(&deck, &options()).unwrap();
    let last = result.rows.last().unwrap();
    assert!((last.time - 1600.0).abs() < 1e-9);
    for row in &result.rows {
        assert!(row.mbe_oil < 1e-6 && row.mbe_water < 1e-6);
    }
    // low initial pressure: producers go BHP-constrained quickly
    assert_eq!(last.wells[1].mode, ControlMode::Bhp);
}

#[test]
fn initialize_returns_clamped_state_without_stepping() {
    // initial fracture saturation below the table range clamps with a warning
    let text = std::fs::read_to_string(deck_path("ex1.deck")).unwrap();
    let text = text.replace("COREY 0.0   0.0  1.0     1.0     2.0 2.0 21", "COREY 0.05 0.0 1.0 1.0 2.0 2.0 21");
    let deck = parse_deck_str::<f64>(&text, "ex1-clamp.deck").unwrap();
    let model = SimModel::from_deck(&deck).unwrap();
    let (state, warnings) = model.initialize();
    assert_eq!(state.s_wf[0], 0.05);
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("clamped"));
}

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sim"))
}

#[test]
fn cli_version_and_check() {
    let out = sim().arg("version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("sim "));

    let out = sim().arg("check").arg(deck_path("ex1.deck")).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("10 x 10 x 1"));
    assert!(text.contains("wells    : 3"));
}

#[test]
fn cli_deck_errors_exit_2() {
    let out = sim().arg("check").arg("no-such-file.deck").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = std::env::temp_dir().join(format!("fracflow_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.deck");
    std::fs::write(&bad, "GRID\n  BOGUS 1\nEND\n").unwrap();
    let out = sim().arg("check").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("BOGUS"), "stderr: {err}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn cli_run_writes_outputs_and_dumps() {
    let dir = std::env::temp_dir().join(format!("fracflow_out_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    // a short copy of the benchmark deck keeps the dump volume small
    let text = std::fs::read_to_string(deck_path("bl100.deck")).unwrap();
    let short = dir.join("short.deck");
    std::fs::write(&short, text.replace("TSTOP 21.4", "TSTOP 2.0")).unwrap();
    let out = sim()
        .arg("run")
        .arg(&short)
        .args(["--threads", "2", "--out"])
        .arg(&dir)
        .args(["--snapshots", "every=5", "--dump-linear-systems"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("wells.csv").exists());
    assert!(dir.join("summary.txt").exists());
    assert!(dir.join("run.log").exists());
    assert!(dir.join("plot.py").exists());
    assert!(dir.join("snapshot_00005.vtk").exists());
    assert!(dir.join("linsys_step00001.txt").exists());
    // the dump round-trips through the documented reader
    let f = std::fs::File::open(dir.join("linsys_step00001.txt")).unwrap();
    let sys = fracflow::linear::dump::read_system(std::io::BufReader::new(f)).unwrap();
    assert_eq!(sys.block, 4);
    assert_eq!(sys.n, 4 * 100 + 2);
    let summary = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.contains("newton iterations"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn cli_convergence_failure_exits_3() {
    let dir = std::env::temp_dir().join(format!("fracflow_fail_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(deck_path("ex1.deck")).unwrap();
    let text = text.replace("EPSILON 1.0e-6", "EPSILON 1.0e-6\n  MAX_NEWTON 0\n  MAX_CUTS 1");
    let deck = dir.join("stuck.deck");
    std::fs::write(&deck, text).unwrap();
    let out = sim().arg("run").arg(&deck).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

/// Every forcing rule drives the first step of the flagship deck to
/// convergence (the EW1/EW2 histories need a prior linear residual, so this
/// exercises paths the acceptance suite does not).
#[test]
fn all_forcing_rules_converge_on_first_step() {
    let deck = fracflow::parse_deck(&deck_path("ex1.deck")).unwrap();
    let model = SimModel::from_deck(&deck).unwrap();
    let asm = fracflow::Assembler::new(&model.grid, &model.fluid, model.wells.clone(), true).unwrap();
    let (mut a, _) = asm.new_system();
    for rule in [
        ForcingRule::EW1,
        ForcingRule::EW2,
        ForcingRule::EW3 { gamma: 0.9, beta: 2.0 },
        ForcingRule::Constant(1e-6),
    ] {
        let mut newton = model.newton.with_forcing(rule);
        newton.max_iters = 20;
        let (mut state, _) = model.initialize();
        let mut rt = Vec::new();
        for (w, spec) in model.wells.iter().enumerate() {
            state.p_bh[w] = initial_bhp_guess(
                spec,
                asm.total_wi_darcy(w),
                state.p_f[spec.perforations[0].cell],
                &model.fluid.oil,
                &model.fluid.water,
                &model.fluid.sat_fracture,
                spec.initial_mode,
            );
            rt.push(WellRuntime { mode: spec.initial_mode, mix_density: 62.4 });
        }
        let (_, report) = solve_timestep(
            &asm,
            &state.clone(),
            state,
            1.0,
            &mut rt,
            &newton,
            &model.linear,
            &model.partitioning,
            &mut a,
            None,
        );
        assert!(report.converged(), "{rule:?} failed: {:?}", report.outcome);
        assert!(report.etas.iter().all(|e| (newton.eta_min..=newton.eta_max).contains(e)));
    }
}

/// The numeric core is generic over the scalar; the whole deck-to-assembly
/// pipeline also works in f32.
#[test]
fn pipeline_instantiates_in_f32() {
    let text = std::fs::read_to_string(deck_path("ex1.deck")).unwrap();
    let deck = parse_deck_str::<f32>(&text, "ex1.deck").unwrap();
    let model = fracflow::driver::SimModel::<f32>::from_deck(&deck).unwrap();
    let asm =
        fracflow::assembly::Assembler::new(&model.grid, &model.fluid, model.wells.clone(), true)
            .unwrap();
    let (mut a, mut r) = asm.new_system();
    let (mut state, _) = model.initialize();
    state.p_bh = vec![8000.0, 400.0, 400.0];
    let rt: Vec<WellRuntime<f32>> = model
        .wells
        .iter()
        .map(|w| WellRuntime { mode: w.initial_mode, mix_density: 62.4 })
        .collect();
    asm.assemble(&state.clone(), &state, 1.0, &rt, &model.partitioning, &mut a, &mut r);
    assert!(r.iter().all(|v| v.is_finite()));
    assert!(r.iter().any(|v| *v != 0.0));
}
