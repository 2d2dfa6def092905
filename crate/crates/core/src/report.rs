//! Run outputs: the wells time series, run summary, grid snapshots and a
//! generated plot script.
//!
//! `wells.csv` column order is frozen (see `docs/formats.md`): `time_days`,
//! then per well in deck order `<name>_oil_stb_day`, `<name>_water_stb_day`,
//! `<name>_water_bbl_day` (injectors only), `<name>_bhp_psi`, `<name>_mode`,
//! then the field totals and per-phase material-balance errors. Floating
//! point values print with a fixed 12-digit scientific format so repeated
//! runs are byte-identical.

use crate::grid::Grid;
use crate::scalar::{to_f64, Scalar};
use crate::state::State;
use crate::wells::{ControlMode, WellKind, WellSpec};
use std::io::{self, Write};

#[derive(Clone, Copy, Debug)]
pub struct WellReport<S> {
    /// Production-positive for producers, injection-positive for injectors.
    pub oil_rate_stb: S,
    pub water_rate_stb: S,
    pub water_rate_bbl: S,
    pub bhp: S,
    pub mode: ControlMode,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CumTotals<S> {
    pub oil_produced_stb: S,
    pub water_produced_stb: S,
    pub oil_injected_stb: S,
    pub water_injected_stb: S,
}

#[derive(Clone, Debug)]
pub struct ReportRow<S> {
    pub time: S,
    pub wells: Vec<WellReport<S>>,
    pub cum: CumTotals<S>,
    pub mbe_oil: S,
    pub mbe_water: S,
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub time_steps: usize,
    pub newton_total: usize,
    pub linear_total: usize,
    pub wall_seconds: f64,
    pub timestep_cuts: usize,
    pub constraint_switches: usize,
}

fn fmt<S: Scalar>(v: S) -> String {
    format!("{:.12e}", to_f64(v))
}

pub fn csv_header<S: Scalar>(wells: &[WellSpec<S>]) -> String {
    let mut cols = vec!["time_days".to_string()];
    for w in wells {
        cols.push(format!("{}_oil_stb_day", w.name));
        cols.push(format!("{}_water_stb_day", w.name));
        if w.kind == WellKind::Injector {
            cols.push(format!("{}_water_bbl_day", w.name));
        }
        cols.push(format!("{}_bhp_psi", w.name));
        cols.push(format!("{}_mode", w.name));
    }
    cols.extend(
        ["cum_oil_prod_stb", "cum_water_prod_stb", "cum_oil_inj_stb", "cum_water_inj_stb", "mbe_oil", "mbe_water"]
            .map(String::from),
    );
    cols.join(",")
}

pub fn write_csv<S: Scalar, W: Write>(
    out: &mut W,
    wells: &[WellSpec<S>],
    rows: &[ReportRow<S>],
) -> io::Result<()> {
    writeln!(out, "{}", csv_header(wells))?;
    for row in rows {
        let mut cols = vec![fmt(row.time)];
        for (w, spec) in row.wells.iter().zip(wells) {
            cols.push(fmt(w.oil_rate_stb));
            cols.push(fmt(w.water_rate_stb));
            if spec.kind == WellKind::Injector {
                cols.push(fmt(w.water_rate_bbl));
            }
            cols.push(fmt(w.bhp));
            cols.push(match w.mode {
                ControlMode::Rate => "RATE".to_string(),
                ControlMode::Bhp => "BHP".to_string(),
            });
        }
        cols.push(fmt(row.cum.oil_produced_stb));
        cols.push(fmt(row.cum.water_produced_stb));
        cols.push(fmt(row.cum.oil_injected_stb));
        cols.push(fmt(row.cum.water_injected_stb));
        cols.push(fmt(row.mbe_oil));
        cols.push(fmt(row.mbe_water));
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(out: &mut W, title: &str, s: &RunSummary) -> io::Result<()> {
    writeln!(out, "{title}")?;
    writeln!(out, "time steps          : {}", s.time_steps)?;
    writeln!(out, "newton iterations   : {}", s.newton_total)?;
    writeln!(out, "linear iterations   : {}", s.linear_total)?;
    writeln!(out, "total running time  : {:.3} s", s.wall_seconds)?;
    writeln!(out, "timestep cuts       : {}", s.timestep_cuts)?;
    writeln!(out, "constraint switches : {}", s.constraint_switches)?;
    Ok(())
}

/// Legacy-VTK rectilinear-grid snapshot of the four cell fields.
pub fn write_snapshot<S: Scalar, W: Write>(
    out: &mut W,
    title: &str,
    time: S,
    grid: &Grid<S>,
    state: &State<S>,
) -> io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{} t={}", title, to_f64(time))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET RECTILINEAR_GRID")?;
    writeln!(out, "DIMENSIONS {} {} {}", grid.nx + 1, grid.ny + 1, grid.nz + 1)?;
    let coords = |sizes: &[S]| {
        let mut acc = 0.0f64;
        let mut v = vec![0.0f64];
        for s in sizes {
            acc += to_f64(*s);
            v.push(acc);
        }
        v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
    };
    writeln!(out, "X_COORDINATES {} double", grid.nx + 1)?;
    writeln!(out, "{}", coords(&grid.dx))?;
    writeln!(out, "Y_COORDINATES {} double", grid.ny + 1)?;
    writeln!(out, "{}", coords(&grid.dy))?;
    writeln!(out, "Z_COORDINATES {} double", grid.nz + 1)?;
    writeln!(out, "{}", coords(&grid.dz))?;
    writeln!(out, "CELL_DATA {}", grid.n_cells())?;
    for (name, field) in [
        ("p_f", &state.p_f),
        ("p_m", &state.p_m),
        ("s_wf", &state.s_wf),
        ("s_wm", &state.s_wm),
    ] {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in field {
            writeln!(out, "{}", to_f64(*v))?;
        }
    }
    Ok(())
}

/// Python script that renders the oil-rate, water-rate and BHP curves from
/// `wells.csv`.
pub fn plot_script<S: Scalar>(wells: &[WellSpec<S>]) -> String {
    let names: Vec<String> = wells.iter().map(|w| format!("{:?}", w.name)).collect();
    format!(
        r#"#!/usr/bin/env python3
"""Render well curves from wells.csv (same directory)."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "wells.csv"))))
t = [float(r["time_days"]) for r in rows]
wells = [{names}]

fig, axes = plt.subplots(3, 1, figsize=(8, 10), sharex=True)
for w in wells:
    axes[0].plot(t, [float(r[w + "_oil_stb_day"]) for r in rows], label=w)
    axes[1].plot(t, [float(r[w + "_water_stb_day"]) for r in rows], label=w)
    axes[2].plot(t, [float(r[w + "_bhp_psi"]) for r in rows], label=w)
axes[0].set_ylabel("oil rate (STB/day)")
axes[1].set_ylabel("water rate (STB/day)")
axes[2].set_ylabel("BHP (psi)")
axes[2].set_xlabel("time (days)")
for ax in axes:
    ax.legend()
    ax.grid(True, alpha=0.3)
fig.tight_layout()
fig.savefig(os.path.join(here, "wells.png"), dpi=150)
print("wrote", os.path.join(here, "wells.png"))
"#,
        names = names.join(", ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wells::{Perforation, WellIndexSpec};

    fn spec(name: &str, kind: WellKind) -> WellSpec<f64> {
        WellSpec {
            name: name.into(),
            kind,
            perforations: vec![Perforation { cell: 0, index: WellIndexSpec::Explicit(200.0) }],
            max_rate: 500.0,
            bhp_limit: 15.0,
            ref_depth: None,
            initial_mode: ControlMode::Rate,
        }
    }

    #[test]
    fn header_layout_is_frozen() {
        let wells = vec![spec("INJ1", WellKind::Injector), spec("PROD1", WellKind::Producer)];
        assert_eq!(
            csv_header(&wells),
            "time_days,INJ1_oil_stb_day,INJ1_water_stb_day,INJ1_water_bbl_day,INJ1_bhp_psi,INJ1_mode,\
             PROD1_oil_stb_day,PROD1_water_stb_day,PROD1_bhp_psi,PROD1_mode,\
             cum_oil_prod_stb,cum_water_prod_stb,cum_oil_inj_stb,cum_water_inj_stb,mbe_oil,mbe_water"
        );
    }

    #[test]
    fn empty_run_writes_header_only() {
        let wells = vec![spec("P", WellKind::Producer)];
        let mut buf = Vec::new();
        write_csv::<f64, _>(&mut buf, &wells, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("time_days,"));
    }

    #[test]
    fn csv_is_deterministic() {
        let wells = vec![spec("P", WellKind::Producer)];
        let row = ReportRow {
            time: 1.5,
            wells: vec![WellReport {
                oil_rate_stb: 123.456,
                water_rate_stb: 0.5,
                water_rate_bbl: 0.0,
                bhp: 1450.0,
                mode: ControlMode::Rate,
            }],
            cum: CumTotals::default(),
            mbe_oil: 1e-9,
            mbe_water: 2e-9,
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&mut a, &wells, std::slice::from_ref(&row)).unwrap();
        write_csv(&mut b, &wells, std::slice::from_ref(&row)).unwrap();
        assert_eq!(a, b);
    }
}
