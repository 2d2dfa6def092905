//! Fully implicit two-phase (oil-water) dual-porosity reservoir simulator
//! for naturally fractured media.
//!
//! The reservoir is modeled as two superposed continua: a fracture network
//! that carries all cell-to-cell flow and a matrix that exchanges fluid with
//! its co-located fracture cell through a shape factor. All unknowns
//! (fracture/matrix pressures and water saturations plus well bottom-hole
//! pressures) are solved simultaneously with an inexact Newton method; the
//! block linear systems are decoupled row-wise and solved with restarted
//! GMRES under a CPR-FPF two-level preconditioner.
//!
//! The crate is a library plus the `sim` batch CLI. Core math is generic
//! over the scalar type (`f32`/`f64`); the aliases below fix `f64`, which is
//! what the CLI and the bundled decks use.
//!
//! ```no_run
//! use fracflow::{parse_deck, run_deck, RunOptions};
//!
//! let deck = parse_deck(std::path::Path::new("decks/ex1.deck")).unwrap();
//! let result = run_deck(&deck, &RunOptions::default()).unwrap();
//! println!("steps: {}", result.summary.time_steps);
//! ```

// index-based loops and NaN-rejecting `!(x > y)` comparisons are the
// house style in the numeric kernels
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod deck;
pub mod driver;
pub mod dual;
pub mod grid;
pub mod linear;
pub mod newton;
pub mod props;
pub mod report;
pub mod scalar;
pub mod state;
pub mod wells;

pub use driver::{run_model, RunOptions as GenericRunOptions, RunResult as GenericRunResult};
pub use scalar::Scalar;

/// Concrete `f64` instantiations used by the CLI and most callers.
pub type SimDeck = deck::SimDeck<f64>;
pub type SimModel = driver::SimModel<f64>;
pub type RunOptions = driver::RunOptions<f64>;
pub type RunResult = driver::RunResult<f64>;
pub type Grid = grid::Grid<f64>;
pub type State = state::State<f64>;
pub type FluidSystem = assembly::FluidSystem<f64>;
pub type Assembler<'a> = assembly::Assembler<'a, f64>;
pub type BlockMatrix = linear::BlockMatrix<f64>;
pub type NewtonConfig = newton::NewtonConfig<f64>;
pub type LinearConfig = newton::LinearConfig<f64>;
pub type WellSpec = wells::WellSpec<f64>;

/// Parse a deck file into the `f64` deck representation.
pub fn parse_deck(path: &std::path::Path) -> Result<SimDeck, driver::SimError> {
    driver::parse_deck::<f64>(path)
}

/// Build and run a parsed deck.
pub fn run_deck(deck: &SimDeck, opts: &RunOptions) -> Result<RunResult, driver::SimError> {
    driver::run_deck(deck, opts)
}
