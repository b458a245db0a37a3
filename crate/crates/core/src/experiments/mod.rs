//! Sweeps, figure data and CSV output.

pub mod figures;
pub mod sweep;
pub mod table;

pub use figures::{figure_table, reproduce_figure, FigureId};
pub use sweep::{
    run_sweep, sweep_table, Axis, Output, ResultRow, SimOverrides, SweepLoad, SweepSpec,
};
pub use table::{format_number, CsvTable};
