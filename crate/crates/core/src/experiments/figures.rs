//! Frozen data grids behind the four throughput figures.
//!
//! Grid points are built as `i / n` from integers so every run produces the
//! same bits, independent of accumulation order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::table::{format_number, CsvTable};
use crate::error::{Error, Result};
use crate::model::{bound, delta_star_k2, peak_load, s_star_k2, throughput, SystemParams};
use crate::optimize::{optimize_k, LoadRule, DEFAULT_ARG_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    /// Throughput and bound vs. load, K = 2, delta = 1.
    Fig2,
    /// Optimal forwarding probability and throughput vs. symmetric erasure rate at peak load.
    Fig3,
    /// Optimal throughput over the (eps_u, eps_d) plane, K = 2.
    Fig4,
    /// Optimal throughput and bound vs. relay count.
    Fig5,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
    ];
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig2" => FigureId::Fig2,
            "fig3" => FigureId::Fig3,
            "fig4" => FigureId::Fig4,
            "fig5" => FigureId::Fig5,
            other => return Err(Error::domain(format!("unknown figure `{other}`"))),
        })
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        })
    }
}

const FIG_EPS: [f64; 3] = [0.1, 0.3, 0.5];

fn header(columns: &[&str]) -> Vec<String> {
    columns.iter().map(|c| c.to_string()).collect()
}

fn fig2() -> Result<CsvTable> {
    let mut table = CsvTable::new(header(&["eps", "g", "S", "S_bound"]));
    for eps in FIG_EPS {
        let rows: Vec<Result<Vec<String>>> = (0..=100)
            .into_par_iter()
            .map(|i| {
                let g = i as f64 / 20.0;
                let p = SystemParams::new(g, 2, eps, eps, 1.0)?;
                let s = throughput(&p)?.value;
                let b = bound(g, 2, eps)?.value;
                Ok(vec![
                    format_number(eps),
                    format_number(g),
                    format_number(s),
                    format_number(b),
                ])
            })
            .collect();
        for row in rows {
            table.push_row(row?);
        }
    }
    Ok(table)
}

fn fig3() -> Result<CsvTable> {
    let mut table = CsvTable::new(header(&[
        "eps",
        "g",
        "delta_star",
        "S_star",
        "S_bound",
        "S_single",
    ]));
    let rows: Vec<Result<Vec<String>>> = (0..=98)
        .into_par_iter()
        .map(|i| {
            let eps = i as f64 / 100.0;
            let g = peak_load(eps)?;
            let single = (1.0 - eps) * (-1.0f64).exp();
            Ok(vec![
                format_number(eps),
                format_number(g),
                format_number(delta_star_k2(eps, eps)?),
                format_number(s_star_k2(eps, eps)?),
                format_number(bound(g, 2, eps)?.value),
                format_number(single),
            ])
        })
        .collect();
    for row in rows {
        table.push_row(row?);
    }
    Ok(table)
}

fn fig4() -> Result<CsvTable> {
    let mut table = CsvTable::new(header(&["eps_u", "eps_d", "g", "delta_star", "S_star"]));
    let rows: Vec<Result<Vec<String>>> = (0..20 * 20)
        .into_par_iter()
        .map(|ij| {
            let eps_u = (ij / 20) as f64 / 20.0;
            let eps_d = (ij % 20) as f64 / 20.0;
            Ok(vec![
                format_number(eps_u),
                format_number(eps_d),
                format_number(peak_load(eps_u)?),
                format_number(delta_star_k2(eps_u, eps_d)?),
                format_number(s_star_k2(eps_u, eps_d)?),
            ])
        })
        .collect();
    for row in rows {
        table.push_row(row?);
    }
    Ok(table)
}

fn fig5() -> Result<CsvTable> {
    let mut table = CsvTable::new(header(&[
        "eps",
        "k",
        "g",
        "delta_star",
        "S_star",
        "S_bound",
    ]));
    for eps in FIG_EPS {
        let search = optimize_k(LoadRule::PeakLoad, eps, eps, 32, DEFAULT_ARG_TOL)?;
        for (i, opt) in search.per_k.iter().enumerate() {
            let k = i as u32 + 1;
            table.push_row(vec![
                format_number(eps),
                k.to_string(),
                format_number(search.g),
                format_number(opt.arg_star),
                format_number(opt.value_star),
                format_number(bound(search.g, k, eps)?.value),
            ]);
        }
    }
    Ok(table)
}

/// Builds the data table for one figure.
pub fn figure_table(id: FigureId) -> Result<CsvTable> {
    let mut table = match id {
        FigureId::Fig2 => fig2(),
        FigureId::Fig3 => fig3(),
        FigureId::Fig4 => fig4(),
        FigureId::Fig5 => fig5(),
    }?;
    table.provenance.push(format!("figure: {id}"));
    Ok(table)
}

/// Writes the figure data to `out_path`.
pub fn reproduce_figure(id: FigureId, out_path: &std::path::Path) -> Result<()> {
    figure_table(id)?.write_path(out_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(table: &CsvTable, name: &str) -> Vec<f64> {
        let idx = table.column(name).unwrap();
        table.rows.iter().map(|r| r[idx].parse().unwrap()).collect()
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(figure_table(FigureId::Fig2).unwrap().rows.len(), 303);
        assert_eq!(figure_table(FigureId::Fig3).unwrap().rows.len(), 99);
        assert_eq!(figure_table(FigureId::Fig4).unwrap().rows.len(), 400);
    }

    #[test]
    fn fig3_clean_channel_row() {
        let t = figure_table(FigureId::Fig3).unwrap();
        assert_eq!(t.rows[0][..3], ["0", "1", "0.5"]);
        assert_eq!(t.rows[0][3], format_number(0.5 / std::f64::consts::E));
        assert_eq!(t.rows[0][5], format_number((-1.0f64).exp()));
        for (i, row) in t.rows.iter().enumerate() {
            let eps = i as f64 / 100.0;
            assert_eq!(row[5], format_number((1.0 - eps) * (-1.0f64).exp()));
        }
    }

    #[test]
    fn fig4_monotone_along_each_axis() {
        let t = figure_table(FigureId::Fig4).unwrap();
        let s = column(&t, "S_star");
        // The load follows eps_u, so the optimum grows with uplink erasures and
        // shrinks with downlink erasures.
        for i in 0..20 {
            for j in 0..20 {
                let here = s[i * 20 + j];
                if j + 1 < 20 {
                    assert!(s[i * 20 + j + 1] <= here + 1e-12);
                }
                if i + 1 < 20 {
                    assert!(s[(i + 1) * 20 + j] >= here - 1e-12);
                }
            }
        }
    }

    #[test]
    fn fig5_optimal_relay_counts() {
        let t = figure_table(FigureId::Fig5).unwrap();
        let s = column(&t, "S_star");
        let bound = column(&t, "S_bound");
        for (chunk, expected) in s.chunks(32).zip([1, 2, 4]) {
            let argmax = chunk
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
                + 1;
            assert_eq!(argmax, expected);
        }
        assert!(s.iter().zip(&bound).all(|(s, b)| s <= &(b + 1e-12)));
    }

    #[test]
    fn tables_are_bit_stable() {
        for id in [FigureId::Fig2, FigureId::Fig4] {
            assert_eq!(
                figure_table(id).unwrap().to_csv_string(),
                figure_table(id).unwrap().to_csv_string()
            );
        }
    }
}
