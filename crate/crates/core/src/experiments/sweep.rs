//! Declarative one-axis parameter sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::table::{format_number, CsvTable};
use crate::error::{Error, Result};
use crate::kernels::{HCache, SeriesTruncation};
use crate::model::{
    bound, peak_load, throughput, throughput_closed, throughput_series, SystemParams,
};
use crate::optimize::{optimize_delta, DEFAULT_ARG_TOL};
use crate::sim::{simulate, SimConfig, DEFAULT_WARMUP_SLOTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    G,
    Delta,
    /// Sets `eps_u = eps_d` jointly.
    Eps,
    EpsU,
    EpsD,
    K,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "g" => Axis::G,
            "delta" => Axis::Delta,
            "eps" => Axis::Eps,
            "eps_u" | "eps-u" => Axis::EpsU,
            "eps_d" | "eps-d" => Axis::EpsD,
            "k" => Axis::K,
            other => return Err(Error::domain(format!("unknown sweep axis `{other}`"))),
        })
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::G => "g",
            Axis::Delta => "delta",
            Axis::Eps => "eps",
            Axis::EpsU => "eps_u",
            Axis::EpsD => "eps_d",
            Axis::K => "k",
        })
    }
}

/// Quantities a sweep can report. Columns appear in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Output {
    Analytic,
    Closed,
    Series,
    Bound,
    Simulated,
    DeltaStar,
    SStar,
}

impl Output {
    pub const ALL: [Output; 7] = [
        Output::Analytic,
        Output::Closed,
        Output::Series,
        Output::Bound,
        Output::Simulated,
        Output::DeltaStar,
        Output::SStar,
    ];

    fn columns(self) -> [&'static str; 2] {
        match self {
            Output::Analytic => ["S", "S_err"],
            Output::Closed => ["S_closed", "S_closed_err"],
            Output::Series => ["S_series", "S_series_err"],
            Output::Bound => ["S_bound", "S_bound_err"],
            Output::Simulated => ["S_sim", "S_sim_ci95"],
            Output::DeltaStar => ["delta_star", "delta_star_err"],
            Output::SStar => ["S_star", "S_star_err"],
        }
    }
}

impl FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "analytic" => Output::Analytic,
            "closed" => Output::Closed,
            "series" => Output::Series,
            "bound" => Output::Bound,
            "simulated" => Output::Simulated,
            "delta_star" | "delta-star" => Output::DeltaStar,
            "s_star" | "s-star" => Output::SStar,
            other => return Err(Error::domain(format!("unknown sweep output `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepLoad {
    /// Use `fixed.g` (or the axis value on the `g` axis).
    Fixed,
    /// `g = 1 / (1 - eps_u)` on every row.
    PeakLoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOverrides {
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
}

impl Default for SimOverrides {
    fn default() -> Self {
        Self {
            n_slots: 1_000_000,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub fixed: SystemParams<f64>,
    pub load: SweepLoad,
    pub outputs: Vec<Output>,
    /// Used when `outputs` contains [`Output::Simulated`].
    pub sim: Option<SimOverrides>,
    pub arg_tol: f64,
}

impl SweepSpec {
    pub fn new(
        axis: Axis,
        values: Vec<f64>,
        fixed: SystemParams<f64>,
        outputs: Vec<Output>,
    ) -> Self {
        Self {
            axis,
            values,
            fixed,
            load: SweepLoad::Fixed,
            outputs,
            sim: None,
            arg_tol: DEFAULT_ARG_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::domain("sweep needs at least one axis value"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("sweep values must be strictly increasing"));
        }
        if self.outputs.is_empty() {
            return Err(Error::domain("sweep needs at least one output"));
        }
        if self.axis == Axis::K
            && self
                .values
                .iter()
                .any(|&v| v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64)
        {
            return Err(Error::domain("relay counts must be positive integers"));
        }
        if self.axis == Axis::G && self.load == SweepLoad::PeakLoad {
            return Err(Error::domain(
                "the g axis conflicts with the peak-load rule",
            ));
        }
        if let Some(sim) = &self.sim {
            if sim.n_slots == 0 || sim.warmup_slots == 0 {
                return Err(Error::domain(
                    "simulation needs at least one measured and one warm-up slot",
                ));
            }
        }
        Ok(())
    }

    fn outputs_sorted(&self) -> Vec<Output> {
        let mut outputs = self.outputs.clone();
        outputs.sort();
        outputs.dedup();
        outputs
    }

    fn simulates(&self) -> bool {
        self.outputs.contains(&Output::Simulated)
    }

    /// Column names; a pure function of the spec.
    pub fn columns(&self) -> Vec<String> {
        let mut columns: Vec<String> = ["g", "k", "eps_u", "eps_d", "delta"]
            .iter()
            .map(|c| c.to_string())
            .collect();
        for output in self.outputs_sorted() {
            columns.extend(output.columns().iter().map(|c| c.to_string()));
        }
        if self.simulates() {
            columns.push("seed".into());
            columns.push("n_slots".into());
        }
        columns.push("error".into());
        columns
    }

    fn row_params(&self, value: f64) -> Result<SystemParams<f64>> {
        let mut p = self.fixed;
        match self.axis {
            Axis::G => p.g = value,
            Axis::Delta => p.delta = value,
            Axis::Eps => {
                p.eps_u = value;
                p.eps_d = value;
            }
            Axis::EpsU => p.eps_u = value,
            Axis::EpsD => p.eps_d = value,
            Axis::K => p.k = value as u32,
        }
        if self.load == SweepLoad::PeakLoad {
            p.g = peak_load(p.eps_u)?;
        }
        p.validate()?;
        Ok(p)
    }
}

/// One sweep row. `values` holds two cells per requested output (value and
/// error), `None` where that output failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub axis_value: f64,
    pub params: Option<SystemParams<f64>>,
    pub values: Vec<Option<f64>>,
    pub seed: Option<u64>,
    pub n_slots: Option<u64>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn value(&self, spec: &SweepSpec, column: &str) -> Option<f64> {
        let idx = spec.columns().iter().position(|c| c == column)?;
        self.values.get(idx.checked_sub(5)?).copied().flatten()
    }

    fn cells(&self, spec: &SweepSpec) -> Vec<String> {
        let fmt = |v: Option<f64>| v.map(format_number).unwrap_or_default();
        let mut cells = match &self.params {
            Some(p) => vec![
                format_number(p.g),
                p.k.to_string(),
                format_number(p.eps_u),
                format_number(p.eps_d),
                format_number(p.delta),
            ],
            None => vec![String::new(); 5],
        };
        cells.extend(self.values.iter().map(|&v| fmt(v)));
        cells.resize(
            spec.columns().len() - 1 - if spec.simulates() { 2 } else { 0 },
            String::new(),
        );
        if spec.simulates() {
            cells.push(self.seed.map(|s| s.to_string()).unwrap_or_default());
            cells.push(self.n_slots.map(|s| s.to_string()).unwrap_or_default());
        }
        cells.push(self.error.clone().unwrap_or_default());
        cells
    }
}

fn evaluate(
    spec: &SweepSpec,
    output: Output,
    p: &SystemParams<f64>,
    value: f64,
) -> Result<(f64, f64)> {
    match output {
        Output::Analytic => throughput(p).map(|r| (r.value, r.est_abs_error)),
        Output::Closed => {
            throughput_closed(p, &HCache::default()).map(|r| (r.value, r.est_abs_error))
        }
        Output::Series => throughput_series(p, &SeriesTruncation::for_load(p.g))
            .map(|r| (r.value, r.est_abs_error)),
        Output::Bound => bound(p.g, p.k, p.eps_u).map(|r| (r.value, r.est_abs_error)),
        Output::Simulated => {
            let sim = spec.sim.unwrap_or_default();
            let config = SimConfig {
                params: *p,
                n_slots: sim.n_slots,
                warmup_slots: sim.warmup_slots,
                seed: sim.seed,
                // Keyed by the axis value so permuting the sweep permutes rows only.
                stream: value.to_bits(),
                mode: crate::sim::SimMode::FullSystem,
            };
            simulate(&config).map(|s| (s.throughput_estimate, s.ci95_halfwidth))
        }
        Output::DeltaStar => optimize_delta(p.g, p.k, p.eps_u, p.eps_d, spec.arg_tol)
            .map(|r| (r.arg_star, r.arg_tol)),
        Output::SStar => {
            optimize_delta(p.g, p.k, p.eps_u, p.eps_d, spec.arg_tol).map(|r| (r.value_star, 0.0))
        }
    }
}

fn run_row(spec: &SweepSpec, value: f64) -> ResultRow {
    let sim = spec.simulates().then(|| spec.sim.unwrap_or_default());
    let mut row = ResultRow {
        axis_value: value,
        params: None,
        values: Vec::new(),
        seed: sim.map(|s| s.seed),
        n_slots: sim.map(|s| s.n_slots),
        error: None,
    };
    let params = match spec.row_params(value) {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.params = Some(params);
    let mut errors = Vec::new();
    for output in spec.outputs_sorted() {
        match evaluate(spec, output, &params, value) {
            Ok((v, err)) => row.values.extend([Some(v), Some(err)]),
            Err(e) => {
                errors.push(format!("{}: {e}", output.columns()[0]));
                row.values.extend([None, None]);
            }
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Evaluates every axis value independently. Errors of individual outputs
/// are reported in the row's `error` field; only an invalid spec fails the
/// whole sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    Ok(spec.values.par_iter().map(|&v| run_row(spec, v)).collect())
}

pub fn sweep_table(spec: &SweepSpec, rows: &[ResultRow]) -> CsvTable {
    let mut table = CsvTable::new(spec.columns());
    table.provenance.push(format!("sweep axis: {}", spec.axis));
    if let Some(sim) = spec.simulates().then(|| spec.sim.unwrap_or_default()) {
        table.provenance.push(format!("seed: {}", sim.seed));
    }
    for row in rows {
        table.push_row(row.cells(spec));
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed() -> SystemParams<f64> {
        SystemParams::new(1.0, 1, 0.2, 0.1, 1.0).unwrap()
    }

    #[test]
    fn columns_follow_outputs() {
        let spec = SweepSpec::new(
            Axis::Delta,
            vec![0.5],
            fixed(),
            vec![Output::Bound, Output::Analytic],
        );
        assert_eq!(
            spec.columns(),
            [
                "g",
                "k",
                "eps_u",
                "eps_d",
                "delta",
                "S",
                "S_err",
                "S_bound",
                "S_bound_err",
                "error"
            ]
        );
        let spec = SweepSpec {
            outputs: vec![Output::Simulated],
            ..spec
        };
        assert_eq!(
            spec.columns()[5..],
            ["S_sim", "S_sim_ci95", "seed", "n_slots", "error"]
        );
    }

    #[test]
    fn single_relay_is_monotone_in_delta() {
        let spec = SweepSpec::new(
            Axis::Delta,
            vec![0.0, 0.5, 1.0],
            fixed(),
            vec![Output::Analytic],
        );
        let rows = run_sweep(&spec).unwrap();
        let s: Vec<f64> = rows.iter().map(|r| r.value(&spec, "S").unwrap()).collect();
        assert_eq!(s[0], 0.0);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn throughput_curve_has_interior_peak() {
        let values: Vec<f64> = (0..=100).map(|i| i as f64 / 20.0).collect();
        let fixed = SystemParams::new(1.0, 2, 0.3, 0.3, 1.0).unwrap();
        let spec = SweepSpec::new(Axis::G, values, fixed, vec![Output::Analytic]);
        let rows = run_sweep(&spec).unwrap();
        let s: Vec<f64> = rows.iter().map(|r| r.value(&spec, "S").unwrap()).collect();
        let (imax, _) = s
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert!(imax > 0 && imax < s.len() - 1);
    }

    #[test]
    fn optimal_relay_count_at_half_erasure() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let spec = SweepSpec {
            load: SweepLoad::PeakLoad,
            ..SweepSpec::new(
                Axis::K,
                values,
                SystemParams::new(1.0, 1, 0.5, 0.5, 1.0).unwrap(),
                vec![Output::SStar],
            )
        };
        let rows = run_sweep(&spec).unwrap();
        let best = rows
            .iter()
            .max_by(|a, b| {
                a.value(&spec, "S_star")
                    .unwrap()
                    .total_cmp(&b.value(&spec, "S_star").unwrap())
            })
            .unwrap();
        assert_eq!(best.params.unwrap().k, 4);
    }

    #[test]
    fn errors_stay_in_their_row() {
        let fixed = SystemParams::new(1.0, 2, 0.3, 0.3, 1.0).unwrap();
        let spec = SweepSpec::new(
            Axis::EpsU,
            vec![0.0, 0.3],
            fixed,
            vec![Output::Closed, Output::Series],
        );
        let rows = run_sweep(&spec).unwrap();
        assert!(rows[0].error.as_deref().unwrap().contains("singular"));
        assert!(rows[0].value(&spec, "S_series").is_some());
        assert!(rows[1].error.is_none());
        let table = sweep_table(&spec, &rows).to_csv_string();
        assert!(table.lines().nth(4).unwrap().starts_with("1,2,0,0.3,1,,,"));
    }

    #[test]
    fn peak_load_rows_report_domain_errors() {
        let fixed = SystemParams::new(1.0, 2, 0.3, 0.3, 1.0).unwrap();
        let spec = SweepSpec {
            load: SweepLoad::PeakLoad,
            ..SweepSpec::new(Axis::Eps, vec![0.5, 1.0], fixed, vec![Output::Analytic])
        };
        let rows = run_sweep(&spec).unwrap();
        assert!(rows[0].error.is_none());
        assert!(rows[1].params.is_none() && rows[1].error.is_some());
    }

    #[test]
    fn rejects_invalid_specs() {
        let base = SweepSpec::new(Axis::G, vec![1.0, 0.5], fixed(), vec![Output::Analytic]);
        assert!(run_sweep(&base).is_err());
        assert!(run_sweep(&SweepSpec {
            values: vec![],
            ..base.clone()
        })
        .is_err());
        assert!(run_sweep(&SweepSpec {
            values: vec![1.0],
            outputs: vec![],
            ..base.clone()
        })
        .is_err());
        let k = SweepSpec {
            axis: Axis::K,
            values: vec![1.5],
            ..base.clone()
        };
        assert!(run_sweep(&k).is_err());
        let peak = SweepSpec {
            values: vec![1.0],
            load: SweepLoad::PeakLoad,
            ..base
        };
        assert!(run_sweep(&peak).is_err());
    }

    #[test]
    fn permuting_values_permutes_rows() {
        let fixed = SystemParams::new(1.0, 2, 0.3, 0.3, 0.8).unwrap();
        let sim = Some(SimOverrides {
            n_slots: 2_000,
            warmup_slots: 10,
            seed: 3,
        });
        let spec = SweepSpec {
            sim,
            ..SweepSpec::new(
                Axis::G,
                vec![0.5, 1.0, 1.5],
                fixed,
                vec![Output::Simulated, Output::Analytic],
            )
        };
        let a = run_sweep(&spec).unwrap();
        // Same values in a different spec order (validated order is increasing, so
        // evaluate the rows one at a time in reverse).
        let b: Vec<ResultRow> = spec
            .values
            .iter()
            .rev()
            .map(|&v| run_row(&spec, v))
            .collect();
        for (x, y) in a.iter().zip(b.iter().rev()) {
            assert_eq!(x, y);
        }
    }
}
