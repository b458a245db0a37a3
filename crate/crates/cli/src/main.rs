// Negated comparisons like `!(x > 0.0)` are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use relay_aloha::experiments::{
    figure_table, format_number, run_sweep, sweep_table, Axis, CsvTable, FigureId, Output,
    SimOverrides, SweepLoad, SweepSpec,
};
use relay_aloha::kernels::{HCache, SeriesTruncation};
use relay_aloha::model::{bound_closed, bound_series, throughput_closed, throughput_series};
use relay_aloha::optimize::{DEFAULT_ARG_TOL, DEFAULT_G_MAX, DEFAULT_K_MAX};
use relay_aloha::sim::{SimConfig, DEFAULT_WARMUP_SLOTS};
use relay_aloha::{
    bound, optimize_delta, optimize_k, optimize_load, peak_load, simulate, throughput, LoadRule,
    SystemParams, ThroughputResult,
};

/// Throughput of slotted ALOHA with K relays over erasure channels.
#[derive(Debug, Parser)]
#[command(name = "relay-aloha", version)]
struct Cli {
    /// Write CSV here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// End-to-end throughput at one operating point.
    Eval {
        #[command(flatten)]
        params: Params,
        #[arg(long, value_enum, default_value_t = Evaluator::Auto)]
        method: Evaluator,
    },
    /// Upper bound on the throughput (perfect downlink).
    Bound {
        #[arg(long, value_parser = parse_load)]
        g: f64,
        #[arg(long, value_parser = parse_relays)]
        k: u32,
        #[arg(long, value_parser = parse_probability)]
        eps_u: f64,
        #[arg(long, value_enum, default_value_t = Evaluator::Auto)]
        method: Evaluator,
    },
    /// Best forwarding probability for fixed load and relay count.
    OptimizeDelta {
        #[command(flatten)]
        load: LoadArgs,
        #[arg(long, value_parser = parse_relays)]
        k: u32,
        #[arg(long, value_parser = parse_probability)]
        eps_u: f64,
        #[arg(long, value_parser = parse_probability)]
        eps_d: f64,
        #[arg(long, value_parser = parse_arg_tol, default_value_t = DEFAULT_ARG_TOL)]
        arg_tol: f64,
    },
    /// Best relay count, optimizing the forwarding probability for each.
    OptimizeK {
        #[command(flatten)]
        load: LoadArgs,
        #[arg(long, value_parser = parse_probability)]
        eps_u: f64,
        #[arg(long, value_parser = parse_probability)]
        eps_d: f64,
        #[arg(long, value_parser = parse_relays, default_value_t = DEFAULT_K_MAX)]
        k_max: u32,
        #[arg(long, value_parser = parse_arg_tol, default_value_t = DEFAULT_ARG_TOL)]
        arg_tol: f64,
    },
    /// Best channel load for a fixed configuration.
    OptimizeLoad {
        #[arg(long, value_parser = parse_relays)]
        k: u32,
        #[arg(long, value_parser = parse_probability)]
        eps_u: f64,
        #[arg(long, value_parser = parse_probability)]
        eps_d: f64,
        #[arg(long, value_parser = parse_probability)]
        delta: f64,
        #[arg(long, value_parser = parse_positive, default_value_t = DEFAULT_G_MAX)]
        g_max: f64,
        #[arg(long, value_parser = parse_arg_tol, default_value_t = DEFAULT_ARG_TOL)]
        arg_tol: f64,
    },
    /// Slot-level Monte Carlo estimate with a 95% confidence interval.
    Simulate {
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        sim: SimArgs,
        /// RNG substream.
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
    },
    /// One-axis parameter sweep.
    Sweep(SweepArgs),
    /// Data behind one of the figures.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Debug, Args)]
struct Params {
    /// Channel load, packets per slot.
    #[arg(long, value_parser = parse_load)]
    g: f64,
    /// Number of relays.
    #[arg(long, value_parser = parse_relays)]
    k: u32,
    /// Uplink erasure probability.
    #[arg(long, value_parser = parse_probability)]
    eps_u: f64,
    /// Downlink erasure probability.
    #[arg(long, value_parser = parse_probability)]
    eps_d: f64,
    /// Forwarding probability.
    #[arg(long, value_parser = parse_probability)]
    delta: f64,
}

impl Params {
    fn system(&self) -> relay_aloha::Result<SystemParams> {
        SystemParams::new(self.g, self.k, self.eps_u, self.eps_d, self.delta)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct LoadArgs {
    #[arg(long, value_parser = parse_load)]
    g: Option<f64>,
    /// Use G = 1 / (1 - eps_u).
    #[arg(long)]
    peak_load: bool,
}

impl LoadArgs {
    fn rule(&self) -> LoadRule<f64> {
        match self.g {
            Some(g) => LoadRule::Fixed(g),
            None => LoadRule::PeakLoad,
        }
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Measured slots.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1_000_000)]
    slots: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = DEFAULT_WARMUP_SLOTS)]
    warmup: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Comma-separated, strictly increasing axis values.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "linspace",
        conflicts_with = "linspace"
    )]
    values: Vec<f64>,
    /// `start,stop,count`: evenly spaced values including both ends.
    #[arg(long, value_parser = parse_linspace, value_name = "START,STOP,COUNT")]
    linspace: Option<Linspace>,
    /// Comma-separated outputs.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "analytic")]
    outputs: Vec<SweepOutput>,
    #[arg(long, value_parser = parse_load, default_value_t = 1.0)]
    g: f64,
    #[arg(long, value_parser = parse_relays, default_value_t = 2)]
    k: u32,
    #[arg(long, value_parser = parse_probability, default_value_t = 0.0)]
    eps_u: f64,
    #[arg(long, value_parser = parse_probability, default_value_t = 0.0)]
    eps_d: f64,
    #[arg(long, value_parser = parse_probability, default_value_t = 1.0)]
    delta: f64,
    /// Set G = 1 / (1 - eps_u) on every row.
    #[arg(long)]
    peak_load: bool,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_parser = parse_arg_tol, default_value_t = DEFAULT_ARG_TOL)]
    arg_tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Evaluator {
    Auto,
    Closed,
    Series,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    /// At least one relay decodes; the downlink is ignored.
    Bound,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepAxis {
    G,
    Delta,
    Eps,
    EpsU,
    EpsD,
    K,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepOutput {
    Analytic,
    Closed,
    Series,
    Bound,
    Simulated,
    DeltaStar,
    SStar,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy)]
struct Linspace {
    start: f64,
    stop: f64,
    count: usize,
}

impl Linspace {
    fn values(self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let span = self.stop - self.start;
        (0..self.count)
            .map(|i| self.start + span * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

fn parse_linspace(s: &str) -> Result<Linspace, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [start, stop, count] = parts[..] else {
        return Err(format!("expected START,STOP,COUNT, got `{s}`"));
    };
    let count = match count.trim().parse::<usize>() {
        Ok(n) if n >= 1 => n,
        _ => return Err(format!("`{count}` is not a positive count")),
    };
    Ok(Linspace {
        start: parse_f64(start.trim())?,
        stop: parse_f64(stop.trim())?,
        count,
    })
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{v} is not a probability in [0, 1]"));
    }
    Ok(v)
}

fn parse_load(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err(format!("load must be non-negative, got {v}"));
    }
    Ok(v)
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v <= 0.0 {
        return Err(format!("expected a positive number, got {v}"));
    }
    Ok(v)
}

fn parse_relays(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("`{s}` is not a positive relay count")),
    }
}

fn parse_arg_tol(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(v > 0.0 && v <= 0.1) {
        return Err(format!("argument tolerance must lie in (0, 0.1], got {v}"));
    }
    Ok(v)
}

fn strings<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|c| c.to_string()).collect()
}

fn param_cells(p: &SystemParams) -> Vec<String> {
    vec![
        format_number(p.g),
        p.k.to_string(),
        format_number(p.eps_u),
        format_number(p.eps_d),
        format_number(p.delta),
    ]
}

fn result_cells(r: &ThroughputResult) -> Vec<String> {
    vec![
        format_number(r.value),
        format_number(r.est_abs_error),
        r.method.to_string(),
        r.terms_used.to_string(),
    ]
}

fn eval(params: &Params, method: Evaluator) -> relay_aloha::Result<CsvTable> {
    let p = params.system()?;
    let r = match method {
        Evaluator::Auto => throughput(&p)?,
        Evaluator::Closed => throughput_closed(&p, &HCache::default())?,
        Evaluator::Series => throughput_series(&p, &SeriesTruncation::for_load(p.g))?,
    };
    let mut table = CsvTable::new(strings([
        "g", "k", "eps_u", "eps_d", "delta", "S", "S_err", "method", "terms",
    ]));
    let mut row = param_cells(&p);
    row.extend(result_cells(&r));
    table.push_row(row);
    Ok(table)
}

fn bound_table(g: f64, k: u32, eps_u: f64, method: Evaluator) -> relay_aloha::Result<CsvTable> {
    let r = match method {
        Evaluator::Auto => bound(g, k, eps_u)?,
        Evaluator::Closed => bound_closed(g, k, eps_u, &HCache::default())?,
        Evaluator::Series => bound_series(g, k, eps_u, &SeriesTruncation::for_load(g))?,
    };
    let mut table = CsvTable::new(strings([
        "g",
        "k",
        "eps_u",
        "S_bound",
        "S_bound_err",
        "method",
        "terms",
    ]));
    let mut row = vec![format_number(g), k.to_string(), format_number(eps_u)];
    row.extend(result_cells(&r));
    table.push_row(row);
    Ok(table)
}

fn run(cli: Cli) -> relay_aloha::Result<CsvTable> {
    match cli.command {
        Command::Eval { params, method } => eval(&params, method),
        Command::Bound {
            g,
            k,
            eps_u,
            method,
        } => bound_table(g, k, eps_u, method),
        Command::OptimizeDelta {
            load,
            k,
            eps_u,
            eps_d,
            arg_tol,
        } => {
            let g = load.rule().load(eps_u)?;
            let r = optimize_delta(g, k, eps_u, eps_d, arg_tol)?;
            let mut table = CsvTable::new(strings([
                "g",
                "k",
                "eps_u",
                "eps_d",
                "delta_star",
                "S_star",
                "arg_tol",
                "method",
                "evaluations",
            ]));
            table.push_row(vec![
                format_number(g),
                k.to_string(),
                format_number(eps_u),
                format_number(eps_d),
                format_number(r.arg_star),
                format_number(r.value_star),
                format_number(r.arg_tol),
                r.method.to_string(),
                r.evaluations.to_string(),
            ]);
            Ok(table)
        }
        Command::OptimizeK {
            load,
            eps_u,
            eps_d,
            k_max,
            arg_tol,
        } => {
            let search = optimize_k(load.rule(), eps_u, eps_d, k_max, arg_tol)?;
            let mut table = CsvTable::new(strings([
                "g",
                "k",
                "eps_u",
                "eps_d",
                "delta_star",
                "S_star",
                "is_best",
            ]));
            table
                .provenance
                .push(format!("best k: {}", search.best.arg_star));
            for (i, r) in search.per_k.iter().enumerate() {
                let k = i as u32 + 1;
                table.push_row(vec![
                    format_number(search.g),
                    k.to_string(),
                    format_number(eps_u),
                    format_number(eps_d),
                    format_number(r.arg_star),
                    format_number(r.value_star),
                    u8::from(k == search.best.arg_star).to_string(),
                ]);
            }
            Ok(table)
        }
        Command::OptimizeLoad {
            k,
            eps_u,
            eps_d,
            delta,
            g_max,
            arg_tol,
        } => {
            let r = optimize_load(k, eps_u, eps_d, delta, g_max, arg_tol)?;
            let mut table = CsvTable::new(strings([
                "k",
                "eps_u",
                "eps_d",
                "delta",
                "g_star",
                "S_star",
                "arg_tol",
                "evaluations",
            ]));
            table.push_row(vec![
                k.to_string(),
                format_number(eps_u),
                format_number(eps_d),
                format_number(delta),
                format_number(r.arg_star),
                format_number(r.value_star),
                format_number(r.arg_tol),
                r.evaluations.to_string(),
            ]);
            Ok(table)
        }
        Command::Simulate {
            params,
            sim,
            stream,
            mode,
        } => {
            let p = params.system()?;
            let mut config = SimConfig::new(p, sim.slots, sim.seed);
            config.warmup_slots = sim.warmup;
            config.stream = stream;
            if let Mode::Bound = mode {
                config = config.bound_mode();
            }
            let stats = simulate(&config)?;
            let mut table = CsvTable::new(strings([
                "g",
                "k",
                "eps_u",
                "eps_d",
                "delta",
                "mode",
                "S_sim",
                "S_sim_ci95",
                "delivered",
                "uplink_union_rate",
                "sink_collision_rate",
                "seed",
                "stream",
                "n_slots",
                "warmup",
            ]));
            table.provenance.push(format!("seed: {}", sim.seed));
            let mut row = param_cells(&p);
            row.extend([
                stats.mode.to_string(),
                format_number(stats.throughput_estimate),
                format_number(stats.ci95_halfwidth),
                stats.delivered_packets.to_string(),
                format_number(stats.uplink_union_rate),
                format_number(stats.sink_collision_rate),
                sim.seed.to_string(),
                stream.to_string(),
                sim.slots.to_string(),
                sim.warmup.to_string(),
            ]);
            table.push_row(row);
            Ok(table)
        }
        Command::Sweep(args) => {
            let spec = sweep_spec(args)?;
            let rows = run_sweep(&spec)?;
            Ok(sweep_table(&spec, &rows))
        }
        Command::Reproduce { figure } => figure_table(match figure {
            Figure::Fig2 => FigureId::Fig2,
            Figure::Fig3 => FigureId::Fig3,
            Figure::Fig4 => FigureId::Fig4,
            Figure::Fig5 => FigureId::Fig5,
        }),
    }
}

fn sweep_values(args: &SweepArgs) -> Vec<f64> {
    match args.linspace {
        Some(l) => l.values(),
        None => args.values.clone(),
    }
}

/// Range checks on the axis values, done before any computation so bad input
/// is reported as a usage error.
fn check_sweep_values(args: &SweepArgs) -> Result<(), String> {
    let values = sweep_values(args);
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err("sweep values must be strictly increasing".into());
    }
    for v in values {
        let text = v.to_string();
        match args.axis {
            SweepAxis::G => parse_load(&text).map(drop)?,
            SweepAxis::K => {
                if v.fract() != 0.0 {
                    return Err(format!("`{v}` is not a positive relay count"));
                }
                parse_relays(&text).map(drop)?
            }
            _ => parse_probability(&text).map(drop)?,
        }
    }
    Ok(())
}

fn sweep_spec(args: SweepArgs) -> relay_aloha::Result<SweepSpec> {
    let values = sweep_values(&args);
    let axis = match args.axis {
        SweepAxis::G => Axis::G,
        SweepAxis::Delta => Axis::Delta,
        SweepAxis::Eps => Axis::Eps,
        SweepAxis::EpsU => Axis::EpsU,
        SweepAxis::EpsD => Axis::EpsD,
        SweepAxis::K => Axis::K,
    };
    let outputs = args
        .outputs
        .iter()
        .map(|o| match o {
            SweepOutput::Analytic => Output::Analytic,
            SweepOutput::Closed => Output::Closed,
            SweepOutput::Series => Output::Series,
            SweepOutput::Bound => Output::Bound,
            SweepOutput::Simulated => Output::Simulated,
            SweepOutput::DeltaStar => Output::DeltaStar,
            SweepOutput::SStar => Output::SStar,
        })
        .collect();
    let fixed = SystemParams::new(args.g, args.k, args.eps_u, args.eps_d, args.delta)?;
    if args.peak_load {
        // Fail early with a clear message instead of one error per row.
        if axis != Axis::EpsU && axis != Axis::Eps {
            peak_load(args.eps_u)?;
        }
    }
    let mut spec = SweepSpec::new(axis, values, fixed, outputs);
    spec.load = if args.peak_load {
        SweepLoad::PeakLoad
    } else {
        SweepLoad::Fixed
    };
    spec.sim = Some(SimOverrides {
        n_slots: args.sim.slots,
        warmup_slots: args.sim.warmup,
        seed: args.sim.seed,
    });
    spec.arg_tol = args.arg_tol;
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout with status 0, usage errors to
            // stderr with status 2.
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Command::Sweep(args) = &cli.command {
        if let Err(msg) = check_sweep_values(args) {
            Cli::command().error(ErrorKind::ValueValidation, msg).exit();
        }
    }
    let out = cli.out.clone();
    let result = run(cli).and_then(|table| match &out {
        Some(path) => table.write_path(path),
        None => table.write_to(io::stdout().lock()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
