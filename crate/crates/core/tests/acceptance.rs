//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.
//!
//! Expected values come from the formulas' stated limits or from independent
//! evaluations (series vs. closed form, simulation vs. analysis).

use std::f64::consts::E;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use relay_aloha::experiments::{figure_table, FigureId};
use relay_aloha::kernels::{ancillary_h, ancillary_h_oracle, HCache, SeriesTruncation};
use relay_aloha::model::{bound_closed, bound_series, throughput_closed, throughput_series};
use relay_aloha::sim::SimConfig;
use relay_aloha::{
    bound, delta_star_k2, optimize_delta, optimize_delta_numeric, optimize_k, peak_load, s_star_k2,
    simulate, throughput, LoadRule, SystemParams,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// The analytic invariant grid: 5 loads x 8 relay counts x 4 uplink x 3
/// downlink erasure rates x 3 forwarding probabilities.
fn invariant_grid() -> Vec<SystemParams> {
    let mut grid = Vec::new();
    for g in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for k in 1..=8 {
            for eps_u in [0.05, 0.3, 0.5, 0.9] {
                for eps_d in [0.0, 0.3, 0.7] {
                    for delta in [0.1, 0.5, 1.0] {
                        grid.push(SystemParams::new(g, k, eps_u, eps_d, delta).unwrap());
                    }
                }
            }
        }
    }
    grid
}

fn timed(limit: Duration, started: Instant) -> Result<Duration, String> {
    let elapsed = started.elapsed();
    ensure!(elapsed < limit, "took {elapsed:.2?}, limit {limit:?}");
    Ok(elapsed)
}

fn classical_slotted_aloha() -> Outcome {
    let started = Instant::now();
    let p = SystemParams::new(1.0, 1, 0.0, 0.0, 1.0).unwrap();
    let exact = (-1.0f64).exp();
    let s = throughput(&p).map_err(|e| e.to_string())?.value;
    ensure!(
        (s - exact).abs() <= 1e-15,
        "analytic S = {s}, expected {exact}"
    );
    let stats = simulate(&SimConfig::new(p, 1_000_000, 2024)).map_err(|e| e.to_string())?;
    let dev = (stats.throughput_estimate - exact).abs();
    ensure!(
        dev <= 3.0 * stats.ci95_halfwidth,
        "simulated {} ± {} vs {exact}",
        stats.throughput_estimate,
        stats.ci95_halfwidth
    );
    let elapsed = timed(Duration::from_secs(5), started)?;
    Ok(format!(
        "S = {s:.10}, simulated {:.5} ± {:.5} in {elapsed:.2?}",
        stats.throughput_estimate, stats.ci95_halfwidth
    ))
}

fn clean_channel_optimum() -> Outcome {
    let delta = delta_star_k2(0.0f64, 0.0).map_err(|e| e.to_string())?;
    ensure!(delta == 0.5, "delta* = {delta}, expected exactly 0.5");
    let s = s_star_k2(0.0f64, 0.0).map_err(|e| e.to_string())?;
    let expected = 1.0 / (2.0 * E);
    ensure!(
        (s - expected).abs() <= 1e-15,
        "S* = {s}, expected {expected}"
    );
    let numeric = optimize_delta_numeric(1.0f64, 2, 0.0, 0.0, 1e-6).map_err(|e| e.to_string())?;
    ensure!(
        (numeric.arg_star - 0.5).abs() <= 1e-6,
        "numerical delta* = {}",
        numeric.arg_star
    );
    ensure!(
        (numeric.value_star - expected).abs() <= 1e-12,
        "numerical S* = {}",
        numeric.value_star
    );
    let dispatched = optimize_delta(1.0f64, 2, 0.0, 0.0, 1e-6).map_err(|e| e.to_string())?;
    ensure!(
        dispatched.arg_star == 0.5,
        "optimize_delta returned {}",
        dispatched.arg_star
    );
    Ok(format!(
        "delta* = 0.5, S* = {s:.10}, numerical delta* = {:.9}",
        numeric.arg_star
    ))
}

fn bound_limit() -> Outcome {
    let eps_u = 0.98f64;
    let g = peak_load(eps_u).map_err(|e| e.to_string())?;
    let b = bound(g, 2, eps_u).map_err(|e| e.to_string())?.value;
    let limit = 1.0 - (1.0 - 1.0 / E).powi(2);
    ensure!((b - limit).abs() < 0.01, "bound = {b}, limit {limit}");
    Ok(format!("bound = {b:.6}, limit {limit:.6}"))
}

fn load_curve_ordering() -> Outcome {
    let started = Instant::now();
    let curve = |eps: f64, g: f64| {
        throughput(&SystemParams::new(g, 2, eps, eps, 1.0).unwrap())
            .unwrap()
            .value
    };
    let peak = |eps: f64| {
        (0..=100)
            .map(|i| curve(eps, i as f64 / 20.0))
            .fold(f64::MIN, f64::max)
    };
    let (p1, p3, p5) = (peak(0.1), peak(0.3), peak(0.5));
    ensure!(
        p3 > p5 && p3 > p1,
        "peaks: eps 0.1 -> {p1}, 0.3 -> {p3}, 0.5 -> {p5}"
    );
    let low = [0.1, 0.3, 0.5].map(|eps| curve(eps, 0.2));
    ensure!(low[0] < low[1] && low[0] < low[2], "at G = 0.2: {low:?}");
    let elapsed = timed(Duration::from_secs(1), started)?;
    Ok(format!(
        "peaks {p1:.4} / {p3:.4} / {p5:.4} for eps 0.1 / 0.3 / 0.5 ({elapsed:.2?})"
    ))
}

fn relay_crossover() -> Outcome {
    // Positive where two relays beat a single relay.
    let gain = |eps: f64| s_star_k2(eps, eps).unwrap() - (1.0 - eps) / E;
    ensure!(
        gain(0.0) < 0.0 && gain(0.9) > 0.0,
        "no sign change on [0, 0.9]"
    );
    let (mut lo, mut hi) = (0.0, 0.9);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if gain(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps_c = 0.5 * (lo + hi);
    for i in 0..=9000 {
        let eps = i as f64 / 10_000.0;
        if (eps - eps_c).abs() < 1e-9 {
            continue;
        }
        let g = gain(eps);
        ensure!(
            if eps < eps_c { g < 0.0 } else { g > 0.0 },
            "gain {g} at eps = {eps}, eps_c = {eps_c}"
        );
    }
    // The closed-form optimum must agree with the numerical optimizer at the threshold.
    let g = peak_load(eps_c).unwrap();
    let numeric = optimize_delta_numeric(g, 2, eps_c, eps_c, 1e-6).map_err(|e| e.to_string())?;
    let closed = s_star_k2(eps_c, eps_c).unwrap();
    ensure!(
        (numeric.value_star - closed).abs() < 1e-10,
        "S* numeric {} vs {closed}",
        numeric.value_star
    );
    Ok(format!("eps_c = {eps_c:.10}"))
}

fn optimal_relay_count() -> Outcome {
    let started = Instant::now();
    let mut report = Vec::new();
    for (eps, expected) in [(0.1, 1), (0.3, 2), (0.5, 4)] {
        let search =
            optimize_k(LoadRule::PeakLoad, eps, eps, 32, 1e-6).map_err(|e| e.to_string())?;
        let k_star = search.best.arg_star;
        ensure!(
            k_star == expected,
            "K* = {k_star} at eps = {eps}, expected {expected}"
        );
        let s: Vec<f64> = search.per_k[..10].iter().map(|r| r.value_star).collect();
        for k in 1..10 {
            let (prev, next) = (s[k - 1], s[k]);
            if (k as u32) < k_star {
                ensure!(
                    next > prev,
                    "S* not increasing at K = {} for eps = {eps}",
                    k + 1
                );
            } else {
                ensure!(
                    next < prev,
                    "S* not decreasing at K = {} for eps = {eps}",
                    k + 1
                );
            }
        }
        report.push(format!("eps {eps} -> K* = {k_star}"));
    }
    let elapsed = timed(Duration::from_secs(10), started)?;
    Ok(format!("{} ({elapsed:.2?})", report.join(", ")))
}

fn closed_series_equivalence() -> Outcome {
    let cache = HCache::default();
    let mut s_diff = 0.0f64;
    let mut b_diff = 0.0f64;
    let grid = invariant_grid();
    for p in &grid {
        let trunc = SeriesTruncation::for_load(p.g);
        let closed = throughput_closed(p, &cache)
            .map_err(|e| e.to_string())?
            .value;
        let series = throughput_series(p, &trunc)
            .map_err(|e| e.to_string())?
            .value;
        s_diff = s_diff.max((closed - series).abs());
        let closed = bound_closed(p.g, p.k, p.eps_u, &cache)
            .map_err(|e| e.to_string())?
            .value;
        let series = bound_series(p.g, p.k, p.eps_u, &trunc)
            .map_err(|e| e.to_string())?
            .value;
        b_diff = b_diff.max((closed - series).abs());
    }
    ensure!(
        s_diff < 1e-9,
        "throughput max |closed - series| = {s_diff:e}"
    );
    ensure!(b_diff < 1e-10, "bound max |closed - series| = {b_diff:e}");
    Ok(format!(
        "{} points, max diff S {s_diff:.2e}, bound {b_diff:.2e}",
        grid.len()
    ))
}

fn ancillary_oracle() -> Outcome {
    let cache = HCache::default();
    let trunc = SeriesTruncation::default();
    let mut worst = 0.0f64;
    for m in 0..=12 {
        for i in 0..=100 {
            let x = i as f64 / 10.0;
            let fast = ancillary_h(m, x, &cache).map_err(|e| e.to_string())?;
            let oracle = ancillary_h_oracle(m, x, &trunc).map_err(|e| e.to_string())?;
            let rel = if oracle == 0.0 {
                fast.abs()
            } else {
                ((fast - oracle) / oracle).abs()
            };
            worst = worst.max(rel);
        }
    }
    ensure!(worst <= 1e-10, "worst relative error {worst:e}");
    for x in [0.0, 0.3, 1.0, 2.5, 7.0, 10.0] {
        let h1 = ancillary_h(1, x, &cache).unwrap();
        let h2 = ancillary_h(2, x, &cache).unwrap();
        let (e1, e2) = (x * x.exp(), (x + x * x) * x.exp());
        ensure!(
            (h1 - e1).abs() <= 1e-13 * e1.max(1.0),
            "H_1({x}) = {h1}, expected {e1}"
        );
        ensure!(
            (h2 - e2).abs() <= 1e-13 * e2.max(1.0),
            "H_2({x}) = {h2}, expected {e2}"
        );
    }
    Ok(format!(
        "m <= 12, x in [0, 10]: worst relative error {worst:.2e}"
    ))
}

fn simulator_oracle() -> Outcome {
    let started = Instant::now();
    let grid = invariant_grid();
    let check = |(i, p): (usize, &SystemParams), n_slots: u64| {
        let exact = throughput(p).unwrap().value;
        let mut config = SimConfig::new(*p, n_slots, 0x5eed);
        config.stream = i as u64;
        let stats = simulate(&config).unwrap();
        (stats.throughput_estimate - exact).abs() <= 3.0 * stats.ci95_halfwidth
    };
    let failed: Vec<usize> = grid
        .par_iter()
        .enumerate()
        .filter(|&(i, p)| !check((i, p), 1_000_000))
        .map(|(i, _)| i)
        .collect();
    let first_pass = grid.len() - failed.len();
    let still_failing = failed
        .iter()
        .filter(|&&i| !check((i, &grid[i]), 10_000_000))
        .count();
    let pass_rate = first_pass as f64 / grid.len() as f64;
    ensure!(
        pass_rate >= 0.99,
        "only {first_pass}/{} points within 3 CI at 1e6 slots",
        grid.len()
    );
    let elapsed = timed(Duration::from_secs(300), started)?;
    Ok(format!(
        "{first_pass}/{} within 3 CI at 1e6 slots; {} rerun at 1e7, {still_failing} still outside ({elapsed:.1?})",
        grid.len(),
        failed.len()
    ))
}

fn dominance_and_range() -> Outcome {
    const SLACK: f64 = 1e-12;
    let mut points = invariant_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20_000 {
        let g = 10.0 * rng.random::<f64>();
        let k = rng.random_range(1..=32);
        let eps_u = match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random(),
        };
        points.push(SystemParams::new(g, k, eps_u, rng.random(), rng.random()).unwrap());
    }
    for eps in [0.1, 0.3, 0.5] {
        for i in 0..=100 {
            points.push(SystemParams::new(i as f64 / 20.0, 2, eps, eps, 1.0).unwrap());
        }
    }
    for p in &points {
        let s = throughput(p).map_err(|e| e.to_string())?.value;
        let b = bound(p.g, p.k, p.eps_u).map_err(|e| e.to_string())?.value;
        ensure!((-SLACK..=1.0 + SLACK).contains(&s), "S = {s} at {p:?}");
        ensure!(s <= b + SLACK, "S = {s} > bound {b} at {p:?}");
        ensure!(b <= 1.0 + SLACK, "bound = {b} at {p:?}");
    }
    // Figure tables carry optimized throughputs next to their bounds.
    for id in [FigureId::Fig3, FigureId::Fig5] {
        let table = figure_table(id).map_err(|e| e.to_string())?;
        let (si, bi) = (
            table.column("S_star").unwrap(),
            table.column("S_bound").unwrap(),
        );
        for row in &table.rows {
            let (s, b): (f64, f64) = (row[si].parse().unwrap(), row[bi].parse().unwrap());
            ensure!(
                (0.0..=1.0).contains(&s) && s <= b + SLACK && b <= 1.0 + SLACK,
                "{id}: S* = {s}, bound {b}"
            );
        }
    }
    Ok(format!("{} points and figure rows", points.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("classical slotted ALOHA recovery", classical_slotted_aloha),
        ("two-relay clean-channel optimum", clean_channel_optimum),
        ("bound limit at high erasure", bound_limit),
        ("throughput-vs-load peak ordering", load_curve_ordering),
        ("two-relay vs single-relay crossover", relay_crossover),
        ("optimal relay count", optimal_relay_count),
        ("closed form vs series", closed_series_equivalence),
        ("ancillary function oracle", ancillary_oracle),
        ("simulator vs analysis", simulator_oracle),
        ("bound dominance and range", dominance_and_range),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
