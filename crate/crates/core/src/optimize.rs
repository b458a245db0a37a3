//! Maximization of the end-to-end throughput over the forwarding
//! probability, the channel load and the number of relays.
//!
//! Every continuous search evaluates a fixed grid first and then refines the
//! best bracket by golden-section search, so the result never falls below
//! the best grid point and identical inputs give identical outputs.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::HCache;
use crate::model::{delta_star_k2, peak_load, throughput, throughput_cached, SystemParams};
use crate::scalar::Real;

/// Number of points of the coarse forwarding-probability grid on `[0, 1]`.
pub const DELTA_GRID_POINTS: usize = 101;
/// Number of points of the coarse load grid on `(0, g_max]`.
pub const LOAD_GRID_POINTS: usize = 400;
pub const DEFAULT_ARG_TOL: f64 = 1e-6;
pub const DEFAULT_G_MAX: f64 = 8.0;
pub const DEFAULT_K_MAX: u32 = 32;

const MAX_GOLDEN_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptMethod {
    /// Two relays at the peak load: the stationary point of the quadratic.
    ClosedFormK2,
    GridGolden,
    ExhaustiveK,
}

impl fmt::Display for OptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptMethod::ClosedFormK2 => "closed_form_k2",
            OptMethod::GridGolden => "grid_golden",
            OptMethod::ExhaustiveK => "exhaustive_k",
        })
    }
}

/// Optimizer output. `A` is the type of the optimizing argument: a scalar
/// for the forwarding probability and the load, `u32` for the relay count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationResult<T, A = T> {
    pub arg_star: A,
    pub value_star: T,
    pub method: OptMethod,
    pub evaluations: usize,
    pub arg_tol: T,
}

/// Result of the search over the relay count, with the optimum found for
/// every candidate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayCountSearch<T> {
    pub best: OptimizationResult<T, u32>,
    /// Entry `i` holds the best forwarding probability for `k = i + 1`.
    pub per_k: Vec<OptimizationResult<T>>,
    pub g: T,
}

/// How the channel load is chosen when searching over the relay count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadRule<T> {
    Fixed(T),
    /// `G = 1 / (1 - eps_u)`.
    PeakLoad,
}

impl<T: Real> LoadRule<T> {
    pub fn load(&self, eps_u: T) -> Result<T> {
        match *self {
            LoadRule::Fixed(g) => Ok(g),
            LoadRule::PeakLoad => peak_load(eps_u),
        }
    }
}

fn check_arg_tol<T: Real>(arg_tol: T) -> Result<()> {
    if !(arg_tol > T::zero() && arg_tol <= T::lit(0.1)) {
        return Err(Error::domain(format!(
            "argument tolerance must lie in (0, 0.1], got {arg_tol}"
        )));
    }
    Ok(())
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`, stopping once the
/// bracket is narrower than `tol`. Returns the best point evaluated.
pub(crate) fn golden_section_max<T, F>(
    mut f: F,
    mut lo: T,
    mut hi: T,
    tol: T,
) -> Result<(T, T, usize)>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evaluations = 2;
    let (mut best_x, mut best_f) = if f2 > f1 { (x2, f2) } else { (x1, f1) };
    for _ in 0..MAX_GOLDEN_ITERATIONS {
        if hi - lo <= tol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
            if f1 > best_f {
                best_x = x1;
                best_f = f1;
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
            if f2 > best_f {
                best_x = x2;
                best_f = f2;
            }
        }
        evaluations += 1;
    }
    Ok((best_x, best_f, evaluations))
}

/// Grid search over increasing `grid`, then golden-section refinement between
/// the neighbours of the best grid point. `floor` is the left end of the
/// bracket when the best point is the first one.
fn grid_then_golden<T, F>(
    grid: &[T],
    floor: T,
    arg_tol: T,
    mut f: F,
) -> Result<OptimizationResult<T>>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    let mut best = 0;
    let mut values = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        let v = f(x)?;
        if v > values.get(best).copied().unwrap_or(T::neg_infinity()) {
            best = i;
        }
        values.push(v);
    }
    let lo = if best == 0 { floor } else { grid[best - 1] };
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, v, golden_evals) = golden_section_max(&mut f, lo, hi, arg_tol)?;
    let (arg_star, value_star) = if v > values[best] {
        (x, v)
    } else {
        (grid[best], values[best])
    };
    Ok(OptimizationResult {
        arg_star,
        value_star,
        method: OptMethod::GridGolden,
        evaluations: grid.len() + golden_evals,
        arg_tol,
    })
}

fn is_peak_load<T: Real>(g: T, eps_u: T) -> bool {
    match peak_load(eps_u) {
        Ok(peak) => (g - peak).abs() <= T::lit(1e-12) * peak.max(T::one()),
        Err(_) => false,
    }
}

/// Forwarding probability maximizing the end-to-end throughput for fixed
/// load, relay count and erasure rates.
pub fn optimize_delta<T: Real>(
    g: T,
    k: u32,
    eps_u: T,
    eps_d: T,
    arg_tol: T,
) -> Result<OptimizationResult<T>> {
    check_arg_tol(arg_tol)?;
    let base = SystemParams::new(g, k, eps_u, eps_d, T::zero())?;
    let cache = HCache::default();
    if k == 2 && eps_d < T::one() && is_peak_load(g, eps_u) {
        let delta = delta_star_k2(eps_u, eps_d)?;
        let value = throughput_cached(&base.with_delta(delta), &cache)?.value;
        return Ok(OptimizationResult {
            arg_star: delta,
            value_star: value,
            method: OptMethod::ClosedFormK2,
            evaluations: 1,
            arg_tol,
        });
    }
    delta_search(&base, arg_tol, &cache)
}

/// [`optimize_delta`] without the closed-form shortcut for two relays at peak
/// load: always the grid search followed by golden-section refinement.
pub fn optimize_delta_numeric<T: Real>(
    g: T,
    k: u32,
    eps_u: T,
    eps_d: T,
    arg_tol: T,
) -> Result<OptimizationResult<T>> {
    check_arg_tol(arg_tol)?;
    let base = SystemParams::new(g, k, eps_u, eps_d, T::zero())?;
    delta_search(&base, arg_tol, &HCache::default())
}

fn delta_search<T: Real>(
    base: &SystemParams<T>,
    arg_tol: T,
    cache: &HCache<T>,
) -> Result<OptimizationResult<T>> {
    let step = T::from_count(DELTA_GRID_POINTS as u64 - 1);
    let grid: Vec<T> = (0..DELTA_GRID_POINTS)
        .map(|i| T::from_count(i as u64) / step)
        .collect();
    grid_then_golden(&grid, T::zero(), arg_tol, |delta| {
        Ok(throughput_cached(&base.with_delta(delta), cache)?.value)
    })
}

/// The load grid: log-spaced points from `g_max / 1000` merged with a uniform
/// grid, `LOAD_GRID_POINTS` points before de-duplication.
pub fn load_grid<T: Real>(g_max: T) -> Vec<T> {
    let half = LOAD_GRID_POINTS / 2;
    let n = T::from_count(half as u64);
    let lo = g_max * T::lit(1e-3);
    let ratio = (g_max / lo).ln();
    let mut grid: Vec<T> = (0..half)
        .map(|i| lo * (ratio * T::from_count(i as u64) / (n - T::one())).exp())
        .chain((1..=half).map(|i| g_max * T::from_count(i as u64) / n))
        .map(|g| g.min(g_max))
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("grid is finite"));
    grid.dedup();
    grid
}

/// Channel load in `(0, g_max]` maximizing the end-to-end throughput.
pub fn optimize_load<T: Real>(
    k: u32,
    eps_u: T,
    eps_d: T,
    delta: T,
    g_max: T,
    arg_tol: T,
) -> Result<OptimizationResult<T>> {
    check_arg_tol(arg_tol)?;
    if !(g_max > T::zero()) || !g_max.is_finite() {
        return Err(Error::domain(format!(
            "g_max must be positive and finite, got {g_max}"
        )));
    }
    let base = SystemParams::new(g_max, k, eps_u, eps_d, delta)?;
    grid_then_golden(&load_grid(g_max), T::zero(), arg_tol, |g| {
        Ok(throughput(&base.with_g(g))?.value)
    })
}

/// Relay count in `1..=k_max` with the highest throughput after optimizing
/// the forwarding probability; ties go to the smaller count.
pub fn optimize_k<T: Real>(
    rule: LoadRule<T>,
    eps_u: T,
    eps_d: T,
    k_max: u32,
    arg_tol: T,
) -> Result<RelayCountSearch<T>> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    check_arg_tol(arg_tol)?;
    let g = rule.load(eps_u)?;
    SystemParams::new(g, 1, eps_u, eps_d, T::zero())?;
    let per_k = (1..=k_max)
        .into_par_iter()
        .map(|k| optimize_delta(g, k, eps_u, eps_d, arg_tol))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in per_k.iter().enumerate() {
        if r.value_star > per_k[best].value_star {
            best = i;
        }
    }
    Ok(RelayCountSearch {
        best: OptimizationResult {
            arg_star: best as u32 + 1,
            value_star: per_k[best].value_star,
            method: OptMethod::ExhaustiveK,
            evaluations: per_k.iter().map(|r| r.evaluations).sum(),
            arg_tol,
        },
        per_k,
        g,
    })
}
