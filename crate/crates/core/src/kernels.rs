//! Scalar kernels for the analytic model: the ancillary function
//! `H_m(x) = sum_n x^n n^m / n!`, Poisson weights and binomial coefficients.
//!
//! `H_m(x)` is evaluated through the recursion
//! `H_0(x) = e^x`, `H_m(x) = x * sum_{l<m} C(m-1, l) H_l(x)`.
//! Internally the recursion runs on `T_m(x) = H_m(x) e^-x` (the Touchard
//! polynomials), which keeps every intermediate bounded by a polynomial in
//! `x`; the exponential is applied once at the end.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest `n` for which binomial coefficients are computed exactly by
/// integer recurrence.
pub const EXACT_BINOMIAL_MAX: u64 = 30;

/// Default absolute tolerance for truncating Poisson-weighted series.
pub const DEFAULT_SERIES_TOL: f64 = 1e-14;

/// Default maximum order held by an [`HCache`].
pub const DEFAULT_MAX_ORDER: u32 = 32;

/// Truncation rule for the infinite sums over the number of transmitted
/// packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTruncation<T> {
    /// Summation stops once a term falls below this bound (and the terms are
    /// past their peak).
    pub tol: T,
    /// Summation index at which the series is declared divergent.
    pub n_max_hard: usize,
}

impl<T: Real> SeriesTruncation<T> {
    pub fn new(tol: T, n_max_hard: usize) -> Result<Self> {
        if !(tol > T::zero()) || !tol.is_finite() {
            return Err(Error::domain(format!(
                "truncation tolerance must be positive, got {tol}"
            )));
        }
        if n_max_hard == 0 {
            return Err(Error::domain("n_max_hard must be at least 1"));
        }
        Ok(Self { tol, n_max_hard })
    }

    /// Default rule for a Poisson load `g`: `tol = 1e-14` and
    /// `n_max_hard = max(200, ceil(g + 12 sqrt(g) + 50))`.
    pub fn for_load(g: T) -> Self {
        let g = g.widen().max(0.0);
        let cap = (g + 12.0 * g.sqrt() + 50.0).ceil();
        let n_max_hard = if cap.is_finite() {
            (cap as usize).max(200)
        } else {
            usize::MAX
        };
        Self {
            tol: T::lit(DEFAULT_SERIES_TOL),
            n_max_hard,
        }
    }
}

impl<T: Real> Default for SeriesTruncation<T> {
    fn default() -> Self {
        Self::for_load(T::zero())
    }
}

/// Memo table for `H_m(x)`, keyed by order and by the bit pattern of `x`.
///
/// Entries hold the scaled value `H_m(x) e^-x` so that large arguments do not
/// overflow; [`HCache::get`] restores the exponential. Entries are never
/// overwritten: concurrent inserts of the same key keep the first value, and
/// every lookup of a key returns that value.
#[derive(Debug)]
pub struct HCache<T> {
    max_order: u32,
    values: RwLock<HashMap<(u32, u64), T>>,
}

impl<T: Real> HCache<T> {
    pub fn new(max_order: u32) -> Self {
        Self {
            max_order,
            values: RwLock::new(HashMap::new()),
        }
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// Cached `H_m(x)`.
    pub fn get(&self, order: u32, x: T) -> Option<T> {
        self.get_scaled(order, x).map(|t| t * x.exp())
    }

    /// Cached `H_m(x) e^-x`.
    pub fn get_scaled(&self, order: u32, x: T) -> Option<T> {
        let values = self.values.read().unwrap_or_else(|e| e.into_inner());
        values.get(&(order, x.widen().to_bits())).copied()
    }

    pub fn len(&self) -> usize {
        self.values.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `H_m(x) e^-x` for `m < row.len()`, keeping existing entries.
    fn insert_row(&self, x: T, row: &[T]) {
        let key = x.widen().to_bits();
        let mut values = self.values.write().unwrap_or_else(|e| e.into_inner());
        for (order, &h) in row.iter().enumerate() {
            values.entry((order as u32, key)).or_insert(h);
        }
    }
}

impl<T: Real> Default for HCache<T> {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_ORDER)
    }
}

fn check_argument<T: Real>(x: T) -> Result<()> {
    if !x.is_finite() || x < T::zero() {
        return Err(Error::domain(format!(
            "H_m(x) requires finite x >= 0, got {x}"
        )));
    }
    Ok(())
}

/// `T_0(x), ..., T_order(x)` where `T_m(x) = H_m(x) e^-x`.
pub(crate) fn touchard_row<T: Real>(order: u32, x: T) -> Vec<T> {
    let mut row = Vec::with_capacity(order as usize + 1);
    row.push(T::one());
    for m in 1..=order as u64 {
        let acc = (0..m).fold(T::zero(), |acc, l| {
            acc + binomial::<T>(m - 1, l) * row[l as usize]
        });
        row.push(x * acc);
    }
    row
}

/// `H_m(x)` by recursion, memoized in `cache`.
pub fn ancillary_h<T: Real>(order: u32, x: T, cache: &HCache<T>) -> Result<T> {
    Ok(ancillary_h_scaled(order, x, cache)? * x.exp())
}

/// `H_m(x) e^-x`, the Touchard polynomial of order `m` at `x`.
pub fn ancillary_h_scaled<T: Real>(order: u32, x: T, cache: &HCache<T>) -> Result<T> {
    if order > cache.max_order() {
        return Err(Error::OrderExceedsCache {
            order,
            max_order: cache.max_order(),
        });
    }
    check_argument(x)?;
    if let Some(t) = cache.get_scaled(order, x) {
        return Ok(t);
    }
    let row = touchard_row(order, x);
    cache.insert_row(x, &row);
    Ok(cache.get_scaled(order, x).unwrap_or(row[order as usize]))
}

/// `H_m(x)` by direct summation of its defining series. Independent of the
/// recursion; used to check it.
///
/// Stops at the first term that is past the peak of the term sequence and
/// below `tol * max(1, partial sum)`; that term is not added.
pub fn ancillary_h_oracle<T: Real>(order: u32, x: T, trunc: &SeriesTruncation<T>) -> Result<T> {
    check_argument(x)?;
    if x == T::zero() {
        return Ok(if order == 0 { T::one() } else { T::zero() });
    }
    let ln_x = x.ln();
    let m = T::from_count(order as u64);
    let mut ln_fact = T::zero();
    let mut sum = if order == 0 { T::one() } else { T::zero() };
    let mut prev = sum;
    for n in 1..trunc.n_max_hard as u64 {
        let nf = T::from_count(n);
        ln_fact = ln_fact + nf.ln();
        let term = (nf * ln_x + m * nf.ln() - ln_fact).exp();
        if term <= prev && term < trunc.tol * sum.max(T::one()) {
            return Ok(sum);
        }
        sum = sum + term;
        prev = term;
    }
    Err(Error::NonConvergence {
        n_max_hard: trunc.n_max_hard,
    })
}

/// `ln n!`: exact accumulation for moderate `n`, Stirling series beyond.
pub fn ln_factorial<T: Real>(n: u64) -> T {
    const DIRECT_MAX: u64 = 256;
    if n < 2 {
        return T::zero();
    }
    if n <= DIRECT_MAX {
        return (2..=n).fold(T::zero(), |acc, k| acc + T::from_count(k).ln());
    }
    let x = T::from_count(n);
    let half = T::lit(0.5);
    let inv = x.recip();
    let inv2 = inv * inv;
    let correction =
        inv * (T::lit(1.0 / 12.0) - inv2 * (T::lit(1.0 / 360.0) - inv2 * T::lit(1.0 / 1260.0)));
    (x + half) * x.ln() - x + half * T::lit(std::f64::consts::TAU).ln() + correction
}

fn check_load<T: Real>(g: T) -> Result<()> {
    if !g.is_finite() || g < T::zero() {
        return Err(Error::domain(format!(
            "channel load must be finite and >= 0, got {g}"
        )));
    }
    Ok(())
}

/// Poisson probability `g^n e^-g / n!`, evaluated in the log domain.
pub fn poisson_pmf<T: Real>(n: u64, g: T) -> Result<T> {
    check_load(g)?;
    Ok(pmf_unchecked(n, g, ln_factorial(n)))
}

fn pmf_unchecked<T: Real>(n: u64, g: T, ln_fact: T) -> T {
    if g == T::zero() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    (T::from_count(n) * g.ln() - g - ln_fact).exp()
}

/// Outcome of a truncated Poisson-weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SeriesSum<T> {
    pub value: T,
    pub terms: usize,
    /// Upper bound on the Poisson mass of the omitted tail.
    pub tail_bound: T,
}

/// `sum_n pmf(n; g) * weight(n)` for weights in `[0, 1]`.
///
/// Terms are added until `n > g` and `pmf(n) < tol`; the omitted tail is then
/// bounded by the geometric majorant of the Poisson ratios.
pub(crate) fn poisson_weighted_sum<T, F>(
    g: T,
    trunc: &SeriesTruncation<T>,
    mut weight: F,
) -> Result<SeriesSum<T>>
where
    T: Real,
    F: FnMut(u64) -> T,
{
    check_load(g)?;
    let mut ln_fact = T::zero();
    let mut value = T::zero();
    for n in 0..trunc.n_max_hard as u64 {
        let nf = T::from_count(n);
        if n >= 2 {
            ln_fact = ln_fact + nf.ln();
        }
        let pmf = pmf_unchecked(n, g, ln_fact);
        if pmf > T::zero() {
            value = value + pmf * weight(n);
        }
        if nf > g && pmf < trunc.tol {
            let ratio = g / (nf + T::lit(2.0));
            let tail_bound = pmf * (g / (nf + T::one())) / (T::one() - ratio);
            return Ok(SeriesSum {
                value,
                terms: n as usize + 1,
                tail_bound,
            });
        }
    }
    Err(Error::NonConvergence {
        n_max_hard: trunc.n_max_hard,
    })
}

fn binomial_exact(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    // C(n, i+1) = C(n, i) (n - i) / (i + 1) stays integral at every step.
    (0..k).fold(1u64, |c, i| c * (n - i) / (i + 1))
}

/// `ln C(n, k)`.
pub fn log_binomial<T: Real>(n: u64, k: u64) -> Result<T> {
    if k > n {
        return Err(Error::domain(format!("C({n}, {k}) requires k <= n")));
    }
    if n <= EXACT_BINOMIAL_MAX {
        return Ok(T::from_count(binomial_exact(n, k)).ln());
    }
    Ok(ln_factorial::<T>(n) - ln_factorial::<T>(k) - ln_factorial::<T>(n - k))
}

/// `C(n, k)` as a scalar; exact for `n <= 30`. Zero when `k > n`.
pub fn binomial<T: Real>(n: u64, k: u64) -> T {
    if k > n {
        T::zero()
    } else if n <= EXACT_BINOMIAL_MAX {
        T::from_count(binomial_exact(n, k))
    } else {
        log_binomial::<T>(n, k)
            .map(|l| l.exp())
            .unwrap_or_else(|_| T::zero())
    }
}
