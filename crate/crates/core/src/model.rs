//! End-to-end throughput of the two-tier slotted ALOHA relay system.
//!
//! Users reach `k` relays over an uplink with erasure probability `eps_u`.
//! A relay decodes a slot when exactly one packet survives, forwards it with
//! probability `delta` in the next slot, and the sink decodes when exactly
//! one forwarded packet survives the downlink erasures `eps_d`.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::{
    ancillary_h_scaled, binomial, poisson_weighted_sum, HCache, SeriesTruncation,
};
use crate::scalar::Real;

/// Below this uplink erasure rate the closed forms are not used.
pub const EPS_FLOOR: f64 = 1e-6;

/// Largest relay count evaluated through the alternating closed forms.
pub const K_CLOSED_MAX: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T> {
    /// Channel load `G` in packets per slot.
    pub g: T,
    /// Number of relays.
    pub k: u32,
    pub eps_u: T,
    pub eps_d: T,
    /// Forwarding probability.
    pub delta: T,
}

fn check_probability<T: Real>(name: &str, p: T) -> Result<()> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_load<T: Real>(g: T) -> Result<()> {
    if !(g >= T::zero()) || !g.is_finite() {
        return Err(Error::domain(format!(
            "channel load must be finite and >= 0, got {g}"
        )));
    }
    Ok(())
}

fn check_relays(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::domain("at least one relay is required"));
    }
    Ok(())
}

impl<T: Real> SystemParams<T> {
    pub fn new(g: T, k: u32, eps_u: T, eps_d: T, delta: T) -> Result<Self> {
        let params = Self {
            g,
            k,
            eps_u,
            eps_d,
            delta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_load(self.g)?;
        check_relays(self.k)?;
        check_probability("eps_u", self.eps_u)?;
        check_probability("eps_d", self.eps_d)?;
        check_probability("delta", self.delta)
    }

    pub fn with_g(self, g: T) -> Self {
        Self { g, ..self }
    }

    pub fn with_k(self, k: u32) -> Self {
        Self { k, ..self }
    }

    pub fn with_delta(self, delta: T) -> Self {
        Self { delta, ..self }
    }

    /// Whether the alternating closed forms are used for these parameters.
    pub fn closed_form_applies(&self) -> bool {
        self.eps_u > T::lit(EPS_FLOOR) && self.k <= K_CLOSED_MAX
    }
}

/// The load `1 / (1 - eps_u)` that maximizes each relay's own throughput.
pub fn peak_load<T: Real>(eps_u: T) -> Result<T> {
    check_probability("eps_u", eps_u)?;
    if eps_u >= T::one() {
        return Err(Error::domain(
            "peak load 1/(1 - eps_u) is unbounded at eps_u = 1",
        ));
    }
    Ok((T::one() - eps_u).recip())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Series,
    ClosedForm,
    Simulated,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Series => "series",
            Method::ClosedForm => "closed_form",
            Method::Simulated => "simulated",
        })
    }
}

/// A throughput value in packets per slot with how it was obtained.
///
/// `est_abs_error` is zero for closed forms, the omitted Poisson tail mass for
/// series, and the 95% half-width for simulation estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputResult<T> {
    pub value: T,
    pub method: Method,
    pub terms_used: usize,
    pub est_abs_error: T,
}

impl<T: Real> ThroughputResult<T> {
    fn closed(value: T, terms_used: usize) -> Self {
        Self {
            value,
            method: Method::ClosedForm,
            terms_used,
            est_abs_error: T::zero(),
        }
    }
}

/// Probability that exactly one of `n` uplink packets survives, with `0^0 = 1`.
pub fn p_decode_uplink<T: Real>(n: u64, eps_u: T) -> T {
    if n == 0 {
        return T::zero();
    }
    let survivors = T::from_count(n) * (T::one() - eps_u);
    if n == 1 {
        return survivors;
    }
    match i32::try_from(n - 1) {
        Ok(e) => survivors * eps_u.powi(e),
        Err(_) => survivors * eps_u.powf(T::from_count(n - 1)),
    }
}

/// Probability that a given relay delivers an unerased packet to the sink,
/// given `n` uplink transmissions.
pub fn q_success_downlink_arrival<T: Real>(n: u64, params: &SystemParams<T>) -> T {
    p_decode_uplink(n, params.eps_u) * params.delta * (T::one() - params.eps_d)
}

/// Throughput of one slotted ALOHA link with erasures:
/// `G (1 - eps_u) exp(-G (1 - eps_u))`.
pub fn throughput_sa<T: Real>(g: T, eps_u: T) -> ThroughputResult<T> {
    let load = g * (T::one() - eps_u);
    ThroughputResult::closed(load * (-load).exp(), 1)
}

/// End-to-end throughput as the Poisson-weighted sum over the number of
/// uplink transmissions of `K q_n (1 - q_n)^(K-1)`.
pub fn throughput_series<T: Real>(
    params: &SystemParams<T>,
    trunc: &SeriesTruncation<T>,
) -> Result<ThroughputResult<T>> {
    params.validate()?;
    let k = T::from_count(params.k as u64);
    let sum = poisson_weighted_sum(params.g, trunc, |n| {
        let q = q_success_downlink_arrival(n, params);
        k * q * (T::one() - q).powi(params.k as i32 - 1)
    })?;
    Ok(ThroughputResult {
        value: sum.value,
        method: Method::Series,
        terms_used: sum.terms,
        est_abs_error: sum.tail_bound,
    })
}

fn check_closed_form<T: Real>(k: u32, eps_u: T, cache: &HCache<T>) -> Result<()> {
    if !(eps_u > T::lit(EPS_FLOOR)) {
        return Err(Error::Singularity {
            eps_u: eps_u.widen(),
            floor: EPS_FLOOR,
        });
    }
    if k > K_CLOSED_MAX {
        return Err(Error::Unstable {
            k,
            k_max: K_CLOSED_MAX,
        });
    }
    if k + 1 > cache.max_order() {
        return Err(Error::OrderExceedsCache {
            order: k + 1,
            max_order: cache.max_order(),
        });
    }
    Ok(())
}

/// `(c / eps_u)^m e^-G H_m(G eps_u^m)`, the common building block of the
/// closed forms.
fn scaled_h_term<T: Real>(m: u32, g: T, eps_u: T, c: T, cache: &HCache<T>) -> Result<T> {
    let x = g * eps_u.powi(m as i32);
    let scaled = ancillary_h_scaled(m, x, cache)?;
    Ok((c / eps_u).powi(m as i32) * (x - g).exp() * scaled)
}

/// End-to-end throughput via the alternating closed form over
/// `l = 0..K-1` of `(-1)^l K C(K-1, l) [beta/eps_u]^(l+1) e^-G H_(l+1)(G eps_u^(l+1))`,
/// with `beta = delta (1 - eps_u)(1 - eps_d)`.
pub fn throughput_closed<T: Real>(
    params: &SystemParams<T>,
    cache: &HCache<T>,
) -> Result<ThroughputResult<T>> {
    params.validate()?;
    check_closed_form(params.k, params.eps_u, cache)?;
    let beta = params.delta * (T::one() - params.eps_u) * (T::one() - params.eps_d);
    let k = params.k as u64;
    let kf = T::from_count(k);
    let mut value = T::zero();
    for l in 0..k {
        let term = kf
            * binomial::<T>(k - 1, l)
            * scaled_h_term(l as u32 + 1, params.g, params.eps_u, beta, cache)?;
        value = if l % 2 == 0 {
            value + term
        } else {
            value - term
        };
    }
    Ok(ThroughputResult::closed(value, k as usize))
}

/// End-to-end throughput, choosing the closed form where it is well
/// conditioned and the series otherwise.
pub fn throughput<T: Real>(params: &SystemParams<T>) -> Result<ThroughputResult<T>> {
    throughput_cached(params, &HCache::default())
}

/// [`throughput`] reusing `cache` across calls; the `H_m` arguments depend
/// only on `g`, `eps_u` and the order, so sweeps over `delta` or `eps_d`
/// share every entry.
pub fn throughput_cached<T: Real>(
    params: &SystemParams<T>,
    cache: &HCache<T>,
) -> Result<ThroughputResult<T>> {
    params.validate()?;
    if params.closed_form_applies() && params.k < cache.max_order() {
        throughput_closed(params, cache)
    } else {
        throughput_series(params, &SeriesTruncation::for_load(params.g))
    }
}

/// Upper bound on the end-to-end throughput: the probability that at least
/// one relay decodes in a slot, by the alternating closed form.
///
/// The downlink does not enter the bound, so neither `delta` nor `eps_d` is
/// an argument.
pub fn bound_closed<T: Real>(
    g: T,
    k: u32,
    eps_u: T,
    cache: &HCache<T>,
) -> Result<ThroughputResult<T>> {
    check_load(g)?;
    check_relays(k)?;
    check_probability("eps_u", eps_u)?;
    check_closed_form(k, eps_u, cache)?;
    let ratio = T::one() - eps_u;
    // The l = 0 term is exactly 1 and cancels the leading 1.
    let mut value = T::zero();
    for l in 1..=k as u64 {
        let term = binomial::<T>(k as u64, l) * scaled_h_term(l as u32, g, eps_u, ratio, cache)?;
        value = if l % 2 == 1 {
            value + term
        } else {
            value - term
        };
    }
    Ok(ThroughputResult::closed(value, k as usize))
}

/// Upper bound via `sum_n pmf(n; G) [1 - (1 - p_n)^K]`; valid for every
/// `eps_u` in `[0, 1]`.
pub fn bound_series<T: Real>(
    g: T,
    k: u32,
    eps_u: T,
    trunc: &SeriesTruncation<T>,
) -> Result<ThroughputResult<T>> {
    check_load(g)?;
    check_relays(k)?;
    check_probability("eps_u", eps_u)?;
    let kf = T::from_count(k as u64);
    let sum = poisson_weighted_sum(g, trunc, |n| {
        let p = p_decode_uplink(n, eps_u);
        -(kf * (-p).ln_1p()).exp_m1()
    })?;
    Ok(ThroughputResult {
        value: sum.value,
        method: Method::Series,
        terms_used: sum.terms,
        est_abs_error: sum.tail_bound,
    })
}

pub fn bound<T: Real>(g: T, k: u32, eps_u: T) -> Result<ThroughputResult<T>> {
    bound_cached(g, k, eps_u, &HCache::default())
}

pub fn bound_cached<T: Real>(
    g: T,
    k: u32,
    eps_u: T,
    cache: &HCache<T>,
) -> Result<ThroughputResult<T>> {
    if eps_u > T::lit(EPS_FLOOR) && k <= K_CLOSED_MAX && k < cache.max_order() {
        bound_closed(g, k, eps_u, cache)
    } else {
        bound_series(g, k, eps_u, &SeriesTruncation::for_load(g))
    }
}

fn downlink_factor<T: Real>(eps_d: T) -> Result<T> {
    check_probability("eps_d", eps_d)?;
    if eps_d >= T::one() {
        return Err(Error::domain(
            "eps_d = 1 erases every forwarded packet; no forwarding probability is optimal",
        ));
    }
    Ok(T::one() - eps_d)
}

/// `1 - eps_u + eps_u^2`, the uplink factor of the two-relay quadratic.
fn uplink_factor<T: Real>(eps_u: T) -> T {
    T::one() - eps_u + eps_u * eps_u
}

/// Two-relay throughput at the peak load `1/(1 - eps_u)`:
/// `(2 delta (1-eps_d)/e) [1 - delta (1-eps_d)(1 - eps_u + eps_u^2) e^-eps_u]`.
pub fn throughput_k2_at_peak_load<T: Real>(eps_u: T, eps_d: T, delta: T) -> Result<T> {
    peak_load(eps_u)?;
    check_probability("eps_d", eps_d)?;
    check_probability("delta", delta)?;
    let a = delta * (T::one() - eps_d);
    let e = T::one().exp();
    Ok(T::lit(2.0) * a / e * (T::one() - a * uplink_factor(eps_u) * (-eps_u).exp()))
}

/// Forwarding probability maximizing the two-relay quadratic:
/// `min(1, e^eps_u / (2 (1 - eps_d)(1 - eps_u + eps_u^2)))`.
pub fn delta_star_k2<T: Real>(eps_u: T, eps_d: T) -> Result<T> {
    check_probability("eps_u", eps_u)?;
    let down = downlink_factor(eps_d)?;
    let interior = eps_u.exp() / (T::lit(2.0) * down * uplink_factor(eps_u));
    Ok(interior.min(T::one()))
}

/// Maximum two-relay throughput at the peak load.
pub fn s_star_k2<T: Real>(eps_u: T, eps_d: T) -> Result<T> {
    let delta = delta_star_k2(eps_u, eps_d)?;
    let e = T::one().exp();
    if delta < T::one() {
        Ok((eps_u - T::one()).exp() / (T::lit(2.0) * uplink_factor(eps_u)))
    } else {
        let down = T::one() - eps_d;
        Ok(T::lit(2.0) * down / e * (T::one() - down * uplink_factor(eps_u) * (-eps_u).exp()))
    }
}
