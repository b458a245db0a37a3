//! Throughput analysis of two-tier slotted ALOHA with multiple relays over
//! erasure channels: exact closed forms, series evaluations, a slot-level
//! simulator, optimizers and figure-data generation.
//!
//! The analytic code is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`). The aliases at the crate root fix it to `f64`, which
//! is what the simulator, the experiments and the CLI use.

// Negated comparisons like `!(x > 0.0)` are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod kernels;
pub mod model;
pub mod optimize;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use kernels::{ancillary_h, ancillary_h_oracle, log_binomial, poisson_pmf};
pub use model::{
    bound, bound_closed, bound_series, delta_star_k2, p_decode_uplink, peak_load,
    q_success_downlink_arrival, s_star_k2, throughput, throughput_cached, throughput_closed,
    throughput_k2_at_peak_load, throughput_sa, throughput_series, Method, EPS_FLOOR, K_CLOSED_MAX,
};
pub use optimize::{
    optimize_delta, optimize_delta_numeric, optimize_k, optimize_load, LoadRule, OptMethod,
    OptimizationResult, RelayCountSearch,
};
pub use scalar::Real;
pub use sim::{simulate, SimMode, SimStats};

pub type SystemParams = model::SystemParams<f64>;
pub type SystemParamsF32 = model::SystemParams<f32>;
pub type ThroughputResult = model::ThroughputResult<f64>;
pub type ThroughputResultF32 = model::ThroughputResult<f32>;
pub type HCache = kernels::HCache<f64>;
pub type HCacheF32 = kernels::HCache<f32>;
pub type SeriesTruncation = kernels::SeriesTruncation<f64>;
pub type SeriesTruncationF32 = kernels::SeriesTruncation<f32>;
pub type SimConfig = sim::SimConfig<f64>;
