//! Slot-level Monte Carlo simulation of the two-tier relay system.
//!
//! Per slot, the sink first receives the packets the relays chose to forward
//! in the previous slot, then a Poisson number of users transmit on the
//! uplink and every relay independently sees each packet survive with
//! probability `1 - eps_u`. Relays never buffer: a decoded packet is either
//! forwarded in the next slot (probability `delta`) or dropped, and
//! forwarding never blocks reception.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::scalar::Real;

/// Identity of the generator behind [`rng_substream`], recorded in outputs.
pub const RNG_IDENTITY: &str = "ChaCha8Rng (rand_chacha 0.9; seed_from_u64, set_stream)";

pub const DEFAULT_WARMUP_SLOTS: u64 = 1_000;
pub const CI_BATCHES: u64 = 100;

/// Normal quantile for a two-sided 95% interval.
const Z_95: f64 = 1.959_963_984_540_054;

/// Loads above this are sampled by rejection instead of table inversion.
const POISSON_TABLE_MAX_LOAD: f64 = 30.0;

/// Largest trial count with a tabulated binomial CDF.
const BINOMIAL_TABLE_MAX: u64 = 64;

pub type SimRng = ChaCha8Rng;

/// Reproducible random source for substream `stream_id` of `seed`. Distinct
/// stream ids give non-overlapping ChaCha keystreams.
pub fn rng_substream(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimMode {
    FullSystem,
    /// Counts a slot as a success when at least one relay decodes; the
    /// downlink is not simulated.
    BoundUplinkOnly,
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::FullSystem => "full_system",
            SimMode::BoundUplinkOnly => "bound_uplink_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<T> {
    pub params: SystemParams<T>,
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub stream: u64,
    pub mode: SimMode,
}

impl<T: Real> SimConfig<T> {
    pub fn new(params: SystemParams<T>, n_slots: u64, seed: u64) -> Self {
        Self {
            params,
            n_slots,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
            seed,
            stream: 0,
            mode: SimMode::FullSystem,
        }
    }

    pub fn bound_mode(self) -> Self {
        Self {
            mode: SimMode::BoundUplinkOnly,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if self.n_slots == 0 {
            return Err(Error::InvalidConfig("n_slots must be at least 1".into()));
        }
        if self.warmup_slots == 0 {
            return Err(Error::InvalidConfig(
                "warmup_slots must be at least 1 so the first measured slot sees forwarded traffic"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotOutcome {
    pub n_tx: u64,
    pub per_relay_arrivals: Vec<u64>,
    pub relays_decoded: Vec<bool>,
    /// Relays that will forward their decoded packet in the next slot.
    pub relays_forwarding: Vec<bool>,
    /// Forwarded packets (from the previous slot) that survived the downlink.
    pub sink_arrivals: u64,
    pub sink_decoded: bool,
}

/// Event totals over every simulated slot, warm-up included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimCounters {
    pub slots: u64,
    pub relay_decodes: u64,
    pub forwarded: u64,
    pub sink_arrivals: u64,
    pub sink_decodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub mode: SimMode,
    pub seed: u64,
    pub stream: u64,
    pub rng: &'static str,
    /// Sink decodes (bound mode: slots with at least one relay decode) during
    /// the measured slots.
    pub delivered_packets: u64,
    pub measured_slots: u64,
    pub throughput_estimate: f64,
    pub ci95_halfwidth: f64,
    pub relay_decode_rate: Vec<f64>,
    pub relay_decode_ci95: Vec<f64>,
    pub uplink_union_rate: f64,
    pub uplink_union_ci95: f64,
    pub sink_collision_rate: f64,
    pub counters: SimCounters,
}

/// Bernoulli trial with probability `p`, as a threshold on a uniform `u64`.
#[derive(Debug, Clone, Copy)]
struct Coin {
    p: f64,
    threshold: u64,
}

impl Coin {
    fn new(p: f64) -> Self {
        // 2^64 as f64; the cast saturates for p = 1, which is special-cased.
        let threshold = (p * 18_446_744_073_709_551_616.0) as u64;
        Self { p, threshold }
    }

    fn flip<R: RngCore>(&self, rng: &mut R) -> bool {
        if self.p <= 0.0 {
            false
        } else if self.p >= 1.0 {
            true
        } else {
            rng.next_u64() < self.threshold
        }
    }
}

/// Scales a CDF value to a threshold on uniform `u64` draws.
fn to_threshold(c: f64) -> u64 {
    if c >= 1.0 {
        u64::MAX
    } else {
        (c * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Binomial(n, p) sampler: one uniform per draw, inverted on a precomputed
/// CDF for every `n <= max_table`, `rand_distr` above.
#[derive(Debug, Clone)]
struct BinomialSampler {
    p: f64,
    cdfs: Vec<Vec<u64>>,
}

impl BinomialSampler {
    fn new(p: f64, max_table: u64) -> Self {
        let cdfs = if p <= 0.0 || p >= 1.0 {
            Vec::new()
        } else {
            (0..=max_table).map(|n| binomial_cdf(n, p)).collect()
        };
        Self { p, cdfs }
    }

    fn sample<R: RngCore>(&self, n: u64, rng: &mut R) -> u64 {
        if n == 0 || self.p <= 0.0 {
            return 0;
        }
        if self.p >= 1.0 {
            return n;
        }
        match self.cdfs.get(n as usize) {
            Some(cdf) => {
                let u = rng.next_u64();
                cdf.iter().position(|&c| u < c).map_or(n, |k| k as u64)
            }
            None => Binomial::new(n, self.p)
                .expect("probability in (0, 1)")
                .sample(rng),
        }
    }
}

fn binomial_cdf(n: u64, p: f64) -> Vec<u64> {
    let q = 1.0 - p;
    let mut pmf = q.powi(n as i32);
    let mut acc = 0.0;
    let mut cdf = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        acc += pmf;
        cdf.push(to_threshold(acc));
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / q;
    }
    cdf
}

/// Poisson sampler: inversion on a precomputed CDF for moderate loads,
/// rejection sampling above.
#[derive(Debug, Clone)]
enum PoissonSampler {
    Zero,
    Table {
        cdf: Vec<u64>,
        tail_start: f64,
        load: f64,
    },
    Rejection(Poisson<f64>),
}

impl PoissonSampler {
    fn new(load: f64) -> Self {
        if load <= 0.0 {
            return PoissonSampler::Zero;
        }
        if load > POISSON_TABLE_MAX_LOAD {
            return PoissonSampler::Rejection(Poisson::new(load).expect("positive finite load"));
        }
        let mut cdf = Vec::new();
        let mut pmf = (-load).exp();
        let mut acc = 0.0;
        let mut n = 0u64;
        loop {
            acc += pmf;
            cdf.push(to_threshold(acc));
            n += 1;
            pmf *= load / n as f64;
            if n as f64 > load && pmf < 1e-18 {
                break;
            }
        }
        PoissonSampler::Table {
            cdf,
            tail_start: acc,
            load,
        }
    }

    fn sample<R: RngCore>(&self, rng: &mut R) -> u64 {
        match self {
            PoissonSampler::Zero => 0,
            PoissonSampler::Rejection(p) => p.sample(rng) as u64,
            PoissonSampler::Table {
                cdf,
                tail_start,
                load,
            } => {
                let u = rng.next_u64();
                if let Some(n) = cdf.iter().position(|&c| u < c) {
                    return n as u64;
                }
                // Beyond the tabulated mass: continue the inversion.
                let u = u as f64 / 18_446_744_073_709_551_616.0;
                let mut n = cdf.len() as u64;
                let mut acc = *tail_start;
                let mut pmf = crate::kernels::poisson_pmf(n, *load).unwrap_or(0.0);
                while acc + pmf <= u && pmf > 0.0 {
                    acc += pmf;
                    n += 1;
                    pmf *= load / n as f64;
                }
                n
            }
        }
    }
}

/// Step-by-step simulator; [`simulate`] drives it over a full run.
#[derive(Debug, Clone)]
pub struct Simulator {
    k: usize,
    mode: SimMode,
    arrivals: PoissonSampler,
    uplink: BinomialSampler,
    forward: Coin,
    downlink: BinomialSampler,
    pending: u64,
    outcome: SlotOutcome,
    rng: SimRng,
}

impl Simulator {
    pub fn new<T: Real>(config: &SimConfig<T>) -> Result<Self> {
        config.validate()?;
        let p = &config.params;
        let k = p.k as usize;
        Ok(Self {
            k,
            mode: config.mode,
            arrivals: PoissonSampler::new(p.g.widen()),
            uplink: BinomialSampler::new(1.0 - p.eps_u.widen(), BINOMIAL_TABLE_MAX),
            forward: Coin::new(p.delta.widen()),
            downlink: BinomialSampler::new(
                1.0 - p.eps_d.widen(),
                (p.k as u64).min(BINOMIAL_TABLE_MAX),
            ),
            pending: 0,
            outcome: SlotOutcome {
                per_relay_arrivals: vec![0; k],
                relays_decoded: vec![false; k],
                relays_forwarding: vec![false; k],
                ..SlotOutcome::default()
            },
            rng: rng_substream(config.seed, config.stream),
        })
    }

    /// Advances one slot.
    pub fn step(&mut self) -> &SlotOutcome {
        let out = &mut self.outcome;
        if self.mode == SimMode::FullSystem {
            out.sink_arrivals = self.downlink.sample(self.pending, &mut self.rng);
            out.sink_decoded = out.sink_arrivals == 1;
        } else {
            out.sink_arrivals = 0;
            out.sink_decoded = false;
        }
        out.n_tx = self.arrivals.sample(&mut self.rng);
        let mut forwarding = 0;
        for i in 0..self.k {
            let arrivals = self.uplink.sample(out.n_tx, &mut self.rng);
            let decoded = arrivals == 1;
            let forwards =
                decoded && self.mode == SimMode::FullSystem && self.forward.flip(&mut self.rng);
            out.per_relay_arrivals[i] = arrivals;
            out.relays_decoded[i] = decoded;
            out.relays_forwarding[i] = forwards;
            forwarding += forwards as u64;
        }
        self.pending = forwarding;
        &self.outcome
    }
}

/// 95% half-width of the mean from batch means, for batch totals `counts`
/// over batches of `sizes` slots. With a single batch no spread is observable
/// and the trivial bound 1 is returned.
fn batch_halfwidth(counts: impl Iterator<Item = u64>, sizes: &[u64]) -> f64 {
    let n = sizes.len();
    if n < 2 {
        return 1.0;
    }
    let means: Vec<f64> = counts
        .zip(sizes)
        .map(|(c, &s)| c as f64 / s as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1) as f64;
    Z_95 * (var / n as f64).sqrt()
}

/// Runs `warmup_slots + n_slots` slots and estimates the throughput over the
/// measured ones. Deterministic in the seed and stream.
///
/// Confidence intervals use batch means over [`CI_BATCHES`] consecutive
/// batches of measured slots.
pub fn simulate<T: Real>(config: &SimConfig<T>) -> Result<SimStats> {
    let mut sim = Simulator::new(config)?;
    let k = sim.k;
    let n_batches = CI_BATCHES.min(config.n_slots) as usize;
    // Batch b covers measured slots [b n / B, (b + 1) n / B).
    let batch_end =
        |b: usize| ((b as u128 + 1) * config.n_slots as u128 / n_batches as u128) as u64;
    let sizes: Vec<u64> = (0..n_batches)
        .map(|b| batch_end(b) - if b == 0 { 0 } else { batch_end(b - 1) })
        .collect();
    let mut delivered = vec![0u64; n_batches];
    let mut union = vec![0u64; n_batches];
    let mut relays = vec![0u64; n_batches * k];
    let mut collisions = 0u64;
    let mut counters = SimCounters::default();

    for _ in 0..config.warmup_slots {
        tally(&mut counters, sim.step());
    }
    let mut batch = 0usize;
    let mut next_boundary = batch_end(0);
    for slot in 0..config.n_slots {
        if slot == next_boundary {
            batch += 1;
            next_boundary = batch_end(batch);
        }
        let out = sim.step();
        tally(&mut counters, out);
        let mut any = false;
        for (acc, &d) in relays[batch * k..(batch + 1) * k]
            .iter_mut()
            .zip(&out.relays_decoded)
        {
            *acc += d as u64;
            any |= d;
        }
        union[batch] += any as u64;
        delivered[batch] += out.sink_decoded as u64;
        collisions += (out.sink_arrivals >= 2) as u64;
    }

    let measured = config.n_slots as f64;
    let union_total: u64 = union.iter().sum();
    let union_ci = batch_halfwidth(union.iter().copied(), &sizes);
    let (delivered_packets, ci95_halfwidth) = match config.mode {
        SimMode::FullSystem => (
            delivered.iter().sum(),
            batch_halfwidth(delivered.iter().copied(), &sizes),
        ),
        SimMode::BoundUplinkOnly => (union_total, union_ci),
    };
    let relay_total = |i: usize| relays.iter().skip(i).step_by(k).sum::<u64>();
    Ok(SimStats {
        mode: config.mode,
        seed: config.seed,
        stream: config.stream,
        rng: RNG_IDENTITY,
        delivered_packets,
        measured_slots: config.n_slots,
        throughput_estimate: delivered_packets as f64 / measured,
        ci95_halfwidth,
        relay_decode_rate: (0..k).map(|i| relay_total(i) as f64 / measured).collect(),
        relay_decode_ci95: (0..k)
            .map(|i| batch_halfwidth(relays.iter().skip(i).step_by(k).copied(), &sizes))
            .collect(),
        uplink_union_rate: union_total as f64 / measured,
        uplink_union_ci95: union_ci,
        sink_collision_rate: collisions as f64 / measured,
        counters,
    })
}

fn tally(counters: &mut SimCounters, out: &SlotOutcome) {
    counters.slots += 1;
    counters.relay_decodes += out.relays_decoded.iter().map(|&d| d as u64).sum::<u64>();
    counters.forwarded += out.relays_forwarding.iter().map(|&f| f as u64).sum::<u64>();
    counters.sink_arrivals += out.sink_arrivals;
    counters.sink_decodes += out.sink_decoded as u64;
}
