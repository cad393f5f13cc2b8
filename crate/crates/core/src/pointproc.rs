//! Marked renewal arrival streams and their superposition.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::stats::{iid_estimate, Estimate};

/// One arrival: epoch, owning user and service-time mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub epoch: f64,
    pub user: u32,
    /// Service requirement; `0.0` until marks are attached.
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStream {
    pub events: Vec<Arrival>,
    pub horizon: f64,
}

/// How the first epoch of a renewal stream is placed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Start {
    /// First epoch after one ordinary inter-arrival draw.
    Ordinary,
    /// First epoch drawn from the stationary-excess law, so the stream is
    /// stationary on `[0, horizon]`.
    #[default]
    Equilibrium,
    /// First epoch at the given time.
    At(f64),
}

impl ArrivalStream {
    pub fn empty(horizon: f64) -> Self {
        Self {
            events: Vec::new(),
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn epochs(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|a| a.epoch)
    }

    /// True once every event carries a strictly positive service mark.
    pub fn is_marked(&self) -> bool {
        self.events.iter().all(|a| a.service > 0.0)
    }

    /// Attach i.i.d. service marks in epoch order.
    pub fn with_service<R: Rng + ?Sized>(mut self, service: &Distribution, rng: &mut R) -> Self {
        for a in &mut self.events {
            a.service = service.sample(rng);
        }
        self
    }

    /// Empirical arrival rate over the horizon.
    pub fn rate(&self) -> f64 {
        self.events.len() as f64 / self.horizon
    }

    /// Number of epochs in the closed window `[start, end]`.
    pub fn count_in_window(&self, start: f64, end: f64) -> usize {
        let lo = self.events.partition_point(|a| a.epoch < start);
        let hi = self.events.partition_point(|a| a.epoch <= end);
        hi.saturating_sub(lo)
    }

    /// Inter-arrival gaps of the (merged) stream.
    pub fn gaps(&self) -> Vec<f64> {
        self.events
            .windows(2)
            .map(|w| w[1].epoch - w[0].epoch)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for a in &self.events {
            wr.serialize(a)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `(epoch, user, service)` rows. The horizon is the last epoch
    /// unless given.
    pub fn read_csv<R: Read>(r: R, horizon: Option<f64>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let events = rd
            .deserialize::<Arrival>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let horizon = horizon.unwrap_or_else(|| events.last().map_or(0.0, |a| a.epoch));
        Ok(Self { events, horizon })
    }
}

/// Renewal stream on `[0, horizon]` with i.i.d. gaps from `dist`.
pub fn gen_renewal<R: Rng + ?Sized>(
    dist: &Distribution,
    horizon: f64,
    user: u32,
    start: Start,
    rng: &mut R,
) -> Result<ArrivalStream> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    let mut t = match start {
        Start::Ordinary => dist.sample(rng),
        Start::Equilibrium => dist.sample_equilibrium(rng),
        Start::At(t0) => t0,
    };
    let mut events = Vec::with_capacity((horizon / dist.mean() * 1.05) as usize + 16);
    while t <= horizon {
        if t >= 0.0 {
            events.push(Arrival {
                epoch: t,
                user,
                service: 0.0,
            });
        }
        t += dist.sample(rng);
    }
    Ok(ArrivalStream { events, horizon })
}

/// Merge streams by epoch; simultaneous epochs are ordered by user id.
pub fn superpose(streams: Vec<ArrivalStream>) -> ArrivalStream {
    let horizon = streams.iter().map(|s| s.horizon).fold(0.0, f64::max);
    let total = streams.iter().map(|s| s.events.len()).sum();
    let mut events = Vec::with_capacity(total);
    for s in streams {
        events.extend(s.events);
    }
    events.sort_by(|a, b| a.epoch.total_cmp(&b.epoch).then(a.user.cmp(&b.user)));
    ArrivalStream { events, horizon }
}

/// K i.i.d. stationary renewal streams, generated in parallel from
/// per-user substreams of `seed`, then superposed.
pub fn gen_superposition(
    components: &[Distribution],
    horizon: f64,
    seed: u64,
) -> Result<ArrivalStream> {
    let streams = components
        .par_iter()
        .enumerate()
        .map(|(k, d)| {
            let mut rng = seeded(derive_seed(seed, k as u64));
            gen_renewal(d, horizon, k as u32, Start::Equilibrium, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(superpose(streams))
}

/// Sparsity of a triangular row of identical components on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityDiagnostics {
    /// `sum_k sum_{j>=2} j P[N_k(B) = j]`
    pub g1: f64,
    pub g1_std_error: f64,
    /// `max_k lambda_k`
    pub g2: f64,
    pub window_length: f64,
    /// `lambda_k = P[N_k(B) = 1] / |B|`
    pub per_user_rates: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SparsityDiagnostics {
    pub fn b2_g2(&self) -> f64 {
        self.window_length * self.window_length * self.g2
    }
}

pub const MIN_SPARSITY_REPLICATIONS: usize = 10_000;

/// Count of points of a stationary renewal process in `[0, len]`.
fn stationary_count<R: Rng + ?Sized>(dist: &Distribution, len: f64, rng: &mut R) -> usize {
    let mut t = dist.sample_equilibrium(rng);
    let mut n = 0;
    while t <= len {
        n += 1;
        t += dist.sample(rng);
    }
    n
}

/// Monte Carlo estimate of the sparsity quantities for `k` copies of
/// `component` observed on a window of length `window_length`.
pub fn sparsity_diagnostics<R: Rng + ?Sized>(
    component: &Distribution,
    k: usize,
    window_length: f64,
    replications: usize,
    rng: &mut R,
) -> Result<SparsityDiagnostics> {
    if replications < MIN_SPARSITY_REPLICATIONS {
        return Err(Error::Domain(format!(
            "sparsity diagnostics need >= {MIN_SPARSITY_REPLICATIONS} replications, got {replications}"
        )));
    }
    if k == 0 || !(window_length > 0.0) {
        return Err(Error::Domain("need k >= 1 and a positive window".into()));
    }
    let seed: u64 = rng.random();
    // Per user: (estimate of P[N=1], estimate of E[N 1{N>=2}]).
    let per_user: Vec<(Estimate, Estimate)> = (0..k)
        .into_par_iter()
        .map(|user| {
            let mut rng = seeded(derive_seed(seed, user as u64));
            let mut single = Vec::with_capacity(replications);
            let mut multi = Vec::with_capacity(replications);
            for _ in 0..replications {
                let n = stationary_count(component, window_length, &mut rng);
                single.push(if n == 1 { 1.0 } else { 0.0 });
                multi.push(if n >= 2 { n as f64 } else { 0.0 });
            }
            (iid_estimate(&single), iid_estimate(&multi))
        })
        .collect();

    let per_user_rates: Vec<f64> = per_user
        .iter()
        .map(|(s, _)| s.mean / window_length)
        .collect();
    let g1: f64 = per_user.iter().map(|(_, m)| m.mean).sum();
    let g1_std_error = per_user
        .iter()
        .map(|(_, m)| m.std_error.powi(2))
        .sum::<f64>()
        .sqrt();
    let g2 = per_user_rates.iter().copied().fold(0.0, f64::max);

    let mut warnings = Vec::new();
    if g1 > 0.0 && g1_std_error > 0.1 * g1 {
        warnings.push(format!(
            "g1 standard error {g1_std_error:.3e} exceeds 10% of estimate {g1:.3e}"
        ));
    }
    for (user, (s, _)) in per_user.iter().enumerate() {
        if s.mean > 0.0 && s.std_error > 0.1 * s.mean {
            warnings.push(format!(
                "rate estimate for user {user} has standard error above 10%"
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SparsityDiagnostics {
        g1,
        g1_std_error,
        g2,
        window_length,
        per_user_rates,
        warnings,
    })
}
