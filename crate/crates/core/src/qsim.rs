//! Event-driven FCFS single-server queue and empirical queue-length laws.
//!
//! The queue length recorded for an arrival is the number of jobs in the
//! system (waiting plus in service) just before that arrival is admitted.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::pointproc::{Arrival, ArrivalStream};
use crate::stats::{batch_means, Estimate, DEFAULT_BATCHES};

/// Fewest post-warmup records accepted by [`empirical_pi`].
pub const MIN_EMPIRICAL_RECORDS: usize = 1_000;
/// Arrivals always discarded as warm-up, unless overridden.
pub const MIN_WARMUP: usize = 10_000;
/// Fraction of arrivals discarded as warm-up when larger than [`MIN_WARMUP`].
pub const WARMUP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub arrival_epoch: f64,
    pub user: u32,
    pub q_seen: u32,
    pub service: f64,
    /// Time spent waiting before service starts.
    pub wait: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    pub records: Vec<TraceRecord>,
    /// Index of the first record used for statistics.
    pub warmup_cutoff: usize,
}

pub fn default_warmup(n: usize) -> usize {
    let frac = (n as f64 * WARMUP_FRACTION).ceil() as usize;
    MIN_WARMUP.max(frac).min(n)
}

impl QueueTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_warmup(mut self, cutoff: usize) -> Self {
        self.warmup_cutoff = cutoff.min(self.records.len());
        self
    }

    pub fn post_warmup(&self) -> &[TraceRecord] {
        &self.records[self.warmup_cutoff..]
    }

    /// Index of the first arrival at or after the warm-up cutoff that finds
    /// the system empty.
    pub fn first_empty_point(&self) -> Option<usize> {
        self.post_warmup()
            .iter()
            .position(|r| r.q_seen == 0)
            .map(|i| i + self.warmup_cutoff)
    }

    /// Move the cutoff forward to the first post-warmup empty point, so that
    /// statistics are independent of the pre-cutoff history.
    pub fn truncate_at_empty_point(mut self) -> Self {
        if let Some(i) = self.first_empty_point() {
            self.warmup_cutoff = i;
        }
        self
    }

    /// Post-warmup `q_seen` values, optionally for a single user.
    pub fn q_values(&self, user: Option<u32>) -> Vec<u32> {
        self.post_warmup()
            .iter()
            .filter(|r| user.is_none_or(|u| r.user == u))
            .map(|r| r.q_seen)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["arrival_epoch", "user", "q_seen", "service"])?;
        for r in &self.records {
            wr.write_record(&[
                r.arrival_epoch.to_string(),
                r.user.to_string(),
                r.q_seen.to_string(),
                r.service.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Exact FCFS simulation of a marked arrival stream.
pub fn simulate_fcfs(stream: &ArrivalStream) -> Result<QueueTrace> {
    simulate_events(&stream.events)
}

fn simulate_events(events: &[Arrival]) -> Result<QueueTrace> {
    let mut records = Vec::with_capacity(events.len());
    // Departure epochs of jobs still in the system, in FCFS order.
    let mut in_system: VecDeque<f64> = VecDeque::new();
    let mut last_departure = f64::NEG_INFINITY;
    let mut prev_epoch = f64::NEG_INFINITY;
    for (i, a) in events.iter().enumerate() {
        if !(a.epoch >= prev_epoch) {
            return Err(Error::Unsorted { index: i });
        }
        if !(a.service > 0.0 && a.service.is_finite()) {
            return Err(Error::InvalidMark {
                index: i,
                value: a.service,
            });
        }
        prev_epoch = a.epoch;
        while in_system.front().is_some_and(|&d| d <= a.epoch) {
            in_system.pop_front();
        }
        let q_seen = in_system.len() as u32;
        let start = a.epoch.max(last_departure);
        // Work conservation: a job waits only behind a nonempty system.
        debug_assert!(start == a.epoch || q_seen > 0);
        let departure = start + a.service;
        debug_assert!(departure >= last_departure, "FCFS order");
        last_departure = departure;
        in_system.push_back(departure);
        records.push(TraceRecord {
            arrival_epoch: a.epoch,
            user: a.user,
            q_seen,
            service: a.service,
            wait: start - a.epoch,
        });
    }
    let warmup_cutoff = default_warmup(records.len());
    Ok(QueueTrace {
        records,
        warmup_cutoff,
    })
}

/// Rejects `lambda * E[S] >= 1`.
pub fn check_stability(arrival_rate: f64, service: &Distribution) -> Result<f64> {
    let rho = arrival_rate * service.mean();
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    Ok(rho)
}

/// Simulate `n` arrivals of a single-user GI/GI/1 queue, starting from an
/// empty system with an equilibrium first gap.
pub fn simulate_renewal_queue<R: Rng + ?Sized>(
    arrival: &Distribution,
    service: &Distribution,
    n: usize,
    rng: &mut R,
) -> Result<QueueTrace> {
    check_stability(arrival.rate(), service)?;
    let mut events = Vec::with_capacity(n);
    let mut t = arrival.sample_equilibrium(rng);
    for _ in 0..n {
        events.push(Arrival {
            epoch: t,
            user: 0,
            service: service.sample(rng),
        });
        t += arrival.sample(rng);
    }
    simulate_events(&events)
}

/// Truncated probability vector over queue lengths `0..=q_max` plus the
/// mass beyond `q_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
    pub tail_mass: f64,
    pub q_max: usize,
}

impl StationaryDist {
    pub fn new(pi: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::Domain("empty probability vector".into()));
        }
        if pi.iter().chain([&tail_mass]).any(|&p| !(p >= 0.0)) {
            return Err(Error::Domain("negative or NaN probability".into()));
        }
        let total: f64 = pi.iter().sum::<f64>() + tail_mass;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        let q_max = pi.len() - 1;
        Ok(Self {
            pi,
            tail_mass,
            q_max,
        })
    }

    pub fn point_mass(q: usize) -> Self {
        let mut pi = vec![0.0; q + 1];
        pi[q] = 1.0;
        Self {
            pi,
            tail_mass: 0.0,
            q_max: q,
        }
    }

    /// `pi(q)`, zero beyond the stored support.
    pub fn prob(&self, q: usize) -> f64 {
        self.pi.get(q).copied().unwrap_or(0.0)
    }

    /// Mean over the truncated support (tail mass ignored).
    pub fn truncated_mean(&self) -> f64 {
        self.pi.iter().enumerate().map(|(q, p)| q as f64 * p).sum()
    }
}

/// Total variation distance `1/2 sum |p(q) - r(q)|`, with supports aligned by
/// zero-padding and the two tail masses compared as one extra cell.
pub fn tv_distance(p: &StationaryDist, r: &StationaryDist) -> f64 {
    let len = p.pi.len().max(r.pi.len());
    let body: f64 = (0..len).map(|q| (p.prob(q) - r.prob(q)).abs()).sum();
    (0.5 * (body + (p.tail_mass - r.tail_mass).abs())).clamp(0.0, 1.0)
}

/// Empirical stationary law with batch-means standard errors per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPi {
    pub dist: StationaryDist,
    pub std_errors: Vec<f64>,
    pub samples: usize,
}

pub fn empirical_pi(trace: &QueueTrace, user: Option<u32>) -> Result<StationaryDist> {
    empirical_pi_with_errors(trace, user).map(|e| e.dist)
}

pub fn empirical_pi_with_errors(trace: &QueueTrace, user: Option<u32>) -> Result<EmpiricalPi> {
    let qs = trace.q_values(user);
    if qs.len() < MIN_EMPIRICAL_RECORDS {
        return Err(Error::InsufficientData {
            needed: MIN_EMPIRICAL_RECORDS,
            got: qs.len(),
        });
    }
    let q_max = *qs.iter().max().expect("non-empty") as usize;
    let n = qs.len();
    let mut counts = vec![0usize; q_max + 1];
    for &q in &qs {
        counts[q as usize] += 1;
    }
    let pi: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let batch_len = n / DEFAULT_BATCHES;
    let mut batch_hist = vec![vec![0usize; q_max + 1]; DEFAULT_BATCHES];
    for (b, chunk) in qs.chunks_exact(batch_len).take(DEFAULT_BATCHES).enumerate() {
        for &q in chunk {
            batch_hist[b][q as usize] += 1;
        }
    }
    let std_errors = (0..=q_max)
        .map(|q| {
            let fr: Vec<f64> = batch_hist
                .iter()
                .map(|h| h[q] as f64 / batch_len as f64)
                .collect();
            crate::stats::iid_estimate(&fr).std_error
        })
        .collect();
    Ok(EmpiricalPi {
        dist: StationaryDist {
            pi,
            tail_mass: 0.0,
            q_max,
        },
        std_errors,
        samples: n,
    })
}

/// Batch-means estimate of `E[f(Q)]` over post-warmup arrivals.
pub fn ergodic_average(trace: &QueueTrace, user: Option<u32>, f: impl Fn(u32) -> f64) -> Estimate {
    let vals: Vec<f64> = trace.q_values(user).into_iter().map(f).collect();
    batch_means(&vals, DEFAULT_BATCHES)
}

/// Compares the mean queue length of the two halves of the post-warmup
/// trace; returns `(difference, combined standard error)`.
pub fn half_split_drift(trace: &QueueTrace) -> (f64, f64) {
    let qs: Vec<f64> = trace.q_values(None).into_iter().map(f64::from).collect();
    let (a, b) = qs.split_at(qs.len() / 2);
    let ea = batch_means(a, DEFAULT_BATCHES);
    let eb = batch_means(b, DEFAULT_BATCHES);
    (
        (ea.mean - eb.mean).abs(),
        (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt(),
    )
}
