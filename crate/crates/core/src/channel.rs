//! Queue-length-indexed discrete memoryless channels and their capacity.
//!
//! A [`QChannel`] holds one transition matrix per queue length up to a cap
//! and a terminal matrix shared by every longer queue. Because the decoder
//! knows the queue length, the objective `sum_q pi(q) I(P_X, W_q)` is the
//! mutual information of the compound channel `x -> (y, q)` with law
//! `pi(q) W_q(y|x)`, and its maximum is found with Blahut-Arimoto.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::StationaryDist;

/// Row-sum tolerance for transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Default Blahut-Arimoto duality-gap tolerance, in bits.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default Blahut-Arimoto iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Row-stochastic `|X| x |Y|` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ChannelMatrix {
    inputs: usize,
    outputs: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for ChannelMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ChannelMatrix::from_rows(rows)
    }
}

impl From<ChannelMatrix> for Vec<Vec<f64>> {
    fn from(m: ChannelMatrix) -> Self {
        m.data.chunks(m.outputs).map(<[f64]>::to_vec).collect()
    }
}

impl ChannelMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let inputs = rows.len();
        let outputs = rows.first().map_or(0, Vec::len);
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidChannel("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != outputs) {
            return Err(Error::InvalidChannel("ragged rows".into()));
        }
        let m = Self {
            inputs,
            outputs,
            data: rows.into_iter().flatten().collect(),
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for (x, row) in self.rows().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidChannel(format!("row {x} has entries outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChannel(format!("row {x} sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// Binary symmetric channel with crossover `eps`.
    pub fn bsc(eps: f64) -> Result<Self> {
        Self::symmetric(2, eps)
    }

    /// `n`-ary symmetric channel: correct w.p. `1 - eps`, otherwise uniform
    /// over the other `n - 1` symbols.
    pub fn symmetric(n: usize, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidChannel("alphabet must have >= 2 symbols".into()));
        }
        let off = eps / (n - 1) as f64;
        Self::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 - eps } else { off }).collect())
                .collect(),
        )
    }

    /// `n`-ary erasure channel; output `n` is the erasure symbol.
    pub fn erasure(n: usize, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidChannel("alphabet must have >= 2 symbols".into()));
        }
        Self::from_rows(
            (0..n)
                .map(|i| {
                    (0..=n)
                        .map(|j| match j {
                            j if j == n => eps,
                            j if j == i => 1.0 - eps,
                            _ => 0.0,
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Z channel: input 0 is noiseless, input 1 flips to 0 w.p. `p`.
    pub fn z_channel(p: f64) -> Result<Self> {
        Self::from_rows(vec![vec![1.0, 0.0], vec![p, 1.0 - p]])
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.outputs..(x + 1) * self.outputs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.outputs)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}

fn check_input(p_x: &[f64], inputs: usize) -> Result<()> {
    if p_x.len() != inputs {
        return Err(Error::DimensionMismatch(format!(
            "input distribution has {} entries, channel has {inputs} inputs",
            p_x.len()
        )));
    }
    if p_x.iter().any(|&p| !(p >= 0.0)) || (p_x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("input distribution is not normalized".into()));
    }
    Ok(())
}

/// `I(X; Y)` in bits for input law `p_x` through `w`, with `0 log 0 = 0`.
pub fn mutual_information(p_x: &[f64], w: &ChannelMatrix) -> Result<f64> {
    check_input(p_x, w.inputs)?;
    Ok(mutual_information_nats(p_x, w) / LN_2)
}

fn output_law(p_x: &[f64], w: &ChannelMatrix) -> Vec<f64> {
    let mut q = vec![0.0; w.outputs];
    for (px, row) in p_x.iter().zip(w.rows()) {
        for (qy, &wy) in q.iter_mut().zip(row) {
            *qy += px * wy;
        }
    }
    q
}

/// Per-input divergences `D(W(.|x) || q)` in nats.
fn divergences(w: &ChannelMatrix, q: &[f64]) -> Vec<f64> {
    w.rows()
        .map(|row| {
            row.iter()
                .zip(q)
                .filter(|(&wy, _)| wy > 0.0)
                .map(|(&wy, &qy)| wy * (wy / qy).ln())
                .sum()
        })
        .collect()
}

fn mutual_information_nats(p_x: &[f64], w: &ChannelMatrix) -> f64 {
    let q = output_law(p_x, w);
    let d = divergences(w, &q);
    p_x.iter()
        .zip(&d)
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, d)| p * d)
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    /// Stop when `max_x D_x - I(P_X)` falls to this many bits.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            record_trace: false,
        }
    }
}

impl BaOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaOutput {
    pub p_x: Vec<f64>,
    /// `I(P_X, W)` at the returned input, in bits.
    pub bits: f64,
    /// Upper bound on capacity minus `bits`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False if the objective ever decreased by more than rounding.
    pub monotone: bool,
    /// Objective per iteration, in bits (only if requested).
    pub trace: Vec<f64>,
}

/// Blahut-Arimoto capacity of a single matrix, started from the uniform
/// input law.
pub fn blahut_arimoto(w: &ChannelMatrix, opts: BaOptions) -> BaOutput {
    let n = w.inputs;
    let mut p = vec![1.0 / n as f64; n];
    let mut trace = Vec::new();
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    loop {
        let q = output_law(&p, w);
        let d = divergences(w, &q);
        let objective: f64 = p
            .iter()
            .zip(&d)
            .filter(|(&px, _)| px > 0.0)
            .map(|(px, dx)| px * dx)
            .sum::<f64>()
            .max(0.0);
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(objective);
        let bits = objective / LN_2;
        let gap = (upper - objective) / LN_2;
        if bits < prev - 1e-14 * prev.abs().max(1.0) {
            monotone = false;
        }
        prev = bits;
        if opts.record_trace {
            trace.push(bits);
        }
        let converged = gap <= opts.tol;
        if converged || iterations >= opts.max_iter {
            if !converged {
                log::warn!("Blahut-Arimoto stopped at the iteration cap with gap {gap:e} bits");
            }
            return BaOutput {
                p_x: p,
                bits,
                gap,
                iterations,
                converged,
                monotone,
                trace,
            };
        }
        let dmax = upper;
        for (px, dx) in p.iter_mut().zip(&d) {
            *px *= (dx - dmax).exp();
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|px| *px /= s);
        iterations += 1;
    }
}

/// Channel family indexed by queue length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QChannel {
    /// `W_q` for `q = 0..levels.len()`.
    pub levels: Vec<ChannelMatrix>,
    /// Used for every `q >= levels.len()`.
    pub terminal: ChannelMatrix,
}

impl QChannel {
    pub fn new(levels: Vec<ChannelMatrix>, terminal: ChannelMatrix) -> Result<Self> {
        let (nx, ny) = (terminal.inputs, terminal.outputs);
        if levels.iter().any(|m| m.inputs != nx || m.outputs != ny) {
            return Err(Error::InvalidChannel(
                "all levels must share input and output alphabets".into(),
            ));
        }
        Ok(Self { levels, terminal })
    }

    /// Same matrix at every queue length.
    pub fn constant(w: ChannelMatrix) -> Self {
        Self {
            levels: Vec::new(),
            terminal: w,
        }
    }

    pub fn level(&self, q: usize) -> &ChannelMatrix {
        self.levels.get(q).unwrap_or(&self.terminal)
    }

    pub fn input_size(&self) -> usize {
        self.terminal.inputs
    }

    pub fn output_size(&self) -> usize {
        self.terminal.outputs
    }

    /// Distinct level slots: explicit levels then the terminal.
    pub fn slots(&self) -> impl Iterator<Item = &ChannelMatrix> {
        self.levels.iter().chain(std::iter::once(&self.terminal))
    }

    /// Probability of each slot under `pi`; the terminal slot collects all
    /// mass beyond the explicit levels, including `pi`'s tail.
    pub fn slot_weights(&self, pi: &StationaryDist) -> Vec<f64> {
        let mut w: Vec<f64> = (0..self.levels.len()).map(|q| pi.prob(q)).collect();
        let head: f64 = w.iter().sum();
        w.push((1.0 - head).max(0.0));
        w
    }

    /// `I(P_X, W_q)` for every slot, in bits.
    pub fn level_information(&self, p_x: &[f64]) -> Result<Vec<f64>> {
        self.slots().map(|m| mutual_information(p_x, m)).collect()
    }

    /// Compound channel `x -> (y, slot)` with weights `weights`.
    fn compound(&self, weights: &[f64]) -> ChannelMatrix {
        let active: Vec<(f64, &ChannelMatrix)> = weights
            .iter()
            .copied()
            .zip(self.slots())
            .filter(|(w, _)| *w > 0.0)
            .collect();
        let ny = self.output_size();
        let outputs = active.len() * ny;
        let mut data = Vec::with_capacity(self.input_size() * outputs);
        for x in 0..self.input_size() {
            for (w, m) in &active {
                data.extend(m.row(x).iter().map(|p| w * p));
            }
        }
        ChannelMatrix {
            inputs: self.input_size(),
            outputs,
            data,
        }
    }
}

/// Good matrix up to queue length `b`, bad matrix beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    pub b: usize,
    pub good: ChannelMatrix,
    pub bad: ChannelMatrix,
}

impl StepProfile {
    pub fn new(b: usize, good: ChannelMatrix, bad: ChannelMatrix) -> Result<Self> {
        let p = Self { b, good, bad };
        p.to_qchannel()?;
        let (c_good, c_bad) = p.level_capacities();
        if !(c_good > c_bad) {
            return Err(Error::InvalidChannel(format!(
                "step profile must step down: I(good) = {c_good} <= I(bad) = {c_bad}"
            )));
        }
        Ok(p)
    }

    pub fn bsc(b: usize, eps_good: f64, eps_bad: f64) -> Result<Self> {
        Self::new(b, ChannelMatrix::bsc(eps_good)?, ChannelMatrix::bsc(eps_bad)?)
    }

    pub fn to_qchannel(&self) -> Result<QChannel> {
        QChannel::new(vec![self.good.clone(); self.b + 1], self.bad.clone())
    }

    /// Capacity-achieving input of the good matrix.
    pub fn optimal_input(&self) -> Vec<f64> {
        blahut_arimoto(&self.good, BaOptions::default()).p_x
    }

    /// `(c_b, c_{b+1})`: information of the good and bad matrices at the
    /// good matrix's optimal input.
    pub fn level_capacities(&self) -> (f64, f64) {
        let p = self.optimal_input();
        (
            mutual_information_nats(&p, &self.good) / LN_2,
            mutual_information_nats(&p, &self.bad) / LN_2,
        )
    }

    /// Whether the good matrix's optimal input also achieves the bad
    /// matrix's capacity (within `tol` bits).
    pub fn shares_optimal_input(&self, tol: f64) -> bool {
        let (_, c_bad_at_p) = self.level_capacities();
        let c_bad = blahut_arimoto(&self.bad, BaOptions::default()).bits;
        (c_bad - c_bad_at_p).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub input_dist: Vec<f64>,
    pub bits_per_symbol: f64,
    pub bits_per_time: f64,
    /// Arrival rate used for `bits_per_time`.
    pub lambda: f64,
    pub iterations: usize,
    pub gap_bound: f64,
    pub converged: bool,
    pub objective_monotone: bool,
}

impl CapacityResult {
    pub fn at_rate(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self.bits_per_time = lambda * self.bits_per_symbol;
        self
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tolerance must be > 0, got {tol}")))
    }
}

/// `sup_{P_X} sum_q pi(q) I(P_X, W_q)` in bits per symbol. `bits_per_time`
/// is reported at unit rate; use [`CapacityResult::at_rate`].
pub fn capacity_mixture(pi: &StationaryDist, ch: &QChannel, tol: f64) -> Result<CapacityResult> {
    check_tol(tol)?;
    let weights = ch.slot_weights(pi);
    let compound = ch.compound(&weights);
    let ba = blahut_arimoto(&compound, BaOptions::with_tol(tol));
    Ok(CapacityResult {
        input_dist: ba.p_x,
        bits_per_symbol: ba.bits,
        bits_per_time: ba.bits,
        lambda: 1.0,
        iterations: ba.iterations,
        gap_bound: ba.gap,
        converged: ba.converged,
        objective_monotone: ba.monotone,
    })
}

/// `sum_q pi(q) I(P_X, W_q)` at a fixed input law, in bits.
pub fn mixture_information(pi: &StationaryDist, ch: &QChannel, p_x: &[f64]) -> Result<f64> {
    let info = ch.level_information(p_x)?;
    Ok(ch
        .slot_weights(pi)
        .iter()
        .zip(&info)
        .map(|(w, i)| w * i)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiLevel {
    pub weight: f64,
    pub bits: f64,
    pub input_dist: Vec<f64>,
}

/// Capacity with queue state known at the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiCapacity {
    pub levels: Vec<CsiLevel>,
    pub bits_per_symbol: f64,
    pub bits_per_time: f64,
    pub gap_bound: f64,
}

/// `lambda E[sup_{P_X} I(P_X, W_Q)]`: per-level optimization, averaged.
pub fn capacity_csi(pi: &StationaryDist, ch: &QChannel, lambda: f64, tol: f64) -> Result<CsiCapacity> {
    check_tol(tol)?;
    let weights = ch.slot_weights(pi);
    let slots: Vec<&ChannelMatrix> = ch.slots().collect();
    let levels: Vec<CsiLevel> = slots
        .par_iter()
        .zip(weights.par_iter())
        .map(|(m, &weight)| {
            let ba = blahut_arimoto(m, BaOptions::with_tol(tol));
            CsiLevel {
                weight,
                bits: ba.bits,
                input_dist: ba.p_x,
            }
        })
        .collect();
    let bits_per_symbol: f64 = levels.iter().map(|l| l.weight * l.bits).sum();
    Ok(CsiCapacity {
        bits_per_symbol,
        bits_per_time: lambda * bits_per_symbol,
        gap_bound: tol,
        levels,
    })
}

/// `c_b - sigma^(b+1) (c_b - c_{b+1})`: GI/M/1 capacity under a step profile.
pub fn step_capacity_closed_form(sigma_star: f64, b: usize, c_b: f64, c_b1: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma_star) {
        return Err(Error::Domain(format!("sigma* must lie in [0,1], got {sigma_star}")));
    }
    if !(c_b >= c_b1 && c_b1 >= 0.0) {
        return Err(Error::Domain(format!(
            "need c_b >= c_(b+1) >= 0, got {c_b}, {c_b1}"
        )));
    }
    Ok(c_b - sigma_star.powi(b as i32 + 1) * (c_b - c_b1))
}

/// Channel families as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    BscStep {
        b: usize,
        eps_good: f64,
        eps_bad: f64,
    },
    SymmetricStep {
        alphabet: usize,
        b: usize,
        eps_good: f64,
        eps_bad: f64,
    },
    ErasureStep {
        alphabet: usize,
        b: usize,
        eps_good: f64,
        eps_bad: f64,
    },
    Explicit {
        levels: Vec<ChannelMatrix>,
        terminal: ChannelMatrix,
    },
}

impl ChannelSpec {
    pub fn step_profile(&self) -> Result<Option<StepProfile>> {
        Ok(match *self {
            ChannelSpec::BscStep {
                b,
                eps_good,
                eps_bad,
            } => Some(StepProfile::bsc(b, eps_good, eps_bad)?),
            ChannelSpec::SymmetricStep {
                alphabet,
                b,
                eps_good,
                eps_bad,
            } => Some(StepProfile::new(
                b,
                ChannelMatrix::symmetric(alphabet, eps_good)?,
                ChannelMatrix::symmetric(alphabet, eps_bad)?,
            )?),
            ChannelSpec::ErasureStep {
                alphabet,
                b,
                eps_good,
                eps_bad,
            } => Some(StepProfile::new(
                b,
                ChannelMatrix::erasure(alphabet, eps_good)?,
                ChannelMatrix::erasure(alphabet, eps_bad)?,
            )?),
            ChannelSpec::Explicit { .. } => None,
        })
    }

    pub fn build(&self) -> Result<QChannel> {
        match self {
            ChannelSpec::Explicit { levels, terminal } => QChannel::new(levels.clone(), terminal.clone()),
            _ => self.step_profile()?.expect("step spec").to_qchannel(),
        }
    }
}
