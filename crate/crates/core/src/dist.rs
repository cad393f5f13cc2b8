//! Nonnegative inter-arrival and service-time laws.
//!
//! Every family has a closed-form mean and Laplace-Stieltjes transform
//! `A*(s) = E[exp(-s A)]`, so fixed-point solvers never need quadrature.
//! Values are validated on construction and on deserialization.

use rand::Rng;
use rand_distr::{Distribution as _, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of hyperexponential weights.
const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub enum Distribution {
    /// Point mass at `value`.
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    /// Sum of `shape` i.i.d. exponentials of rate `rate`.
    Erlang { shape: u32, rate: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    /// Mass `1 - epsilon` at `delta`, mass `epsilon` at the atom that
    /// restores the requested mean.
    Cramming { epsilon: f64, delta: f64, mean: f64 },
}

// Mirror of `Distribution` used only for serde; conversion validates.
#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum RawDistribution {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    Cramming { epsilon: f64, delta: f64, mean: f64 },
}

impl TryFrom<RawDistribution> for Distribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let d = match raw {
            RawDistribution::Deterministic { value } => Distribution::Deterministic { value },
            RawDistribution::Exponential { rate } => Distribution::Exponential { rate },
            RawDistribution::Erlang { shape, rate } => Distribution::Erlang { shape, rate },
            RawDistribution::HyperExponential { weights, rates } => {
                Distribution::HyperExponential { weights, rates }
            }
            RawDistribution::Cramming {
                epsilon,
                delta,
                mean,
            } => Distribution::Cramming {
                epsilon,
                delta,
                mean,
            },
        };
        d.validate()?;
        Ok(d)
    }
}

impl From<Distribution> for RawDistribution {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Deterministic { value } => RawDistribution::Deterministic { value },
            Distribution::Exponential { rate } => RawDistribution::Exponential { rate },
            Distribution::Erlang { shape, rate } => RawDistribution::Erlang { shape, rate },
            Distribution::HyperExponential { weights, rates } => {
                RawDistribution::HyperExponential { weights, rates }
            }
            Distribution::Cramming {
                epsilon,
                delta,
                mean,
            } => RawDistribution::Cramming {
                epsilon,
                delta,
                mean,
            },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl Distribution {
    pub fn deterministic(value: f64) -> Result<Self> {
        let d = Distribution::Deterministic { value };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let d = Distribution::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        let d = Distribution::Erlang { shape, rate };
        d.validate()?;
        Ok(d)
    }

    pub fn hyper_exponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let d = Distribution::HyperExponential { weights, rates };
        d.validate()?;
        Ok(d)
    }

    pub fn cramming(epsilon: f64, delta: f64, mean: f64) -> Result<Self> {
        let d = Distribution::Cramming {
            epsilon,
            delta,
            mean,
        };
        d.validate()?;
        Ok(d)
    }

    /// Balanced-means two-phase hyperexponential with the given mean and
    /// squared coefficient of variation `scv > 1`.
    pub fn balanced_hyper_exponential(mean: f64, scv: f64) -> Result<Self> {
        positive("mean", mean)?;
        if !(scv > 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "balanced hyperexponential needs scv > 1, got {scv}"
            )));
        }
        let p = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
        let r1 = 2.0 * p / mean;
        let r2 = 2.0 * (1.0 - p) / mean;
        Self::hyper_exponential(vec![p, 1.0 - p], vec![r1, r2])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Deterministic { value } => positive("deterministic value", *value),
            Distribution::Exponential { rate } => positive("rate", *rate),
            Distribution::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(Error::InvalidDistribution("erlang shape must be >= 1".into()));
                }
                positive("rate", *rate)
            }
            Distribution::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::InvalidDistribution(format!(
                        "hyperexponential needs matching non-empty weights/rates ({} vs {})",
                        weights.len(),
                        rates.len()
                    )));
                }
                for &w in weights {
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::InvalidDistribution(format!("bad weight {w}")));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::InvalidDistribution(format!(
                        "hyperexponential weights sum to {total}"
                    )));
                }
                rates.iter().try_for_each(|&r| positive("rate", r))
            }
            Distribution::Cramming {
                epsilon,
                delta,
                mean,
            } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::InvalidDistribution(format!(
                        "cramming epsilon must lie in (0,1), got {epsilon}"
                    )));
                }
                positive("cramming delta", *delta)?;
                positive("cramming mean", *mean)?;
                if delta * (1.0 - epsilon) >= *mean {
                    return Err(Error::InvalidDistribution(format!(
                        "cramming infeasible: delta*(1-eps) = {} >= mean {mean}",
                        delta * (1.0 - epsilon)
                    )));
                }
                Ok(())
            }
        }
    }

    /// Atom locations `(delta, far)` of a cramming law.
    pub fn cramming_atoms(&self) -> Option<(f64, f64)> {
        match *self {
            Distribution::Cramming {
                epsilon,
                delta,
                mean,
            } => Some((delta, (mean - delta * (1.0 - epsilon)) / epsilon)),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Deterministic { value } => *value,
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Erlang { shape, rate } => *shape as f64 / rate,
            Distribution::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
            Distribution::Cramming { mean, .. } => *mean,
        }
    }

    /// Reciprocal of the mean.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Distribution::Deterministic { value } => value * value,
            Distribution::Exponential { rate } => 2.0 / (rate * rate),
            Distribution::Erlang { shape, rate } => {
                let k = *shape as f64;
                k * (k + 1.0) / (rate * rate)
            }
            Distribution::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| 2.0 * w / (r * r))
                .sum(),
            Distribution::Cramming { epsilon, .. } => {
                let (a1, a2) = self.cramming_atoms().expect("cramming");
                (1.0 - epsilon) * a1 * a1 + epsilon * a2 * a2
            }
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// Laplace-Stieltjes transform `E[exp(-s X)]` for `s >= 0`.
    pub fn lst(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("LST argument must be >= 0, got {s}")));
        }
        Ok(self.lst_unchecked(s))
    }

    pub(crate) fn lst_unchecked(&self, s: f64) -> f64 {
        match self {
            Distribution::Deterministic { value } => (-s * value).exp(),
            Distribution::Exponential { rate } => rate / (rate + s),
            Distribution::Erlang { shape, rate } => (rate / (rate + s)).powi(*shape as i32),
            Distribution::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + s))
                .sum(),
            Distribution::Cramming { epsilon, .. } => {
                let (a1, a2) = self.cramming_atoms().expect("cramming");
                (1.0 - epsilon) * (-s * a1).exp() + epsilon * (-s * a2).exp()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Deterministic { value } => *value,
            Distribution::Exponential { rate } => Exp::new(*rate).expect("validated").sample(rng),
            Distribution::Erlang { shape, rate } => Gamma::new(*shape as f64, 1.0 / rate)
                .expect("validated")
                .sample(rng),
            Distribution::HyperExponential { weights, rates } => {
                let i = pick(weights.iter().copied(), rng);
                Exp::new(rates[i]).expect("validated").sample(rng)
            }
            Distribution::Cramming { epsilon, .. } => {
                let (a1, a2) = self.cramming_atoms().expect("cramming");
                if rng.random::<f64>() < *epsilon {
                    a2
                } else {
                    a1
                }
            }
        }
    }

    /// Draw from the stationary-excess (equilibrium) law with density
    /// `(1 - F(t)) / E[X]`: the time from an arbitrary instant to the next
    /// renewal in a stationary renewal process.
    pub fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Deterministic { value } => value * rng.random::<f64>(),
            Distribution::Exponential { .. } => self.sample(rng),
            Distribution::Erlang { shape, rate } => {
                // Uniform mixture of Erlang(j, rate), j = 1..=shape.
                let j = rng.random_range(1..=*shape);
                Gamma::new(j as f64, 1.0 / rate)
                    .expect("validated")
                    .sample(rng)
            }
            Distribution::HyperExponential { weights, rates } => {
                let i = pick(weights.iter().zip(rates).map(|(w, r)| w / r), rng);
                Exp::new(rates[i]).expect("validated").sample(rng)
            }
            Distribution::Cramming { epsilon, .. } => {
                let (a1, a2) = self.cramming_atoms().expect("cramming");
                let near = (1.0 - epsilon) * a1;
                let far = epsilon * a2;
                let atom = if rng.random::<f64>() * (near + far) < near {
                    a1
                } else {
                    a2
                };
                atom * rng.random::<f64>()
            }
        }
    }

    /// Same family rescaled in time so that the mean becomes `mean`.
    pub fn with_mean(&self, mean: f64) -> Result<Self> {
        positive("target mean", mean)?;
        let c = mean / self.mean();
        let d = match self {
            Distribution::Deterministic { .. } => Distribution::Deterministic { value: mean },
            Distribution::Exponential { .. } => Distribution::Exponential { rate: 1.0 / mean },
            Distribution::Erlang { shape, rate } => Distribution::Erlang {
                shape: *shape,
                rate: rate / c,
            },
            Distribution::HyperExponential { weights, rates } => Distribution::HyperExponential {
                weights: weights.clone(),
                rates: rates.iter().map(|r| r / c).collect(),
            },
            Distribution::Cramming { epsilon, delta, .. } => Distribution::Cramming {
                epsilon: *epsilon,
                delta: delta * c,
                mean,
            },
        };
        d.validate()?;
        Ok(d)
    }

    /// Same family rescaled so that `1 / mean == rate`.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        positive("target rate", rate)?;
        self.with_mean(1.0 / rate)
    }

    /// False for families with atoms.
    pub fn is_continuous(&self) -> bool {
        !matches!(
            self,
            Distribution::Deterministic { .. } | Distribution::Cramming { .. }
        )
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Distribution::Deterministic { .. })
    }

    /// Short human-readable tag used as a row label in reports.
    pub fn label(&self) -> String {
        match self {
            Distribution::Deterministic { value } => format!("deterministic({value})"),
            Distribution::Exponential { rate } => format!("exponential({rate})"),
            Distribution::Erlang { shape, rate } => format!("erlang({shape},{rate})"),
            Distribution::HyperExponential { weights, rates } => {
                format!("hyperexp(w={weights:?},r={rates:?})")
            }
            Distribution::Cramming { epsilon, delta, .. } => {
                format!("cramming(eps={epsilon},delta={delta})")
            }
        }
    }
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}
