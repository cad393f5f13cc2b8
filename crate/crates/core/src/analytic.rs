//! Stationary queue length seen by arrivals for queues with a known
//! closed form.
//!
//! - GI/M/1: geometric with ratio `sigma*`, the root in `(0, 1)` of
//!   `sigma = A*(mu (1 - sigma))`.
//! - M/GI/1: inversion of the Pollaczek-Khinchine generating function via
//!   a level-crossing recursion on the kernel `k_q = P[q arrivals during
//!   one service]`.
//! - M/M/1: geometric with ratio `rho`.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::qsim::StationaryDist;

/// Required fixed-point residual for `sigma*`.
pub const SIGMA_RESIDUAL_TOL: f64 = 1e-12;
/// Bisection iteration cap.
pub const MAX_BISECTION_ITERS: usize = 200;
/// Truncation target for automatically sized distributions.
pub const AUTO_TAIL_TOL: f64 = 1e-9;
/// Hard cap on automatically chosen `q_max`.
pub const AUTO_Q_MAX_CAP: usize = 100_000;
/// Allowed missing kernel mass.
pub const KERNEL_DEFICIT_TOL: f64 = 1e-10;
/// Entries below this are clamped to zero; anything more negative is an error.
const NEGATIVE_CLAMP: f64 = -1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gm1Solution {
    pub sigma_star: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `sigma = A*(mu (1 - sigma))` by bisection.
///
/// `h(sigma) = A*(mu (1 - sigma)) - sigma` is convex with `h(1) = 0` and
/// `h'(1) = 1/rho - 1 > 0`, so it is nonnegative at `A*(mu)` and negative
/// just below 1; the interior root is bracketed between the two.
pub fn gm1_sigma(arrival: &Distribution, mu: f64) -> Result<Gm1Solution> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("service rate must be > 0, got {mu}")));
    }
    let rho = arrival.rate() / mu;
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    let h = |s: f64| arrival.lst_unchecked(mu * (1.0 - s)) - s;

    let mut lo = arrival.lst_unchecked(mu);
    let mut gap = 0.5;
    let mut hi = loop {
        let cand = 1.0 - gap;
        if cand > lo && h(cand) < 0.0 {
            break cand;
        }
        gap *= 0.5;
        if gap < 1e-15 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: h(1.0 - 2e-15).abs(),
            });
        }
    };

    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if h(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = if h(lo).abs() <= h(hi).abs() { lo } else { hi };
    let residual = h(sigma).abs();
    if residual > SIGMA_RESIDUAL_TOL || !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    Ok(Gm1Solution {
        sigma_star: sigma,
        residual,
        iterations,
    })
}

/// Geometric law `(1 - r) r^q` truncated at `q_max`, tail `r^(q_max+1)`.
pub fn geometric(ratio: f64, q_max: usize) -> StationaryDist {
    let mut pi = Vec::with_capacity(q_max + 1);
    let mut pow = 1.0;
    for _ in 0..=q_max {
        pi.push((1.0 - ratio) * pow);
        pow *= ratio;
    }
    StationaryDist {
        pi,
        tail_mass: pow,
        q_max,
    }
}

/// Smallest `q_max` whose geometric tail drops below [`AUTO_TAIL_TOL`].
pub fn geometric_auto_q_max(ratio: f64) -> usize {
    if ratio <= 0.0 {
        return 0;
    }
    let n = (AUTO_TAIL_TOL.ln() / ratio.ln()).ceil() as usize;
    n.saturating_sub(1).min(AUTO_Q_MAX_CAP)
}

pub fn gm1_pi(sol: &Gm1Solution, q_max: usize) -> StationaryDist {
    geometric(sol.sigma_star, q_max)
}

pub fn gm1_pi_auto(sol: &Gm1Solution) -> StationaryDist {
    gm1_pi(sol, geometric_auto_q_max(sol.sigma_star))
}

pub fn mm1_pi(lambda: f64, mu: f64, q_max: usize) -> Result<StationaryDist> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::Domain(format!(
            "rates must be positive (lambda {lambda}, mu {mu})"
        )));
    }
    let rho = lambda / mu;
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    Ok(geometric(rho, q_max))
}

/// Kernel `k_q`: probability of `q` Poisson(`lambda`) arrivals during one
/// service time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mg1Kernel {
    pub k: Vec<f64>,
    pub rho: f64,
    /// `1 - sum k_q` over the stored entries.
    pub deficit: f64,
}

impl Mg1Kernel {
    pub fn k0(&self) -> f64 {
        self.k[0]
    }

    /// `sum q k_q`, which equals `rho`.
    pub fn mean(&self) -> f64 {
        self.k.iter().enumerate().map(|(q, k)| q as f64 * k).sum()
    }
}

/// Poisson pmf terms generated by a log-space recursion (safe for large means).
struct PoissonTerms {
    mean: f64,
    q: usize,
    ln_fact: f64,
}

impl PoissonTerms {
    fn new(mean: f64) -> Self {
        Self {
            mean,
            q: 0,
            ln_fact: 0.0,
        }
    }
}

impl Iterator for PoissonTerms {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.q > 0 {
            self.ln_fact += (self.q as f64).ln();
        }
        let v = if self.mean == 0.0 {
            if self.q == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (-self.mean + self.q as f64 * self.mean.ln() - self.ln_fact).exp()
        };
        self.q += 1;
        Some(v)
    }
}

/// Negative binomial terms `C(q+n-1, q) p^n (1-p)^q`: the count of Poisson
/// arrivals during an Erlang(`n`) service (`n = 1` is geometric).
struct NegBinomialTerms {
    n: u32,
    fail: f64,
    q: usize,
    ln_p_n: f64,
    ln_coef: f64,
}

impl NegBinomialTerms {
    fn new(n: u32, success: f64) -> Self {
        Self {
            n,
            fail: 1.0 - success,
            q: 0,
            ln_p_n: n as f64 * success.ln(),
            ln_coef: 0.0,
        }
    }
}

impl Iterator for NegBinomialTerms {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.q > 0 {
            self.ln_coef += ((self.q + self.n as usize - 1) as f64 / self.q as f64).ln();
        }
        let v = (self.ln_p_n + self.ln_coef + self.q as f64 * self.fail.ln()).exp();
        self.q += 1;
        Some(v)
    }
}

fn kernel_components(service: &Distribution, lambda: f64) -> Vec<(f64, Box<dyn Iterator<Item = f64>>)> {
    match service {
        Distribution::Deterministic { value } => {
            vec![(1.0, Box::new(PoissonTerms::new(lambda * value)))]
        }
        Distribution::Exponential { rate } => {
            vec![(1.0, Box::new(NegBinomialTerms::new(1, rate / (rate + lambda))))]
        }
        Distribution::Erlang { shape, rate } => {
            vec![(1.0, Box::new(NegBinomialTerms::new(*shape, rate / (rate + lambda))))]
        }
        Distribution::HyperExponential { weights, rates } => weights
            .iter()
            .zip(rates)
            .map(|(&w, &r)| {
                (
                    w,
                    Box::new(NegBinomialTerms::new(1, r / (r + lambda))) as Box<dyn Iterator<Item = f64>>,
                )
            })
            .collect(),
        Distribution::Cramming { epsilon, .. } => {
            let (a1, a2) = service.cramming_atoms().expect("cramming");
            vec![
                (1.0 - epsilon, Box::new(PoissonTerms::new(lambda * a1))),
                (*epsilon, Box::new(PoissonTerms::new(lambda * a2))),
            ]
        }
    }
}

/// Closed-form kernel for every supported service family. Entries are
/// generated until the missing mass is below [`KERNEL_DEFICIT_TOL`], the
/// terms have become negligible, and at least `min_len` entries exist.
pub fn mg1_kernel(service: &Distribution, lambda: f64, min_len: Option<usize>) -> Result<Mg1Kernel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("arrival rate must be > 0, got {lambda}")));
    }
    let rho = lambda * service.mean();
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    let mut comps = kernel_components(service, lambda);
    let min_len = min_len.unwrap_or(1).max(1);
    let mut k = Vec::new();
    let mut total = 0.0;
    loop {
        let term: f64 = comps
            .iter_mut()
            .map(|(w, it)| *w * it.next().expect("infinite"))
            .sum();
        k.push(term);
        total += term;
        let q = k.len() - 1;
        let done = k.len() >= min_len
            && 1.0 - total < KERNEL_DEFICIT_TOL
            && q as f64 > rho
            && term < 1e-20;
        if done {
            break;
        }
        if k.len() > AUTO_Q_MAX_CAP {
            return Err(Error::NumericDegeneracy(format!(
                "kernel did not reach mass 1 - {KERNEL_DEFICIT_TOL} within {AUTO_Q_MAX_CAP} terms"
            )));
        }
    }
    Ok(Mg1Kernel {
        k,
        rho,
        deficit: (1.0 - total).max(0.0),
    })
}

/// Stationary law of the M/GI/1 queue from its kernel.
///
/// `pi(0) = 1 - rho`; higher terms follow the level-crossing recursion
/// `k_0 pi(j+1) = pi(0) kbar_j + sum_{i=1..j} pi(i) kbar_{j-i+1}` with
/// `kbar_m = sum_{l>m} k_l`, which is the coefficient identity of
/// `Pi(z) (K(z) - z) = (1 - rho)(1 - z) K(z)` rearranged to involve only
/// nonnegative terms. With `q_max = None` the support grows until the tail
/// is below [`AUTO_TAIL_TOL`] (capped at [`AUTO_Q_MAX_CAP`]).
pub fn mg1_pi(kernel: &Mg1Kernel, q_max: Option<usize>) -> Result<StationaryDist> {
    let k0 = kernel.k0();
    if k0 < 1e-12 {
        return Err(Error::NumericDegeneracy(format!("k_0 = {k0:e} too small")));
    }
    let len = kernel.k.len();
    // kbar[m] for m < len; the missing kernel mass sits at index len.
    let mut kbar = vec![0.0; len];
    let mut acc = kernel.deficit;
    for m in (0..len).rev() {
        kbar[m] = acc;
        acc += kernel.k[m];
    }
    let kbar_at = |m: usize| if m < len { kbar[m] } else { 0.0 };

    let limit = q_max.unwrap_or(AUTO_Q_MAX_CAP);
    let mut pi = Vec::with_capacity(limit.min(4096) + 1);
    pi.push(1.0 - kernel.rho);
    let mut sum = pi[0];
    while pi.len() <= limit {
        if q_max.is_none() && 1.0 - sum < AUTO_TAIL_TOL {
            break;
        }
        let j = pi.len() - 1;
        let mut acc = pi[0] * kbar_at(j);
        // Only indices with j - i + 1 < len contribute.
        let i_min = (j + 1).saturating_sub(len - 1).max(1);
        for (i, p) in pi.iter().enumerate().take(j + 1).skip(i_min) {
            acc += p * kbar_at(j - i + 1);
        }
        let mut next = acc / k0;
        if next < 0.0 {
            if next < NEGATIVE_CLAMP {
                return Err(Error::NumericDegeneracy(format!(
                    "negative probability {next:e} at q = {}",
                    j + 1
                )));
            }
            next = 0.0;
        }
        sum += next;
        pi.push(next);
    }
    if q_max.is_none() && 1.0 - sum >= AUTO_TAIL_TOL {
        log::warn!(
            "M/GI/1 distribution truncated at the cap {AUTO_Q_MAX_CAP} with tail {:e}",
            1.0 - sum
        );
    }
    let tail = (1.0 - sum).max(0.0);
    StationaryDist::new(pi, tail)
}

/// Analytic solution summary for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub model: String,
    pub arrival: Distribution,
    pub service: Distribution,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    pub pi_head: Vec<f64>,
    pub tail_mass: f64,
    pub q_max: usize,
}

const PI_HEAD: usize = 20;

/// Analytic stationary law for a GI/M/1 or M/GI/1 queue. Exponential
/// service selects the GI/M/1 route; otherwise the arrivals must be
/// exponential.
pub fn solve(arrival: &Distribution, service: &Distribution) -> Result<(StationaryDist, SolutionRecord)> {
    let rho = arrival.rate() * service.mean();
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    let (pi, model, sigma, residual, k0) = match (arrival, service) {
        (_, Distribution::Exponential { rate }) => {
            let sol = gm1_sigma(arrival, *rate)?;
            (gm1_pi_auto(&sol), "gi_m_1", Some(sol.sigma_star), Some(sol.residual), None)
        }
        (Distribution::Exponential { rate }, _) => {
            let kernel = mg1_kernel(service, *rate, None)?;
            (mg1_pi(&kernel, None)?, "m_gi_1", None, None, Some(kernel.k0()))
        }
        _ => {
            return Err(Error::Domain(
                "no analytic solution: need exponential arrivals or exponential service".into(),
            ))
        }
    };
    let record = SolutionRecord {
        model: model.into(),
        arrival: arrival.clone(),
        service: service.clone(),
        rho,
        sigma_star: sigma,
        residual,
        k0,
        pi_head: pi.pi.iter().take(PI_HEAD).copied().collect(),
        tail_mass: pi.tail_mass,
        q_max: pi.q_max,
    };
    Ok((pi, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exp(r: f64) -> Distribution {
        Distribution::exponential(r).unwrap()
    }

    #[test]
    fn mm1_sigma_is_rho() {
        let sol = gm1_sigma(&exp(0.5), 1.0).unwrap();
        assert_abs_diff_eq!(sol.sigma_star, 0.5, epsilon = 1e-12);
        assert!(sol.residual <= SIGMA_RESIDUAL_TOL);
        // substitution: 0.5 = 0.5 / (0.5 + 1 * (1 - 0.5))
        assert_abs_diff_eq!(0.5 / (0.5 + 0.5), 0.5);
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(gm1_sigma(&exp(1.0), 1.0), Err(Error::Unstable { .. })));
        assert!(matches!(mm1_pi(2.0, 1.0, 5), Err(Error::Unstable { .. })));
        assert!(matches!(
            mg1_kernel(&exp(1.0), 1.5, None),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn cramming_root_approaches_one() {
        let mut prev = 0.0;
        for eps in [0.1, 0.01, 0.001] {
            let d = Distribution::cramming(eps, eps, 2.0).unwrap();
            let s = gm1_sigma(&d, 1.0).unwrap().sigma_star;
            assert!(s > prev);
            prev = s;
        }
        assert!(prev > 0.95);
    }

    #[test]
    fn heavy_load_root() {
        let sol = gm1_sigma(&exp(0.999), 1.0).unwrap();
        assert_abs_diff_eq!(sol.sigma_star, 0.999, epsilon = 1e-9);
    }

    #[test]
    fn geometric_head_and_tail() {
        let sol = Gm1Solution {
            sigma_star: 0.5,
            residual: 0.0,
            iterations: 0,
        };
        let pi = gm1_pi(&sol, 3);
        assert_eq!(pi.pi, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(pi.tail_mass, 0.0625);
        let tiny = gm1_pi(
            &Gm1Solution {
                sigma_star: 1e-300,
                ..sol
            },
            3,
        );
        assert_abs_diff_eq!(tiny.pi[0], 1.0);
    }

    #[test]
    fn kernel_values() {
        let k = mg1_kernel(&exp(1.0), 0.5, None).unwrap();
        assert_abs_diff_eq!(k.k0(), 2.0 / 3.0, epsilon = 1e-15);
        let det = mg1_kernel(&Distribution::deterministic(1.0).unwrap(), 0.5, None).unwrap();
        let mut fact = 1.0;
        for q in 0..10 {
            if q > 0 {
                fact *= q as f64;
            }
            let expected = (-0.5f64).exp() * 0.5f64.powi(q as i32) / fact;
            assert_abs_diff_eq!(det.k[q], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn kernel_mean_is_rho() {
        let lambda = 0.5;
        let services = [
            Distribution::deterministic(1.0).unwrap(),
            exp(1.0),
            Distribution::erlang(2, 2.0).unwrap(),
            Distribution::erlang(7, 7.0).unwrap(),
            Distribution::balanced_hyper_exponential(1.0, 4.0).unwrap(),
            Distribution::cramming(0.1, 0.1, 1.0).unwrap(),
            Distribution::cramming(0.001, 0.001, 1.0).unwrap(),
        ];
        for s in services {
            let k = mg1_kernel(&s, lambda, None).unwrap();
            assert!(k.deficit < KERNEL_DEFICIT_TOL, "{}", s.label());
            assert!(k.k.iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(k.mean(), 0.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn mg1_matches_mm1() {
        let k = mg1_kernel(&exp(1.0), 0.5, None).unwrap();
        let pi = mg1_pi(&k, Some(60)).unwrap();
        for q in 0..=60 {
            assert_abs_diff_eq!(pi.pi[q], 0.5 * 0.5f64.powi(q as i32), epsilon = 1e-10);
        }
    }

    #[test]
    fn mg1_first_two_terms() {
        let services = [
            Distribution::deterministic(1.0).unwrap(),
            Distribution::erlang(3, 3.0).unwrap(),
            Distribution::cramming(0.01, 0.01, 1.0).unwrap(),
        ];
        for s in services {
            let k = mg1_kernel(&s, 0.5, None).unwrap();
            let pi = mg1_pi(&k, None).unwrap();
            assert_eq!(pi.pi[0], 0.5);
            assert_abs_diff_eq!(pi.pi[0] + pi.pi[1], 0.5 / k.k0(), epsilon = 1e-10);
            assert!(pi.tail_mass < AUTO_TAIL_TOL);
        }
    }

    #[test]
    fn degenerate_kernel() {
        let k = Mg1Kernel {
            k: vec![1e-13, 0.5, 0.5 - 1e-13],
            rho: 0.5,
            deficit: 0.0,
        };
        assert!(matches!(mg1_pi(&k, None), Err(Error::NumericDegeneracy(_))));
    }

    #[test]
    fn solve_selects_route() {
        let (_, rec) = solve(&Distribution::deterministic(2.0).unwrap(), &exp(1.0)).unwrap();
        assert_eq!(rec.model, "gi_m_1");
        let (_, rec) = solve(&exp(0.5), &Distribution::deterministic(1.0).unwrap()).unwrap();
        assert_eq!(rec.model, "m_gi_1");
        assert!(solve(
            &Distribution::deterministic(2.0).unwrap(),
            &Distribution::deterministic(1.0).unwrap()
        )
        .is_err());
    }
}
