//! Experiments assembled from the analytic, simulation and channel layers.
//!
//! Each experiment returns its table together with a list of named
//! [`Assertion`]s so that callers (tests, the CLI manifest) can report
//! pass/fail per property without re-deriving the checks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{gm1_pi, gm1_sigma, mg1_kernel, mg1_pi, mm1_pi};
use crate::channel::{
    blahut_arimoto, capacity_mixture, step_capacity_closed_form, BaOptions, CapacityResult,
    QChannel, StepProfile,
};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::pointproc::{gen_superposition, sparsity_diagnostics, SparsityDiagnostics};
use crate::qsim::{
    check_stability, empirical_pi, empirical_pi_with_errors, simulate_fcfs, tv_distance,
    QueueTrace, StationaryDist,
};
use crate::rng::{derive_seed, seeded};
use crate::stats::{batch_means, DEFAULT_BATCHES};

/// Width of statistical acceptance bands, in standard errors.
pub const STAT_SIGMAS: f64 = 3.0;
/// Tolerance on family means in the extremal sweeps.
pub const MEAN_TOL: f64 = 1e-9;
/// Allowed capacity spread in the `b = 0` M/GI/1 sweep.
pub const CONSTANCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(assertions: &[Assertion]) -> bool {
    assertions.iter().all(|a| a.passed)
}

/// Capacity in bits per symbol and bits per time of a single-user queue.
pub fn single_user_capacity(
    pi: &StationaryDist,
    ch: &QChannel,
    lambda: f64,
    tol: f64,
) -> Result<CapacityResult> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("arrival rate must be > 0, got {lambda}")));
    }
    Ok(capacity_mixture(pi, ch, tol)?.at_rate(lambda))
}

/// `max_q sup_P I(P, W_q)`.
pub fn c_max(ch: &QChannel) -> f64 {
    ch.slots()
        .map(|m| blahut_arimoto(m, BaOptions::default()).bits)
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// M/M/1 workload curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub mu: f64,
    pub lambda: f64,
    pub rho: f64,
    pub bits_per_symbol: f64,
    pub bits_per_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaGrid {
    /// The same arrival rates for every service rate.
    Shared { lambdas: Vec<f64> },
    /// `points` equally spaced rates strictly inside `(0, mu)`.
    PerMu { points: usize },
}

impl LambdaGrid {
    fn for_mu(&self, mu: f64) -> Vec<f64> {
        match self {
            LambdaGrid::Shared { lambdas } => lambdas.clone(),
            LambdaGrid::PerMu { points } => (1..=*points)
                .map(|i| mu * i as f64 / (*points + 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Table {
    pub rows: Vec<Fig2Row>,
    pub skipped: Vec<(f64, f64)>,
    pub assertions: Vec<Assertion>,
}

/// Per-time capacity of M/M/1 queues over a grid of arrival rates.
pub fn fig2_curve(mu_list: &[f64], grid: &LambdaGrid, profile: &StepProfile, tol: f64) -> Result<Fig2Table> {
    let ch = profile.to_qchannel()?;
    let cmax = c_max(&ch);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut assertions = Vec::new();
    for &mu in mu_list {
        let mut curve = Vec::new();
        for lambda in grid.for_mu(mu) {
            if !(lambda > 0.0 && lambda < mu) {
                log::warn!("skipping lambda = {lambda} for mu = {mu}: rho >= 1");
                skipped.push((mu, lambda));
                continue;
            }
            // Levels beyond b share the terminal matrix, so pi up to b suffices.
            let pi = mm1_pi(lambda, mu, profile.b)?;
            let c = single_user_capacity(&pi, &ch, lambda, tol)?;
            curve.push(Fig2Row {
                mu,
                lambda,
                rho: lambda / mu,
                bits_per_symbol: c.bits_per_symbol,
                bits_per_time: c.bits_per_time,
            });
        }
        if curve.len() >= 3 {
            let best = curve
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.bits_per_time.total_cmp(&b.1.bits_per_time))
                .map(|(i, _)| i)
                .expect("non-empty");
            let interior = best > 0 && best + 1 < curve.len();
            assertions.push(Assertion::new(
                format!("fig2_interior_maximizer_mu_{mu}"),
                interior,
                format!(
                    "argmax lambda = {} (index {best} of {})",
                    curve[best].lambda,
                    curve.len()
                ),
            ));
            let first = &curve[0];
            let vanishing = first.bits_per_time <= first.lambda * cmax + 1e-12
                && first.bits_per_time < curve[best].bits_per_time;
            assertions.push(Assertion::new(
                format!("fig2_vanishes_at_zero_mu_{mu}"),
                vanishing,
                format!(
                    "C({}) = {} <= lambda * c_max = {}",
                    first.lambda,
                    first.bits_per_time,
                    first.lambda * cmax
                ),
            ));
        }
        let bounded = curve
            .iter()
            .all(|r| r.bits_per_time <= r.lambda * cmax + 1e-12);
        assertions.push(Assertion::new(
            format!("fig2_bounded_by_lambda_cmax_mu_{mu}"),
            bounded,
            format!("c_max = {cmax}"),
        ));
        rows.extend(curve);
    }
    Ok(Fig2Table {
        rows,
        skipped,
        assertions,
    })
}

// ---------------------------------------------------------------------------
// Extremal sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub family: Distribution,
    /// GI/M/1 only.
    pub sigma_star: Option<f64>,
    /// M/GI/1 only.
    pub k0: Option<f64>,
    /// M/GI/1 only: `(1 - rho) / k_0`.
    pub pi0_plus_pi1: Option<f64>,
    pub pi0: f64,
    pub bits_per_symbol: f64,
    pub bits_per_time: f64,
    /// Capacity recomputed through the Blahut-Arimoto mixture path.
    pub mixture_bits_per_symbol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: String,
    pub lambda: f64,
    pub mu: f64,
    pub b: usize,
    pub c_good: f64,
    pub c_bad: f64,
    pub rows: Vec<SweepRow>,
    pub assertions: Vec<Assertion>,
}

fn check_mean(d: &Distribution, expected: f64) -> Result<()> {
    if (d.mean() - expected).abs() > MEAN_TOL {
        return Err(Error::MeanMismatch {
            label: d.label(),
            expected,
            actual: d.mean(),
        });
    }
    Ok(())
}

/// Deterministic row attains the maximum; cramming rows, ordered by
/// decreasing epsilon, strictly decrease.
fn extremal_assertions(prefix: &str, rows: &[SweepRow]) -> Vec<Assertion> {
    let mut out = Vec::new();
    if let Some(det) = rows.iter().find(|r| r.family.is_deterministic()) {
        let best = rows
            .iter()
            .map(|r| r.bits_per_symbol)
            .fold(f64::NEG_INFINITY, f64::max);
        let others_below = rows
            .iter()
            .filter(|r| !r.family.is_deterministic())
            .all(|r| r.bits_per_symbol < det.bits_per_symbol);
        out.push(Assertion::new(
            format!("{prefix}_deterministic_maximal"),
            det.bits_per_symbol >= best && others_below,
            format!("C(det) = {}, max = {best}", det.bits_per_symbol),
        ));
    }
    let mut cram: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| match r.family {
            Distribution::Cramming { epsilon, delta, .. } => Some((epsilon, delta, r.bits_per_symbol)),
            _ => None,
        })
        .collect();
    if cram.len() >= 2 {
        cram.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
        let decreasing = cram.windows(2).all(|w| w[1].2 < w[0].2);
        out.push(Assertion::new(
            format!("{prefix}_cramming_decreasing"),
            decreasing,
            format!(
                "schedule capacities {:?}",
                cram.iter().map(|c| c.2).collect::<Vec<_>>()
            ),
        ));
    }
    out
}

/// GI/M/1 capacities under a step profile across inter-arrival families of
/// equal rate.
pub fn gm1_extremal_sweep(
    lambda: f64,
    mu: f64,
    profile: &StepProfile,
    families: &[Distribution],
    tol: f64,
) -> Result<SweepReport> {
    if !(lambda < mu) {
        return Err(Error::Unstable { rho: lambda / mu });
    }
    for f in families {
        check_mean(f, 1.0 / lambda)?;
    }
    let ch = profile.to_qchannel()?;
    let (c_good, c_bad) = profile.level_capacities();
    let rows = families
        .par_iter()
        .map(|f| {
            let sol = gm1_sigma(f, mu)?;
            let c = step_capacity_closed_form(sol.sigma_star, profile.b, c_good, c_bad)?;
            let pi = gm1_pi(&sol, profile.b);
            let mix = capacity_mixture(&pi, &ch, tol)?;
            Ok(SweepRow {
                label: f.label(),
                family: f.clone(),
                sigma_star: Some(sol.sigma_star),
                k0: None,
                pi0_plus_pi1: None,
                pi0: pi.pi[0],
                bits_per_symbol: c,
                bits_per_time: lambda * c,
                mixture_bits_per_symbol: mix.bits_per_symbol,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut assertions = extremal_assertions("gm1", &rows);
    let max_dev = rows
        .iter()
        .map(|r| (r.bits_per_symbol - r.mixture_bits_per_symbol).abs())
        .fold(0.0, f64::max);
    assertions.push(Assertion::new(
        "gm1_mixture_matches_closed_form",
        max_dev <= 10.0 * tol,
        format!("max |closed form - mixture| = {max_dev:e}"),
    ));
    Ok(SweepReport {
        kind: "gm1_sweep".into(),
        lambda,
        mu,
        b: profile.b,
        c_good,
        c_bad,
        rows,
        assertions,
    })
}

/// M/GI/1 capacities under a step profile across service families of
/// equal rate.
pub fn mg1_extremal_sweep(
    lambda: f64,
    mu: f64,
    profile: &StepProfile,
    families: &[Distribution],
    tol: f64,
) -> Result<SweepReport> {
    if !(lambda < mu) {
        return Err(Error::Unstable { rho: lambda / mu });
    }
    for f in families {
        check_mean(f, 1.0 / mu)?;
    }
    let ch = profile.to_qchannel()?;
    let (c_good, c_bad) = profile.level_capacities();
    let rho = lambda / mu;
    let rows = families
        .par_iter()
        .map(|f| {
            let kernel = mg1_kernel(f, lambda, None)?;
            let pi = mg1_pi(&kernel, Some(profile.b.max(1)))?;
            let c = capacity_mixture(&pi, &ch, tol)?;
            Ok(SweepRow {
                label: f.label(),
                family: f.clone(),
                sigma_star: None,
                k0: Some(kernel.k0()),
                pi0_plus_pi1: Some((1.0 - rho) / kernel.k0()),
                pi0: pi.pi[0],
                bits_per_symbol: c.bits_per_symbol,
                bits_per_time: lambda * c.bits_per_symbol,
                mixture_bits_per_symbol: c.bits_per_symbol,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut assertions = Vec::new();
    let pi0_exact = rows.iter().all(|r| (r.pi0 - (1.0 - rho)).abs() < 1e-12);
    assertions.push(Assertion::new(
        "mg1_pi0_is_one_minus_rho",
        pi0_exact,
        format!("1 - rho = {}", 1.0 - rho),
    ));
    match profile.b {
        0 => {
            let hi = rows.iter().map(|r| r.bits_per_symbol).fold(f64::NEG_INFINITY, f64::max);
            let lo = rows.iter().map(|r| r.bits_per_symbol).fold(f64::INFINITY, f64::min);
            let expected = c_bad + (1.0 - rho) * (c_good - c_bad);
            assertions.push(Assertion::new(
                "mg1_b0_constant",
                hi - lo < CONSTANCY_TOL && (hi - expected).abs() < CONSTANCY_TOL,
                format!("spread {:e}, expected {expected}", hi - lo),
            ));
        }
        1 => assertions.extend(extremal_assertions("mg1_b1", &rows)),
        _ => {}
    }
    Ok(SweepReport {
        kind: "mg1_sweep".into(),
        lambda,
        mu,
        b: profile.b,
        c_good,
        c_bad,
        rows,
        assertions,
    })
}

// ---------------------------------------------------------------------------
// Multi-user superposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCapacity {
    pub user: u32,
    /// Nominal rate `1 / E[A_k]`.
    pub lambda: f64,
    pub samples: usize,
    pub c_ind_sym: f64,
    pub c_ind_sym_se: f64,
    pub c_ind_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiUserReport {
    pub per_user: Vec<UserCapacity>,
    pub weights: Vec<f64>,
    pub c_sum_sym: f64,
    pub c_sum_sym_se: f64,
    pub c_sum_time: f64,
    /// `C_sum_sym - sum_k w_k C_ind_sym`
    pub identity_gap_sym: f64,
    pub identity_se_sym: f64,
    /// `C_sum_time - sum_k C_ind_time`
    pub identity_gap_time: f64,
    pub identity_se_time: f64,
    pub pooled_pi: StationaryDist,
    pub input_dist: Vec<f64>,
    pub assertions: Vec<Assertion>,
}

/// Simulate a superposition of marked renewal streams through one FCFS
/// queue.
pub fn simulate_superposition(
    components: &[Distribution],
    service: &Distribution,
    horizon: f64,
    seed: u64,
) -> Result<QueueTrace> {
    let total_rate: f64 = components.iter().map(Distribution::rate).sum();
    check_stability(total_rate, service)?;
    let stream = gen_superposition(components, horizon, derive_seed(seed, 0xA77))?;
    let mut marks = seeded(derive_seed(seed, 0x5E7));
    simulate_fcfs(&stream.with_service(service, &mut marks))
}

/// Per-arrival information `I(P_X, W_q)` under a fixed input law.
fn info_per_level(ch: &QChannel, p_x: &[f64]) -> Result<impl Fn(u32) -> f64> {
    let info = ch.level_information(p_x)?;
    Ok(move |q: u32| *info.get(q as usize).unwrap_or_else(|| info.last().expect("terminal")))
}

/// Individual and sum capacities of a `K`-user superposition.
pub fn multi_user_report<R: Rng + ?Sized>(
    components: &[Distribution],
    service: &Distribution,
    ch: &QChannel,
    horizon: f64,
    tol: f64,
    rng: &mut R,
) -> Result<MultiUserReport> {
    if components.is_empty() {
        return Err(Error::Domain("need at least one user".into()));
    }
    for c in components {
        if !c.is_continuous() {
            log::warn!("{} has atoms; superposition results assume continuous components", c.label());
        }
    }
    let seed: u64 = rng.random();
    let trace = simulate_superposition(components, service, horizon, seed)?;

    let pooled = empirical_pi(&trace, None)?;
    let sum = capacity_mixture(&pooled, ch, tol)?;
    let f = info_per_level(ch, &sum.input_dist)?;
    let sum_se = batch_means(
        &trace.q_values(None).into_iter().map(&f).collect::<Vec<_>>(),
        DEFAULT_BATCHES,
    )
    .std_error;

    let rates: Vec<f64> = components.iter().map(Distribution::rate).collect();
    let total_rate: f64 = rates.iter().sum();
    let weights: Vec<f64> = rates.iter().map(|r| r / total_rate).collect();

    let per_user = (0..components.len())
        .map(|k| {
            let user = k as u32;
            let pi = empirical_pi(&trace, Some(user))?;
            let c = capacity_mixture(&pi, ch, tol)?;
            let qs = trace.q_values(Some(user));
            let se = batch_means(&qs.iter().map(|&q| f(q)).collect::<Vec<_>>(), DEFAULT_BATCHES).std_error;
            Ok(UserCapacity {
                user,
                lambda: rates[k],
                samples: qs.len(),
                c_ind_sym: c.bits_per_symbol,
                c_ind_sym_se: se,
                c_ind_time: rates[k] * c.bits_per_symbol,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let weighted: f64 = per_user.iter().zip(&weights).map(|(u, w)| w * u.c_ind_sym).sum();
    let identity_gap_sym = sum.bits_per_symbol - weighted;
    let identity_se_sym = (sum_se.powi(2)
        + per_user
            .iter()
            .zip(&weights)
            .map(|(u, w)| (w * u.c_ind_sym_se).powi(2))
            .sum::<f64>())
    .sqrt();
    let c_sum_time = total_rate * sum.bits_per_symbol;
    let identity_gap_time = c_sum_time - per_user.iter().map(|u| u.c_ind_time).sum::<f64>();
    let identity_se_time = ((total_rate * sum_se).powi(2)
        + per_user
            .iter()
            .map(|u| (u.lambda * u.c_ind_sym_se).powi(2))
            .sum::<f64>())
    .sqrt();

    let assertions = vec![
        Assertion::new(
            "sum_is_weighted_individual_sym",
            identity_gap_sym.abs() <= STAT_SIGMAS * identity_se_sym + 1e-12,
            format!("gap {identity_gap_sym:e}, band {:e}", STAT_SIGMAS * identity_se_sym),
        ),
        Assertion::new(
            "sum_is_additive_time",
            identity_gap_time.abs() <= STAT_SIGMAS * identity_se_time + 1e-12,
            format!("gap {identity_gap_time:e}, band {:e}", STAT_SIGMAS * identity_se_time),
        ),
    ];
    Ok(MultiUserReport {
        per_user,
        weights,
        c_sum_sym: sum.bits_per_symbol,
        c_sum_sym_se: sum_se,
        c_sum_time,
        identity_gap_sym,
        identity_se_sym,
        identity_gap_time,
        identity_se_time,
        pooled_pi: pooled,
        input_dist: sum.input_dist,
        assertions,
    })
}

// ---------------------------------------------------------------------------
// Poisson approximation of sparse superpositions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Component family; rescaled to rate `lambda / K` in each row.
    pub component: Distribution,
    pub k_list: Vec<usize>,
    pub lambda: f64,
    pub service: Distribution,
    /// Window length `|B|` for the sparsity diagnostics.
    pub window_length: f64,
    /// Superposed arrivals simulated per row.
    pub arrivals_per_row: usize,
    pub sparsity_replications: usize,
    /// Optional bound on the last row's queue TV.
    pub final_tv_threshold: Option<f64>,
    /// Service laws to compare at the largest `K`.
    pub service_comparison: Option<ServiceComparison>,
}

/// A pair of equal-mean service laws expected to order as `better > worse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceComparison {
    pub better: Distribution,
    pub worse: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub arrivals: usize,
    pub tv_queue: f64,
    pub tv_std_error: f64,
    pub c_sum_sym: f64,
    pub c_sum_sym_se: f64,
    pub cap_gap_sym: f64,
    pub cap_gap_time: f64,
    pub g1: f64,
    pub g1_std_error: f64,
    pub g2: f64,
    pub b2_g2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceComparisonRow {
    pub label: String,
    pub k: usize,
    pub c_sim_sym: f64,
    pub c_sim_sym_se: f64,
    pub c_analytic_sym: f64,
    pub tv_queue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub baseline_sym: f64,
    pub baseline_time: f64,
    pub c_max: f64,
    pub comparison: Vec<ServiceComparisonRow>,
    pub assertions: Vec<Assertion>,
}

struct RowEstimate {
    tv: f64,
    tv_se: f64,
    cap: f64,
    cap_se: f64,
}

/// Simulate `k` i.i.d. components of total rate `lambda` and compare the
/// pooled queue law with the Poisson-input reference.
fn superposition_row(
    cfg: &ConvergenceConfig,
    k: usize,
    service: &Distribution,
    ch: &QChannel,
    reference: &StationaryDist,
    seed: u64,
) -> Result<RowEstimate> {
    let (lambda, arrivals) = (cfg.lambda, cfg.arrivals_per_row);
    let comp = cfg.component.with_rate(lambda / k as f64)?;
    let components = vec![comp; k];
    let n = arrivals as f64;
    let horizon = n / lambda * (1.0 + 6.0 / n.sqrt());
    let mut stream = gen_superposition(&components, horizon, derive_seed(seed, 1))?;
    if stream.len() < arrivals {
        return Err(Error::InsufficientData {
            needed: arrivals,
            got: stream.len(),
        });
    }
    stream.events.truncate(arrivals);
    let mut marks = seeded(derive_seed(seed, 2));
    let trace = simulate_fcfs(&stream.with_service(service, &mut marks))?;

    let emp = empirical_pi_with_errors(&trace, None)?;
    let tv = tv_distance(&emp.dist, reference);
    // TV is locally linear in the empirical law: sum_q s_q p(q) / 2 with
    // s_q = sign(p(q) - ref(q)), so its error is that of a sample mean.
    let signs: Vec<f64> = (0..=emp.dist.q_max)
        .map(|q| (emp.dist.prob(q) - reference.prob(q)).signum())
        .collect();
    let qs = trace.q_values(None);
    let tv_se = 0.5
        * batch_means(
            &qs.iter().map(|&q| signs[q as usize]).collect::<Vec<_>>(),
            DEFAULT_BATCHES,
        )
        .std_error;

    let cap = capacity_mixture(&emp.dist, ch, crate::channel::DEFAULT_TOL)?;
    let f = info_per_level(ch, &cap.input_dist)?;
    let cap_se = batch_means(&qs.iter().map(|&q| f(q)).collect::<Vec<_>>(), DEFAULT_BATCHES).std_error;
    Ok(RowEstimate {
        tv,
        tv_se,
        cap: cap.bits_per_symbol,
        cap_se,
    })
}

/// Nonincreasing up to noise: every increase must stay inside a
/// `STAT_SIGMAS` band and at most one increase is tolerated.
fn nonincreasing_within_band(values: &[(f64, f64)]) -> (bool, String) {
    let mut inversions = 0;
    let mut outside = 0;
    for w in values.windows(2) {
        let (a, sa) = w[0];
        let (b, sb) = w[1];
        if b > a {
            inversions += 1;
            if b - a > STAT_SIGMAS * (sa * sa + sb * sb).sqrt() {
                outside += 1;
            }
        }
    }
    (
        outside == 0 && inversions <= 1,
        format!("{inversions} inversion(s), {outside} outside the band"),
    )
}

pub fn poisson_convergence(cfg: &ConvergenceConfig, ch: &QChannel, seed: u64) -> Result<ConvergenceReport> {
    if cfg.k_list.is_empty() || cfg.k_list.contains(&0) {
        return Err(Error::Domain("k_list must be non-empty with K >= 1".into()));
    }
    check_stability(cfg.lambda, &cfg.service)?;
    let tol = crate::channel::DEFAULT_TOL;

    let kernel = mg1_kernel(&cfg.service, cfg.lambda, None)?;
    let reference = mg1_pi(&kernel, None)?;
    let baseline = capacity_mixture(&reference, ch, tol)?;
    let cmax = c_max(ch);

    let rows = cfg
        .k_list
        .par_iter()
        .map(|&k| {
            let row_seed = derive_seed(seed, k as u64);
            let est = superposition_row(cfg, k, &cfg.service, ch, &reference, row_seed)?;
            let comp = cfg.component.with_rate(cfg.lambda / k as f64)?;
            let mut sp_rng = seeded(derive_seed(row_seed, 3));
            let sp: SparsityDiagnostics = sparsity_diagnostics(
                &comp,
                k,
                cfg.window_length,
                cfg.sparsity_replications,
                &mut sp_rng,
            )?;
            let gap = (est.cap - baseline.bits_per_symbol).abs();
            Ok(ConvergenceRow {
                k,
                arrivals: cfg.arrivals_per_row,
                tv_queue: est.tv,
                tv_std_error: est.tv_se,
                c_sum_sym: est.cap,
                c_sum_sym_se: est.cap_se,
                cap_gap_sym: gap,
                cap_gap_time: cfg.lambda * gap,
                g1: sp.g1,
                g1_std_error: sp.g1_std_error,
                g2: sp.g2,
                b2_g2: sp.b2_g2(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut assertions = Vec::new();
    let (ok, detail) =
        nonincreasing_within_band(&rows.iter().map(|r| (r.tv_queue, r.tv_std_error)).collect::<Vec<_>>());
    assertions.push(Assertion::new("tv_nonincreasing", ok, detail));
    let (ok, detail) =
        nonincreasing_within_band(&rows.iter().map(|r| (r.cap_gap_sym, r.c_sum_sym_se)).collect::<Vec<_>>());
    assertions.push(Assertion::new("cap_gap_nonincreasing", ok, detail));
    if let Some(th) = cfg.final_tv_threshold {
        let last = rows.last().expect("non-empty").tv_queue;
        assertions.push(Assertion::new(
            "final_tv_below_threshold",
            last < th,
            format!("tv = {last}, threshold {th}"),
        ));
    }
    let violations: Vec<usize> = rows
        .iter()
        .filter(|r| {
            let sigma = (r.c_sum_sym_se.powi(2) + (2.0 * cmax * r.tv_std_error).powi(2)).sqrt();
            r.cap_gap_sym > 2.0 * cmax * r.tv_queue + STAT_SIGMAS * sigma
        })
        .map(|r| r.k)
        .collect();
    assertions.push(Assertion::new(
        "cap_gap_within_tv_bound",
        violations.is_empty(),
        format!("rows violating gap <= 2 c_max tv + 3 sigma: {violations:?}"),
    ));

    let mut comparison = Vec::new();
    if let Some(cmp) = &cfg.service_comparison {
        let k = *cfg.k_list.iter().max().expect("non-empty");
        for (i, service) in [&cmp.better, &cmp.worse].into_iter().enumerate() {
            check_stability(cfg.lambda, service)?;
            let reference = mg1_pi(&mg1_kernel(service, cfg.lambda, None)?, None)?;
            let analytic = capacity_mixture(&reference, ch, tol)?;
            let est = superposition_row(cfg, k, service, ch, &reference, derive_seed(seed, 0xC0_0000 + i as u64))?;
            comparison.push(ServiceComparisonRow {
                label: service.label(),
                k,
                c_sim_sym: est.cap,
                c_sim_sym_se: est.cap_se,
                c_analytic_sym: analytic.bits_per_symbol,
                tv_queue: est.tv,
            });
        }
        let (b, w) = (&comparison[0], &comparison[1]);
        let band = STAT_SIGMAS * (b.c_sim_sym_se.powi(2) + w.c_sim_sym_se.powi(2)).sqrt();
        assertions.push(Assertion::new(
            "service_ordering_preserved",
            b.c_sim_sym - w.c_sim_sym > band && b.c_analytic_sym > w.c_analytic_sym,
            format!(
                "simulated {} vs {} (band {band:e}); analytic {} vs {}",
                b.c_sim_sym, w.c_sim_sym, b.c_analytic_sym, w.c_analytic_sym
            ),
        ));
    }

    Ok(ConvergenceReport {
        rows,
        baseline_sym: baseline.bits_per_symbol,
        baseline_time: cfg.lambda * baseline.bits_per_symbol,
        c_max: cmax,
        comparison,
        assertions,
    })
}
