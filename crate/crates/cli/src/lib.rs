//! Config-driven experiment runner.
//!
//! A run reads one JSON document describing an [`ExperimentConfig`],
//! validates it before any compute, executes the experiment and writes
//! `<out>/<kind>.csv` (plus any auxiliary tables) and `<out>/manifest.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use queuecap::analytic::solve;
use queuecap::capacity::{
    all_passed, fig2_curve, gm1_extremal_sweep, mg1_extremal_sweep, multi_user_report,
    poisson_convergence, single_user_capacity, Assertion, ConvergenceConfig, LambdaGrid,
};
use queuecap::channel::{ChannelSpec, StepProfile, DEFAULT_TOL};
use queuecap::dist::Distribution;
use queuecap::qsim::{check_stability, simulate_renewal_queue};
use queuecap::report::{self, Table};
use queuecap::rng::{derive_seed, seeded};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "QUEUECAP_SEED";
pub const DEFAULT_OUT_DIR: &str = "queuecap-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{} assertion(s) failed: {}", .0.len(), .0.join(", "))]
    AssertionFailed(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
            CliError::AssertionFailed(_) => 3,
        }
    }
}

impl From<queuecap::Error> for CliError {
    fn from(e: queuecap::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

fn default_tolerance() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    /// Blahut-Arimoto duality-gap tolerance in bits.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    SingleCapacity {
        arrival: Distribution,
        service: Distribution,
        channel: ChannelSpec,
    },
    Fig2 {
        mu: Vec<f64>,
        lambda_grid: LambdaGrid,
        channel: ChannelSpec,
    },
    Gm1Sweep {
        lambda: f64,
        mu: f64,
        channel: ChannelSpec,
        families: Vec<Distribution>,
    },
    Mg1Sweep {
        lambda: f64,
        mu: f64,
        channel: ChannelSpec,
        families: Vec<Distribution>,
    },
    MultiUser {
        users: Vec<Distribution>,
        service: Distribution,
        channel: ChannelSpec,
        horizon: f64,
    },
    PoissonConvergence {
        channel: ChannelSpec,
        #[serde(flatten)]
        settings: ConvergenceConfig,
    },
    SimulateOnly {
        arrival: Distribution,
        service: Distribution,
        arrivals: usize,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::SingleCapacity { .. } => "single_capacity",
            Experiment::Fig2 { .. } => "fig2",
            Experiment::Gm1Sweep { .. } => "gm1_sweep",
            Experiment::Mg1Sweep { .. } => "mg1_sweep",
            Experiment::MultiUser { .. } => "multi_user",
            Experiment::PoissonConvergence { .. } => "poisson_convergence",
            Experiment::SimulateOnly { .. } => "simulate_only",
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

fn step_profile(ch: &ChannelSpec) -> Result<StepProfile, CliError> {
    ch.step_profile()?
        .ok_or_else(|| invalid("this experiment needs a step channel (bsc_step, symmetric_step, erasure_step)"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Checks rates, stability and channel shapes without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        positive("tolerance", self.tolerance)?;
        match &self.experiment {
            Experiment::SingleCapacity {
                arrival,
                service,
                channel,
            } => {
                check_stability(arrival.rate(), service)?;
                let exp = |d: &Distribution| matches!(d, Distribution::Exponential { .. });
                if !(exp(service) || exp(arrival)) {
                    return Err(invalid("single_capacity needs exponential arrivals or exponential service"));
                }
                channel.build()?;
            }
            Experiment::Fig2 {
                mu,
                lambda_grid,
                channel,
            } => {
                if mu.is_empty() {
                    return Err(invalid("mu list is empty"));
                }
                step_profile(channel)?;
                for &m in mu {
                    positive("mu", m)?;
                    if let LambdaGrid::Shared { lambdas } = lambda_grid {
                        for &l in lambdas {
                            positive("lambda", l)?;
                            if l >= m {
                                return Err(CliError::from(queuecap::Error::Unstable { rho: l / m }));
                            }
                        }
                    }
                }
                match lambda_grid {
                    LambdaGrid::PerMu { points: 0 } => return Err(invalid("lambda grid has no points")),
                    LambdaGrid::Shared { lambdas } if lambdas.is_empty() => {
                        return Err(invalid("lambda grid has no points"))
                    }
                    _ => {}
                }
            }
            Experiment::Gm1Sweep {
                lambda,
                mu,
                channel,
                families,
            }
            | Experiment::Mg1Sweep {
                lambda,
                mu,
                channel,
                families,
            } => {
                positive("lambda", *lambda)?;
                positive("mu", *mu)?;
                if lambda >= mu {
                    return Err(CliError::from(queuecap::Error::Unstable { rho: lambda / mu }));
                }
                if families.is_empty() {
                    return Err(invalid("families list is empty"));
                }
                step_profile(channel)?;
            }
            Experiment::MultiUser {
                users,
                service,
                channel,
                horizon,
            } => {
                if users.is_empty() {
                    return Err(invalid("users list is empty"));
                }
                positive("horizon", *horizon)?;
                check_stability(users.iter().map(Distribution::rate).sum(), service)?;
                channel.build()?;
            }
            Experiment::PoissonConvergence { channel, settings } => {
                positive("lambda", settings.lambda)?;
                positive("window_length", settings.window_length)?;
                check_stability(settings.lambda, &settings.service)?;
                if let Some(cmp) = &settings.service_comparison {
                    check_stability(settings.lambda, &cmp.better)?;
                    check_stability(settings.lambda, &cmp.worse)?;
                }
                if settings.k_list.is_empty() || settings.k_list.contains(&0) {
                    return Err(invalid("k_list must be non-empty with K >= 1"));
                }
                if settings.arrivals_per_row == 0 {
                    return Err(invalid("arrivals_per_row must be positive"));
                }
                channel.build()?;
            }
            Experiment::SimulateOnly {
                arrival,
                service,
                arrivals,
            } => {
                check_stability(arrival.rate(), service)?;
                if *arrivals == 0 {
                    return Err(invalid("arrivals must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Env,
    Default,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// Value of the seed environment variable, if set.
    pub env_seed: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: String,
    pub config_sha256: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub tolerance: f64,
    pub jobs: usize,
    pub wall_time_secs: f64,
    pub outputs: Vec<String>,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn into_result(self) -> Result<Self, CliError> {
        if self.manifest.passed {
            Ok(self)
        } else {
            Err(CliError::AssertionFailed(
                self.manifest
                    .assertions
                    .iter()
                    .filter(|a| !a.passed)
                    .map(|a| a.name.clone())
                    .collect(),
            ))
        }
    }
}

fn resolve_seed(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(u64, SeedSource), CliError> {
    if let Some(s) = opts.seed {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(s) = cfg.seed {
        return Ok((s, SeedSource::Config));
    }
    if let Some(raw) = &opts.env_seed {
        let s = raw
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{SEED_ENV} is not an unsigned integer: {raw:?}")))?;
        return Ok((s, SeedSource::Env));
    }
    Ok((0, SeedSource::Default))
}

struct Artifacts {
    tables: Vec<(String, Table)>,
    assertions: Vec<Assertion>,
}

fn execute(exp: &Experiment, seed: u64, tol: f64) -> Result<Artifacts, CliError> {
    let kind = exp.kind().to_string();
    let single = |t: Table, a: Vec<Assertion>| Artifacts {
        tables: vec![(kind.clone(), t)],
        assertions: a,
    };
    Ok(match exp {
        Experiment::SingleCapacity {
            arrival,
            service,
            channel,
        } => {
            let (pi, _) = solve(arrival, service)?;
            let c = single_user_capacity(&pi, &channel.build()?, arrival.rate(), tol)?;
            let a = vec![Assertion::new(
                "blahut_arimoto_converged",
                c.converged,
                format!("gap {:e} after {} iterations", c.gap_bound, c.iterations),
            )];
            single(report::single_capacity_table(&c), a)
        }
        Experiment::Fig2 {
            mu,
            lambda_grid,
            channel,
        } => {
            let t = fig2_curve(mu, lambda_grid, &step_profile(channel)?, tol)?;
            single(report::fig2_table(&t), t.assertions)
        }
        Experiment::Gm1Sweep {
            lambda,
            mu,
            channel,
            families,
        } => {
            let r = gm1_extremal_sweep(*lambda, *mu, &step_profile(channel)?, families, tol)?;
            single(report::sweep_table(&r), r.assertions)
        }
        Experiment::Mg1Sweep {
            lambda,
            mu,
            channel,
            families,
        } => {
            let r = mg1_extremal_sweep(*lambda, *mu, &step_profile(channel)?, families, tol)?;
            single(report::sweep_table(&r), r.assertions)
        }
        Experiment::MultiUser {
            users,
            service,
            channel,
            horizon,
        } => {
            let mut rng = seeded(seed);
            let r = multi_user_report(users, service, &channel.build()?, *horizon, tol, &mut rng)?;
            single(report::multi_user_table(&r), r.assertions)
        }
        Experiment::PoissonConvergence { channel, settings } => {
            let r = poisson_convergence(settings, &channel.build()?, seed)?;
            let mut tables = vec![(kind.clone(), report::convergence_table(&r))];
            if !r.comparison.is_empty() {
                tables.push(("service_comparison".into(), report::service_comparison_table(&r)));
            }
            Artifacts {
                tables,
                assertions: r.assertions,
            }
        }
        Experiment::SimulateOnly {
            arrival,
            service,
            arrivals,
        } => {
            let mut rng = seeded(derive_seed(seed, 0));
            let trace = simulate_renewal_queue(arrival, service, *arrivals, &mut rng)?;
            let mut t = Table::new(vec!["arrival_epoch", "user", "q_seen", "service"]);
            for r in &trace.records {
                t.push(vec![
                    format!("{}", r.arrival_epoch),
                    r.user.to_string(),
                    r.q_seen.to_string(),
                    format!("{}", r.service),
                ]);
            }
            single(t, Vec::new())
        }
    })
}

/// Parse, validate, execute and write artifacts. Assertion failures are
/// recorded in the manifest and returned as `Ok`; see
/// [`RunOutcome::into_result`].
pub fn run(config_text: &str, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_json(config_text)?;
    cfg.validate()?;
    let (seed, seed_source) = resolve_seed(&cfg, opts)?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let jobs = opts.jobs.unwrap_or_else(rayon::current_num_threads);

    let artifacts = execute(&cfg.experiment, seed, cfg.tolerance)?;

    fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();
    for (name, table) in &artifacts.tables {
        let file = format!("{name}.csv");
        table
            .write_csv(BufWriter::new(File::create(out_dir.join(&file))?))
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        outputs.push(file);
    }
    let manifest = Manifest {
        tool: "queuecap",
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.experiment.kind().to_string(),
        config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
        seed,
        seed_source,
        tolerance: cfg.tolerance,
        jobs,
        wall_time_secs: start.elapsed().as_secs_f64(),
        outputs,
        passed: all_passed(&artifacts.assertions),
        assertions: artifacts.assertions,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(RunOutcome { out_dir, manifest })
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), CliError> {
    let f = BufWriter::new(File::create(dir.join("manifest.json"))?);
    report::write_json(f, m).map_err(|e| CliError::Numerical(e.to_string()))
}
