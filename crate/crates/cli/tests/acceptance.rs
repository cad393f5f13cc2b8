//! One test per acceptance criterion. Each writes a single
//! `ACCEPTANCE <n> PASS|FAIL: ...` line to stderr, bypassing output capture,
//! and then fails the test if the criterion was not met.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use queuecap::analytic::{gm1_pi, gm1_sigma, mg1_kernel, mg1_pi, mm1_pi};
use queuecap::capacity::{
    fig2_curve, gm1_extremal_sweep, mg1_extremal_sweep, multi_user_report, poisson_convergence,
    single_user_capacity, ConvergenceConfig, LambdaGrid, ServiceComparison,
};
use queuecap::channel::{binary_entropy, blahut_arimoto, BaOptions, ChannelMatrix, StepProfile};
use queuecap::dist::Distribution;
use queuecap::qsim::{empirical_pi, simulate_renewal_queue, tv_distance, StationaryDist};
use queuecap::rng::seeded;
use rand::Rng;

fn verdict(n: u32, passed: bool, elapsed: Duration, detail: String) {
    let line = format!(
        "ACCEPTANCE {n} {}: {detail} ({:.3}s)\n",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {n} failed: {detail}");
}

fn exp(rate: f64) -> Distribution {
    Distribution::exponential(rate).unwrap()
}

fn fig2_profile(b: usize) -> StepProfile {
    StepProfile::bsc(b, 0.1, 0.4).unwrap()
}

#[test]
fn criterion_01_mm1_step_bsc() {
    let t = Instant::now();
    let ch = fig2_profile(0).to_qchannel().unwrap();
    let pi = gm1_pi(&gm1_sigma(&exp(0.5), 1.0).unwrap(), 0);
    let c = single_user_capacity(&pi, &ch, 0.5, 1e-10).unwrap();
    let rho = 0.5;
    let oracle = (1.0 - rho) * (1.0 - binary_entropy(0.1)) + rho * (1.0 - binary_entropy(0.4));
    let el = t.elapsed();
    let ok = (c.bits_per_symbol - oracle).abs() < 1e-6
        && (c.bits_per_time - 0.5 * oracle).abs() < 1e-6
        && (c.bits_per_symbol - 0.28).abs() < 5e-5
        && (c.bits_per_time - 0.14).abs() < 5e-5
        && el < Duration::from_secs(1);
    verdict(
        1,
        ok,
        el,
        format!("{:.6} bits/sym, {:.6} bits/time, oracle {oracle:.8}", c.bits_per_symbol, c.bits_per_time),
    );
}

#[test]
fn criterion_02_fig2_curves() {
    let t = Instant::now();
    let table = fig2_curve(&[0.8, 1.0, 1.2], &LambdaGrid::PerMu { points: 50 }, &fig2_profile(0), 1e-9).unwrap();
    let el = t.elapsed();
    let mut ok = table.rows.len() == 150 && el < Duration::from_secs(5);
    let mut detail = Vec::new();
    for mu in [0.8, 1.0, 1.2] {
        let curve: Vec<_> = table.rows.iter().filter(|r| r.mu == mu).collect();
        let (best, top) = curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.bits_per_time.total_cmp(&b.1.bits_per_time))
            .unwrap();
        let interior = best > 0 && best + 1 < curve.len();
        // Near zero load the curve is bounded by lambda times the best level.
        let vanishes = curve[0].bits_per_time <= curve[0].lambda * (1.0 - binary_entropy(0.1)) + 1e-12
            && curve[0].bits_per_time < 0.1 * top.bits_per_time;
        ok &= curve.len() == 50 && interior && vanishes;
        detail.push(format!("mu {mu}: argmax lambda {:.4}, C(lambda_1) {:.4}", top.lambda, curve[0].bits_per_time));
    }
    ok &= table.assertions.iter().all(|a| a.passed);
    verdict(2, ok, el, detail.join("; "));
}

fn sim_case(label: &str, arrival: Distribution, service: Distribution, analytic: StationaryDist, seed: u64) -> (bool, String) {
    let t = Instant::now();
    let mut rng = seeded(seed);
    let trace = simulate_renewal_queue(&arrival, &service, 1_000_000, &mut rng).unwrap();
    let tv = tv_distance(&empirical_pi(&trace, None).unwrap(), &analytic);
    let el = t.elapsed();
    (
        tv < 0.01 && el < Duration::from_secs(60),
        format!("{label} tv {tv:.5} in {:.2}s", el.as_secs_f64()),
    )
}

#[test]
fn criterion_03_simulation_matches_analytic() {
    let t = Instant::now();
    let mg1 = |s: &Distribution| mg1_pi(&mg1_kernel(s, 0.5, None).unwrap(), None).unwrap();
    let det2 = Distribution::deterministic(2.0).unwrap();
    let det1 = Distribution::deterministic(1.0).unwrap();
    let e2 = Distribution::erlang(2, 2.0).unwrap();
    let cases = [
        sim_case("M/M/1", exp(0.5), exp(1.0), mm1_pi(0.5, 1.0, 200).unwrap(), 301),
        sim_case("D/M/1", det2.clone(), exp(1.0), gm1_pi(&gm1_sigma(&det2, 1.0).unwrap(), 200), 302),
        sim_case("M/D/1", exp(0.5), det1.clone(), mg1(&det1), 303),
        sim_case("M/E2/1", exp(0.5), e2.clone(), mg1(&e2), 304),
    ];
    let ok = cases.iter().all(|c| c.0);
    verdict(3, ok, t.elapsed(), cases.iter().map(|c| c.1.clone()).collect::<Vec<_>>().join("; "));
}

#[test]
fn criterion_04_gm1_sweep() {
    let t = Instant::now();
    let fams = vec![
        Distribution::deterministic(2.0).unwrap(),
        Distribution::erlang(2, 1.0).unwrap(),
        exp(0.5),
        Distribution::balanced_hyper_exponential(2.0, 4.0).unwrap(),
        Distribution::cramming(0.1, 0.1, 2.0).unwrap(),
        Distribution::cramming(0.01, 0.01, 2.0).unwrap(),
        Distribution::cramming(0.001, 0.001, 2.0).unwrap(),
    ];
    let r = gm1_extremal_sweep(0.5, 1.0, &fig2_profile(0), &fams, 1e-10).unwrap();
    let el = t.elapsed();

    // Independent bisection of sigma = exp(-2 (1 - sigma)).
    let h = |s: f64| (-2.0 * (1.0 - s)).exp() - s;
    let (mut lo, mut hi) = (0.0f64, 0.9f64);
    while hi - lo > 1e-12 {
        let m = 0.5 * (lo + hi);
        if h(m) > 0.0 {
            lo = m
        } else {
            hi = m
        }
    }
    let oracle = 0.5 * (lo + hi);
    let sigma_det = r.rows[0].sigma_star.unwrap();

    let det = r.rows[0].bits_per_symbol;
    let det_max = r.rows[1..].iter().all(|x| x.bits_per_symbol < det);
    let cram: Vec<f64> = r.rows[4..].iter().map(|x| x.bits_per_symbol).collect();
    let decreasing = cram.windows(2).all(|w| w[1] < w[0]);
    let ok = det_max
        && decreasing
        && (sigma_det - 0.20319).abs() < 1e-4
        && (sigma_det - oracle).abs() < 1e-10
        && el < Duration::from_secs(1);
    verdict(
        4,
        ok,
        el,
        format!("sigma*(D/M/1) {sigma_det:.6} (oracle {oracle:.6}); C(det) {det:.5}; cramming {cram:.5?}"),
    );
}

#[test]
fn criterion_05_mg1_b0_constant() {
    let t = Instant::now();
    let fams = [
        Distribution::deterministic(1.0).unwrap(),
        Distribution::erlang(2, 2.0).unwrap(),
        exp(1.0),
        Distribution::balanced_hyper_exponential(1.0, 4.0).unwrap(),
    ];
    let r = mg1_extremal_sweep(0.5, 1.0, &fig2_profile(0), &fams, 1e-10).unwrap();
    let el = t.elapsed();
    let c: Vec<f64> = r.rows.iter().map(|x| x.bits_per_symbol).collect();
    let spread = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - c.iter().cloned().fold(f64::INFINITY, f64::min);
    let pi0_exact = r.rows.iter().all(|x| x.pi0 == 0.5);
    let ok = spread < 1e-9 && pi0_exact && el < Duration::from_secs(5);
    verdict(5, ok, el, format!("spread {spread:e}, pi(0) exact: {pi0_exact}"));
}

#[test]
fn criterion_06_mg1_b1_deterministic() {
    let t = Instant::now();
    let fams = [
        Distribution::deterministic(1.0).unwrap(),
        exp(1.0),
        Distribution::cramming(0.1, 0.1, 1.0).unwrap(),
        Distribution::cramming(0.01, 0.01, 1.0).unwrap(),
        Distribution::cramming(0.001, 0.001, 1.0).unwrap(),
    ];
    let r = mg1_extremal_sweep(0.5, 1.0, &fig2_profile(1), &fams, 1e-10).unwrap();
    let el = t.elapsed();
    let k0_det = r.rows[0].k0.unwrap();
    let k0_exp = r.rows[1].k0.unwrap();
    let cram: Vec<f64> = r.rows[2..].iter().map(|x| x.bits_per_symbol).collect();
    let ok = r.rows[0].bits_per_symbol > r.rows[1].bits_per_symbol
        && (k0_det - (-0.5f64).exp()).abs() < 1e-10
        && (k0_exp - 2.0 / 3.0).abs() < 1e-10
        && cram.windows(2).all(|w| w[1] < w[0])
        && el < Duration::from_secs(5);
    verdict(
        6,
        ok,
        el,
        format!(
            "C(det) {:.5} > C(exp) {:.5}; k0 {k0_det:.10} / {k0_exp:.10}; cramming {cram:.5?}",
            r.rows[0].bits_per_symbol, r.rows[1].bits_per_symbol
        ),
    );
}

#[test]
fn criterion_07_multi_user_identity() {
    let t = Instant::now();
    let users = [exp(0.1), exp(0.15), exp(0.2)];
    let ch = fig2_profile(1).to_qchannel().unwrap();
    let mut rng = seeded(700);
    let r = multi_user_report(&users, &exp(1.0), &ch, 4.0e6, 1e-10, &mut rng).unwrap();
    let el = t.elapsed();
    let ok = r.identity_gap_sym.abs() < 3.0 * r.identity_se_sym
        && r.identity_gap_time.abs() < 3.0 * r.identity_se_time
        && el < Duration::from_secs(120);
    verdict(
        7,
        ok,
        el,
        format!(
            "sym gap {:.2e} (3 se {:.2e}); time gap {:.2e} (3 se {:.2e})",
            r.identity_gap_sym,
            3.0 * r.identity_se_sym,
            r.identity_gap_time,
            3.0 * r.identity_se_time
        ),
    );
}

#[test]
fn criterion_08_poisson_convergence() {
    let t = Instant::now();
    let cfg = ConvergenceConfig {
        component: Distribution::erlang(2, 1.0).unwrap(),
        k_list: vec![1, 2, 4, 8, 16, 32],
        lambda: 0.5,
        service: exp(1.0),
        window_length: 1.0,
        arrivals_per_row: 1_000_000,
        sparsity_replications: 10_000,
        final_tv_threshold: Some(0.05),
        service_comparison: Some(ServiceComparison {
            better: Distribution::deterministic(1.0).unwrap(),
            worse: Distribution::cramming(0.1, 0.1, 1.0).unwrap(),
        }),
    };
    let ch = fig2_profile(1).to_qchannel().unwrap();
    let r = poisson_convergence(&cfg, &ch, 800).unwrap();
    let el = t.elapsed();
    let tv: Vec<f64> = r.rows.iter().map(|x| x.tv_queue).collect();
    let get = |name: &str| r.assertions.iter().find(|a| a.name == name).map(|a| a.passed).unwrap_or(false);
    let ok = r.rows.len() == 6
        && r.rows.iter().all(|x| x.arrivals >= 1_000_000)
        && get("tv_nonincreasing")
        && get("final_tv_below_threshold")
        && get("cap_gap_within_tv_bound")
        && el < Duration::from_secs(600);
    verdict(8, ok, el, format!("tv {tv:.4?}, c_max {:.4}", r.c_max));
}

#[test]
fn criterion_09_blahut_arimoto() {
    let t = Instant::now();
    let mut ok = true;
    let mut worst_uniform: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut symmetric = Vec::new();
    for eps in [0.01, 0.1, 0.2, 0.3, 0.4, 0.45] {
        symmetric.push(ChannelMatrix::bsc(eps).unwrap());
        for n in [3, 4, 8] {
            symmetric.push(ChannelMatrix::symmetric(n, eps).unwrap());
            symmetric.push(ChannelMatrix::erasure(n, eps).unwrap());
        }
    }
    for w in &symmetric {
        let ba = blahut_arimoto(w, BaOptions::with_tol(1e-9));
        let u = 1.0 / w.inputs() as f64;
        worst_uniform = ba.p_x.iter().map(|p| (p - u).abs()).fold(worst_uniform, f64::max);
        worst_gap = worst_gap.max(ba.gap);
        ok &= ba.converged;
    }
    ok &= worst_uniform < 1e-6 && worst_gap <= 1e-9;

    let mut rng = seeded(900);
    let mut monotone = 0;
    for _ in 0..100 {
        let (n, m) = (rng.random_range(2..8), rng.random_range(2..8));
        let rows = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(3)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let w = ChannelMatrix::from_rows(rows).unwrap();
        let ba = blahut_arimoto(&w, BaOptions { record_trace: true, ..BaOptions::default() });
        if ba.monotone && ba.trace.windows(2).all(|p| p[1] >= p[0] - 1e-13) {
            monotone += 1;
        }
    }
    let el = t.elapsed();
    ok &= monotone == 100 && el < Duration::from_secs(10);
    verdict(
        9,
        ok,
        el,
        format!(
            "{} symmetric channels: max |P - uniform| {worst_uniform:.1e}, max gap {worst_gap:.1e}; {monotone}/100 random traces nondecreasing",
            symmetric.len()
        ),
    );
}

fn run_cli(config: &Path, out: &Path) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_queuecap"))
        .env_remove("QUEUECAP_SEED")
        .arg("run")
        .arg(config)
        .arg("--quiet")
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn queuecap")
        .status
        .code()
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut entries: Vec<_> = fs::read_dir(&configs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut ok = !entries.is_empty();
    let mut checked = 0;
    for cfg in &entries {
        let stem = cfg.file_stem().unwrap().to_string_lossy().to_string();
        let a = tmp.path().join(format!("{stem}-a"));
        let b = tmp.path().join(format!("{stem}-b"));
        ok &= run_cli(cfg, &a) == Some(0) && run_cli(cfg, &b) == Some(0);
        for f in fs::read_dir(&a).unwrap() {
            let name = f.unwrap().file_name();
            if name.to_string_lossy().ends_with(".csv") {
                ok &= fs::read(a.join(&name)).unwrap() == fs::read(b.join(&name)).unwrap();
                checked += 1;
            }
        }
    }
    verdict(
        10,
        ok,
        t.elapsed(),
        format!("{checked} CSV artifacts from {} configs byte-identical across reruns", entries.len()),
    );
}
