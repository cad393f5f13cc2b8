use queuecap::analytic::mm1_pi;
use queuecap::dist::Distribution;
use queuecap::pointproc::{gen_renewal, gen_superposition, sparsity_diagnostics, Start};
use queuecap::qsim::{
    empirical_pi, half_split_drift, simulate_fcfs, simulate_renewal_queue, tv_distance,
    StationaryDist,
};
use queuecap::rng::seeded;
use queuecap::stats::{ks_critical_1pct, ks_statistic, poisson_pmf};

fn exp(rate: f64) -> Distribution {
    Distribution::exponential(rate).unwrap()
}

/// Waiting times from the Lindley recursion and queue lengths by direct
/// count of earlier customers still present.
fn lindley_oracle(epochs: &[f64], services: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let n = epochs.len();
    let mut wait = vec![0.0; n];
    for i in 1..n {
        wait[i] = (wait[i - 1] + services[i - 1] - (epochs[i] - epochs[i - 1])).max(0.0);
    }
    let departures: Vec<f64> = (0..n).map(|i| epochs[i] + wait[i] + services[i]).collect();
    let q = (0..n)
        .map(|i| (0..i).filter(|&j| departures[j] > epochs[i]).count() as u32)
        .collect();
    (wait, q)
}

#[test]
fn matches_lindley_recursion() {
    for (arrival, service) in [
        (exp(0.5), exp(1.0)),
        (Distribution::deterministic(2.0).unwrap(), exp(1.0)),
        (exp(0.7), Distribution::erlang(2, 2.0).unwrap()),
        (exp(0.5), Distribution::cramming(0.1, 0.1, 1.0).unwrap()),
    ] {
        let mut rng = seeded(11);
        let trace = simulate_renewal_queue(&arrival, &service, 10_000, &mut rng).unwrap();
        let epochs: Vec<f64> = trace.records.iter().map(|r| r.arrival_epoch).collect();
        let services: Vec<f64> = trace.records.iter().map(|r| r.service).collect();
        let (wait, q) = lindley_oracle(&epochs, &services);
        for (i, r) in trace.records.iter().enumerate() {
            assert_eq!(r.q_seen, q[i], "{} record {i}", arrival.label());
            assert!((r.wait - wait[i]).abs() < 1e-9 * (1.0 + wait[i]));
        }
    }
}

#[test]
fn fcfs_order_and_work_conservation() {
    let mut rng = seeded(5);
    let trace = simulate_renewal_queue(&exp(0.9), &exp(1.0), 50_000, &mut rng).unwrap();
    let mut prev_departure = 0.0;
    for r in &trace.records {
        let start = r.arrival_epoch + r.wait;
        assert!(start + 1e-9 >= prev_departure, "service overlaps the previous job");
        if r.q_seen > 0 {
            assert!((start - prev_departure).abs() < 1e-9, "idle while jobs are waiting");
        } else {
            assert_eq!(r.wait, 0.0);
        }
        prev_departure = start + r.service;
    }
}

#[test]
fn mm1_empty_probability() {
    let mut rng = seeded(21);
    let trace = simulate_renewal_queue(&exp(0.5), &exp(1.0), 1_000_000, &mut rng).unwrap();
    let pi = empirical_pi(&trace, None).unwrap();
    assert!((pi.prob(0) - 0.5).abs() < 0.005, "P[Q=0] = {}", pi.prob(0));
    assert!(tv_distance(&pi, &mm1_pi(0.5, 1.0, 200).unwrap()) < 0.01);
    let (diff, se) = half_split_drift(&trace);
    assert!(diff.abs() <= 3.0 * se, "halves disagree: {diff} vs se {se}");
}

#[test]
fn symmetric_users_share_marginal() {
    let trace = {
        let stream = gen_superposition(&[exp(0.25), exp(0.25)], 1.0e6, 8).unwrap();
        let mut rng = seeded(9);
        simulate_fcfs(&stream.with_service(&exp(1.0), &mut rng)).unwrap()
    };
    let pooled = empirical_pi(&trace, None).unwrap();
    let a = empirical_pi(&trace, Some(0)).unwrap();
    let b = empirical_pi(&trace, Some(1)).unwrap();
    assert!(tv_distance(&a, &b) < 0.02);
    assert!(tv_distance(&a, &pooled) < 0.02);
    assert!(tv_distance(&pooled, &mm1_pi(0.5, 1.0, 200).unwrap()) < 0.01);
}

#[test]
fn superposed_exponentials_are_poisson() {
    let k = 5;
    let comps = vec![exp(0.1); k];
    let stream = gen_superposition(&comps, 200_000.0, 3).unwrap();
    assert!((stream.rate() - 0.5).abs() < 0.01, "rate {}", stream.rate());
    let gaps = stream.gaps();
    let d = ks_statistic(&gaps, |x| 1.0 - (-0.5 * x).exp());
    assert!(d < ks_critical_1pct(gaps.len()), "KS {d}");
}

#[test]
fn superposition_preserves_counts() {
    let comps = vec![
        Distribution::erlang(2, 1.0).unwrap(),
        exp(0.3),
        Distribution::deterministic(3.0).unwrap(),
    ];
    let merged = gen_superposition(&comps, 1000.0, 17).unwrap();
    let separate: usize = comps
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut rng = seeded(queuecap::rng::derive_seed(17, k as u64));
            gen_renewal(d, 1000.0, k as u32, Start::Equilibrium, &mut rng).unwrap().len()
        })
        .sum();
    assert_eq!(merged.len(), separate);
    assert!(merged.events.windows(2).all(|w| w[0].epoch <= w[1].epoch));
}

#[test]
fn window_counts_are_poisson() {
    let lambda = 2.0;
    let windows = 100_000;
    let t = 1.0;
    let mut rng = seeded(2);
    let s = gen_renewal(&exp(lambda), windows as f64 * t, 0, Start::Ordinary, &mut rng).unwrap();
    let mut hist = vec![0usize; 40];
    for w in 0..windows {
        let a = w as f64 * t;
        // Adjacent closed windows share an endpoint, which almost surely
        // carries no epoch.
        let n = s.count_in_window(a, a + t);
        hist[n.min(39)] += 1;
    }
    let emp: Vec<f64> = hist.iter().map(|&c| c as f64 / windows as f64).collect();
    let oracle: Vec<f64> = (0..40).map(|j| poisson_pmf(lambda * t, j)).collect();
    let emp = StationaryDist::new(emp, 0.0).unwrap();
    let tail = 1.0 - oracle.iter().sum::<f64>();
    let oracle = StationaryDist::new(oracle, tail.max(0.0)).unwrap();
    assert!(tv_distance(&emp, &oracle) < 0.01);
}

#[test]
fn g1_single_poisson_component() {
    let (lambda, t) = (0.8, 1.5);
    let m = lambda * t;
    let oracle: f64 = (2..200).map(|j| j as f64 * poisson_pmf(m, j)).sum();
    assert!((oracle - (m - m * (-m).exp())).abs() < 1e-12);
    let mut rng = seeded(4);
    let d = sparsity_diagnostics(&exp(lambda), 1, t, 200_000, &mut rng).unwrap();
    assert!((d.g1 - oracle).abs() <= 3.0 * d.g1_std_error, "g1 {} vs {oracle}", d.g1);
}

#[test]
fn g1_decreases_along_the_row() {
    let lambda = 0.5;
    let mut prev = f64::INFINITY;
    for k in [2usize, 4, 8, 16, 32] {
        let comp = Distribution::erlang(2, 1.0).unwrap().with_rate(lambda / k as f64).unwrap();
        let mut rng = seeded(k as u64);
        let d = sparsity_diagnostics(&comp, k, 1.0, 100_000, &mut rng).unwrap();
        assert!(d.g1 < prev, "K = {k}: g1 {} not below {prev}", d.g1);
        assert!((d.g2 - lambda / k as f64).abs() < 0.1 * lambda / k as f64);
        prev = d.g1;
    }
}
