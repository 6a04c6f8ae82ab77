//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `-- --nocapture` to see them all).

use std::process::Command;

use procure::agents::{
    acceptance_rates, audit_bic, audit_eiir, default_deviations, draw_population,
};
use procure::benchmarks::{
    binomial_median_check, build_ironed_curve, canonical_ironing_dist, envy_free_benchmark,
    mechanism_expected_payment, myerson_expected_payment, virtual_cost_payment_identity_check,
    approx_ratio_experiment, BenchmarkKind,
};
use procure::contract::build_contract;
use procure::dist::{ContinuousDist, CostDistribution, DiscreteDist};
use procure::mechanism::{
    accuracy_bound, flatten_record, params_for_accuracy, params_for_budget, run_mechanism,
    MechanismParams,
};
use procure::privacy::{audit_estimate_dp, audit_payment_dp, AdjacentPair, RatioTestConfig};
use procure::rng::StreamSeed;
use procure::stats::RunningStats;

fn uniform(lo: f64, hi: f64) -> CostDistribution {
    CostDistribution::Continuous(ContinuousDist::uniform(lo, hi).unwrap())
}

/// n = 1000 with n1 = 400 target-type players, c = 0.5, eps = 0.5.
fn accuracy_setup() -> (Vec<usize>, Vec<CostDistribution>, MechanismParams) {
    let dists = vec![uniform(0.0, 1.0), uniform(0.0, 2.0)];
    let types: Vec<usize> = (0..1000).map(|i| usize::from(i >= 400)).collect();
    let params = MechanismParams::new(0.5, 0.5, 0).unwrap();
    (types, dists, params)
}

fn estimate_samples(replications: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let (types, dists, params) = accuracy_setup();
    let contract = build_contract(&dists, params.c, params.epsilon).unwrap();
    let root = StreamSeed::new(seed);
    let mut raw = Vec::with_capacity(replications);
    let mut hat = Vec::with_capacity(replications);
    for rep in 0..replications {
        let mut rng = root.child_index("population", rep as u64).rng();
        let pop = draw_population(&types, &dists, &mut rng).unwrap();
        let out =
            run_mechanism(&pop, &contract, &params, root.child_index("mechanism", rep as u64))
                .unwrap();
        raw.push(out.raw_estimate);
        hat.push(out.estimate);
    }
    (raw, hat)
}

#[test]
fn criterion_01_chebyshev_accuracy() {
    let bound = accuracy_bound(400, 0.5, 0.5);
    // derived: sqrt(3 (400*0.5/0.5 + 2/(0.25*0.25))) = sqrt(3*432) = 36
    assert!((bound - 36.0).abs() < 1e-12, "bound {bound} != 36");
    let reps = 2000;
    let (_, hat) = estimate_samples(reps, 101);
    let frac =
        hat.iter().filter(|&&s| (s - 400.0).abs() >= bound).count() as f64 / reps as f64;
    let limit = 1.0 / 3.0 + 0.035;
    assert!(frac <= limit, "accuracy fraction {frac} > {limit}");
    println!("criterion 01 accuracy: PASS (bound 36, frac {frac:.4} <= {limit:.4})");
}

#[test]
fn criterion_02_unbiasedness() {
    let reps = 2000;
    let (raw, _) = estimate_samples(reps, 102);
    let mut stats = RunningStats::new();
    for &s in &raw {
        stats.push(s);
    }
    // sigma^2 = (n1 c (1-c) + 2/eps^2) / c^2 = (100 + 8) / 0.25 = 432
    let sigma = 432.0f64.sqrt();
    let tol = 3.0 * sigma / (reps as f64).sqrt();
    let dev = (stats.mean() - 400.0).abs();
    assert!(dev <= tol, "raw estimate mean {} deviates {dev} > {tol}", stats.mean());
    println!("criterion 02 unbiasedness: PASS (mean {:.3}, |dev| {dev:.3} <= {tol:.3})", stats.mean());
}

#[test]
fn criterion_03_acceptance_type_independent() {
    let dists = vec![
        uniform(0.0, 1.0),
        uniform(0.0, 2.0),
        CostDistribution::Discrete(
            DiscreteDist::new(vec![0.1, 0.6, 1.4], vec![0.3, 0.3, 0.4]).unwrap(),
        ),
    ];
    let c = 0.5;
    let contract = build_contract(&dists, c, 1.0).unwrap();
    let rates = acceptance_rates(&contract, &dists, 100_000, StreamSeed::new(103));
    for (t, rate) in rates.iter().enumerate() {
        assert!((rate - c).abs() <= 0.005, "type {t} acceptance {rate} not within 0.005 of {c}");
    }
    println!("criterion 03 perfect-data-privacy proxy: PASS (rates {rates:?} within 0.005 of {c})");
}

#[test]
fn criterion_04_estimate_dp() {
    let dists = vec![uniform(0.0, 1.0), uniform(0.0, 2.0)];
    let n = 200;
    let types_a: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut types_b = types_a.clone();
    types_b[n / 2] = 0; // side B holds one more target-type player
    let pair = AdjacentPair::new(types_a, types_b).unwrap();
    let params = MechanismParams::new(0.5, 0.5, 0).unwrap();
    let cfg = RatioTestConfig::new(200_000, 30);
    let report =
        audit_estimate_dp(&pair, &dists, &params, 0.5, &cfg, StreamSeed::new(104)).unwrap();
    assert!(report.pass, "estimate audit failed: {report:?}");
    // auditor soundness: the same evidence must reject a 10x smaller target
    assert!(
        !report.passes_at(0.05),
        "audit accepted epsilon/10; max log ratio {}",
        report.max_log_ratio
    );
    println!(
        "criterion 04 estimate DP: PASS (max log ratio {:.4} <= {:.4}, fails at eps/10 threshold {:.4})",
        report.max_log_ratio,
        0.5 + report.slack.ln(),
        0.05 + report.slack.ln()
    );
}

#[test]
fn criterion_05_payment_dp() {
    // two types with alpha 0.5 and 1.0: gamma = 0.5, eps = 1
    let dists = vec![uniform(0.0, 1.0), uniform(0.0, 2.0)];
    let n = 200;
    let types_a: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut types_b = types_a.clone();
    types_b[n / 2] = 0;
    let pair = AdjacentPair::new(types_a, types_b).unwrap();
    let c = 0.5;
    let params = MechanismParams::new(1.0, c, 0).unwrap();
    let contract = build_contract(&dists, c, 1.0).unwrap();
    assert!((contract.gamma - 0.5).abs() < 1e-12);
    let cfg = RatioTestConfig::new(200_000, 16);
    let report = audit_payment_dp(
        &pair,
        &dists,
        &params,
        pair.flipped_index,
        1.0,
        &cfg,
        StreamSeed::new(105),
    )
    .unwrap();
    assert!(report.pass, "payment audit failed: {report:?}");
    let atom = report.zero_atom.expect("zero atom tracked");
    assert!((atom.prob_a - (1.0 - c)).abs() <= 0.005, "Pr[p=0] side a = {}", atom.prob_a);
    assert!((atom.prob_b - (1.0 - c)).abs() <= 0.005, "Pr[p=0] side b = {}", atom.prob_b);
    println!(
        "criterion 05 payment DP: PASS (max log ratio {:.4} <= {:.4}, zero atom {:.4}/{:.4})",
        report.max_log_ratio,
        1.0 + report.slack.ln(),
        atom.prob_a,
        atom.prob_b
    );
}

#[test]
fn criterion_06_bic_eiir() {
    let dists = vec![uniform(0.0, 1.0), uniform(0.0, 2.0)];
    let contract = build_contract(&dists, 0.5, 1.0).unwrap();
    let types: Vec<usize> = (0..30).map(|i| i % 2).collect();
    let deviations = default_deviations(contract.offers[0].expected_price());
    assert_eq!(deviations.len(), 6);
    let reports = audit_bic(
        &contract,
        &dists,
        &types,
        0,
        &deviations,
        10_000,
        StreamSeed::new(106),
    )
    .unwrap();
    assert_eq!(reports.len(), 30); // 5-point grid x 6 deviations
    let mut min_margin = f64::INFINITY;
    for r in &reports {
        assert!(
            r.utility_gap >= -r.ci_halfwidth,
            "profitable deviation {} at cost {}: gap {} < -{}",
            r.deviation,
            r.own_cost,
            r.utility_gap,
            r.ci_halfwidth
        );
        min_margin = min_margin.min(r.utility_gap + r.ci_halfwidth);
    }
    let eiir = audit_eiir(&contract, &dists, &types, 10_000, StreamSeed::new(206)).unwrap();
    for t in &eiir {
        assert!(
            t.mean_utility >= -t.ci_halfwidth,
            "type {} accepted-player utility {} < -{}",
            t.player_type,
            t.mean_utility,
            t.ci_halfwidth
        );
    }
    println!(
        "criterion 06 BIC/EIIR: PASS (30 cells, min gap+ci {min_margin:.4}; eiir means {:?})",
        eiir.iter().map(|t| t.mean_utility).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_07_parameter_formulas() {
    let (c, eps) = params_for_accuracy(60.0, 600).unwrap();
    assert!((c - 0.5).abs() < 1e-12, "c {c}");
    assert!((eps - 4.0 * 3.0f64.sqrt() / 60.0).abs() < 1e-12, "eps {eps}");

    // round-trip: construct the budget at eps = 1, n = 100, alpha = 1
    let n = 100u64;
    let alpha = 1.0;
    let eps_true = 1.0f64;
    let budget = alpha * n as f64 * (eps_true + (eps_true * eps_true - 8.0 / n as f64).sqrt()) / 2.0;
    let (c_got, eps_got) = params_for_budget(budget, n, alpha).unwrap();
    assert!((eps_got - eps_true).abs() <= 1e-6, "eps round trip {eps_got}");
    let achieved = eps_got * alpha * c_got * n as f64;
    assert!((achieved - budget).abs() <= 1e-6 * budget);

    // 20-point (k, n) grid: the produced parameters achieve the target
    let mut checked = 0;
    for &k in &[5.0, 12.0, 30.0, 60.0, 150.0] {
        for &n in &[100u64, 600, 5000, 100_000] {
            let (c, eps) = params_for_accuracy(k, n).unwrap();
            let bound = accuracy_bound(n, c, eps);
            assert!(bound <= k * (1.0 + 1e-12), "bound {bound} > k {k} at n {n}");
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
    println!(
        "criterion 07 parameter formulas: PASS (c=1/2, eps=4sqrt3/60 exact; budget eps {eps_got:.8}; 20 grid points)"
    );
}

#[test]
fn criterion_08_envy_free_two_approx() {
    let dists: Vec<(&str, ContinuousDist)> = vec![
        ("uniform01", ContinuousDist::uniform(0.0, 1.0).unwrap()),
        ("exp1", ContinuousDist::exponential(1.0).unwrap()),
    ];
    let n = 100;
    let mut ratios = Vec::new();
    for (label, dist) in &dists {
        for &w in &[10usize, 50, 90] {
            let mech = mechanism_expected_payment(
                &CostDistribution::Continuous(dist.clone()),
                n,
                w,
            )
            .unwrap();
            let bench = envy_free_benchmark(
                dist,
                n,
                w,
                100_000,
                StreamSeed::new(108).child(label).child_index("w", w as u64),
            )
            .unwrap();
            let ratio = mech / bench.mean;
            assert!(
                ratio <= 2.0 * 1.02,
                "{label} w={w}: ratio {ratio} exceeds 2*1.02 (mech {mech}, bench {})",
                bench.mean
            );
            ratios.push(ratio);
        }
    }
    println!("criterion 08 envy-free 2-approx: PASS (ratios {ratios:?} all <= 2.04)");
}

#[test]
fn criterion_09_anti_regular_optimality() {
    let dist = ContinuousDist::uniform(0.0, 1.0).unwrap();
    let curve = build_ironed_curve(&dist).unwrap();
    let (n, w) = (5usize, 2usize);
    let reps = 100_000;
    let mut totals = RunningStats::new();
    let mut rng = StreamSeed::new(109).child("draws").rng();
    let mut costs = vec![0.0f64; n];
    for _ in 0..reps {
        for c in costs.iter_mut() {
            *c = dist.sample(&mut rng);
        }
        totals.push(myerson_expected_payment(&costs, w, &curve).unwrap().total_expected_payment);
    }
    // independent order-statistic estimator of w E[v_(w+1)]
    let bench = envy_free_benchmark(&dist, n, w, reps, StreamSeed::new(209)).unwrap();
    let combined_ci = totals.ci_halfwidth() + bench.ci_halfwidth;
    let diff = (totals.mean() - bench.mean).abs();
    assert!(
        diff <= combined_ci,
        "myerson total {} vs w E[v_(w+1)] {} differ by {diff} > {combined_ci}",
        totals.mean(),
        bench.mean
    );
    // closed form for uniform: w (w+1)/(n+1) = 2 * 3/6 = 1
    assert!((totals.mean() - 1.0).abs() <= totals.ci_halfwidth().max(0.01));

    let identity =
        virtual_cost_payment_identity_check(&dist, n, w, reps, StreamSeed::new(309)).unwrap();
    assert!(identity.agrees, "payment identity violated: {identity:?}");
    println!(
        "criterion 09 anti-regular optimality: PASS (myerson {:.4} ~ benchmark {:.4}; identity lhs {:.4} rhs {:.4})",
        totals.mean(),
        bench.mean,
        identity.payment_total.mean,
        identity.virtual_cost_total.mean
    );
}

#[test]
fn criterion_10_ironing_invariants() {
    let curve = build_ironed_curve(&canonical_ironing_dist()).unwrap();
    assert_eq!(curve.intervals().len(), 1, "expected exactly one ironed interval");
    let iv = curve.intervals()[0];
    assert!(iv.q_lo < 0.1 && 0.1 < iv.q_hi, "interval {iv:?} misses q = 0.1");

    let h = curve.h_values();
    let g = curve.envelope_values();
    for i in 0..h.len() {
        assert!(g[i] <= h[i] + 1e-9, "G > H at grid point {i}");
    }
    for w in curve.slope_values().windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "slopes decreased");
    }
    // g constant on the ironed interval within 1e-6
    let base = curve.ironed_virtual_cost(iv.cost_lo).unwrap();
    for j in 0..100 {
        let z = iv.cost_lo + (iv.cost_hi - iv.cost_lo) * j as f64 / 100.0;
        let pb = curve.ironed_virtual_cost(z).unwrap();
        assert!((pb - base).abs() <= 1e-6, "phi_bar varies on the interval: {pb} vs {base}");
    }
    // phi_bar nondecreasing on a 1000-point grid
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=1000 {
        let z = i as f64 / 1000.0;
        let pb = curve.ironed_virtual_cost(z).unwrap();
        assert!(pb >= prev - 1e-12, "phi_bar decreased at {z}");
        prev = pb;
    }
    println!(
        "criterion 10 ironing invariants: PASS (one interval q [{:.5}, {:.5}) covering 0.1, flat g)",
        iv.q_lo, iv.q_hi
    );
}

#[test]
fn criterion_11_two_r_bound() {
    let dist = canonical_ironing_dist();
    let report = approx_ratio_experiment(
        &dist,
        100,
        50,
        100_000,
        BenchmarkKind::Myerson,
        1.02,
        StreamSeed::new(111),
    )
    .unwrap();
    let r = report.stretch_ratio.expect("canonical case irons");
    assert!((report.bound - 2.0 * r).abs() < 1e-12);
    assert!(
        report.ratio <= report.bound * 1.02,
        "ratio {} exceeds 2r * 1.02 = {}",
        report.ratio,
        report.bound * 1.02
    );
    println!(
        "criterion 11 2r bound: PASS (r {:.4}, ratio {:.4} <= {:.4})",
        r,
        report.ratio,
        report.bound * 1.02
    );
}

#[test]
fn criterion_12_three_case_payments() {
    let curve = build_ironed_curve(&canonical_ironing_dist()).unwrap();
    let iv = curve.intervals()[0];
    let (a, b) = (iv.cost_lo, iv.cost_hi);
    let w = 2usize;

    // Case 1: v_{w+1} clear of any ironed interval; winners pay v_{w+1}
    let costs = [0.1, 0.2, 0.7, 0.9];
    let schedule = myerson_expected_payment(&costs, w, &curve).unwrap();
    for i in 0..2 {
        assert!(
            (schedule.expected_payments[i] - 0.7).abs() <= 1e-6,
            "case 1 payment {} != v_w+1",
            schedule.expected_payments[i]
        );
    }
    assert_eq!(schedule.expected_payments[2], 0.0);

    // Case 2: v_{w+1} ironed, v_w below the interval; winners pay >= a
    // (exactly a + (b-a)/(l2+1) with l2 = 1 here)
    let costs = [0.1, 0.2, 0.5 * (a + b), 0.7, 0.9];
    let schedule = myerson_expected_payment(&costs, w, &curve).unwrap();
    let case2 = a + (b - a) / 2.0;
    for i in 0..2 {
        let p = schedule.expected_payments[i];
        assert!(p >= a - 1e-6, "case 2 payment {p} < a = {a}");
        assert!((p - case2).abs() <= 1e-6, "case 2 payment {p} != {case2}");
    }

    // Case 3: v_w and v_{w+1} share the interval; tied group pays b(w-l1)/l2
    let inside = |f: f64| a + f * (b - a);
    let costs = [0.1, inside(0.25), inside(0.75), 0.7, 0.9];
    let schedule = myerson_expected_payment(&costs, w, &curve).unwrap();
    let (l1, l2) = (1.0f64, 2.0f64);
    let tied = b * (w as f64 - l1) / l2;
    assert!((schedule.expected_payments[1] - tied).abs() <= 1e-6);
    assert!((schedule.expected_payments[2] - tied).abs() <= 1e-6);
    let sure = a + (b - a) * (w as f64 - l1 + 1.0) / (l2 + 1.0);
    assert!((schedule.expected_payments[0] - sure).abs() <= 1e-6);
    println!(
        "criterion 12 three-case payments: PASS (v_w+1 {:.2}; >= a {:.4}; tied {tied:.4})",
        0.7, a
    );
}

#[test]
fn criterion_13_binomial_median() {
    let mut checked = 0;
    for n in 1..=30u64 {
        for pi in 1..=9 {
            assert!(binomial_median_check(n, pi as f64 / 10.0), "median bound fails at n={n} p=0.{pi}");
            checked += 1;
        }
    }
    println!("criterion 13 binomial median: PASS ({checked} (n, p) pairs)");
}

#[test]
fn criterion_14_flatten_bijection() {
    for h in 1..=4usize {
        for d in 1..=4usize {
            let total = h.pow(d as u32);
            let mut seen = vec![false; total];
            let mut record = vec![1usize; d];
            loop {
                let code = flatten_record(&record, h).unwrap();
                assert!((1..=total).contains(&code), "code {code} out of range");
                assert!(!seen[code - 1], "collision at {record:?} (h={h}, d={d})");
                seen[code - 1] = true;
                let mut pos = 0;
                while pos < d {
                    record[pos] += 1;
                    if record[pos] <= h {
                        break;
                    }
                    record[pos] = 1;
                    pos += 1;
                }
                if pos == d {
                    break;
                }
            }
            assert!(seen.iter().all(|&s| s), "not surjective at h={h}, d={d}");
        }
    }
    println!("criterion 14 flatten bijection: PASS (all h, d <= 4)");
}

#[test]
fn criterion_15_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(
        &config_path,
        r#"
kind = "run"
seed = 2026
c = 0.5
epsilon = 0.5
target_type = 0
replications = 100

[database]
counts = [40, 60]

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 1.0

[[distributions]]
kind = "discrete"
atoms = [0.3, 1.1]
probs = [0.5, 0.5]
"#,
    )
    .unwrap();

    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_procure"))
            .args([
                "run",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                dir.path().join(out).to_str().unwrap(),
            ])
            .status()
            .expect("binary runs");
        assert!(status.success(), "run exited with {status}");
    };
    run("a");
    run("b");
    let a = std::fs::read(dir.path().join("a/results.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b, "results.csv differs between identical runs");
    let sa = std::fs::read(dir.path().join("a/summary.json")).unwrap();
    let sb = std::fs::read(dir.path().join("b/summary.json")).unwrap();
    assert_eq!(sa, sb, "summary.json differs between identical runs");
    println!("criterion 15 determinism: PASS (results.csv byte-identical, {} bytes)", a.len());
}
