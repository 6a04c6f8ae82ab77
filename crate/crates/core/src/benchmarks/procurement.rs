//! Optimal w-unit procurement and the approximation-ratio experiments.
//!
//! The optimal BIC buyer ranks players by ironed virtual cost, buys from the
//! `w` smallest, and breaks ties uniformly at random. Expected payments
//! follow the payment identity `E[p_i] = v_i x(v_i) + int_{v_i} x(t) dt`,
//! integrated exactly here because the win-probability profile is piecewise
//! constant with jumps only at other players' ironed ranks and at ironed
//! interval boundaries.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::dist::{ContinuousDist, CostDistribution, Quantile};
use crate::rng::StreamSeed;
use crate::stats::{Estimate, RunningStats};

use super::ironing::{build_ironed_curve, virtual_cost, BenchError, IronedCurve};

/// Win probabilities plus one realized winner set.
#[derive(Debug, Clone, Serialize)]
pub struct Allocation {
    pub win_probs: Vec<f64>,
    pub winners: Vec<usize>,
}

/// Win probabilities and expected payments under the optimal payment rule.
#[derive(Debug, Clone, Serialize)]
pub struct PaymentSchedule {
    pub win_probs: Vec<f64>,
    pub expected_payments: Vec<f64>,
    pub total_expected_payment: f64,
}

fn check_w(w: usize, n: usize) -> Result<(), BenchError> {
    if w == 0 || w >= n {
        return Err(BenchError::WOutOfRange { w, n });
    }
    Ok(())
}

/// Count of `reps` strictly below / equal to `rep`, given `sorted_reps`.
fn rank_counts(sorted_reps: &[f64], rep: f64) -> (usize, usize) {
    let below = sorted_reps.partition_point(|&r| r < rep);
    let upto = sorted_reps.partition_point(|&r| r <= rep);
    (below, upto - below)
}

/// Win probability of a player whose ironed rank representative is `rep`,
/// against `sorted_reps` of the *other* players.
fn win_probability(w: usize, others_below: usize, others_tied: usize) -> f64 {
    if others_below >= w {
        0.0
    } else if others_below + others_tied + 1 <= w {
        1.0
    } else {
        (w - others_below) as f64 / (others_tied + 1) as f64
    }
}

fn reps_of(costs: &[f64], curve: &IronedCurve) -> Vec<f64> {
    costs.iter().map(|&v| curve.order_rep(v)).collect()
}

fn probs_from_reps(reps: &[f64], sorted_reps: &[f64], w: usize) -> Vec<f64> {
    reps.iter()
        .map(|&rep| {
            let (below, tied) = rank_counts(sorted_reps, rep);
            // counts include the player themself, who is always tied
            win_probability(w, below, tied - 1)
        })
        .collect()
}

/// Buy from the `w` players with smallest ironed virtual cost, breaking ties
/// uniformly at random.
pub fn myerson_procure(
    costs: &[f64],
    w: usize,
    curve: &IronedCurve,
    rng: &mut impl Rng,
) -> Result<Allocation, BenchError> {
    check_w(w, costs.len())?;
    let reps = reps_of(costs, curve);
    let mut sorted_reps = reps.clone();
    sorted_reps.sort_by(f64::total_cmp);
    let win_probs = probs_from_reps(&reps, &sorted_reps, w);

    let mut winners: Vec<usize> = Vec::with_capacity(w);
    let mut tied: Vec<usize> = Vec::new();
    for (i, &p) in win_probs.iter().enumerate() {
        if p >= 1.0 {
            winners.push(i);
        } else if p > 0.0 {
            tied.push(i);
        }
    }
    let open_slots = w - winners.len();
    winners.extend(tied.choose_multiple(rng, open_slots).copied());
    winners.sort_unstable();
    Ok(Allocation { win_probs, winners })
}

/// Expected payments by exact integration of the piecewise-constant
/// win-probability profile `x_i(t, v_{-i})`.
pub fn myerson_expected_payment(
    costs: &[f64],
    w: usize,
    curve: &IronedCurve,
) -> Result<PaymentSchedule, BenchError> {
    check_w(w, costs.len())?;
    let reps = reps_of(costs, curve);
    let mut sorted_reps = reps.clone();
    sorted_reps.sort_by(f64::total_cmp);
    let win_probs = probs_from_reps(&reps, &sorted_reps, w);

    // profile breakpoints shared by all players: every distinct rank
    // representative and every ironed-interval boundary
    let mut breakpoints: Vec<f64> = sorted_reps.clone();
    for iv in curve.intervals() {
        breakpoints.push(iv.cost_lo);
        breakpoints.push(iv.cost_hi);
    }
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut expected_payments = vec![0.0; costs.len()];
    for i in 0..costs.len() {
        if win_probs[i] == 0.0 {
            continue; // x is monotone, so a sure loser stays at zero
        }
        let v = costs[i];
        let x_at = |t: f64| {
            let rep = curve.order_rep(t);
            let (below, tied) = rank_counts(&sorted_reps, rep);
            // exclude player i from the counts
            let self_below = usize::from(reps[i] < rep);
            let self_tied = usize::from(reps[i] == rep);
            win_probability(w, below - self_below, tied - self_tied)
        };

        let mut payment = v * win_probs[i];
        let mut t = v;
        for &bp in breakpoints.iter().skip_while(|&&b| b <= v) {
            let x = x_at(0.5 * (t + bp));
            if x == 0.0 {
                break;
            }
            payment += x * (bp - t);
            t = bp;
        }
        // beyond the last breakpoint every other player ranks below: x = 0
        expected_payments[i] = payment;
    }
    let total_expected_payment = expected_payments.iter().sum();
    Ok(PaymentSchedule { win_probs, expected_payments, total_expected_payment })
}

/// Monte-Carlo estimate of the envy-free benchmark `w * E[v_(w+1)]` over `n`
/// i.i.d. cost draws.
pub fn envy_free_benchmark(
    dist: &ContinuousDist,
    n: usize,
    w: usize,
    replications: usize,
    stream: StreamSeed,
) -> Result<Estimate, BenchError> {
    if w + 1 > n {
        return Err(BenchError::WOutOfRange { w, n });
    }
    let mut stats = RunningStats::new();
    let mut rng = stream.child("order-stat").rng();
    let mut draws = vec![0.0f64; n];
    for _ in 0..replications {
        for d in draws.iter_mut() {
            *d = dist.sample(&mut rng);
        }
        let (_, v_w1, _) = draws.select_nth_unstable_by(w, f64::total_cmp);
        stats.push(*v_w1);
    }
    Ok(Estimate::from_stats(&stats).scaled(w as f64))
}

/// Closed-form expected total payment of the posted-price mechanism buying
/// `w` of `n` in expectation: `w * F^{-1}(w/n)` with an exact quantile,
/// otherwise the randomized-offer form
/// `w (a+ - (n c^-/w)(1 - beta)(a+ - a-))`.
pub fn mechanism_expected_payment(
    dist: &CostDistribution,
    n: usize,
    w: usize,
) -> Result<f64, BenchError> {
    check_w(w, n)?;
    let c = w as f64 / n as f64;
    Ok(match dist.quantile(c)? {
        Quantile::Exact(alpha) => w as f64 * alpha,
        Quantile::Bracket { lo, lo_cdf, hi, .. } => {
            let beta = (c - lo_cdf) / (dist_hi_cdf(dist, hi) - lo_cdf);
            let alpha_lo = lo.unwrap_or(0.0);
            w as f64 * (hi - (n as f64 * lo_cdf / w as f64) * (1.0 - beta) * (hi - alpha_lo))
        }
    })
}

fn dist_hi_cdf(dist: &CostDistribution, hi: f64) -> f64 {
    dist.cdf_eval(hi)
}

/// Which benchmark the ratio experiment compares against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BenchmarkKind {
    /// Envy-free floor `w E[v_(w+1)]`.
    EnvyFree,
    /// Expected payment of the optimal BIC (ironed Myerson) buyer.
    Myerson,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxRatioReport {
    pub mechanism_payment: f64,
    pub benchmark: Estimate,
    pub ratio: f64,
    /// 2 for the envy-free / anti-regular comparisons, 2r under ironing.
    pub bound: f64,
    pub stretch_ratio: Option<f64>,
    pub pass: bool,
}

/// Compare the posted-price mechanism's expected payment against a benchmark
/// at sample fraction `c = w/n`. `slack` is the multiplicative allowance for
/// Monte-Carlo error in the benchmark (e.g. 1.02).
pub fn approx_ratio_experiment(
    dist: &ContinuousDist,
    n: usize,
    w: usize,
    replications: usize,
    benchmark_kind: BenchmarkKind,
    slack: f64,
    stream: StreamSeed,
) -> Result<ApproxRatioReport, BenchError> {
    check_w(w, n)?;
    let mech =
        mechanism_expected_payment(&CostDistribution::Continuous(dist.clone()), n, w)?;
    let (benchmark, stretch_ratio) = match benchmark_kind {
        BenchmarkKind::EnvyFree => {
            (envy_free_benchmark(dist, n, w, replications, stream)?, None)
        }
        BenchmarkKind::Myerson => {
            let curve = build_ironed_curve(dist)?;
            let r = curve.stretch_ratio()?;
            let mut stats = RunningStats::new();
            let mut rng = stream.child("myerson-bench").rng();
            let mut costs = vec![0.0f64; n];
            for _ in 0..replications {
                for cst in costs.iter_mut() {
                    *cst = dist.sample(&mut rng);
                }
                let schedule = myerson_expected_payment(&costs, w, &curve)?;
                stats.push(schedule.total_expected_payment);
            }
            (Estimate::from_stats(&stats), r)
        }
    };
    let bound = match stretch_ratio {
        Some(r) => 2.0 * r,
        None => 2.0,
    };
    let ratio = mech / benchmark.mean;
    Ok(ApproxRatioReport {
        mechanism_payment: mech,
        benchmark,
        ratio,
        bound,
        stretch_ratio,
        pass: ratio <= bound * slack,
    })
}

/// Exact binomial CDF check that every median of `Bin(n, p)` lies in
/// `[floor(np), ceil(np)]`.
pub fn binomial_median_check(n: u64, p: f64) -> bool {
    assert!(n <= 10_000, "exact CDF sweep limited to n <= 1e4");
    assert!((0.0..=1.0).contains(&p));
    let pmf = binomial_pmf(n, p);
    let mut cdf = vec![0.0f64; pmf.len()];
    let mut acc = 0.0;
    for (k, &m) in pmf.iter().enumerate() {
        acc += m;
        cdf[k] = acc;
    }
    let tol = 1e-9;
    let lo = (n as f64 * p).floor();
    let hi = (n as f64 * p).ceil();
    let mut any_median = false;
    for k in 0..=n {
        let le = cdf[k as usize];
        let ge = 1.0 - if k == 0 { 0.0 } else { cdf[(k - 1) as usize] };
        if le >= 0.5 - tol && ge >= 0.5 - tol {
            any_median = true;
            if (k as f64) < lo || (k as f64) > hi {
                return false;
            }
        }
    }
    any_median
}

/// Binomial pmf in one stable pass (log-space recurrence, normalized).
fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[n as usize] = 1.0;
        return v;
    }
    let log_odds = (p / (1.0 - p)).ln();
    let mut log_pmf = Vec::with_capacity(n as usize + 1);
    log_pmf.push(n as f64 * (1.0 - p).ln());
    for k in 0..n {
        let step = ((n - k) as f64 / (k + 1) as f64).ln() + log_odds;
        log_pmf.push(log_pmf[k as usize] + step);
    }
    let max = log_pmf.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let unnorm: Vec<f64> = log_pmf.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub payment_total: Estimate,
    pub virtual_cost_total: Estimate,
    pub diff_ci_halfwidth: f64,
    pub agrees: bool,
}

/// Dual-estimator check of the payment identity for anti-regular
/// distributions: `E[sum p_i]` from the payment rule against
/// `E[sum phi(v_i) x_i(v)]`, on common cost draws.
pub fn virtual_cost_payment_identity_check(
    dist: &ContinuousDist,
    n: usize,
    w: usize,
    replications: usize,
    stream: StreamSeed,
) -> Result<IdentityReport, BenchError> {
    if w == 0 {
        let zero = Estimate { mean: 0.0, ci_halfwidth: 0.0, replications: replications as u64 };
        return Ok(IdentityReport {
            payment_total: zero,
            virtual_cost_total: zero,
            diff_ci_halfwidth: 0.0,
            agrees: true,
        });
    }
    check_w(w, n)?;
    let curve = build_ironed_curve(dist)?;
    if !curve.intervals().is_empty() {
        return Err(BenchError::NotAntiRegular(curve.intervals().len()));
    }
    let mut lhs = RunningStats::new();
    let mut rhs = RunningStats::new();
    let mut diff = RunningStats::new();
    let mut rng = stream.child("identity").rng();
    let mut costs = vec![0.0f64; n];
    for _ in 0..replications {
        for cst in costs.iter_mut() {
            *cst = dist.sample(&mut rng);
        }
        let schedule = myerson_expected_payment(&costs, w, &curve)?;
        let phi_total: f64 = costs
            .iter()
            .zip(&schedule.win_probs)
            .map(|(&v, &x)| if x > 0.0 { virtual_cost(dist, v).map(|p| p * x) } else { Ok(0.0) })
            .sum::<Result<f64, BenchError>>()?;
        lhs.push(schedule.total_expected_payment);
        rhs.push(phi_total);
        diff.push(schedule.total_expected_payment - phi_total);
    }
    let payment_total = Estimate::from_stats(&lhs);
    let virtual_cost_total = Estimate::from_stats(&rhs);
    let diff_ci_halfwidth = diff.ci_halfwidth();
    let agrees = diff.mean().abs() <= diff_ci_halfwidth;
    Ok(IdentityReport { payment_total, virtual_cost_total, diff_ci_halfwidth, agrees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::ironing::canonical_ironing_dist;
    use crate::dist::DiscreteDist;

    fn uniform01() -> ContinuousDist {
        ContinuousDist::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn procure_monotone_case() {
        let curve = build_ironed_curve(&uniform01()).unwrap();
        let mut rng = StreamSeed::new(50).rng();
        let alloc = myerson_procure(&[0.2, 0.5, 0.9], 2, &curve, &mut rng).unwrap();
        assert_eq!(alloc.win_probs, vec![1.0, 1.0, 0.0]);
        assert_eq!(alloc.winners, vec![0, 1]);
    }

    #[test]
    fn procure_uniform_tiebreak() {
        let curve = build_ironed_curve(&canonical_ironing_dist()).unwrap();
        let iv = curve.intervals()[0];
        let inside = |f: f64| iv.cost_lo + f * (iv.cost_hi - iv.cost_lo);
        let costs = [inside(0.2), inside(0.5), inside(0.8)];
        let mut rng = StreamSeed::new(51).child("ties").rng();
        let alloc = myerson_procure(&costs, 1, &curve, &mut rng).unwrap();
        for &p in &alloc.win_probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        // empirical tie-break frequencies
        let mut wins = [0usize; 3];
        for rep in 0..30_000u64 {
            let mut rng = StreamSeed::new(52).child_index("rep", rep).rng();
            let alloc = myerson_procure(&costs, 1, &curve, &mut rng).unwrap();
            wins[alloc.winners[0]] += 1;
        }
        for &count in &wins {
            let frac = count as f64 / 30_000.0;
            assert!((frac - 1.0 / 3.0).abs() < 0.01, "tie-break frac {frac}");
        }
    }

    #[test]
    fn procure_w_n_minus_one() {
        let curve = build_ironed_curve(&uniform01()).unwrap();
        let mut rng = StreamSeed::new(53).rng();
        let costs = [0.4, 0.1, 0.8, 0.3];
        let alloc = myerson_procure(&costs, 3, &curve, &mut rng).unwrap();
        assert_eq!(alloc.winners, vec![0, 1, 3]);
    }

    #[test]
    fn procure_rejects_bad_w() {
        let curve = build_ironed_curve(&uniform01()).unwrap();
        let mut rng = StreamSeed::new(54).rng();
        assert!(myerson_procure(&[0.1, 0.2], 0, &curve, &mut rng).is_err());
        assert!(myerson_procure(&[0.1, 0.2], 2, &curve, &mut rng).is_err());
    }

    #[test]
    fn payments_no_ironing() {
        // all winners pay v_{w+1}
        let curve = build_ironed_curve(&uniform01()).unwrap();
        let schedule = myerson_expected_payment(&[0.2, 0.5, 0.9], 2, &curve).unwrap();
        assert!((schedule.expected_payments[0] - 0.9).abs() < 1e-12);
        assert!((schedule.expected_payments[1] - 0.9).abs() < 1e-12);
        assert_eq!(schedule.expected_payments[2], 0.0);
        assert!((schedule.total_expected_payment - 1.8).abs() < 1e-12);
    }

    #[test]
    fn payment_case3_boundary_group() {
        let curve = build_ironed_curve(&canonical_ironing_dist()).unwrap();
        let iv = curve.intervals()[0];
        let inside = |f: f64| iv.cost_lo + f * (iv.cost_hi - iv.cost_lo);
        // one sure winner below the interval, two boundary players, w = 2
        let costs = [0.1, inside(0.3), inside(0.7), 0.7, 0.9];
        let schedule = myerson_expected_payment(&costs, 2, &curve).unwrap();
        let (a, b) = (iv.cost_lo, iv.cost_hi);
        let (l1, l2) = (1.0, 2.0);
        let w = 2.0;
        // sure winner: a + (b - a)(w - l1 + 1)/(l2 + 1)
        let sure = a + (b - a) * (w - l1 + 1.0) / (l2 + 1.0);
        assert!((schedule.expected_payments[0] - sure).abs() < 1e-9);
        // boundary members: b (w - l1)/l2 each
        let boundary = b * (w - l1) / l2;
        assert!((schedule.expected_payments[1] - boundary).abs() < 1e-9);
        assert!((schedule.expected_payments[2] - boundary).abs() < 1e-9);
        assert_eq!(schedule.expected_payments[3], 0.0);
        assert_eq!(schedule.expected_payments[4], 0.0);
    }

    #[test]
    fn monotone_allocation_under_perturbation() {
        // raising one player's cost never raises their win probability
        let curve = build_ironed_curve(&canonical_ironing_dist()).unwrap();
        let dist = canonical_ironing_dist();
        for inst in 0..100u64 {
            let mut rng = StreamSeed::new(55).child_index("inst", inst).rng();
            let n = 6;
            let mut costs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let w = 1 + (inst as usize % (n - 1));
            let i = inst as usize % n;
            let base = myerson_expected_payment(&costs, w, &curve).unwrap().win_probs[i];
            let bump: f64 = rng.gen_range(0.0..(1.0 - costs[i]).max(1e-9));
            costs[i] = (costs[i] + bump).min(1.0);
            let bumped = myerson_expected_payment(&costs, w, &curve).unwrap().win_probs[i];
            assert!(
                bumped <= base + 1e-12,
                "win prob rose {base} -> {bumped} at instance {inst}"
            );
        }
    }

    #[test]
    fn envy_free_uniform_small() {
        // E[v_(2)] of 3 uniforms = 2/4
        let est = envy_free_benchmark(&uniform01(), 3, 1, 50_000, StreamSeed::new(56)).unwrap();
        assert!((est.mean - 0.5).abs() < 3.0 * est.ci_halfwidth.max(0.005), "mean {}", est.mean);
    }

    #[test]
    fn envy_free_exponential_harmonic() {
        // E[v_(w+1)] = sum_{i=1}^{w+1} 1/(n - i + 1) for Exp(1)
        let n = 10;
        let w = 3;
        let oracle: f64 = (0..=w).map(|i| 1.0 / (n - i) as f64).sum();
        let dist = ContinuousDist::exponential(1.0).unwrap();
        let est = envy_free_benchmark(&dist, n, w, 100_000, StreamSeed::new(57)).unwrap();
        assert!(
            (est.mean - w as f64 * oracle).abs() <= est.ci_halfwidth.max(0.01),
            "mean {} vs oracle {}",
            est.mean,
            w as f64 * oracle
        );
    }

    #[test]
    fn mechanism_payment_closed_forms() {
        let u = CostDistribution::Continuous(uniform01());
        assert!((mechanism_expected_payment(&u, 3, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        // randomized-offer form on a two-atom distribution
        let d = CostDistribution::Discrete(DiscreteDist::new(vec![1.0, 3.0], vec![0.4, 0.6]).unwrap());
        let got = mechanism_expected_payment(&d, 10, 5).unwrap();
        // c = 0.5, c- = 0.4, beta = 1/6: 5 (3 - (10*0.4/5)(5/6)(2)) = 25/3
        assert!((got - 25.0 / 3.0).abs() < 1e-12, "got {got}");

        // degenerate atom: w * v0
        let one = CostDistribution::Discrete(DiscreteDist::new(vec![2.0], vec![1.0]).unwrap());
        assert!((mechanism_expected_payment(&one, 4, 2).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn approx_ratio_uniform_envy_free() {
        let report = approx_ratio_experiment(
            &uniform01(),
            100,
            50,
            20_000,
            BenchmarkKind::EnvyFree,
            1.02,
            StreamSeed::new(58),
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
        assert_eq!(report.bound, 2.0);
        assert!((report.ratio - 1.0).abs() < 0.05, "ratio {}", report.ratio);
    }

    #[test]
    fn approx_ratio_ironing_uses_2r() {
        let report = approx_ratio_experiment(
            &canonical_ironing_dist(),
            50,
            25,
            5_000,
            BenchmarkKind::Myerson,
            1.02,
            StreamSeed::new(59),
        )
        .unwrap();
        let r = report.stretch_ratio.expect("ironing present");
        assert!((report.bound - 2.0 * r).abs() < 1e-12);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn binomial_median_examples() {
        assert!(binomial_median_check(4, 0.5));
        assert!(binomial_median_check(7, 0.0));
        assert!(binomial_median_check(7, 1.0));
        for n in 1..=30u64 {
            for pi in 1..=9 {
                assert!(binomial_median_check(n, pi as f64 / 10.0), "n={n} p=0.{pi}");
            }
        }
    }

    #[test]
    fn identity_check_uniform() {
        let report =
            virtual_cost_payment_identity_check(&uniform01(), 5, 2, 50_000, StreamSeed::new(60))
                .unwrap();
        assert!(report.agrees, "{report:?}");
        // both estimators should sit near w E[v_(3)] = 2 * 3/6 = 1
        assert!((report.payment_total.mean - 1.0).abs() < 0.02);
        assert!((report.virtual_cost_total.mean - 1.0).abs() < 0.02);
    }

    #[test]
    fn identity_check_w_zero() {
        let report =
            virtual_cost_payment_identity_check(&uniform01(), 5, 0, 1000, StreamSeed::new(61))
                .unwrap();
        assert!(report.agrees);
        assert_eq!(report.payment_total.mean, 0.0);
        assert_eq!(report.virtual_cost_total.mean, 0.0);
    }

    #[test]
    fn identity_check_rejects_ironed() {
        let err = virtual_cost_payment_identity_check(
            &canonical_ironing_dist(),
            5,
            2,
            1000,
            StreamSeed::new(62),
        )
        .unwrap_err();
        assert!(matches!(err, BenchError::NotAntiRegular(_)));
    }
}
