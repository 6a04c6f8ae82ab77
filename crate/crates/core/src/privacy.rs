//! Empirical mutual-boundedness audits.
//!
//! The audits draw the mechanism's output statistic many times on each side
//! of an adjacent cost-data pair (costs independently redrawn every run, per
//! the adjacency definition), histogram the two samples on a shared binning,
//! and compare per-bin log probability ratios in both directions against the
//! target `epsilon`. Crude but assumption-free: with a minimum qualifying bin
//! count of 500 the sampling noise on a log ratio is about `2/sqrt(500) ~
//! 0.09`, absorbed by the multiplicative slack of 1.1 (`ln 1.1 ~ 0.095`).

use serde::Serialize;
use thiserror::Error;

use crate::agents::{draw_population, AgentError};
use crate::contract::{build_contract, Contract, ContractError};
use crate::dist::{sample_laplace, CostDistribution};
use crate::mechanism::{run_mechanism, MechanismError, MechanismParams};
use crate::rng::StreamSeed;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("databases must differ in exactly one entry, found {0} differences")]
    NotAdjacent(usize),
    #[error("audits need at least 1e5 samples per side, got {0}")]
    TooFewSamples(usize),
    #[error("inconclusive: only {qualifying} qualifying bins (need >= {required})")]
    Inconclusive { qualifying: usize, required: usize },
    #[error("player index {0} out of range")]
    PlayerOutOfRange(usize),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Two databases differing in exactly one entry. Cost vectors are redrawn
/// independently on each side for every audit sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentPair {
    pub types_a: Vec<usize>,
    pub types_b: Vec<usize>,
    pub flipped_index: usize,
}

impl AdjacentPair {
    pub fn new(types_a: Vec<usize>, types_b: Vec<usize>) -> Result<Self, AuditError> {
        if types_a.len() != types_b.len() {
            return Err(AuditError::NotAdjacent(usize::MAX));
        }
        let diffs: Vec<usize> =
            (0..types_a.len()).filter(|&i| types_a[i] != types_b[i]).collect();
        if diffs.len() != 1 {
            return Err(AuditError::NotAdjacent(diffs.len()));
        }
        Ok(AdjacentPair { types_a, types_b, flipped_index: diffs[0] })
    }

    /// Degenerate pair (identical databases) for auditor sanity checks.
    pub fn degenerate(types: Vec<usize>, index: usize) -> Self {
        AdjacentPair { types_a: types.clone(), types_b: types, flipped_index: index }
    }
}

/// Histogram/threshold knobs of the ratio test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioTestConfig {
    pub samples: usize,
    pub bins: usize,
    pub min_bin_count: u64,
    pub slack: f64,
}

impl RatioTestConfig {
    pub fn new(samples: usize, bins: usize) -> Self {
        RatioTestConfig { samples, bins, min_bin_count: 500, slack: 1.1 }
    }
}

pub const MIN_AUDIT_SAMPLES: usize = 100_000;
const MIN_QUALIFYING_BINS: usize = 5;

/// Point-mass bookkeeping for the zero-payment atom.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZeroAtomReport {
    pub prob_a: f64,
    pub prob_b: f64,
    pub log_ratio: f64,
}

/// Outcome of a two-sided histogram ratio audit.
#[derive(Debug, Clone, Serialize)]
pub struct RatioTestReport {
    pub epsilon_target: f64,
    pub slack: f64,
    pub bins: usize,
    pub min_bin_count: u64,
    pub qualifying_bins: usize,
    pub max_log_ratio: f64,
    /// Which side dominated at the maximizing bin.
    pub direction: String,
    pub pass: bool,
    pub samples_per_side: usize,
    /// Mass excluded from the ratio test below/above the central range.
    pub overflow: [u64; 2],
    pub zero_atom: Option<ZeroAtomReport>,
}

impl RatioTestReport {
    /// Re-evaluate the same histogram evidence against another target.
    pub fn passes_at(&self, epsilon_target: f64) -> bool {
        self.max_log_ratio <= epsilon_target + self.slack.ln()
    }
}

/// Shared-binning ratio test over two equally sized samples. `zero_atom`
/// routes exact zeros into a dedicated point-mass bin first.
fn histogram_ratio_test(
    samples_a: &[f64],
    samples_b: &[f64],
    epsilon_target: f64,
    cfg: &RatioTestConfig,
    zero_atom: bool,
) -> Result<RatioTestReport, AuditError> {
    assert_eq!(samples_a.len(), samples_b.len());
    let n = samples_a.len() as f64;

    let mut zero_a = 0u64;
    let mut zero_b = 0u64;
    let keep = |xs: &[f64], zeros: &mut u64| -> Vec<f64> {
        if zero_atom {
            let kept: Vec<f64> = xs.iter().copied().filter(|&x| x != 0.0).collect();
            *zeros = (xs.len() - kept.len()) as u64;
            kept
        } else {
            xs.to_vec()
        }
    };
    let cont_a = keep(samples_a, &mut zero_a);
    let cont_b = keep(samples_b, &mut zero_b);

    // shared central range: pooled 99.9% mass; tails become overflow bins
    let mut pooled: Vec<f64> = cont_a.iter().chain(cont_b.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let (lo, hi) = if pooled.is_empty() {
        (0.0, 0.0)
    } else {
        let at = |q: f64| pooled[((q * (pooled.len() - 1) as f64).round() as usize).min(pooled.len() - 1)];
        (at(0.0005), at(0.9995))
    };

    let width = (hi - lo) / cfg.bins as f64;
    let mut counts_a = vec![0u64; cfg.bins];
    let mut counts_b = vec![0u64; cfg.bins];
    let mut overflow = [0u64; 2];
    let mut fill = |xs: &[f64], counts: &mut [u64], track_overflow: bool| {
        for &x in xs {
            if width <= 0.0 {
                counts[0] += 1; // point mass: everything lands in one bin
            } else if x < lo {
                if track_overflow {
                    overflow[0] += 1;
                }
            } else if x > hi {
                if track_overflow {
                    overflow[1] += 1;
                }
            } else {
                let idx = (((x - lo) / width) as usize).min(cfg.bins - 1);
                counts[idx] += 1;
            }
        }
    };
    fill(&cont_a, &mut counts_a, true);
    fill(&cont_b, &mut counts_b, false);

    let mut qualifying = 0usize;
    let mut max_log_ratio = 0.0f64;
    let mut direction = "none".to_string();
    let mut consider = |count_a: u64, count_b: u64, label: &str| {
        if count_a >= cfg.min_bin_count && count_b >= cfg.min_bin_count {
            qualifying += 1;
            let log_ratio = (count_a as f64 / n).ln() - (count_b as f64 / n).ln();
            if log_ratio.abs() > max_log_ratio {
                max_log_ratio = log_ratio.abs();
                direction = if log_ratio >= 0.0 { format!("a_over_b@{label}") } else { format!("b_over_a@{label}") };
            }
        }
    };
    for i in 0..cfg.bins {
        consider(counts_a[i], counts_b[i], &format!("bin{i}"));
    }
    let zero_report = if zero_atom {
        let r = ZeroAtomReport {
            prob_a: zero_a as f64 / n,
            prob_b: zero_b as f64 / n,
            log_ratio: if zero_a > 0 && zero_b > 0 {
                (zero_a as f64 / n).ln() - (zero_b as f64 / n).ln()
            } else {
                f64::NAN
            },
        };
        consider(zero_a, zero_b, "zero-atom");
        Some(r)
    } else {
        None
    };

    // a pure point mass is conclusive on its own
    let conclusive = qualifying >= MIN_QUALIFYING_BINS || (width <= 0.0 && qualifying >= 1);
    if !conclusive {
        return Err(AuditError::Inconclusive { qualifying, required: MIN_QUALIFYING_BINS });
    }

    let pass = max_log_ratio <= epsilon_target + cfg.slack.ln();
    Ok(RatioTestReport {
        epsilon_target,
        slack: cfg.slack,
        bins: cfg.bins,
        min_bin_count: cfg.min_bin_count,
        qualifying_bins: qualifying,
        max_log_ratio,
        direction,
        pass,
        samples_per_side: samples_a.len(),
        overflow,
        zero_atom: zero_report,
    })
}

fn collect_statistic(
    types: &[usize],
    dists: &[CostDistribution],
    contract: &Contract,
    params: &MechanismParams,
    samples: usize,
    stream: StreamSeed,
    statistic: impl Fn(&crate::mechanism::MechanismOutcome) -> f64,
) -> Result<Vec<f64>, AuditError> {
    let mut out = Vec::with_capacity(samples);
    for rep in 0..samples {
        let mut rng = stream.child_index("pop", rep as u64).rng();
        let pop = draw_population(types, dists, &mut rng)?;
        let outcome = run_mechanism(&pop, contract, params, stream.child_index("run", rep as u64))?;
        out.push(statistic(&outcome));
    }
    Ok(out)
}

/// Audit the truncated estimate across an adjacent pair.
pub fn audit_estimate_dp(
    pair: &AdjacentPair,
    dists: &[CostDistribution],
    params: &MechanismParams,
    epsilon_target: f64,
    cfg: &RatioTestConfig,
    stream: StreamSeed,
) -> Result<RatioTestReport, AuditError> {
    if cfg.samples < MIN_AUDIT_SAMPLES {
        return Err(AuditError::TooFewSamples(cfg.samples));
    }
    let contract = build_contract(dists, params.c, params.epsilon)?;
    let side_a = collect_statistic(
        &pair.types_a,
        dists,
        &contract,
        params,
        cfg.samples,
        stream.child("estimate/a"),
        |o| o.estimate,
    )?;
    let side_b = collect_statistic(
        &pair.types_b,
        dists,
        &contract,
        params,
        cfg.samples,
        stream.child("estimate/b"),
        |o| o.estimate,
    )?;
    histogram_ratio_test(&side_a, &side_b, epsilon_target, cfg, false)
}

/// Audit one player's payment across an adjacent pair. The zero-payment atom
/// (rejection on either side) gets a dedicated point-mass bin.
pub fn audit_payment_dp(
    pair: &AdjacentPair,
    dists: &[CostDistribution],
    params: &MechanismParams,
    player_index: usize,
    epsilon_target: f64,
    cfg: &RatioTestConfig,
    stream: StreamSeed,
) -> Result<RatioTestReport, AuditError> {
    if cfg.samples < MIN_AUDIT_SAMPLES {
        return Err(AuditError::TooFewSamples(cfg.samples));
    }
    if player_index >= pair.types_a.len() {
        return Err(AuditError::PlayerOutOfRange(player_index));
    }
    let contract = build_contract(dists, params.c, params.epsilon)?;
    let side_a = collect_statistic(
        &pair.types_a,
        dists,
        &contract,
        params,
        cfg.samples,
        stream.child("payment/a"),
        |o| o.payments[player_index],
    )?;
    let side_b = collect_statistic(
        &pair.types_b,
        dists,
        &contract,
        params,
        cfg.samples,
        stream.child("payment/b"),
        |o| o.payments[player_index],
    )?;
    histogram_ratio_test(&side_a, &side_b, epsilon_target, cfg, true)
}

/// A pair of shifted Laplace variables, the analytic base case of the
/// mutual-boundedness lemmas: `x_s = center_s + Lap(scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacePair {
    pub center_a: f64,
    pub center_b: f64,
    pub scale: f64,
}

impl LaplacePair {
    /// The exact worst-case log density ratio, `|center_a - center_b| / scale`.
    pub fn max_log_ratio(&self) -> f64 {
        (self.center_a - self.center_b).abs() / self.scale
    }
}

/// Push a Laplace-shift pair through an arbitrary function and re-run the
/// ratio audit on the images: post-processing must not degrade the bound.
pub fn postprocessing_check(
    pair: &LaplacePair,
    f: impl Fn(f64) -> f64,
    epsilon_target: f64,
    cfg: &RatioTestConfig,
    stream: StreamSeed,
) -> Result<RatioTestReport, AuditError> {
    if cfg.samples < MIN_AUDIT_SAMPLES {
        return Err(AuditError::TooFewSamples(cfg.samples));
    }
    let mut rng_a = stream.child("post/a").rng();
    let mut rng_b = stream.child("post/b").rng();
    let side_a: Vec<f64> =
        (0..cfg.samples).map(|_| f(pair.center_a + sample_laplace(pair.scale, &mut rng_a))).collect();
    let side_b: Vec<f64> =
        (0..cfg.samples).map(|_| f(pair.center_b + sample_laplace(pair.scale, &mut rng_b))).collect();
    histogram_ratio_test(&side_a, &side_b, epsilon_target, cfg, false)
}
