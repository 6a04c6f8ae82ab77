//! Player populations, decision rules, and the incentive audits.
//!
//! A player's utility is `p_i - epsilon * x_i * v_i`: they are paid `p_i`,
//! and bear the privacy cost `epsilon * v_i` exactly when their data is read
//! (`x_i = 1`), which in this mechanism happens iff they accept the contract.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::contract::Contract;
use crate::dist::{sample_laplace, CostDistribution};
use crate::rng::StreamSeed;
use crate::stats::RunningStats;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("player type {found} out of range for {type_count} types")]
    TypeOutOfRange { found: usize, type_count: usize },
    #[error("player index {0} out of range")]
    PlayerOutOfRange(usize),
    #[error("replications must be >= 1000, got {0}")]
    TooFewReplications(usize),
}

/// A database of player types together with the costs drawn from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub types: Vec<usize>,
    pub costs: Vec<f64>,
    pub type_count: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// Draw costs for `types`, each from the distribution matching its type.
pub fn draw_population(
    types: &[usize],
    dists: &[CostDistribution],
    rng: &mut impl Rng,
) -> Result<Population, AgentError> {
    let mut costs = Vec::with_capacity(types.len());
    for &t in types {
        if t >= dists.len() {
            return Err(AgentError::TypeOutOfRange { found: t, type_count: dists.len() });
        }
        costs.push(dists[t].sample(rng));
    }
    Ok(Population { types: types.to_vec(), costs, type_count: dists.len() })
}

/// How a player responds to the realized offer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Strategy {
    /// Accept iff the realized price covers the cost.
    Truthful,
    /// Accept iff `v <= price + shift`.
    ThresholdShift(f64),
    AlwaysAccept,
    AlwaysReject,
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Truthful => "truthful".into(),
            Strategy::ThresholdShift(s) => format!("shift{s:+}"),
            Strategy::AlwaysAccept => "always-accept".into(),
            Strategy::AlwaysReject => "always-reject".into(),
        }
    }
}

/// The accept/reject decision. A null offer (`None`) posts no price, so
/// acceptance is impossible regardless of strategy.
pub fn decide(strategy: Strategy, realized_offer: Option<f64>, cost: f64) -> bool {
    let Some(price) = realized_offer else {
        return false;
    };
    match strategy {
        Strategy::Truthful => cost <= price,
        Strategy::ThresholdShift(shift) => cost <= price + shift,
        Strategy::AlwaysAccept => true,
        Strategy::AlwaysReject => false,
    }
}

/// The deviation set used by the audits: threshold shifts of
/// `{-0.5, -0.1, +0.1, +0.5} * alpha` plus the two constant strategies. With
/// posted offers the accept threshold is the only behavioral freedom, so
/// shifts span the deviation space.
pub fn default_deviations(alpha: f64) -> Vec<Strategy> {
    vec![
        Strategy::ThresholdShift(-0.5 * alpha),
        Strategy::ThresholdShift(-0.1 * alpha),
        Strategy::ThresholdShift(0.1 * alpha),
        Strategy::ThresholdShift(0.5 * alpha),
        Strategy::AlwaysAccept,
        Strategy::AlwaysReject,
    ]
}

/// Own-cost grid for the audited player: below, at, and above the offer.
pub fn own_cost_grid(expected_offer: f64) -> [f64; 5] {
    [0.5, 0.9, 1.0, 1.1, 1.5].map(|m| m * expected_offer)
}

/// One cell of the BIC audit: how much worse the deviation does than
/// truth-telling at a fixed own cost.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub deviation: String,
    pub own_cost: f64,
    pub utility_gap: f64,
    pub ci_halfwidth: f64,
    pub replications: usize,
}

fn utility(
    epsilon: f64,
    offer: Option<f64>,
    payment_noise: f64,
    strategy: Strategy,
    cost: f64,
) -> f64 {
    if decide(strategy, offer, cost) {
        let price = offer.expect("accepted offers are real");
        epsilon * (price + payment_noise) - epsilon * cost
    } else {
        0.0
    }
}

/// Estimate `E[u | truthful] - E[u | deviation]` for the audited player at
/// each grid cost, with every other player truthful and all costs redrawn per
/// replication. Paired (common-random-number) differences keep the
/// confidence intervals tight.
pub fn audit_bic(
    contract: &Contract,
    dists: &[CostDistribution],
    types: &[usize],
    player_index: usize,
    deviations: &[Strategy],
    replications: usize,
    stream: StreamSeed,
) -> Result<Vec<DeviationReport>, AgentError> {
    if replications < 1000 {
        return Err(AgentError::TooFewReplications(replications));
    }
    if player_index >= types.len() {
        return Err(AgentError::PlayerOutOfRange(player_index));
    }
    let player_type = types[player_index];
    if player_type >= contract.type_count() {
        return Err(AgentError::TypeOutOfRange {
            found: player_type,
            type_count: contract.type_count(),
        });
    }
    let offer = &contract.offers[player_type];
    let grid = own_cost_grid(offer.expected_price());
    let noise_scale = contract.gamma / contract.epsilon;

    let mut reports = Vec::new();
    for (gi, &own_cost) in grid.iter().enumerate() {
        let mut gap_stats = vec![RunningStats::new(); deviations.len()];
        let cell = stream.child_index("bic/grid", gi as u64);
        for rep in 0..replications {
            let mut rng = cell.child_index("rep", rep as u64).rng();
            // environment: everyone else's costs (truthful play), the
            // audited player's realized offer, and their payment noise
            let _others = draw_population(types, dists, &mut rng)?;
            let realized = contract.realize_offer(player_type, &mut rng);
            let noise = if noise_scale > 0.0 { sample_laplace(noise_scale, &mut rng) } else { 0.0 };

            let u_truthful = utility(contract.epsilon, realized, noise, Strategy::Truthful, own_cost);
            for (di, &dev) in deviations.iter().enumerate() {
                let u_dev = utility(contract.epsilon, realized, noise, dev, own_cost);
                gap_stats[di].push(u_truthful - u_dev);
            }
        }
        for (di, dev) in deviations.iter().enumerate() {
            reports.push(DeviationReport {
                deviation: dev.label(),
                own_cost,
                utility_gap: gap_stats[di].mean(),
                ci_halfwidth: gap_stats[di].ci_halfwidth(),
                replications,
            });
        }
    }
    Ok(reports)
}

/// Per-type interim utility of truthful players who accepted.
#[derive(Debug, Clone, Serialize)]
pub struct TypeUtilityReport {
    pub player_type: usize,
    pub mean_utility: f64,
    pub ci_halfwidth: f64,
    pub accepted: u64,
    pub simulated: usize,
}

/// Estimate the expected utility of accepting truthful players, per type
/// present in the database.
pub fn audit_eiir(
    contract: &Contract,
    dists: &[CostDistribution],
    types: &[usize],
    replications: usize,
    stream: StreamSeed,
) -> Result<Vec<TypeUtilityReport>, AgentError> {
    if replications < 1000 {
        return Err(AgentError::TooFewReplications(replications));
    }
    let mut present: Vec<usize> = types.to_vec();
    present.sort_unstable();
    present.dedup();
    let noise_scale = contract.gamma / contract.epsilon;

    let mut reports = Vec::new();
    for &t in &present {
        if t >= dists.len() || t >= contract.type_count() {
            return Err(AgentError::TypeOutOfRange { found: t, type_count: dists.len() });
        }
        let mut rng = stream.child_index("eiir/type", t as u64).rng();
        let mut stats = RunningStats::new();
        for _ in 0..replications {
            let cost = dists[t].sample(&mut rng);
            let realized = contract.realize_offer(t, &mut rng);
            if decide(Strategy::Truthful, realized, cost) {
                let noise =
                    if noise_scale > 0.0 { sample_laplace(noise_scale, &mut rng) } else { 0.0 };
                let price = realized.expect("accepted offers are real");
                stats.push(contract.epsilon * (price + noise) - contract.epsilon * cost);
            }
        }
        reports.push(TypeUtilityReport {
            player_type: t,
            mean_utility: stats.mean(),
            ci_halfwidth: stats.ci_halfwidth(),
            accepted: stats.count,
            simulated: replications,
        });
    }
    Ok(reports)
}

/// Empirical truthful acceptance rate per type: `samples` simulated players
/// of each type listed. Operationalizes the perfect-data-privacy property
/// (the acceptance event carries no information about the type).
pub fn acceptance_rates(
    contract: &Contract,
    dists: &[CostDistribution],
    samples: usize,
    stream: StreamSeed,
) -> Vec<f64> {
    let mut rates = Vec::with_capacity(dists.len());
    for (t, dist) in dists.iter().enumerate() {
        let mut rng = stream.child_index("accept/type", t as u64).rng();
        let mut accepted = 0usize;
        for _ in 0..samples {
            let cost = dist.sample(&mut rng);
            let realized = contract.realize_offer(t, &mut rng);
            if decide(Strategy::Truthful, realized, cost) {
                accepted += 1;
            }
        }
        rates.push(accepted as f64 / samples as f64);
    }
    rates
}
