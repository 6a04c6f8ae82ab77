//! Type-indexed posted-price contracts.
//!
//! The contract offers every player of type `j` an expected payment
//! `epsilon * alpha_j`, where `alpha_j` sits at the `c`-quantile of `F_j`, so
//! that a truthful player of *any* type accepts with probability exactly `c`.
//! When no exact quantile exists (discrete or oracle CDFs) the offer is
//! randomized over the bracketing pair of prices.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dist::{CostDistribution, DistError, Quantile};

#[derive(Debug, Error, PartialEq)]
pub enum ContractError {
    #[error("acceptance probability {0} outside (0,1)")]
    AcceptanceOutOfRange(f64),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("type {type_index}: {source}")]
    Quantile { type_index: usize, source: DistError },
    #[error("contract has no real offer for any type")]
    NoRealOffer,
}

/// Payment offer for a single type: a fixed price, or a lottery over two
/// prices. `lo == None` is a null offer (no price is posted on that branch,
/// so acceptance is impossible there); it arises when the distribution has no
/// mass strictly below the target acceptance probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PaymentOffer {
    Deterministic(f64),
    Randomized { lo: Option<f64>, hi: f64, beta: f64 },
}

impl PaymentOffer {
    /// Draw the realized price. `None` means the null branch came up.
    pub fn realize(&self, rng: &mut impl Rng) -> Option<f64> {
        match *self {
            PaymentOffer::Deterministic(alpha) => Some(alpha),
            PaymentOffer::Randomized { lo, hi, beta } => {
                let u: f64 = rng.gen();
                if u < beta {
                    Some(hi)
                } else {
                    lo
                }
            }
        }
    }

    /// Expected posted price, counting the null branch as zero.
    pub fn expected_price(&self) -> f64 {
        match *self {
            PaymentOffer::Deterministic(alpha) => alpha,
            PaymentOffer::Randomized { lo, hi, beta } => lo.unwrap_or(0.0) * (1.0 - beta) + hi * beta,
        }
    }

    /// Largest price the offer can realize.
    pub fn upper_price(&self) -> f64 {
        match *self {
            PaymentOffer::Deterministic(alpha) => alpha,
            PaymentOffer::Randomized { hi, .. } => hi,
        }
    }

    /// Smallest *real* price the offer can realize (the null branch never
    /// pays, so it does not count).
    pub fn lower_real_price(&self) -> f64 {
        match *self {
            PaymentOffer::Deterministic(alpha) => alpha,
            PaymentOffer::Randomized { lo, hi, .. } => lo.unwrap_or(hi),
        }
    }

    /// Probability that a truthful player holding this offer accepts, given
    /// their cost CDF.
    pub fn acceptance_probability(&self, dist: &CostDistribution) -> f64 {
        match *self {
            PaymentOffer::Deterministic(alpha) => dist.cdf_eval(alpha),
            PaymentOffer::Randomized { lo, hi, beta } => {
                let lo_accept = lo.map_or(0.0, |a| dist.cdf_eval(a));
                (1.0 - beta) * lo_accept + beta * dist.cdf_eval(hi)
            }
        }
    }
}

/// The full contract: one offer per type, the common acceptance probability
/// `c`, the payment-noise span `gamma`, and the privacy parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contract {
    pub offers: Vec<PaymentOffer>,
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// Build the contract for `dists` so that every type accepts with probability
/// exactly `c` under truthful play.
pub fn build_contract(
    dists: &[CostDistribution],
    c: f64,
    epsilon: f64,
) -> Result<Contract, ContractError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(ContractError::AcceptanceOutOfRange(c));
    }
    if !(epsilon > 0.0) {
        return Err(ContractError::NonPositiveEpsilon(epsilon));
    }
    let mut offers = Vec::with_capacity(dists.len());
    for (j, dist) in dists.iter().enumerate() {
        let q = dist
            .quantile(c)
            .map_err(|source| ContractError::Quantile { type_index: j, source })?;
        let offer = match q {
            Quantile::Exact(alpha) => PaymentOffer::Deterministic(alpha),
            Quantile::Bracket { lo, lo_cdf, hi, hi_cdf } => {
                debug_assert!(lo_cdf < c && c < hi_cdf);
                let beta = (c - lo_cdf) / (hi_cdf - lo_cdf);
                PaymentOffer::Randomized { lo, hi, beta }
            }
        };
        offers.push(offer);
    }
    let upper = offers.iter().map(|o| o.upper_price()).fold(f64::NEG_INFINITY, f64::max);
    let lower = offers.iter().map(|o| o.lower_real_price()).fold(f64::INFINITY, f64::min);
    if !upper.is_finite() || !lower.is_finite() {
        return Err(ContractError::NoRealOffer);
    }
    let gamma = (upper - lower).max(0.0);
    Ok(Contract { offers, c, gamma, epsilon })
}

impl Contract {
    pub fn type_count(&self) -> usize {
        self.offers.len()
    }

    /// Realize the offer for a player of the given type.
    pub fn realize_offer(&self, player_type: usize, rng: &mut impl Rng) -> Option<f64> {
        self.offers[player_type].realize(rng)
    }
}
