//! The posted-price estimation mechanism and its parameter formulas.
//!
//! One run: every player gets their type's offer realized, truthful players
//! accept when the price covers their cost, the count `m` of accepters with
//! the target type is Laplace-noised and rescaled into the estimate, and each
//! accepter is paid `epsilon * (price + Lap(gamma/epsilon))`. Payments may go
//! negative and are never clamped: the privacy argument needs the full
//! Laplace support.

use serde::Serialize;
use thiserror::Error;

use crate::agents::{decide, Population, Strategy};
use crate::contract::Contract;
use crate::dist::sample_laplace;
use crate::rng::StreamSeed;

#[derive(Debug, Error, PartialEq)]
pub enum MechanismError {
    #[error("population uses {pop} types but contract offers {contract}")]
    TypeCountMismatch { pop: usize, contract: usize },
    #[error("params (c={params_c}, eps={params_eps}) disagree with contract (c={contract_c}, eps={contract_eps})")]
    ParamsMismatch { params_c: f64, params_eps: f64, contract_c: f64, contract_eps: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("budget {budget} below the minimum feasible expected payment {minimum}")]
    BudgetInfeasible { budget: f64, minimum: f64 },
    #[error("attribute {0} out of range [1, {1}]")]
    AttributeOutOfRange(usize, usize),
    #[error("type space h^d overflows")]
    TypeSpaceOverflow,
}

/// Run parameters. `c = 1` is accepted as the degenerate full-sampling limit
/// used by noiseless tests; contract construction itself requires `c < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanismParams {
    pub epsilon: f64,
    pub c: f64,
    pub target_type: usize,
    /// Test hook: forces every Laplace draw to zero. Never a default.
    pub noise_off: bool,
}

impl MechanismParams {
    pub fn new(epsilon: f64, c: f64, target_type: usize) -> Result<Self, MechanismError> {
        if !(epsilon > 0.0) {
            return Err(MechanismError::InvalidParameter(format!("epsilon {epsilon}")));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(MechanismError::InvalidParameter(format!("c {c}")));
        }
        Ok(MechanismParams { epsilon, c, target_type, noise_off: false })
    }

    pub fn with_noise_off(mut self, noise_off: bool) -> Self {
        self.noise_off = noise_off;
        self
    }
}

/// Everything one run produced, with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismOutcome {
    /// Truncated estimate, always in `[0, n]`.
    pub estimate: f64,
    /// Pre-truncation estimate `(m + Lap(1/eps)) / c`.
    pub raw_estimate: f64,
    pub payments: Vec<f64>,
    pub accepted: Vec<bool>,
    /// `m`: accepters holding the target type.
    pub target_accepted: usize,
    pub seed: u64,
    pub estimate_noise: f64,
    pub payment_noise: Vec<f64>,
    pub realized_offers: Vec<Option<f64>>,
}

impl MechanismOutcome {
    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }

    pub fn total_payment(&self) -> f64 {
        self.payments.iter().sum()
    }
}

/// Execute one run of the mechanism under truthful play.
pub fn run_mechanism(
    population: &Population,
    contract: &Contract,
    params: &MechanismParams,
    stream: StreamSeed,
) -> Result<MechanismOutcome, MechanismError> {
    if population.type_count != contract.type_count() {
        return Err(MechanismError::TypeCountMismatch {
            pop: population.type_count,
            contract: contract.type_count(),
        });
    }
    if params.c != contract.c || params.epsilon != contract.epsilon {
        return Err(MechanismError::ParamsMismatch {
            params_c: params.c,
            params_eps: params.epsilon,
            contract_c: contract.c,
            contract_eps: contract.epsilon,
        });
    }
    if params.target_type >= contract.type_count() {
        return Err(MechanismError::InvalidParameter(format!(
            "target type {} out of range",
            params.target_type
        )));
    }

    let n = population.len();
    let mut rng = stream.rng();

    // fixed draw order: offers, then estimate noise, then payment noise
    let mut realized_offers = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    let mut m = 0usize;
    for i in 0..n {
        let offer = contract.realize_offer(population.types[i], &mut rng);
        let accepts = decide(Strategy::Truthful, offer, population.costs[i]);
        if accepts && population.types[i] == params.target_type {
            m += 1;
        }
        realized_offers.push(offer);
        accepted.push(accepts);
    }

    let estimate_noise = if params.noise_off {
        0.0
    } else {
        sample_laplace(1.0 / params.epsilon, &mut rng)
    };
    let raw_estimate = (m as f64 + estimate_noise) / params.c;
    let estimate = raw_estimate.clamp(0.0, n as f64);

    let payment_scale = contract.gamma / params.epsilon;
    let mut payments = vec![0.0; n];
    let mut payment_noise = vec![0.0; n];
    for i in 0..n {
        if accepted[i] {
            let noise = if params.noise_off || payment_scale == 0.0 {
                0.0
            } else {
                sample_laplace(payment_scale, &mut rng)
            };
            let price = realized_offers[i].expect("accepted offers are real");
            payment_noise[i] = noise;
            payments[i] = params.epsilon * (price + noise);
        }
    }

    Ok(MechanismOutcome {
        estimate,
        raw_estimate,
        payments,
        accepted,
        target_accepted: m,
        seed: stream.seed(),
        estimate_noise,
        payment_noise,
        realized_offers,
    })
}

/// The Chebyshev accuracy bound: with probability at least 2/3,
/// `|s_hat - n1|` stays below `sqrt(3 (n1 (1-c)/c + 2/(eps^2 c^2)))`.
pub fn accuracy_bound(n1: u64, c: f64, epsilon: f64) -> f64 {
    assert!(c > 0.0 && c <= 1.0, "c in (0,1]");
    assert!(epsilon > 0.0, "epsilon > 0");
    (3.0 * (n1 as f64 * (1.0 - c) / c + 2.0 / (epsilon * epsilon * c * c))).sqrt()
}

/// Pick `(c, epsilon)` so the mechanism is `k`-accurate:
/// `c = 1/(1 + k^2/6n)`, `epsilon = 2 sqrt(3) (1 + k^2/6n) / k`.
pub fn params_for_accuracy(k: f64, n: u64) -> Result<(f64, f64), MechanismError> {
    if !(k > 0.0) || n == 0 {
        return Err(MechanismError::InvalidParameter(format!("k {k}, n {n}")));
    }
    let growth = 1.0 + k * k / (6.0 * n as f64);
    let c = 1.0 / growth;
    let epsilon = 2.0 * 3.0f64.sqrt() * growth / k;
    Ok((c, epsilon))
}

/// Pick `(c, epsilon)` so the expected total payment equals the budget `B`,
/// with `c(eps) = (1 + sqrt(1 - 8/(eps^2 n))) / 2` and prices bounded by
/// `alpha_max`. Solves `eps * alpha_max * c(eps) * n = B` by bisection over
/// `eps` in `(sqrt(8/n), inf)`; the left side is strictly increasing there.
pub fn params_for_budget(budget: f64, n: u64, alpha_max: f64) -> Result<(f64, f64), MechanismError> {
    if !(budget > 0.0) || n == 0 || !(alpha_max > 0.0) {
        return Err(MechanismError::InvalidParameter(format!(
            "budget {budget}, n {n}, alpha_max {alpha_max}"
        )));
    }
    let nf = n as f64;
    let eps_min = (8.0 / nf).sqrt();
    let c_of = |eps: f64| (1.0 + (1.0 - 8.0 / (eps * eps * nf)).max(0.0).sqrt()) / 2.0;
    let total = |eps: f64| eps * alpha_max * c_of(eps) * nf;

    let minimum = total(eps_min);
    if budget <= minimum {
        return Err(MechanismError::BudgetInfeasible { budget, minimum });
    }
    let mut lo = eps_min;
    let mut hi = eps_min.max(1.0);
    while total(hi) < budget {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(MechanismError::InvalidParameter("budget solver diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (total(hi) - budget).abs() <= 1e-6 * budget {
            break;
        }
    }
    let eps = hi;
    Ok((c_of(eps), eps))
}

/// Flatten a `d`-attribute record with attributes in `[1, h]` into a single
/// type code in `[1, h^d]`: `1 + sum_j (attr_j - 1) h^j`. Bijective by
/// positional (base-`h`) encoding.
pub fn flatten_record(attributes: &[usize], h: usize) -> Result<usize, MechanismError> {
    if h == 0 {
        return Err(MechanismError::InvalidParameter("h must be >= 1".into()));
    }
    let mut code: usize = 0;
    let mut place: usize = 1;
    for &a in attributes {
        if a < 1 || a > h {
            return Err(MechanismError::AttributeOutOfRange(a, h));
        }
        code = code
            .checked_add((a - 1).checked_mul(place).ok_or(MechanismError::TypeSpaceOverflow)?)
            .ok_or(MechanismError::TypeSpaceOverflow)?;
        place = place.checked_mul(h).ok_or(MechanismError::TypeSpaceOverflow)?;
    }
    Ok(code + 1)
}
