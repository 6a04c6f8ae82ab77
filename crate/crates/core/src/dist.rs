//! Cost distributions and the Laplace noise source.
//!
//! Three representations are supported, mirroring how a contract can learn
//! the quantile `F^{-1}(c)`:
//!
//! * [`ContinuousDist`] — closed-form CDF, PDF and quantile;
//! * [`DiscreteDist`] — finitely many atoms, step CDF;
//! * [`OracleDist`] — the CDF is only available as a black-box query, so
//!   quantiles come back as a bisection bracket of width `< delta`.
//!
//! All distributions are immutable after construction and safe to share.
//! Sampling is inverse-transform throughout, so a seeded stream fully
//! determines every draw.

use rand::Rng;
use thiserror::Error;

use crate::rng::StreamSeed;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("probability {0} outside (0,1)")]
    ProbabilityOutOfRange(f64),
    #[error("oracle bracket [{lo}, {hi}] does not contain the {q}-quantile")]
    BracketMissesQuantile { lo: f64, hi: f64, q: f64 },
    #[error("cost {0} outside distribution support")]
    OutsideSupport(f64),
}

// ---------------------------------------------------------------------------
// Continuous distributions
// ---------------------------------------------------------------------------

/// A continuous cost distribution with closed-form CDF/PDF/quantile.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousDist {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Piecewise(PiecewiseDensity),
}

/// Piecewise-constant density on `[breaks[0], breaks[k]]`: `densities[i]`
/// holds on `[breaks[i], breaks[i+1])`. Total mass must be 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    breaks: Vec<f64>,
    densities: Vec<f64>,
    cum: Vec<f64>, // cum[i] = F(breaks[i])
}

impl PiecewiseDensity {
    pub fn new(breaks: Vec<f64>, densities: Vec<f64>) -> Result<Self, DistError> {
        if breaks.len() < 2 || densities.len() != breaks.len() - 1 {
            return Err(DistError::InvalidParameter(
                "piecewise density needs k+1 breakpoints for k densities".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DistError::InvalidParameter(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if densities.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(DistError::InvalidParameter("densities must be finite and >= 0".into()));
        }
        let mut cum = Vec::with_capacity(breaks.len());
        cum.push(0.0);
        for i in 0..densities.len() {
            cum.push(cum[i] + densities[i] * (breaks[i + 1] - breaks[i]));
        }
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DistError::InvalidParameter(format!(
                "piecewise density integrates to {total}, expected 1"
            )));
        }
        // Pin the endpoint exactly so cdf(support_hi) == 1.
        *cum.last_mut().unwrap() = 1.0;
        Ok(PiecewiseDensity { breaks, densities, cum })
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    fn segment_of(&self, z: f64) -> usize {
        // right-continuous: a breakpoint belongs to the segment on its right,
        // except the upper support end which belongs to the last segment.
        match self.breaks.binary_search_by(|b| b.total_cmp(&z)) {
            Ok(i) => i.min(self.densities.len() - 1),
            Err(i) => (i - 1).min(self.densities.len() - 1),
        }
    }
}

impl ContinuousDist {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DistError::InvalidParameter(format!("uniform bounds [{lo}, {hi}]")));
        }
        Ok(ContinuousDist::Uniform { lo, hi })
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(DistError::InvalidParameter(format!("exponential rate {rate}")));
        }
        Ok(ContinuousDist::Exponential { rate })
    }

    pub fn piecewise(breaks: Vec<f64>, densities: Vec<f64>) -> Result<Self, DistError> {
        Ok(ContinuousDist::Piecewise(PiecewiseDensity::new(breaks, densities)?))
    }

    pub fn support_lo(&self) -> f64 {
        match self {
            ContinuousDist::Uniform { lo, .. } => *lo,
            ContinuousDist::Exponential { .. } => 0.0,
            ContinuousDist::Piecewise(p) => p.breaks[0],
        }
    }

    pub fn support_hi(&self) -> f64 {
        match self {
            ContinuousDist::Uniform { hi, .. } => *hi,
            ContinuousDist::Exponential { .. } => f64::INFINITY,
            ContinuousDist::Piecewise(p) => *p.breaks.last().unwrap(),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            ContinuousDist::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            ContinuousDist::Exponential { rate } => {
                if v <= 0.0 {
                    0.0
                } else {
                    -(-rate * v).exp_m1()
                }
            }
            ContinuousDist::Piecewise(p) => {
                if v <= p.breaks[0] {
                    0.0
                } else if v >= *p.breaks.last().unwrap() {
                    1.0
                } else {
                    let i = p.segment_of(v);
                    (p.cum[i] + p.densities[i] * (v - p.breaks[i])).min(1.0)
                }
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        match self {
            ContinuousDist::Uniform { lo, hi } => {
                if v >= *lo && v <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            ContinuousDist::Exponential { rate } => {
                if v < 0.0 {
                    0.0
                } else {
                    rate * (-rate * v).exp()
                }
            }
            ContinuousDist::Piecewise(p) => {
                if v < p.breaks[0] || v > *p.breaks.last().unwrap() {
                    0.0
                } else {
                    p.densities[p.segment_of(v)]
                }
            }
        }
    }

    /// Closed-form quantile. For a flat CDF stretch returns its left endpoint.
    pub fn quantile(&self, q: f64) -> Result<f64, DistError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(DistError::ProbabilityOutOfRange(q));
        }
        Ok(match self {
            ContinuousDist::Uniform { lo, hi } => lo + q * (hi - lo),
            ContinuousDist::Exponential { rate } => -(-q).ln_1p() / rate,
            ContinuousDist::Piecewise(p) => {
                if q >= 1.0 {
                    return Ok(*p.breaks.last().unwrap());
                }
                // first segment whose cumulative mass reaches q
                let mut i = match p.cum.binary_search_by(|c| c.total_cmp(&q)) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                i = i.min(p.densities.len() - 1);
                if p.densities[i] == 0.0 {
                    p.breaks[i]
                } else {
                    p.breaks[i] + (q - p.cum[i]) / p.densities[i]
                }
            }
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        self.quantile(u).expect("u in [0,1)")
    }
}

// ---------------------------------------------------------------------------
// Discrete distributions
// ---------------------------------------------------------------------------

/// Finitely many atoms with strictly increasing values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    cum: Vec<f64>, // cum[i] = F(atoms[i])
}

impl DiscreteDist {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self, DistError> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(DistError::InvalidParameter(
                "atoms and probs must be equal-length and non-empty".into(),
            ));
        }
        if atoms.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DistError::InvalidParameter("atoms must be strictly increasing".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0)) {
            return Err(DistError::InvalidParameter("all probabilities must be > 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DistError::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(DiscreteDist { atoms, probs, cum })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self.atoms.binary_search_by(|a| a.total_cmp(&v)) {
            Ok(i) => self.cum[i],
            Err(0) => 0.0,
            Err(i) => self.cum[i - 1],
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        let i = self.cum.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
        self.atoms[i]
    }
}

// ---------------------------------------------------------------------------
// Oracle distributions
// ---------------------------------------------------------------------------

/// A distribution whose CDF is only available through point queries.
///
/// The wrapped closed form is deliberately private: contract construction can
/// only see `cdf_query` and the bisection bracket, which is the point of the
/// oracle model.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDist {
    inner: ContinuousDist,
    bracket_lo: f64,
    bracket_hi: f64,
    delta: f64,
}

impl OracleDist {
    pub fn new(inner: ContinuousDist, delta: f64) -> Result<Self, DistError> {
        let bracket_lo = inner.support_lo();
        // unbounded support needs a finite search bracket; cover all but 1e-12 mass
        let bracket_hi = if inner.support_hi().is_finite() {
            inner.support_hi()
        } else {
            inner.quantile(1.0 - 1e-12)?
        };
        Self::with_bracket(inner, delta, bracket_lo, bracket_hi)
    }

    /// Oracle with an explicit search bracket, for callers that know the
    /// range of quantiles they will query.
    pub fn with_bracket(
        inner: ContinuousDist,
        delta: f64,
        bracket_lo: f64,
        bracket_hi: f64,
    ) -> Result<Self, DistError> {
        if !(delta > 0.0) {
            return Err(DistError::InvalidParameter(format!("oracle delta {delta}")));
        }
        if !(bracket_lo < bracket_hi) || !bracket_lo.is_finite() || !bracket_hi.is_finite() {
            return Err(DistError::InvalidParameter(format!(
                "oracle bracket [{bracket_lo}, {bracket_hi}]"
            )));
        }
        Ok(OracleDist { inner, bracket_lo, bracket_hi, delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bracket(&self) -> (f64, f64) {
        (self.bracket_lo, self.bracket_hi)
    }

    /// The black-box CDF query.
    pub fn cdf_query(&self, v: f64) -> f64 {
        self.inner.cdf(v)
    }

    /// Binary search for a bracket `(lo, hi)` with `F(lo) < q < F(hi)` and
    /// `hi - lo < delta`. The bracket invariant is asserted on every call.
    pub fn quantile_bracket(&self, q: f64) -> Result<(f64, f64), DistError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DistError::ProbabilityOutOfRange(q));
        }
        let (mut lo, mut hi) = (self.bracket_lo, self.bracket_hi);
        if !(self.cdf_query(lo) < q && q < self.cdf_query(hi)) {
            return Err(DistError::BracketMissesQuantile { lo, hi, q });
        }
        while hi - lo >= self.delta {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break; // interval at float resolution
            }
            let f = self.cdf_query(mid);
            if f < q {
                lo = mid;
            } else if f > q {
                hi = mid;
            } else {
                // exact hit: shrink symmetrically, keeping mid interior
                lo = mid - 0.25 * (mid - lo);
                hi = mid + 0.25 * (hi - mid);
            }
        }
        assert!(
            self.cdf_query(lo) < q && q < self.cdf_query(hi),
            "oracle bisection lost the bracket invariant"
        );
        Ok((lo, hi))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        // inverse transform through the oracle: bisect the CDF to float resolution
        let u: f64 = rng.gen();
        if u <= self.cdf_query(self.bracket_lo) {
            return self.bracket_lo;
        }
        let (mut lo, mut hi) = (self.bracket_lo, self.bracket_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf_query(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

// ---------------------------------------------------------------------------
// Unified cost-distribution interface
// ---------------------------------------------------------------------------

/// Any of the three cost-distribution kinds, as declared in an experiment
/// config.
#[derive(Debug, Clone, PartialEq)]
pub enum CostDistribution {
    Continuous(ContinuousDist),
    Discrete(DiscreteDist),
    Oracle(OracleDist),
}

/// Result of a quantile query: either an exact hit or a bracket.
///
/// `lo == None` encodes "no support strictly below the target probability"
/// (`c^- = 0`); the contract layer turns that into a null offer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantile {
    Exact(f64),
    Bracket { lo: Option<f64>, lo_cdf: f64, hi: f64, hi_cdf: f64 },
}

impl CostDistribution {
    /// `F(v)`, uniformly over the three kinds.
    pub fn cdf_eval(&self, v: f64) -> f64 {
        match self {
            CostDistribution::Continuous(d) => d.cdf(v),
            CostDistribution::Discrete(d) => d.cdf(v),
            CostDistribution::Oracle(d) => d.cdf_query(v),
        }
    }

    /// Quantile of level `q`, reported per kind:
    /// continuous exactly, oracle as a `< delta` bracket, discrete as an exact
    /// atom when one exists and as the bracketing pair of atoms otherwise.
    pub fn quantile(&self, q: f64) -> Result<Quantile, DistError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DistError::ProbabilityOutOfRange(q));
        }
        match self {
            CostDistribution::Continuous(d) => Ok(Quantile::Exact(d.quantile(q)?)),
            CostDistribution::Oracle(d) => {
                let (lo, hi) = d.quantile_bracket(q)?;
                Ok(Quantile::Bracket {
                    lo: Some(lo),
                    lo_cdf: d.cdf_query(lo),
                    hi,
                    hi_cdf: d.cdf_query(hi),
                })
            }
            CostDistribution::Discrete(d) => {
                // exact hit at an atom?
                for (i, &a) in d.atoms.iter().enumerate() {
                    if (d.cum[i] - q).abs() <= 1e-12 {
                        return Ok(Quantile::Exact(a));
                    }
                }
                let below = d
                    .atoms
                    .iter()
                    .zip(&d.cum)
                    .take_while(|(_, &c)| c < q)
                    .last()
                    .map(|(&a, &c)| (a, c));
                let (hi, hi_cdf) = d
                    .atoms
                    .iter()
                    .zip(&d.cum)
                    .find(|(_, &c)| c > q)
                    .map(|(&a, &c)| (a, c))
                    .expect("cum reaches 1 > q");
                match below {
                    Some((lo, lo_cdf)) => Ok(Quantile::Bracket { lo: Some(lo), lo_cdf, hi, hi_cdf }),
                    None => Ok(Quantile::Bracket { lo: None, lo_cdf: 0.0, hi, hi_cdf }),
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            CostDistribution::Continuous(d) => d.sample(rng),
            CostDistribution::Discrete(d) => d.sample(rng),
            CostDistribution::Oracle(d) => d.sample(rng),
        }
    }

    pub fn sample_stream(&self, stream: StreamSeed) -> f64 {
        self.sample(&mut stream.rng())
    }
}

// ---------------------------------------------------------------------------
// Laplace noise
// ---------------------------------------------------------------------------

/// Parameters of a mean-zero Laplace noise source, density
/// `f(x) = exp(-|x|/b) / (2b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    scale: f64,
}

impl NoiseSpec {
    pub fn new(scale: f64) -> Result<Self, DistError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(DistError::InvalidParameter(format!("laplace scale {scale}")));
        }
        Ok(NoiseSpec { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        sample_laplace(self.scale, rng)
    }

    pub fn density(&self, x: f64) -> f64 {
        (-x.abs() / self.scale).exp() / (2.0 * self.scale)
    }
}

/// One draw from `Lap(scale)` by inverse transform.
pub fn sample_laplace(scale: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(scale > 0.0);
    let u = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    let e = u - 0.5;
    -scale * e.signum() * (1.0 - 2.0 * e.abs()).ln()
}

/// Analytic maximum of `|ln f_a(x) - ln f_b(x)|` over a grid, where `f_a`,
/// `f_b` are Laplace densities with the given centers and common scale.
/// For the Laplace family this equals `|center_a - center_b| / scale`
/// everywhere outside the interval between the centers.
pub fn laplace_shift_max_log_ratio(center_a: f64, center_b: f64, scale: f64, grid: usize) -> f64 {
    let span = 8.0 * scale + (center_a - center_b).abs();
    let lo = center_a.min(center_b) - span;
    let hi = center_a.max(center_b) + span;
    let mut max_ratio = 0.0f64;
    for i in 0..=grid {
        let x = lo + (hi - lo) * i as f64 / grid as f64;
        let la = -(x - center_a).abs() / scale;
        let lb = -(x - center_b).abs() / scale;
        max_ratio = max_ratio.max((la - lb).abs());
    }
    max_ratio
}
