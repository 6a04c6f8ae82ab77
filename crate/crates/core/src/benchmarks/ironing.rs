//! Virtual costs and the ironed virtual-cost curve.
//!
//! Working in quantile space `q = F(v)`, let `h(q) = phi(F^{-1}(q))` and
//! `H(q)` its running integral. `G` is the lower convex envelope of `H`; its
//! slope `g` is nondecreasing, and the ironed virtual cost is
//! `phi_bar(z) = g(F(z))`. Wherever `G < H` the envelope is a straight
//! chord, so `phi_bar` is flat there: those are the ironed intervals, the
//! stretches where ranking by raw `phi` would be non-monotone.

use thiserror::Error;

use crate::dist::{ContinuousDist, DistError};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("cost {0} outside distribution support")]
    OutsideSupport(f64),
    #[error("density must be positive on the whole support (violated near cost {0})")]
    ZeroDensity(f64),
    #[error("w = {w} out of range for n = {n} players")]
    WOutOfRange { w: usize, n: usize },
    #[error("ironed interval starts at cost 0: the 2r bound does not apply")]
    BoundNotApplicable,
    #[error("distribution is not anti-regular: {0} ironed interval(s) present")]
    NotAntiRegular(usize),
    #[error("n must exceed {0}")]
    TooFewPlayers(usize),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Default quantile-grid resolution; boundary error `O(1/4096)` sits below
/// every tolerance used downstream.
pub const GRID_RESOLUTION: usize = 4096;

/// Relative threshold separating a real envelope gap from float noise.
const IRONING_THRESHOLD: f64 = 1e-7;

/// Quantile mass kept when the support is unbounded: curve construction
/// truncates at `F^{-1}(1 - 1e-6)` and reports it.
const UNBOUNDED_TAIL: f64 = 1e-6;

/// The virtual cost `phi(z) = z + F(z)/f(z)` of a distribution with positive
/// density.
#[derive(Debug, Clone)]
pub struct VirtualCostCurve {
    dist: ContinuousDist,
}

impl VirtualCostCurve {
    pub fn new(dist: ContinuousDist) -> Self {
        VirtualCostCurve { dist }
    }

    pub fn phi(&self, z: f64) -> Result<f64, BenchError> {
        virtual_cost(&self.dist, z)
    }

    pub fn dist(&self) -> &ContinuousDist {
        &self.dist
    }
}

/// `phi(z) = z + F(z)/f(z)`.
pub fn virtual_cost(dist: &ContinuousDist, z: f64) -> Result<f64, BenchError> {
    if z < dist.support_lo() || z > dist.support_hi() {
        return Err(BenchError::OutsideSupport(z));
    }
    let f = dist.pdf(z);
    if !(f > 0.0) {
        return Err(BenchError::ZeroDensity(z));
    }
    Ok(z + dist.cdf(z) / f)
}

/// A maximal stretch where the envelope sits strictly below `H`. Carried in
/// both quantile space and cost space; `phi_bar` is constant on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IronedInterval {
    pub q_lo: f64,
    pub q_hi: f64,
    pub cost_lo: f64,
    pub cost_hi: f64,
}

/// The ironed virtual-cost curve on a uniform quantile grid.
#[derive(Debug, Clone)]
pub struct IronedCurve {
    dist: ContinuousDist,
    resolution: usize,
    q_max: f64,
    h_integral: Vec<f64>,  // H at grid points
    envelope: Vec<f64>,    // G at grid points
    slopes: Vec<f64>,      // g, right-continuous per grid cell
    intervals: Vec<IronedInterval>,
    truncated: bool,
}

/// Build the curve at the default grid resolution.
pub fn build_ironed_curve(dist: &ContinuousDist) -> Result<IronedCurve, BenchError> {
    build_ironed_curve_with_resolution(dist, GRID_RESOLUTION)
}

pub fn build_ironed_curve_with_resolution(
    dist: &ContinuousDist,
    resolution: usize,
) -> Result<IronedCurve, BenchError> {
    assert!(resolution >= 16, "grid resolution too coarse");
    let truncated = !dist.support_hi().is_finite();
    let q_max = if truncated { 1.0 - UNBOUNDED_TAIL } else { 1.0 };
    let step = q_max / resolution as f64;

    // h(q) = phi(F^{-1}(q)); positive density is required everywhere
    let mut h = Vec::with_capacity(resolution + 1);
    for i in 0..=resolution {
        let q = i as f64 * step;
        let z = dist.quantile(q)?;
        h.push(virtual_cost(dist, z)?);
    }

    // H by cumulative trapezoid
    let mut big_h = Vec::with_capacity(resolution + 1);
    big_h.push(0.0);
    for i in 1..=resolution {
        big_h.push(big_h[i - 1] + 0.5 * (h[i - 1] + h[i]) * step);
    }

    // lower convex envelope by a monotone stack sweep; vertices are grid indices
    let mut hull: Vec<usize> = Vec::with_capacity(resolution + 1);
    for i in 0..=resolution {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // pop b unless the turn a -> b -> i is strictly convex
            let cross = (b - a) as f64 * (big_h[i] - big_h[a])
                - (big_h[b] - big_h[a]) * (i - a) as f64;
            if cross > 0.0 {
                break;
            }
            hull.pop();
        }
        hull.push(i);
    }

    // G at grid points: linear between hull vertices
    let mut envelope = vec![0.0; resolution + 1];
    for pair in hull.windows(2) {
        let (u, v) = (pair[0], pair[1]);
        let slope = (big_h[v] - big_h[u]) / ((v - u) as f64 * step);
        for i in u..=v {
            envelope[i] = big_h[u] + slope * (i - u) as f64 * step;
        }
    }

    // right-continuous slopes per grid cell, forward differences
    let mut slopes = Vec::with_capacity(resolution + 1);
    for i in 0..resolution {
        slopes.push((envelope[i + 1] - envelope[i]) / step);
    }
    slopes.push(*slopes.last().expect("resolution >= 16"));

    // ironed intervals: hull gaps with a real H - G excess
    let h_scale = big_h.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
    let mut intervals = Vec::new();
    for pair in hull.windows(2) {
        let (u, v) = (pair[0], pair[1]);
        if v - u <= 1 {
            continue;
        }
        let max_gap = (u + 1..v).map(|i| big_h[i] - envelope[i]).fold(0.0f64, f64::max);
        if max_gap > IRONING_THRESHOLD * h_scale {
            let q_lo = u as f64 * step;
            let q_hi = v as f64 * step;
            intervals.push(IronedInterval {
                q_lo,
                q_hi,
                cost_lo: dist.quantile(q_lo)?,
                cost_hi: dist.quantile(q_hi)?,
            });
        }
    }

    Ok(IronedCurve {
        dist: dist.clone(),
        resolution,
        q_max,
        h_integral: big_h,
        envelope,
        slopes,
        intervals,
        truncated,
    })
}

impl IronedCurve {
    pub fn dist(&self) -> &ContinuousDist {
        &self.dist
    }

    pub fn intervals(&self) -> &[IronedInterval] {
        &self.intervals
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h_integral
    }

    pub fn envelope_values(&self) -> &[f64] {
        &self.envelope
    }

    pub fn slope_values(&self) -> &[f64] {
        &self.slopes
    }

    pub fn grid_q(&self, i: usize) -> f64 {
        self.q_max * i as f64 / self.resolution as f64
    }

    /// `phi_bar(z) = g(F(z))`, right-continuous grid lookup. Beyond the
    /// truncation point of an unbounded support the last slope extends.
    pub fn ironed_virtual_cost(&self, z: f64) -> Result<f64, BenchError> {
        if z < self.dist.support_lo() || z > self.dist.support_hi() {
            return Err(BenchError::OutsideSupport(z));
        }
        let q = self.dist.cdf(z);
        let step = self.q_max / self.resolution as f64;
        let cell = ((q / step) as usize).min(self.resolution - 1);
        Ok(self.slopes[cell])
    }

    /// Index of the ironed interval containing cost `z`, if any. Intervals
    /// are half-open `[cost_lo, cost_hi)`.
    pub fn interval_of(&self, z: f64) -> Option<usize> {
        self.intervals.iter().position(|iv| z >= iv.cost_lo && z < iv.cost_hi)
    }

    /// Canonical position used to order players by ironed virtual cost:
    /// every cost inside an ironed interval collapses to the interval's left
    /// endpoint, so equal representatives mean equal `phi_bar` exactly.
    pub fn order_rep(&self, z: f64) -> f64 {
        match self.interval_of(z) {
            Some(k) => self.intervals[k].cost_lo,
            None => z,
        }
    }

    /// Worst stretch ratio `max cost_hi / cost_lo` over the ironed intervals;
    /// `None` when nothing is ironed. An interval starting at zero cost has
    /// no finite ratio.
    pub fn stretch_ratio(&self) -> Result<Option<f64>, BenchError> {
        if self.intervals.is_empty() {
            return Ok(None);
        }
        let mut r = 1.0f64;
        for iv in &self.intervals {
            if !(iv.cost_lo > 0.0) {
                return Err(BenchError::BoundNotApplicable);
            }
            r = r.max(iv.cost_hi / iv.cost_lo);
        }
        Ok(Some(r))
    }
}

/// The canonical non-monotone test density: 0.2 on `[0, 0.5)`, 1.8 on
/// `[0.5, 1]`. `phi` jumps down at 0.5, producing exactly one ironed
/// interval around `q = F(0.5) = 0.1`.
pub fn canonical_ironing_dist() -> ContinuousDist {
    ContinuousDist::piecewise(vec![0.0, 0.5, 1.0], vec![0.2, 1.8]).expect("valid density")
}
