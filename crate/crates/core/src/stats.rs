//! Small statistics helpers shared by the audits and benchmarks.

use serde::Serialize;

/// Width multiplier used for every reported confidence halfwidth:
/// three standard errors, so a bound of the form `x >= -ci_halfwidth`
/// fails spuriously with probability ~1e-3 per check.
pub const CI_SIGMAS: f64 = 3.0;

/// Streaming mean/variance accumulator. Merging two accumulators is exact,
/// so replication batches can be aggregated in any order.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct RunningStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &RunningStats) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.sum / self.count as f64
    }

    /// Sample variance (n-1 denominator).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let v = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        v.max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    pub fn ci_halfwidth(&self) -> f64 {
        CI_SIGMAS * self.std_error()
    }
}

/// A Monte-Carlo point estimate with its confidence halfwidth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub replications: u64,
}

impl Estimate {
    pub fn from_stats(stats: &RunningStats) -> Self {
        Estimate {
            mean: stats.mean(),
            ci_halfwidth: stats.ci_halfwidth(),
            replications: stats.count,
        }
    }

    /// Scale the estimate (and its halfwidth) by a constant.
    pub fn scaled(&self, factor: f64) -> Estimate {
        Estimate {
            mean: self.mean * factor,
            ci_halfwidth: self.ci_halfwidth * factor.abs(),
            replications: self.replications,
        }
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against a reference CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let fx = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((fx - lo).abs()).max((hi - fx).abs());
    }
    d
}
