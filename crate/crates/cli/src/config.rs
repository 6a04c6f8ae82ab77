//! Experiment configuration: a single TOML file, validated up front.
//!
//! Exactly one of `c`, `k`, `budget` selects how the mechanism parameters
//! are resolved (`k` and `budget` go through the closed-form selection
//! rules). The seed must be explicit: no wall-clock defaults anywhere.

use serde::{Deserialize, Serialize};

use procure::dist::{ContinuousDist, CostDistribution, DiscreteDist, OracleDist};
use procure::mechanism::{params_for_accuracy, params_for_budget, MechanismError};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Run,
    AuditDp,
    AuditBic,
    AccuracySweep,
    Benchmark,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::AuditDp => "audit-dp",
            ExperimentKind::AuditBic => "audit-bic",
            ExperimentKind::AccuracySweep => "accuracy-sweep",
            ExperimentKind::Benchmark => "benchmark",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,

    // exactly one of these three picks the parameter mode
    pub c: Option<f64>,
    pub k: Option<f64>,
    pub budget: Option<f64>,

    pub epsilon: Option<f64>,
    pub alpha_max: Option<f64>,
    #[serde(default)]
    pub target_type: usize,
    #[serde(default)]
    pub replications: usize,

    pub database: Option<DatabaseSpec>,
    #[serde(default)]
    pub distributions: Vec<DistSpec>,

    pub audit_dp: Option<AuditDpSpec>,
    pub audit_bic: Option<AuditBicSpec>,
    pub accuracy_sweep: Option<AccuracySweepSpec>,
    pub benchmark: Option<BenchmarkSpec>,
}

fn default_out_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseSpec {
    /// Per-type player counts (index = type).
    pub counts: Option<Vec<usize>>,
    /// Explicit 0-based type list, one entry per player.
    pub explicit: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    PiecewiseDensity { breaks: Vec<f64>, densities: Vec<f64> },
    Discrete { atoms: Vec<f64>, probs: Vec<f64> },
    Oracle {
        wrapped: Box<DistSpec>,
        delta: f64,
        bracket_lo: Option<f64>,
        bracket_hi: Option<f64>,
    },
}

impl DistSpec {
    pub fn build(&self) -> Result<CostDistribution, CliError> {
        Ok(match self {
            DistSpec::Uniform { lo, hi } => {
                CostDistribution::Continuous(ContinuousDist::uniform(*lo, *hi)?)
            }
            DistSpec::Exponential { rate } => {
                CostDistribution::Continuous(ContinuousDist::exponential(*rate)?)
            }
            DistSpec::PiecewiseDensity { breaks, densities } => CostDistribution::Continuous(
                ContinuousDist::piecewise(breaks.clone(), densities.clone())?,
            ),
            DistSpec::Discrete { atoms, probs } => {
                CostDistribution::Discrete(DiscreteDist::new(atoms.clone(), probs.clone())?)
            }
            DistSpec::Oracle { wrapped, delta, bracket_lo, bracket_hi } => {
                let inner = match wrapped.build()? {
                    CostDistribution::Continuous(d) => d,
                    _ => {
                        return Err(CliError::config(
                            "oracle distributions must wrap a continuous kind",
                        ))
                    }
                };
                let oracle = match (bracket_lo, bracket_hi) {
                    (Some(lo), Some(hi)) => OracleDist::with_bracket(inner, *delta, *lo, *hi)?,
                    (None, None) => OracleDist::new(inner, *delta)?,
                    _ => {
                        return Err(CliError::config(
                            "oracle bracket needs both bracket_lo and bracket_hi",
                        ))
                    }
                };
                CostDistribution::Oracle(oracle)
            }
        })
    }

    pub fn id(&self) -> String {
        match self {
            DistSpec::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            DistSpec::Exponential { rate } => format!("exponential({rate})"),
            DistSpec::PiecewiseDensity { breaks, .. } => {
                format!("piecewise({} segments)", breaks.len().saturating_sub(1))
            }
            DistSpec::Discrete { atoms, .. } => format!("discrete({} atoms)", atoms.len()),
            DistSpec::Oracle { wrapped, delta, .. } => format!("oracle({}, {delta})", wrapped.id()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditDpSpec {
    pub statistic: AuditStatistic,
    pub flip_index: usize,
    pub flip_to: usize,
    pub samples: usize,
    pub bins: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_min_bin_count")]
    pub min_bin_count: u64,
    /// Defaults to the resolved epsilon.
    pub epsilon_target: Option<f64>,
    /// Payment statistic only; defaults to `flip_index`.
    pub player_index: Option<usize>,
}

fn default_slack() -> f64 {
    1.1
}

fn default_min_bin_count() -> u64 {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditStatistic {
    Estimate,
    Payment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditBicSpec {
    pub player_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracySweepSpec {
    pub ks: Vec<f64>,
    pub n: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub ws: Vec<usize>,
    pub comparison: BenchmarkComparison,
    #[serde(default = "default_bench_slack")]
    pub slack: f64,
    #[serde(default)]
    pub dist_index: usize,
}

fn default_bench_slack() -> f64 {
    1.02
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkComparison {
    EnvyFree,
    Myerson,
}

/// How the mechanism parameters were fixed.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    C,
    K,
    Budget,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("TOML parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn param_mode(&self) -> Result<Option<ParamMode>, CliError> {
        let given = [self.c.is_some(), self.k.is_some(), self.budget.is_some()];
        let count = given.iter().filter(|&&g| g).count();
        match count {
            0 => Ok(None),
            1 => Ok(Some(if self.c.is_some() {
                ParamMode::C
            } else if self.k.is_some() {
                ParamMode::K
            } else {
                ParamMode::Budget
            })),
            _ => Err(CliError::config("provide exactly one of c, k, budget")),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mode = self.param_mode()?;
        match self.kind {
            ExperimentKind::Run | ExperimentKind::AuditDp | ExperimentKind::AuditBic => {
                if mode.is_none() {
                    return Err(CliError::config("provide exactly one of c, k, budget"));
                }
                if matches!(mode, Some(ParamMode::C)) && self.epsilon.is_none() {
                    return Err(CliError::config("epsilon is required when c is given"));
                }
                if matches!(mode, Some(ParamMode::Budget)) && self.alpha_max.is_none() {
                    return Err(CliError::config("alpha_max is required when budget is given"));
                }
                if self.distributions.is_empty() {
                    return Err(CliError::config("at least one [[distributions]] entry required"));
                }
                self.database_types()?;
            }
            ExperimentKind::AccuracySweep => {
                let sweep = self
                    .accuracy_sweep
                    .as_ref()
                    .ok_or_else(|| CliError::config("[accuracy_sweep] section required"))?;
                if sweep.ks.is_empty() {
                    return Err(CliError::config("accuracy_sweep.ks must not be empty"));
                }
                if sweep.ks.iter().any(|&k| !(k > 0.0)) {
                    return Err(CliError::config("accuracy_sweep.ks must be positive"));
                }
                if self.c.is_some() || self.budget.is_some() {
                    return Err(CliError::config(
                        "accuracy-sweep resolves its own (c, epsilon); do not set c or budget",
                    ));
                }
                if self.replications > 0 {
                    if self.distributions.is_empty() {
                        return Err(CliError::config(
                            "empirical accuracy replications need [[distributions]]",
                        ));
                    }
                    self.database_types()?;
                }
            }
            ExperimentKind::Benchmark => {
                let bench = self
                    .benchmark
                    .as_ref()
                    .ok_or_else(|| CliError::config("[benchmark] section required"))?;
                if mode.is_some() {
                    return Err(CliError::config(
                        "benchmark derives c = w/n per entry; do not set c, k or budget",
                    ));
                }
                if self.distributions.is_empty() {
                    return Err(CliError::config("at least one [[distributions]] entry required"));
                }
                if bench.dist_index >= self.distributions.len() {
                    return Err(CliError::config("benchmark.dist_index out of range"));
                }
                for &w in &bench.ws {
                    if w == 0 || w >= bench.n {
                        return Err(CliError::config(format!(
                            "benchmark w = {w} out of range for n = {}",
                            bench.n
                        )));
                    }
                }
                if self.replications == 0 {
                    return Err(CliError::config("benchmark needs replications >= 1"));
                }
            }
        }
        match self.kind {
            ExperimentKind::AuditDp => {
                let spec = self
                    .audit_dp
                    .as_ref()
                    .ok_or_else(|| CliError::config("[audit_dp] section required"))?;
                let types = self.database_types()?;
                if spec.flip_index >= types.len() {
                    return Err(CliError::config("audit_dp.flip_index out of range"));
                }
                if spec.flip_to >= self.distributions.len() {
                    return Err(CliError::config("audit_dp.flip_to out of range"));
                }
                if spec.flip_to == types[spec.flip_index] {
                    return Err(CliError::config(
                        "audit_dp.flip_to equals the player's current type; databases must differ",
                    ));
                }
                if spec.samples < procure::privacy::MIN_AUDIT_SAMPLES {
                    return Err(CliError::config(format!(
                        "audit_dp.samples must be >= {}",
                        procure::privacy::MIN_AUDIT_SAMPLES
                    )));
                }
                if spec.bins < 2 {
                    return Err(CliError::config("audit_dp.bins must be >= 2"));
                }
                if !(spec.slack >= 1.0) {
                    return Err(CliError::config("audit_dp.slack must be >= 1"));
                }
            }
            ExperimentKind::AuditBic => {
                let spec = self
                    .audit_bic
                    .as_ref()
                    .ok_or_else(|| CliError::config("[audit_bic] section required"))?;
                let types = self.database_types()?;
                if spec.player_index >= types.len() {
                    return Err(CliError::config("audit_bic.player_index out of range"));
                }
                if self.replications < 1000 {
                    return Err(CliError::config("audit-bic needs replications >= 1000"));
                }
            }
            ExperimentKind::Run => {
                if self.replications == 0 {
                    return Err(CliError::config("run needs replications >= 1"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The 0-based type of every player.
    pub fn database_types(&self) -> Result<Vec<usize>, CliError> {
        let db = self
            .database
            .as_ref()
            .ok_or_else(|| CliError::config("[database] section required"))?;
        let types = match (&db.counts, &db.explicit) {
            (Some(counts), None) => {
                if counts.len() != self.distributions.len() {
                    return Err(CliError::config(format!(
                        "database.counts has {} entries but {} distributions are declared",
                        counts.len(),
                        self.distributions.len()
                    )));
                }
                let mut types = Vec::with_capacity(counts.iter().sum());
                for (t, &count) in counts.iter().enumerate() {
                    types.extend(std::iter::repeat(t).take(count));
                }
                types
            }
            (None, Some(explicit)) => {
                for &t in explicit {
                    if t >= self.distributions.len() {
                        return Err(CliError::config(format!(
                            "database.explicit contains type {t} but only {} distributions are declared",
                            self.distributions.len()
                        )));
                    }
                }
                explicit.clone()
            }
            _ => {
                return Err(CliError::config(
                    "database must set exactly one of counts or explicit",
                ))
            }
        };
        if types.is_empty() {
            return Err(CliError::config("database is empty"));
        }
        if self.target_type >= self.distributions.len() {
            return Err(CliError::config("target_type out of range"));
        }
        Ok(types)
    }

    pub fn build_distributions(&self) -> Result<Vec<CostDistribution>, CliError> {
        self.distributions.iter().map(|d| d.build()).collect()
    }

    /// Resolve `(mode, c, epsilon)` from whichever of c/k/budget was given.
    pub fn resolve_params(&self) -> Result<(ParamMode, f64, f64), CliError> {
        let n = self.database_types()?.len() as u64;
        match self.param_mode()? {
            Some(ParamMode::C) => {
                let c = self.c.unwrap();
                let eps = self.epsilon.unwrap();
                if !(c > 0.0 && c < 1.0) {
                    return Err(CliError::config(format!("c = {c} outside (0,1)")));
                }
                if !(eps > 0.0) {
                    return Err(CliError::config(format!("epsilon = {eps} must be positive")));
                }
                Ok((ParamMode::C, c, eps))
            }
            Some(ParamMode::K) => {
                let (c, eps) = params_for_accuracy(self.k.unwrap(), n).map_err(CliError::from)?;
                Ok((ParamMode::K, c, eps))
            }
            Some(ParamMode::Budget) => {
                let (c, eps) =
                    params_for_budget(self.budget.unwrap(), n, self.alpha_max.unwrap())
                        .map_err(|e| match e {
                            MechanismError::BudgetInfeasible { .. } => CliError::Infeasible(e.to_string()),
                            other => CliError::from(other),
                        })?;
                Ok((ParamMode::Budget, c, eps))
            }
            None => Err(CliError::config("no parameter mode set")),
        }
    }
}
