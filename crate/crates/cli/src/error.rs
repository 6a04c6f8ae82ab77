//! CLI errors mapped onto the documented exit codes.

use thiserror::Error;

use procure::agents::AgentError;
use procure::benchmarks::BenchError;
use procure::contract::ContractError;
use procure::dist::DistError;
use procure::mechanism::MechanismError;
use procure::privacy::AuditError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("audit inconclusive: {0}")]
    Inconclusive(String),
    #[error("audit failed: {0}")]
    AuditFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Exit codes: 2 config, 3 infeasible, 4 inconclusive, 5 failed audit,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Inconclusive(_) => 4,
            CliError::AuditFailed(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ContractError> for CliError {
    fn from(e: ContractError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MechanismError> for CliError {
    fn from(e: MechanismError) -> Self {
        match e {
            MechanismError::BudgetInfeasible { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::Inconclusive { .. } => CliError::Inconclusive(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::BoundNotApplicable => CliError::Infeasible(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
