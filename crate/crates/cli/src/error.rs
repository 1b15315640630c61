use gietlab::regularity::RegularityError;
use gietlab::{BirkhoffError, InductionError, TowerError};
use serde_json::json;
use thiserror::Error;

/// Failures, grouped by exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical connection: {0}")]
    Connection(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("{0}")]
    Numerics(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Connection(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Numerics(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Connection(_) => "numerical-connection",
            CliError::Budget(_) => "budget",
            CliError::Numerics(_) => "numerics",
            CliError::Io(_) => "io",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } }).to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<InductionError> for CliError {
    fn from(e: InductionError) -> Self {
        match e {
            InductionError::NumericalConnection { .. } => CliError::Connection(e.to_string()),
            InductionError::RunLimitExceeded { .. } | InductionError::PositivityTimeout { .. } => CliError::Budget(e.to_string()),
            InductionError::Range { .. } => CliError::Numerics(e.to_string()),
        }
    }
}

impl From<TowerError> for CliError {
    fn from(e: TowerError) -> Self {
        match e {
            TowerError::Induction(e) => e.into(),
            TowerError::FloorBudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Numerics(e.to_string()),
        }
    }
}

impl From<BirkhoffError> for CliError {
    fn from(e: BirkhoffError) -> Self {
        match e {
            BirkhoffError::Induction(e) => e.into(),
            BirkhoffError::DepthBudget { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Numerics(e.to_string()),
        }
    }
}

impl From<RegularityError> for CliError {
    fn from(e: RegularityError) -> Self {
        match e {
            RegularityError::Tower(e) => e.into(),
            RegularityError::Birkhoff(e) => e.into(),
            RegularityError::DepthBudget { .. } | RegularityError::OrbitBudget { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Numerics(e.to_string()),
        }
    }
}
