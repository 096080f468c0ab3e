use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible interval row: sum of lower bounds {sum_lo}, sum of upper bounds {sum_hi}")]
    InfeasibleRow { sum_lo: f64, sum_hi: f64 },

    #[error("model failed validation:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid model structure: {0}")]
    Structure(String),

    #[error("invalid controller: {0}")]
    Controller(String),

    #[error("observation {observation} has zero probability after action {action}")]
    InconsistentHistory { action: usize, observation: usize },

    #[error("{}", format_location(*.line, *.column, .message))]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("value iteration diverged in {context}: value exceeded {cap:e} (goal unreachable?)")]
    Divergence { context: String, cap: f64 },

    #[error("{context} did not converge within {iterations} iterations (residual {residual:e})")]
    NotConverged {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite loss during {0}")]
    NonFiniteLoss(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::NotConverged { .. } | Error::NonFiniteLoss(_) => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_location(line: usize, column: usize, message: &str) -> String {
    if line == 0 {
        format!("parse error: {message}")
    } else {
        format!("parse error at line {line}, column {column}: {message}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
