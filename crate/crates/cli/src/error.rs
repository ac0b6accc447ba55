use thiserror::Error;

use crate::config::FieldProblem;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n{}", .0.iter().map(|p| format!("  {p}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<FieldProblem>),
    #[error("io error: {0}")]
    Io(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config(vec![FieldProblem {
            field: field.into(),
            message: message.into(),
        }])
    }
}

impl From<rhpt::Error> for CliError {
    fn from(e: rhpt::Error) -> Self {
        use rhpt::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::InvalidConfig(_) | E::InvalidParams(_) => CliError::config("<parameters>", msg),
            E::Io(_) | E::Csv(_) | E::Json(_) | E::MalformedFile { .. } => CliError::Io(msg),
            E::DegenerateTreatment(_)
            | E::EmptyGroup(_)
            | E::EmptyInput
            | E::TooFewSamples { .. }
            | E::MissingGroundTruth(_)
            | E::ZeroVector => CliError::Degenerate(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
