//! Failure taxonomy shared by every subcommand. Each variant owns one exit
//! code so scripts can branch on the class of failure:
//!
//! | code | meaning                                    |
//! |------|--------------------------------------------|
//! | 0    | success                                    |
//! | 1    | settings could not be resolved or validated |
//! | 2    | command line usage error (from the parser) |
//! | 3    | input data missing or violating invariants |
//! | 4    | provider or tool host unavailable          |
//! | 5    | failed writing an output file              |
//! | 6    | malformed stored record (offset reported)  |

use std::fmt;

use tandem_core::config::ConfigError;
use tandem_core::engine::EngineError;
use tandem_core::eval::EvalError;
use tandem_core::prompt::PromptError;
use tandem_core::trace::RecordError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
    Provider(String),
    Output(String),
    Malformed(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input(_) => 3,
            CliError::Provider(_) => 4,
            CliError::Output(_) => 5,
            CliError::Malformed(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (label, detail) = match self {
            CliError::Config(d) => ("configuration", d),
            CliError::Input(d) => ("input", d),
            CliError::Provider(d) => ("provider", d),
            CliError::Output(d) => ("output", d),
            // Record parse errors already name themselves and the byte
            // offset; a second label would just repeat them.
            CliError::Malformed(d) => return write!(f, "{d}"),
        };
        write!(f, "{label}: {detail}")
    }
}

impl From<ConfigError> for CliError {
    fn from(error: ConfigError) -> Self {
        CliError::Config(error.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(error: PromptError) -> Self {
        CliError::Input(error.to_string())
    }
}

/// Parse failures keep their own exit code so callers can tell corrupt
/// stored data from data that is merely absent or inconsistent.
impl From<RecordError> for CliError {
    fn from(error: RecordError) -> Self {
        match error {
            RecordError::Malformed { .. } => CliError::Malformed(error.to_string()),
            RecordError::Invariant { .. } => CliError::Input(error.to_string()),
            RecordError::Io { .. } => CliError::Input(error.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(error: EvalError) -> Self {
        CliError::Input(error.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(error: EngineError) -> Self {
        match error {
            EngineError::InvalidConfig(_) => CliError::Config(error.to_string()),
            EngineError::UnknownCandidateTool { .. } => CliError::Input(error.to_string()),
            EngineError::Record(inner) => CliError::from(inner),
            EngineError::Toolhost(_) | EngineError::Retrieval(_) | EngineError::Session { .. } => {
                CliError::Provider(error.to_string())
            }
        }
    }
}
