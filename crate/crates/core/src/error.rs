use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("undeclared identifier `{0}`")]
    UndeclaredIdentifier(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("duplicate transition ({from}, {action}, {to})")]
    DuplicateTransition {
        from: String,
        action: String,
        to: String,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("parameter vector has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },

    #[error("transition function not well-defined at ({state}, {action}): {detail}")]
    IllDefined {
        state: String,
        action: String,
        detail: String,
    },

    #[error("distribution error: {0}")]
    Distribution(String),

    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("state `{0}` lies in the effect set")]
    StateInEffect(String),

    #[error("a cause must be a nonempty state set")]
    EmptyCause,

    #[error("invalid bound query: {0}")]
    InvalidBound(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("grid specification error: {0}")]
    Grid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
