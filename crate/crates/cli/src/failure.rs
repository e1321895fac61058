use std::fmt;

/// Why a command failed, carrying its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Malformed or inconsistent input. Exit code 2.
    Invalid(String),
    /// Singular system or non-convergence. Exit code 3.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Failure::Invalid(msg.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Failure::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<consensus_bvp::Error> for Failure {
    fn from(e: consensus_bvp::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}
