use std::fmt;

use parametrix::Error;

pub const PASS: i32 = 0;
pub const USAGE: i32 = 1;
pub const PRECONDITION: i32 = 2;
pub const VERIFICATION: i32 = 3;
pub const QI_VIOLATION: i32 = 4;
pub const INFEASIBLE: i32 = 5;

#[derive(Debug, Clone)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Self::new(PRECONDITION, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Residual { .. } => VERIFICATION,
            Error::QiViolation => QI_VIOLATION,
            Error::Infeasible { .. } | Error::Solver(_) => INFEASIBLE,
            Error::Dimension(_)
            | Error::SingularLeading { .. }
            | Error::OffUnitCircle { .. }
            | Error::Precondition(_)
            | Error::NotStabilizable
            | Error::NotDetectable
            | Error::RiccatiDiverged(_) => PRECONDITION,
        };
        let mut message = e.to_string();
        if code == QI_VIOLATION {
            message.push_str("; the --si inner approximation handles non-QI patterns");
        }
        Self { code, message }
    }
}
