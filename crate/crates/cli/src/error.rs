//! Exit codes. Commands return `Ok(ExitKind)` when they finished writing
//! outputs but the result deserves a non-zero code, and `Err` otherwise.

use rpad_core::agreement::AgreementError;
use rpad_core::oracles::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Ok = 0,
    /// Bad input, config or validation issue.
    Validation = 1,
    /// A relative metric had a zero denominator.
    Degenerate = 2,
    /// An oracle or transport gave up.
    OracleExhausted = 3,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// The worse of two outcomes; validation beats everything.
    pub fn max(self, other: Self) -> Self {
        let rank = |k: Self| match k {
            ExitKind::Ok => 0,
            ExitKind::Degenerate => 1,
            ExitKind::OracleExhausted => 2,
            ExitKind::Validation => 3,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

pub fn classify(error: &anyhow::Error) -> ExitKind {
    for cause in error.chain() {
        if let Some(AgreementError::DegenerateDenominator { .. }) = cause.downcast_ref() {
            return ExitKind::Degenerate;
        }
        if let Some(OracleError::Transport(_)) = cause.downcast_ref() {
            return ExitKind::OracleExhausted;
        }
    }
    ExitKind::Validation
}
