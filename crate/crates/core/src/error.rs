use rust_decimal::Decimal;
use thiserror::Error;

use crate::miqado::SessionState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("amount must be non-negative, got {0}")]
    NegativeAmount(Decimal),
    #[error("price must be strictly positive, got {0}")]
    NonPositivePrice(Decimal),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("decimal arithmetic overflow")]
    Overflow,

    #[error("health factor is undefined for a position without debt")]
    ZeroDebt,
    #[error("position is not liquidatable (health factor {0})")]
    NotLiquidatable(Decimal),
    #[error("repayment {repay} exceeds the close-factor bound {bound}")]
    CloseFactorViolation { repay: Decimal, bound: Decimal },

    #[error("premium factor is undefined for zero collateral")]
    ZeroCollateral,
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("position {0} is not eligible for a support session")]
    NotEligible(String),
    #[error("position {0} already has an active support session")]
    SessionAlreadyActive(String),
    #[error("session is {0:?}, expected Active")]
    SessionNotActive(SessionState),
    #[error("session belongs to position {session}, got position {position}")]
    PositionMismatch { session: String, position: String },
    #[error("termination at {now} is outside the pre-maturity window ({start}, {maturity})")]
    TerminationWindow { now: i64, start: i64, maturity: i64 },
    #[error("settlement at {now} is before maturity {maturity}")]
    BeforeMaturity { now: i64, maturity: i64 },

    #[error("price path is empty")]
    EmptyPath,
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("price path ends at {last} before required timestamp {needed}")]
    PathTooShort { needed: i64, last: i64 },

    #[error("release reduction is undefined for a zero baseline release")]
    ZeroBaseline,
    #[error("event {index}: {source}")]
    Event { index: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_event(self, index: usize) -> Self {
        Error::Event {
            index,
            source: Box::new(self),
        }
    }
}
