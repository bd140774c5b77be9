use thiserror::Error;

use crate::rint::Rat;
use crate::symbolic::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("division by an interval containing zero")]
    DivisionByZeroInterval,
    #[error("argument must be positive: {0}")]
    NonPositiveArgument(String),
    #[error("geometric ratio outside (0,1): {0}")]
    RatioOutOfRange(String),
    #[error("invalid interval: lo > hi")]
    InvalidInterval,
    #[error("words must be nonempty")]
    EmptyWord,
    #[error("code is empty")]
    EmptyCode,
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfAlphabet { symbol: u8, alphabet: usize },
    #[error("oracle violation: {0}")]
    OracleViolation(Violation),
    #[error("tail of an infinite generating set cannot be bounded without tail control")]
    TailNotBoundable,
    #[error("lambda interval must lie strictly above 1")]
    LambdaTooSmall,
    #[error("no root bracket: {0}")]
    NoRootBracket(String),
    #[error("input enclosure too wide: {0}")]
    InsufficientPrecision(String),
    #[error("could not certify a geometric ratio below 1 (achieved {achieved})")]
    RatioNotCertifiable { achieved: Rat },
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("declared constant disagrees with certified value: {0}")]
    DeclaredMismatch(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("language oracle returned an empty level {0}")]
    LanguageLevelEmpty(usize),
    #[error("integer set S is empty")]
    EmptyS,
    #[error("invalid permutation set: {0}")]
    InvalidPermutation(String),
    #[error("expansion is not quasi-greedy: {0}")]
    NotQuasiGreedy(String),
    #[error("generator prefix is not of beta-shift shape: {0}")]
    ShapeMismatch(String),
    #[error("gate not satisfied for N0 = {n0}: certified left side {gate} <= 7/2")]
    GateNotSatisfied { n0: usize, gate: Rat },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("invalid ideal measure: {0}")]
    InvalidMeasure(String),
}
