use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid WiFi PHY parameters: {0}")]
    InvalidPhy(&'static str),
    #[error("Bianchi fixed point did not converge for n = {n}")]
    FixedPointDiverged { n: u32 },
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("length mismatch: {0}")]
    Dimension(&'static str),
    #[error("brute-force search supports at most {max} channels, got {got}")]
    TooManyChannels { got: usize, max: usize },
    #[error("zero normalisation scale for {0}")]
    ZeroScale(&'static str),
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("parameter vector has {got} entries, expected {expected}")]
    ParamCount { got: usize, expected: usize },
    #[error("nothing to average")]
    EmptyAverage,
    #[error("invalid scenario: {0}")]
    Scenario(String),
}
