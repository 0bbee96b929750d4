use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("integrand is not finite at z = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("quadrature did not converge on ({lo}, {hi})")]
    NonConvergent { lo: f64, hi: f64 },

    #[error("measure has zero mass on ({lo}, {hi}]")]
    ZeroMass { lo: f64, hi: f64 },

    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("invariant distribution does not exist: {0}")]
    NoInvariant(String),

    #[error("infinite first moment of the immigration measure")]
    InfiniteFirstMoment,

    #[error("critical case: φ({lambda}) = 0")]
    Critical { lambda: f64 },

    #[error("large-λ limit did not stabilise (|Δ|/v = {rel_change:e}); Grey's condition may fail")]
    NoStabilisation { rel_change: f64 },

    #[error("divergent jump integral: {0}")]
    DivergentJumpIntegral(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("empty sample set")]
    EmptySamples,
}
