//! Simulation and verification toolkit for exponential ergodicity of
//! nonnegative jump processes: continuous-state branching processes with
//! immigration (CBI), their nonlinear-branching variant (CNBI) and CBI
//! processes in a Lévy random environment (CBIRE).
//!
//! Modules, from the bottom up:
//!
//! * [`mechanisms`]: Lévy measures, the mechanisms `φ` and `ψ`, and the
//!   conditions built from them (Grey's condition, log-moment, invariant law).
//! * [`flow`]: the flow `∂v/∂t = −φ(v)`, Laplace transforms, first moments
//!   and the environment-modulated flow.
//! * [`sde`]: Euler simulation with shared-noise couplings.
//! * [`metrics`]: empirical distances, decay fits, time averages.

pub mod error;
pub mod flow;
pub mod mechanisms;
pub mod metrics;
mod ode;
pub mod quad;
pub mod sde;

pub use error::{Error, Result};
