//! Euler simulation of CBI, CNBI and CBIRE equations with shared-noise
//! couplings, environment paths and generator evaluation.

mod environment;
mod generator;
pub mod rng;
mod scheme;

use serde::{Deserialize, Serialize};

use crate::mechanisms::{levy_integral, CbiParams, Interval, LevyMeasure};
use crate::{Error, Result};

pub use environment::{simulate_environment, EnvironmentPath};
pub use generator::{generator_apply, log_lyapunov_bound, TestFunction};
pub use scheme::{
    simulate_coupled, simulate_ensemble, simulate_path, CoupledEnsemble, Ensemble, PairPath,
    Trajectory,
};

/// Drift `γ₀` of the nonlinear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Drift {
    /// `β − b·x`.
    Affine { beta: f64, b: f64 },
    /// Piecewise linear through `(x, γ₀(x))` points with increasing `x`
    /// starting at `0`; the last slope continues beyond the table.
    Tabulated { points: Vec<(f64, f64)> },
}

impl Drift {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Drift::Affine { beta, b } => beta - b * x,
            Drift::Tabulated { points } => {
                if points.len() == 1 {
                    return points[0].1;
                }
                let i = points
                    .partition_point(|p| p.0 <= x)
                    .clamp(1, points.len() - 1);
                let (x0, y0) = points[i - 1];
                let (x1, y1) = points[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Drift::Affine { b, .. } => -b,
            Drift::Tabulated { points } => {
                if points.len() == 1 {
                    return 0.0;
                }
                let i = points
                    .partition_point(|p| p.0 <= x)
                    .clamp(1, points.len() - 1);
                (points[i].1 - points[i - 1].1) / (points[i].0 - points[i - 1].0)
            }
        }
    }

    /// Largest `A` with `γ₀(y) − γ₀(x) ≤ −A(y − x)` for all `0 ≤ x ≤ y`.
    pub fn dissipativity(&self) -> f64 {
        match self {
            Drift::Affine { b, .. } => *b,
            Drift::Tabulated { points } => {
                if points.len() < 2 {
                    return 0.0;
                }
                points
                    .windows(2)
                    .map(|w| -(w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Drift::Affine { beta, b } => {
                if !(beta.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidParams("γ₀ coefficients must be finite".into()));
                }
            }
            Drift::Tabulated { points } => {
                if points.is_empty() || points[0].0 != 0.0 {
                    return Err(Error::InvalidParams(
                        "tabulated γ₀ must start at x = 0".into(),
                    ));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::InvalidParams(
                        "tabulated γ₀ abscissae must increase".into(),
                    ));
                }
                if points.iter().any(|p| !p.1.is_finite()) {
                    return Err(Error::InvalidParams("tabulated γ₀ values must be finite".into()));
                }
            }
        }
        if self.eval(0.0) < 0.0 {
            return Err(Error::InvalidParams(format!(
                "γ₀(0) = {} must be ≥ 0",
                self.eval(0.0)
            )));
        }
        Ok(())
    }
}

/// `c·x^α` with `α ∈ [1, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRate {
    pub coefficient: f64,
    pub exponent: f64,
}

impl PowerRate {
    pub fn new(coefficient: f64, exponent: f64) -> Self {
        Self {
            coefficient,
            exponent,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.coefficient * x.powf(self.exponent)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.coefficient.is_finite() && self.coefficient >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "{name} coefficient {} must be ≥ 0",
                self.coefficient
            )));
        }
        if !(1.0..=2.0).contains(&self.exponent) {
            return Err(Error::InvalidParams(format!(
                "{name} exponent {} must lie in [1, 2]",
                self.exponent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearRates {
    pub gamma0: Drift,
    pub gamma1: PowerRate,
    pub gamma2: PowerRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnbiParams {
    pub rates: NonlinearRates,
    #[serde(default)]
    pub m: LevyMeasure,
    #[serde(default)]
    pub nu: LevyMeasure,
}

/// Lévy environment `(b_E, σ_E, μ_E)`; `μ_E` is a finite atomic measure
/// on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentParams {
    pub b_e: f64,
    pub sigma_e: f64,
    #[serde(default)]
    pub mu_e: LevyMeasure,
}

impl EnvironmentParams {
    pub fn validate(&self) -> Result<()> {
        if !self.b_e.is_finite() {
            return Err(Error::InvalidParams("b_E must be finite".into()));
        }
        if !(self.sigma_e.is_finite() && self.sigma_e >= 0.0) {
            return Err(Error::InvalidParams(format!("σ_E = {} must be ≥ 0", self.sigma_e)));
        }
        match self.mu_e {
            LevyMeasure::Zero | LevyMeasure::FiniteAtoms { .. } => self.mu_e.validate(true),
            _ => Err(Error::InvalidMeasure(
                "environment measures must be finite atoms".into(),
            )),
        }
    }

    fn small() -> Interval {
        Interval::new(f64::NEG_INFINITY, 1.0)
    }

    /// `∫_{[−1,1]} f dμ_E`.
    fn small_integral<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        levy_integral(&self.mu_e, |z| if z >= -1.0 { f(z) } else { 0.0 }, Self::small())
    }

    /// `a_E = b_E − σ_E²/2 − ∫_{[−1,1]}(e^z − 1 − z) μ_E(dz)`.
    pub fn a_e(&self) -> Result<f64> {
        let c = self.small_integral(|z| z.exp_m1() - z)?;
        Ok(self.b_e - 0.5 * self.sigma_e * self.sigma_e - c)
    }

    /// `E[Z_1] = b_E + ∫_{|z|>1}(e^z − 1) μ_E(dz)`.
    pub fn mean_z1(&self) -> Result<f64> {
        let large = levy_integral(
            &self.mu_e,
            |z| if z.abs() > 1.0 { z.exp_m1() } else { 0.0 },
            Interval::real_line(),
        )?;
        Ok(self.b_e + large)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbireParams {
    pub cbi: CbiParams,
    pub env: EnvironmentParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    Cbi(CbiParams),
    Cnbi(CnbiParams),
    Cbire(CbireParams),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Cbi(p) => p.validate(),
            ModelSpec::Cnbi(p) => {
                p.rates.gamma0.validate()?;
                p.rates.gamma1.validate("γ₁")?;
                p.rates.gamma2.validate("γ₂")?;
                p.m.validate(false)?;
                p.nu.validate(false)?;
                let mc = crate::mechanisms::measure_condition(&p.m, &p.nu)?;
                if !mc.holds {
                    return Err(Error::InvalidMeasure(format!(
                        "∫(z∧z²)m(dz) = {}, ∫(1∧z)ν(dz) = {}; both must be finite",
                        mc.branching, mc.immigration
                    )));
                }
                Ok(())
            }
            ModelSpec::Cbire(p) => {
                p.cbi.validate()?;
                p.env.validate()
            }
        }
    }

    /// The contraction rate `A`: `b` for CBI, the dissipativity constant of
    /// `γ₀` for CNBI and `b − E[Z_1]` for CBIRE.
    pub fn dissipativity_rate(&self) -> Result<f64> {
        match self {
            ModelSpec::Cbi(p) => Ok(p.b),
            ModelSpec::Cnbi(p) => Ok(p.rates.gamma0.dissipativity()),
            ModelSpec::Cbire(p) => Ok(p.cbi.b - p.env.mean_z1()?),
        }
    }

    pub fn branching_measure(&self) -> &LevyMeasure {
        match self {
            ModelSpec::Cbi(p) => &p.m,
            ModelSpec::Cnbi(p) => &p.m,
            ModelSpec::Cbire(p) => &p.cbi.m,
        }
    }

    pub fn immigration_measure(&self) -> &LevyMeasure {
        match self {
            ModelSpec::Cbi(p) => &p.nu,
            ModelSpec::Cnbi(p) => &p.nu,
            ModelSpec::Cbire(p) => &p.cbi.nu,
        }
    }

    /// The CBI part, if the model has one.
    pub fn cbi(&self) -> Option<&CbiParams> {
        match self {
            ModelSpec::Cbi(p) => Some(p),
            ModelSpec::Cbire(p) => Some(&p.cbi),
            ModelSpec::Cnbi(_) => None,
        }
    }
}

/// Euler scheme settings shared by every simulation entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Truncation level for infinite-activity measures; ignored otherwise.
    #[serde(default = "default_cutoff")]
    pub jump_cutoff: f64,
    pub master_seed: u64,
    pub n_paths: usize,
    pub record_times: Vec<f64>,
}

fn default_cutoff() -> f64 {
    1e-2
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, master_seed: u64, n_paths: usize) -> Self {
        Self {
            dt,
            horizon,
            jump_cutoff: default_cutoff(),
            master_seed,
            n_paths,
            record_times: vec![horizon],
        }
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_cutoff(mut self, eps: f64) -> Self {
        self.jump_cutoff = eps;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Step indices of the record times.
    pub fn record_steps(&self) -> Vec<usize> {
        self.record_times
            .iter()
            .map(|t| (t / self.dt).round() as usize)
            .collect()
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be positive", self.horizon));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.record_times.is_empty() {
            return bad("record_times must not be empty".into());
        }
        for w in self.record_times.windows(2) {
            if w[1] - w[0] < self.dt * (1.0 - 1e-9) {
                return bad(format!(
                    "record times {} and {} are closer than dt = {}",
                    w[0], w[1], self.dt
                ));
            }
        }
        if self.record_times[0] < 0.0
            || *self.record_times.last().unwrap() > self.horizon * (1.0 + 1e-12)
        {
            return bad("record times must lie in [0, horizon]".into());
        }
        let needs_eps = model.branching_measure().infinite_activity()
            || model.immigration_measure().infinite_activity();
        if needs_eps && !(self.jump_cutoff > 0.0) {
            return bad("jump_cutoff must be positive for infinite-activity measures".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_drift_interpolates_and_extrapolates() {
        let d = Drift::Tabulated {
            points: vec![(0.0, 1.0), (1.0, 0.0), (2.0, -2.0)],
        };
        assert_eq!(d.eval(0.5), 0.5);
        assert_eq!(d.eval(3.0), -4.0);
        assert_eq!(d.dissipativity(), 1.0);
    }

    #[test]
    fn environment_drift_relation() {
        let env = EnvironmentParams {
            b_e: 0.0,
            sigma_e: 1.0,
            mu_e: LevyMeasure::Zero,
        };
        assert_eq!(env.a_e().unwrap(), -0.5);
        assert_eq!(env.mean_z1().unwrap(), 0.0);
        let env = EnvironmentParams {
            b_e: 0.2,
            sigma_e: 0.0,
            mu_e: LevyMeasure::FiniteAtoms {
                atoms: vec![(2f64.ln(), 1.0), (-2.0, 0.5)],
            },
        };
        let a = 0.2 - (1.0 - 2f64.ln());
        assert!((env.a_e().unwrap() - a).abs() < 1e-15);
        let m = 0.2 + 0.5 * (-2f64).exp_m1();
        assert!((env.mean_z1().unwrap() - m).abs() < 1e-15);
    }
}
