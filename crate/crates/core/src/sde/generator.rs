//! The generator `L` applied to a few test functions.

use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::mechanisms::{expm1_neg_plus, levy_integral, CbiParams, Interval, LevyMeasure};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `log(1 + x)`.
    Log1p,
    /// `(1 + x)^λ`.
    Power { lambda: f64 },
    /// `e^{−λx}`.
    Exp { lambda: f64 },
}

/// `log(1+u) − u`, accurate for small `u`.
fn log1p_minus(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        -u2 * (0.5 - u / 3.0 + u2 / 4.0 - u2 * u / 5.0)
    } else {
        u.ln_1p() - u
    }
}

/// `(1+u)^λ − 1 − λu`, accurate for small `u`.
fn pow_minus(lambda: f64, u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let c2 = lambda * (lambda - 1.0) / 2.0;
        let c3 = c2 * (lambda - 2.0) / 3.0;
        let c4 = c3 * (lambda - 3.0) / 4.0;
        u * u * (c2 + u * (c3 + u * c4))
    } else {
        (lambda * u.ln_1p()).exp_m1() - lambda * u
    }
}

impl TestFunction {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Log1p => x.ln_1p(),
            TestFunction::Power { lambda } => (1.0 + x).powf(lambda),
            TestFunction::Exp { lambda } => (-lambda * x).exp(),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Log1p => 1.0 / (1.0 + x),
            TestFunction::Power { lambda } => lambda * (1.0 + x).powf(lambda - 1.0),
            TestFunction::Exp { lambda } => -lambda * (-lambda * x).exp(),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Log1p => -1.0 / ((1.0 + x) * (1.0 + x)),
            TestFunction::Power { lambda } => {
                lambda * (lambda - 1.0) * (1.0 + x).powf(lambda - 2.0)
            }
            TestFunction::Exp { lambda } => lambda * lambda * (-lambda * x).exp(),
        }
    }

    /// `V(x+z) − V(x) − zV'(x)`.
    fn compensated_jump(&self, x: f64, z: f64) -> f64 {
        match *self {
            TestFunction::Log1p => log1p_minus(z / (1.0 + x)),
            TestFunction::Power { lambda } => (1.0 + x).powf(lambda) * pow_minus(lambda, z / (1.0 + x)),
            TestFunction::Exp { lambda } => (-lambda * x).exp() * expm1_neg_plus(lambda * z),
        }
    }

    /// `V(x+z) − V(x)`.
    fn jump(&self, x: f64, z: f64) -> f64 {
        match *self {
            TestFunction::Log1p => (z / (1.0 + x)).ln_1p(),
            TestFunction::Power { lambda } => {
                (1.0 + x).powf(lambda) * (lambda * (z / (1.0 + x)).ln_1p()).exp_m1()
            }
            TestFunction::Exp { lambda } => (-lambda * x).exp() * (-lambda * z).exp_m1(),
        }
    }

    fn immigration_condition(&self) -> String {
        match *self {
            TestFunction::Log1p => "∫_{z>1} log(z) ν(dz) < ∞".into(),
            TestFunction::Power { lambda } => format!("∫_{{z>1}} z^{lambda} ν(dz) < ∞"),
            TestFunction::Exp { .. } => "∫(1∧z) ν(dz) < ∞".into(),
        }
    }

    fn branching_condition(&self) -> String {
        match *self {
            TestFunction::Power { lambda } if lambda > 1.0 => {
                "∫_{z>1} z² m(dz) < ∞".into()
            }
            _ => "∫_{z>1} z m(dz) < ∞".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TestFunction::Power { lambda } if !(1.0..=2.0).contains(&lambda) => Err(
                Error::InvalidParams(format!("power exponent {lambda} must lie in [1, 2]")),
            ),
            TestFunction::Exp { lambda } if !(lambda >= 0.0) => {
                Err(Error::InvalidParams(format!("λ = {lambda} must be ≥ 0")))
            }
            _ => Ok(()),
        }
    }
}

fn finite(v: f64, what: String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DivergentJumpIntegral(what))
    }
}

fn jump_parts(
    m: &LevyMeasure,
    nu: &LevyMeasure,
    f: &TestFunction,
    x: f64,
) -> Result<(f64, f64)> {
    let jm = levy_integral(m, |z| f.compensated_jump(x, z), Interval::positive())?;
    let jm = finite(jm, f.branching_condition())?;
    let jn = levy_integral(nu, |z| f.jump(x, z), Interval::positive())?;
    let jn = finite(jn, f.immigration_condition())?;
    Ok((jm, jn))
}

fn cbi_apply(p: &CbiParams, f: &TestFunction, x: f64) -> Result<f64> {
    let (jm, jn) = jump_parts(&p.m, &p.nu, f, x)?;
    Ok((p.beta - p.b * x) * f.d1(x) + 0.5 * p.sigma * p.sigma * x * f.d2(x) + x * jm + jn)
}

/// `LV(x)` with drift and diffusion terms in closed form and jump terms by
/// quadrature.
pub fn generator_apply(model: &ModelSpec, test_fn: TestFunction, x: f64) -> Result<f64> {
    test_fn.validate()?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidParams(format!("state x = {x} must be ≥ 0")));
    }
    let f = &test_fn;
    match model {
        ModelSpec::Cbi(p) => cbi_apply(p, f, x),
        ModelSpec::Cnbi(p) => {
            let (jm, jn) = jump_parts(&p.m, &p.nu, f, x)?;
            let r = &p.rates;
            Ok(r.gamma0.eval(x) * f.d1(x)
                + 0.5 * r.gamma1.eval(x) * f.d2(x)
                + r.gamma2.eval(x) * jm
                + jn)
        }
        ModelSpec::Cbire(p) => {
            let base = cbi_apply(&p.cbi, f, x)?;
            let env = &p.env;
            let v = f.value(x);
            let d1 = f.d1(x);
            let jumps = levy_integral(
                &env.mu_e,
                |z| {
                    let y = x * z.exp();
                    if (-1.0..=1.0).contains(&z) {
                        f.value(y) - v - x * z.exp_m1() * d1
                    } else {
                        f.value(y) - v
                    }
                },
                Interval::real_line(),
            )?;
            let jumps = finite(jumps, "∫_{z>1} e^z μ_E(dz) < ∞".into())?;
            Ok(base
                + env.b_e * x * d1
                + 0.5 * env.sigma_e * env.sigma_e * x * x * f.d2(x)
                + jumps)
        }
    }
}

/// The bound `β + |b| + ∫(z1_{z≤1} + log(1+z)1_{z>1})ν(dz) + ∫_{z>1} z m(dz)`
/// on `L log(1+·)` for a CBI model.
pub fn log_lyapunov_bound(p: &CbiParams) -> Result<f64> {
    let jn = levy_integral(
        &p.nu,
        |z| if z <= 1.0 { z } else { z.ln_1p() },
        Interval::positive(),
    )?;
    let jm = levy_integral(&p.m, |z| z, Interval::above(1.0))?;
    Ok(p.beta + p.b.abs() + jn + jm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_branches_agree_with_direct_forms() {
        for &u in &[9e-4, 1.1e-3] {
            let a = log1p_minus(u);
            let b = u.ln_1p() - u;
            assert!((a - b).abs() < 1e-12 * b.abs());
            let a = pow_minus(1.5, u);
            let b = (1.0 + u).powf(1.5) - 1.0 - 1.5 * u;
            assert!((a - b).abs() < 1e-7 * b.abs());
        }
    }
}
