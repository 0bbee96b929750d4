//! The flow `∂v/∂t = −φ(v)`, `v_0 = λ`, and the transforms built from it.

use serde::Serialize;

use crate::mechanisms::{psi_over_phi_integral, CbiParams, Interval};
use crate::ode::{self, Trajectory};
use crate::quad::{self, Tolerance};
use crate::{mechanisms, Error, Result};

pub use crate::ode::OdeTolerance;

/// Numerical `v_t(λ)` together with `∫_0^t ψ(v_s(λ)) ds`.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub lambda0: f64,
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub psi_integral: Vec<f64>,
    /// Largest accepted normalised local error (≤ 1 by construction).
    pub tolerance: f64,
    traj: Trajectory<2>,
}

const LOG_V: [bool; 2] = [true, false];

/// The flow is integrated in `u = log v`, which keeps relative accuracy as
/// `v` decays. `λ = 0` is the fixed point, stored as a huge negative `u`.
fn log_rhs(params: &CbiParams) -> impl Fn(f64, &[f64; 2]) -> Result<[f64; 2]> + '_ {
    move |_t, y| {
        let v = y[0].exp();
        let rate = if v < 1e-200 { params.b } else { params.phi(v)? / v };
        Ok([-rate, params.psi(v)?])
    }
}

impl FlowSolution {
    /// Dense-output value `(v_t, ∫_0^t ψ(v_s) ds)` at any `t` in range.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let y = self.traj.interpolate(t);
        (y[0].exp(), y[1])
    }

    pub fn final_v(&self) -> f64 {
        *self.v.last().unwrap()
    }

    pub fn final_psi_integral(&self) -> f64 {
        *self.psi_integral.last().unwrap()
    }
}

fn flow_traj(
    params: &CbiParams,
    lambda: f64,
    horizon: f64,
    stops: &[f64],
    tol: OdeTolerance,
) -> Result<Trajectory<2>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParams(format!("λ = {lambda} must be finite and ≥ 0")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidParams(format!("horizon {horizon} must be ≥ 0")));
    }
    if lambda == 0.0 {
        let zero = |_t: f64, _y: &[f64; 2]| -> Result<[f64; 2]> { Ok([0.0, 0.0]) };
        let mut tr = ode::solve(&zero, 0.0, [0.0, 0.0], horizon, stops, tol)?;
        tr.y.iter_mut().for_each(|y| y[0] = -1e300);
        tr.dy.iter_mut().for_each(|d| d[0] = 0.0);
        return Ok(tr);
    }
    ode::solve_masked(&log_rhs(params), 0.0, [lambda.ln(), 0.0], horizon, stops, tol, LOG_V)
}

/// Solve on `[0, horizon]`; the grid is the sequence of accepted steps.
pub fn solve_v(params: &CbiParams, lambda: f64, horizon: f64) -> Result<FlowSolution> {
    solve_v_with(params, lambda, horizon, OdeTolerance::default())
}

pub fn solve_v_with(
    params: &CbiParams,
    lambda: f64,
    horizon: f64,
    tol: OdeTolerance,
) -> Result<FlowSolution> {
    let traj = flow_traj(params, lambda, horizon, &[], tol)?;
    Ok(FlowSolution {
        lambda0: lambda,
        grid: traj.t.clone(),
        v: traj.y.iter().map(|y| y[0].exp()).collect(),
        psi_integral: traj.y.iter().map(|y| y[1]).collect(),
        tolerance: traj.max_err,
        traj,
    })
}

/// Solve landing exactly on each of `times` (sorted, nonnegative); the grid
/// of the returned solution is `times`.
pub fn solve_v_at(
    params: &CbiParams,
    lambda: f64,
    times: &[f64],
    tol: OdeTolerance,
) -> Result<FlowSolution> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParams("times must be sorted and nonnegative".into()));
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let traj = flow_traj(params, lambda, horizon, times, tol)?;
    let mut v = Vec::with_capacity(times.len());
    let mut psi = Vec::with_capacity(times.len());
    for &t in times {
        let i = traj.t.partition_point(|&s| s < t);
        let y = if i < traj.t.len() && traj.t[i] == t {
            traj.y[i]
        } else {
            traj.interpolate(t)
        };
        v.push(y[0].exp());
        psi.push(y[1]);
    }
    Ok(FlowSolution {
        lambda0: lambda,
        grid: times.to_vec(),
        v,
        psi_integral: psi,
        tolerance: traj.max_err,
        traj,
    })
}

/// `E_x[e^{−λX_t}] = exp(−x v_t(λ) − ∫_0^t ψ(v_s(λ)) ds)`.
pub fn transition_laplace(params: &CbiParams, x: f64, t: f64, lambda: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParams(format!("state x = {x} must be ≥ 0")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if t == 0.0 {
        return Ok((-x * lambda).exp());
    }
    let sol = solve_v(params, lambda, t)?;
    Ok((-x * sol.final_v() - sol.final_psi_integral()).exp())
}

/// `∫_0^λ ψ(u)/φ(u) du`, with the interval `(0, ε)` replaced by its
/// linearisation `ε·ψ'(0)/b` when `b > 0` and `ψ'(0) < ∞`.
pub fn invariant_exponent(params: &CbiParams, lambda: f64) -> Result<f64> {
    if lambda == 0.0 || params.psi_vanishes() {
        return Ok(0.0);
    }
    if params.b < 0.0 {
        return Err(Error::NoInvariant(format!("b = {} < 0", params.b)));
    }
    let dpsi = params.psi_prime0()?;
    let value = if params.b > 0.0 && dpsi.is_finite() {
        let eps = 1e-6 * lambda.min(1.0);
        let g = |u: f64| match (params.psi(u), params.phi(u)) {
            (Ok(p), Ok(f)) if f > 0.0 => p / f,
            (Ok(_), Ok(_)) => f64::INFINITY,
            _ => f64::NAN,
        };
        eps * dpsi / params.b + quad::integrate_geometric(&g, lambda, eps, Tolerance::default())?
    } else {
        psi_over_phi_integral(params, lambda)?
    };
    if !value.is_finite() {
        return Err(Error::NoInvariant(format!(
            "∫_0^{lambda} ψ(u)/φ(u) du diverges"
        )));
    }
    Ok(value)
}

/// Laplace transform of the invariant law, `exp(−∫_0^λ ψ(u)/φ(u) du)`.
pub fn invariant_laplace(params: &CbiParams, lambda: f64) -> Result<f64> {
    Ok((-invariant_exponent(params, lambda)?).exp())
}

/// `E_x[X_t] = e^{−bt}x + (β + ∫zν(dz))∫_0^t e^{−bs}ds`.
pub fn first_moment(params: &CbiParams, x: f64, t: f64) -> Result<f64> {
    let nu1 = mechanisms::levy_integral(&params.nu, |z| z, Interval::positive())?;
    if !nu1.is_finite() {
        return Err(Error::InfiniteFirstMoment);
    }
    let b = params.b;
    let decay = if b == 0.0 { t } else { -(-b * t).exp_m1() / b };
    Ok((-b * t).exp() * x + (params.beta + nu1) * decay)
}

/// Asymptotic variance of `n^{−1/2}∫_0^{nt} Lf_λ(X_s) ds` for
/// `f_λ(y) = e^{−λy}` under the invariant law:
/// `(2ψ(λ) − 2φ(λ)ψ(2λ)/φ(2λ))·exp(−∫_0^{2λ} ψ/φ)`.
pub fn fclt_gamma2(params: &CbiParams, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams(format!("λ = {lambda} must be positive")));
    }
    if params.psi_vanishes() {
        return Ok(0.0);
    }
    let phi2 = params.phi(2.0 * lambda)?;
    if phi2 <= 0.0 {
        return Err(Error::Critical { lambda: 2.0 * lambda });
    }
    let psi1 = params.psi(lambda)?;
    let phi1 = params.phi(lambda)?;
    let psi2 = params.psi(2.0 * lambda)?;
    let l2 = invariant_laplace(params, 2.0 * lambda)?;
    Ok(((2.0 * psi1 - 2.0 * phi1 * psi2 / phi2) * l2).max(0.0))
}

/// Right-continuous step path `s ↦ values[⌊s/dt⌋]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl StepPath {
    pub fn zero(dt: f64, steps: usize) -> Self {
        Self {
            dt,
            values: vec![0.0; steps + 1],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    fn index(&self, t: f64) -> usize {
        let k = t / self.dt;
        let r = k.round();
        let k = if (k - r).abs() < 1e-9 { r } else { k.floor() };
        (k as usize).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index(t)]
    }
}

/// Initial value for the environment flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowStart {
    Finite(f64),
    /// The limit `λ → ∞`, certified by stabilisation between `λ_max/10`
    /// and `λ_max`.
    Infinity,
}

pub const LAMBDA_MAX: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct EnvFlowSolution {
    /// Points `r` on the environment grid, increasing, ending at `t`.
    pub times: Vec<f64>,
    /// `v^ξ_{r,t}(λ)` at each of `times`.
    pub v_env: Vec<f64>,
    /// `∫_r^t ψ(v^ξ_{s,t}(λ)) ds` at each of `times`.
    pub psi_integral: Vec<f64>,
    /// `lim_{λ→∞} v^ξ_{0,t}(λ)` when requested.
    pub vbar: Option<f64>,
}

impl EnvFlowSolution {
    pub fn v0(&self) -> f64 {
        self.v_env[0]
    }
}

/// `v^ξ_{r,t}(λ)` for `r ∈ [0, t]`, integrating backward in `r`.
///
/// Between grid points `ξ` is constant and `w(r) = v_{r,t}` solves
/// `dw/d(t−r) = −φ(w)`; across a jump of `ξ` the product `e^{ξ(r)}w(r)` is
/// continuous.
pub fn solve_v_env(
    params: &CbiParams,
    xi: &StepPath,
    lambda: FlowStart,
    t: f64,
) -> Result<EnvFlowSolution> {
    match lambda {
        FlowStart::Finite(l) => env_flow(params, xi, l, t, OdeTolerance::default()),
        FlowStart::Infinity => {
            let hi = env_flow(params, xi, LAMBDA_MAX, t, OdeTolerance::default())?;
            let lo = env_flow(params, xi, LAMBDA_MAX / 10.0, t, OdeTolerance::default())?;
            let (a, b) = (hi.v0(), lo.v0());
            let rel = if a == 0.0 { (a - b).abs() } else { (a - b).abs() / a };
            if !(rel < 1e-6) {
                return Err(Error::NoStabilisation { rel_change: rel });
            }
            Ok(EnvFlowSolution {
                vbar: Some(a),
                ..hi
            })
        }
    }
}

fn env_flow(
    params: &CbiParams,
    xi: &StepPath,
    lambda: f64,
    t: f64,
    tol: OdeTolerance,
) -> Result<EnvFlowSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParams(format!("λ = {lambda} must be finite and ≥ 0")));
    }
    if xi.values.is_empty() || !(xi.dt > 0.0) {
        return Err(Error::InvalidParams("empty environment path".into()));
    }
    if t > xi.horizon() * (1.0 + 1e-12) + 1e-12 || t < 0.0 {
        return Err(Error::InvalidParams(format!(
            "t = {t} outside the environment path [0, {}]",
            xi.horizon()
        )));
    }
    let rhs = log_rhs(params);

    let k_top = xi.index(t);
    let mut times = vec![t];
    let mut v = vec![lambda];
    let mut acc = vec![0.0];
    let mut w = lambda;
    let mut integral = 0.0;
    let mut r = t;
    let mut k = k_top;
    loop {
        // ξ ≡ values[k] on [k·dt, r].
        let left = k as f64 * xi.dt;
        let len = r - left;
        if len > 0.0 {
            if w > 0.0 {
                let tr = ode::solve_masked(&rhs, 0.0, [w.ln(), 0.0], len, &[], tol, LOG_V)?;
                let end = tr.y.last().unwrap();
                w = end[0].exp();
                integral += end[1];
            }
            r = left;
            times.push(r);
            v.push(w);
            acc.push(integral);
        }
        if k == 0 {
            break;
        }
        w *= (xi.values[k] - xi.values[k - 1]).exp();
        k -= 1;
    }
    times.reverse();
    v.reverse();
    acc.reverse();
    Ok(EnvFlowSolution {
        times,
        v_env: v,
        psi_integral: acc,
        vbar: None,
    })
}

/// `E[e^{−λX_t} | ξ] = exp(−x v^ξ_{0,t}(λ) − ∫_0^t ψ(v^ξ_{s,t}(λ)) ds)`.
pub fn env_transition_laplace(
    params: &CbiParams,
    xi: &StepPath,
    x: f64,
    t: f64,
    lambda: f64,
) -> Result<f64> {
    let sol = solve_v_env(params, xi, FlowStart::Finite(lambda), t)?;
    Ok((-x * sol.v_env[0] - sol.psi_integral[0]).exp())
}
