//! Lévy jump measures, the branching mechanism `φ`, the immigration
//! mechanism `ψ` and the integrability conditions derived from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quad::{self, Tolerance};
use crate::{Error, Result};

/// Parametric jump measure.
///
/// Densities live on `(0, ∞)`. Atoms may sit anywhere on the real line
/// except `0`, but only environment measures may use negative positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevyMeasure {
    Zero,
    /// Point masses `(position, mass)`.
    FiniteAtoms { atoms: Vec<(f64, f64)> },
    /// `c·z^p` on `(0, cutoff]`, or on `(0, ∞)` without a cutoff.
    PowerLawDensity {
        coefficient: f64,
        exponent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    /// `c·z^p·e^{−θz}` on `(0, ∞)`.
    TemperedPowerLaw {
        coefficient: f64,
        exponent: f64,
        tempering: f64,
    },
}

impl Default for LevyMeasure {
    fn default() -> Self {
        LevyMeasure::Zero
    }
}

/// Half-open interval `(lo, hi]`; `hi` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
    pub const fn positive() -> Self {
        Self::new(0.0, f64::INFINITY)
    }
    pub const fn above(lo: f64) -> Self {
        Self::new(lo, f64::INFINITY)
    }
    pub const fn real_line() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }
    pub fn contains(&self, z: f64) -> bool {
        z > self.lo && z <= self.hi
    }
}

/// `e^{−x} − 1 + x` without cancellation for small `x`.
#[inline]
pub fn expm1_neg_plus(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        (-x).exp_m1() + x
    }
}

impl LevyMeasure {
    pub fn is_zero(&self) -> bool {
        match self {
            LevyMeasure::Zero => true,
            LevyMeasure::FiniteAtoms { atoms } => atoms.iter().all(|&(_, w)| w == 0.0),
            LevyMeasure::PowerLawDensity { coefficient, cutoff, .. } => {
                *coefficient == 0.0 || cutoff.is_some_and(|c| c <= 0.0)
            }
            LevyMeasure::TemperedPowerLaw { coefficient, .. } => *coefficient == 0.0,
        }
    }

    /// Structural checks. `on_real_line` admits negative atom positions.
    pub fn validate(&self, on_real_line: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMeasure(msg));
        match self {
            LevyMeasure::Zero => Ok(()),
            LevyMeasure::FiniteAtoms { atoms } => {
                for &(z, w) in atoms {
                    if !z.is_finite() || !w.is_finite() {
                        return bad(format!("non-finite atom ({z}, {w})"));
                    }
                    if w < 0.0 {
                        return bad(format!("negative atom mass {w} at {z}"));
                    }
                    if z == 0.0 {
                        return bad("atom at 0".into());
                    }
                    if z < 0.0 && !on_real_line {
                        return bad(format!("atom at negative position {z}"));
                    }
                }
                Ok(())
            }
            LevyMeasure::PowerLawDensity {
                coefficient,
                exponent,
                cutoff,
            } => {
                if on_real_line {
                    return bad("environment measures must be finite atoms".into());
                }
                if !(coefficient.is_finite() && *coefficient >= 0.0) {
                    return bad(format!("coefficient {coefficient} must be finite and ≥ 0"));
                }
                if !exponent.is_finite() {
                    return bad(format!("exponent {exponent} must be finite"));
                }
                if let Some(c) = cutoff {
                    if !(*c > 0.0) {
                        return bad(format!("cutoff {c} must be positive"));
                    }
                }
                Ok(())
            }
            LevyMeasure::TemperedPowerLaw {
                coefficient,
                exponent,
                tempering,
            } => {
                if on_real_line {
                    return bad("environment measures must be finite atoms".into());
                }
                if !(coefficient.is_finite() && *coefficient >= 0.0) {
                    return bad(format!("coefficient {coefficient} must be finite and ≥ 0"));
                }
                if !exponent.is_finite() {
                    return bad(format!("exponent {exponent} must be finite"));
                }
                if !(tempering.is_finite() && *tempering > 0.0) {
                    return bad(format!("tempering {tempering} must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Density at `z > 0` (zero for atomic measures).
    fn density(&self, z: f64) -> f64 {
        match *self {
            LevyMeasure::PowerLawDensity {
                coefficient,
                exponent,
                cutoff,
            } => {
                if cutoff.is_some_and(|c| z > c) {
                    0.0
                } else {
                    coefficient * z.powf(exponent)
                }
            }
            LevyMeasure::TemperedPowerLaw {
                coefficient,
                exponent,
                tempering,
            } => coefficient * z.powf(exponent) * (-tempering * z).exp(),
            _ => 0.0,
        }
    }

    fn upper_support(&self) -> f64 {
        match *self {
            LevyMeasure::PowerLawDensity { cutoff: Some(c), .. } => c,
            _ => f64::INFINITY,
        }
    }

    /// True when the measure has infinitely many small jumps.
    pub fn infinite_activity(&self) -> bool {
        match *self {
            LevyMeasure::PowerLawDensity {
                coefficient,
                exponent,
                ..
            }
            | LevyMeasure::TemperedPowerLaw {
                coefficient,
                exponent,
                ..
            } => coefficient > 0.0 && exponent <= -1.0,
            _ => false,
        }
    }

    /// Total mass on `domain`, possibly `+∞`.
    pub fn mass(&self, domain: Interval) -> Result<f64> {
        match *self {
            LevyMeasure::PowerLawDensity {
                coefficient,
                exponent,
                cutoff,
            } => {
                let a = domain.lo.max(0.0);
                let b = domain.hi.min(cutoff.unwrap_or(f64::INFINITY));
                if !(b > a) || coefficient == 0.0 {
                    return Ok(0.0);
                }
                Ok(coefficient * power_integral(exponent, a, b))
            }
            _ => levy_integral(self, |_| 1.0, domain),
        }
    }
}

/// `∫_a^b z^p dz` in closed form, `+∞` when divergent.
fn power_integral(p: f64, a: f64, b: f64) -> f64 {
    let q = p + 1.0;
    if q == 0.0 {
        if a == 0.0 || b.is_infinite() {
            return f64::INFINITY;
        }
        return (b / a).ln();
    }
    if a == 0.0 && q < 0.0 {
        return f64::INFINITY;
    }
    if b.is_infinite() && q > 0.0 {
        return f64::INFINITY;
    }
    let bq = if b.is_infinite() { 0.0 } else { b.powf(q) };
    let aq = if a == 0.0 { 0.0 } else { a.powf(q) };
    (bq - aq) / q
}

/// `∫_domain f(z) measure(dz)`.
///
/// Atoms are summed exactly in the order given. Densities are integrated by
/// adaptive quadrature split at `z = 1`; a divergent integral is reported
/// as `±∞`, an undecidable one as [`Error::NonConvergent`].
pub fn levy_integral<F: Fn(f64) -> f64>(
    measure: &LevyMeasure,
    f: F,
    domain: Interval,
) -> Result<f64> {
    match measure {
        LevyMeasure::Zero => Ok(0.0),
        LevyMeasure::FiniteAtoms { atoms } => {
            let mut s = 0.0;
            for &(z, w) in atoms {
                if domain.contains(z) && w != 0.0 {
                    let v = f(z);
                    if v.is_nan() {
                        return Err(Error::NonFiniteIntegrand { at: z });
                    }
                    s += w * v;
                }
            }
            Ok(s)
        }
        _ => {
            let a = domain.lo.max(0.0);
            let b = domain.hi.min(measure.upper_support());
            if !(b > a) {
                return Ok(0.0);
            }
            let g = |z: f64| {
                let d = measure.density(z);
                if d == 0.0 {
                    0.0
                } else {
                    f(z) * d
                }
            };
            quad::integrate_half_line(&g, a, b, 1.0, Tolerance::default())
        }
    }
}

/// Admissible CBI parameters `(β, b, σ, m, ν)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbiParams {
    pub beta: f64,
    pub b: f64,
    pub sigma: f64,
    #[serde(default)]
    pub m: LevyMeasure,
    #[serde(default)]
    pub nu: LevyMeasure,
}

impl CbiParams {
    /// Diffusion-only parameters with zero jump measures.
    pub fn diffusion(beta: f64, b: f64, sigma: f64) -> Self {
        Self {
            beta,
            b,
            sigma,
            m: LevyMeasure::Zero,
            nu: LevyMeasure::Zero,
        }
    }

    pub fn with_m(mut self, m: LevyMeasure) -> Self {
        self.m = m;
        self
    }

    pub fn with_nu(mut self, nu: LevyMeasure) -> Self {
        self.nu = nu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParams(format!("β = {} must be ≥ 0", self.beta)));
        }
        if !self.b.is_finite() {
            return Err(Error::InvalidParams(format!("b = {} must be finite", self.b)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParams(format!("σ = {} must be ≥ 0", self.sigma)));
        }
        self.m.validate(false)?;
        self.nu.validate(false)?;
        let mc = measure_condition(&self.m, &self.nu)?;
        if !mc.holds {
            return Err(Error::InvalidMeasure(format!(
                "∫(z∧z²)m(dz) = {}, ∫(1∧z)ν(dz) = {}; both must be finite",
                mc.branching, mc.immigration
            )));
        }
        Ok(())
    }

    /// `φ(λ) = bλ + ½σ²λ² + ∫(e^{−λz} − 1 + λz) m(dz)`.
    pub fn phi(&self, lambda: f64) -> Result<f64> {
        phi_eval(self, lambda)
    }

    /// `ψ(λ) = βλ + ∫(1 − e^{−λz}) ν(dz)`.
    pub fn psi(&self, lambda: f64) -> Result<f64> {
        psi_eval(self, lambda)
    }

    /// `ψ'(0) = β + ∫ z ν(dz)`, possibly `+∞`.
    pub fn psi_prime0(&self) -> Result<f64> {
        Ok(self.beta + levy_integral(&self.nu, |z| z, Interval::positive())?)
    }

    /// True when `ψ ≡ 0`.
    pub fn psi_vanishes(&self) -> bool {
        self.beta == 0.0 && self.nu.is_zero()
    }
}

pub fn phi_eval(params: &CbiParams, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let jumps = levy_integral(&params.m, |z| expm1_neg_plus(lambda * z), Interval::positive())?;
    Ok(params.b * lambda + 0.5 * params.sigma * params.sigma * lambda * lambda + jumps)
}

pub fn psi_eval(params: &CbiParams, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let jumps = levy_integral(&params.nu, |z| -(-lambda * z).exp_m1(), Interval::positive())?;
    Ok(params.beta * lambda + jumps)
}

/// Values of `∫(z∧z²)m(dz)` and `∫(1∧z)ν(dz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureCondition {
    pub branching: f64,
    pub immigration: f64,
    pub holds: bool,
}

pub fn measure_condition(m: &LevyMeasure, nu: &LevyMeasure) -> Result<MeasureCondition> {
    let branching = levy_integral(m, |z| z.min(z * z), Interval::positive())?;
    let immigration = levy_integral(nu, |z| z.min(1.0), Interval::positive())?;
    Ok(MeasureCondition {
        branching,
        immigration,
        holds: branching.is_finite() && immigration.is_finite(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreyVerdict {
    Holds,
    Fails,
    /// `φ` is never positive on the probing grid.
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismReport {
    pub grey_holds: bool,
    pub grey_verdict: GreyVerdict,
    /// First probe point with `φ(θ) > 0`.
    pub grey_theta: Option<f64>,
    /// `∫_θ^Λ dλ/φ(λ)`.
    pub grey_integral: f64,
    /// Extrapolated `∫_Λ^∞ dλ/φ(λ)`.
    pub grey_tail: f64,
    pub grey_cap: f64,
    pub log_moment: f64,
    pub first_moment_tail: f64,
    pub invariant_exists: bool,
    /// `∫_0^1 ψ(u)/φ(u) du` when it was evaluated.
    pub invariant_integral: Option<f64>,
    /// For `b > 0`: `invariant_exists` agrees with finiteness of the log moment.
    pub log_moment_consistent: bool,
    pub measure_condition: MeasureCondition,
}

pub fn check_conditions(params: &CbiParams) -> Result<MechanismReport> {
    params.validate()?;
    let mc = measure_condition(&params.m, &params.nu)?;

    let (grey_verdict, grey_theta, grey_integral, grey_tail, grey_cap) = grey(params)?;

    let log_moment = levy_integral(&params.nu, f64::ln, Interval::above(1.0))?;
    let first_moment_tail = levy_integral(&params.nu, |z| z, Interval::above(1.0))?;

    let (invariant_exists, invariant_integral) = if params.psi_vanishes() {
        (true, None)
    } else if params.b < 0.0 {
        (false, None)
    } else {
        let v = psi_over_phi_integral(params, 1.0)?;
        (v.is_finite(), Some(v))
    };
    let log_moment_consistent = params.b <= 0.0 || invariant_exists == log_moment.is_finite();

    Ok(MechanismReport {
        grey_holds: grey_verdict == GreyVerdict::Holds,
        grey_verdict,
        grey_theta,
        grey_integral,
        grey_tail,
        grey_cap,
        log_moment,
        first_moment_tail,
        invariant_exists,
        invariant_integral,
        log_moment_consistent,
        measure_condition: mc,
    })
}

fn grey(params: &CbiParams) -> Result<(GreyVerdict, Option<f64>, f64, f64, f64)> {
    let mut theta = None;
    for k in -30..=60 {
        let l = 2f64.powi(k);
        if params.phi(l)? > 0.0 {
            theta = Some(l);
            break;
        }
    }
    let Some(theta) = theta else {
        return Ok((GreyVerdict::Inapplicable, None, f64::NAN, f64::NAN, f64::NAN));
    };
    let cap = 1e6_f64.max(1e3 * theta);
    let inv = |l: f64| match params.phi(l) {
        Ok(p) if p > 0.0 => 1.0 / p,
        Ok(_) => f64::INFINITY,
        Err(_) => f64::NAN,
    };
    let integral = quad::integrate_geometric(&inv, theta, cap, Tolerance::default())?;
    let tail = if params.sigma > 0.0 {
        2.0 / (params.sigma * params.sigma * cap)
    } else {
        let top = params.phi(cap)?;
        let half = params.phi(cap / 2.0)?;
        let p = (top / half).log2();
        if p > 1.0 + 1e-3 {
            cap / ((p - 1.0) * top)
        } else {
            f64::INFINITY
        }
    };
    let holds = integral.is_finite() && tail.is_finite();
    let verdict = if holds {
        GreyVerdict::Holds
    } else {
        GreyVerdict::Fails
    };
    Ok((verdict, Some(theta), integral, tail, cap))
}

/// `∫_0^λ ψ(u)/φ(u) du` by shell summation towards zero.
pub(crate) fn psi_over_phi_integral(params: &CbiParams, lambda: f64) -> Result<f64> {
    if lambda == 0.0 || params.psi_vanishes() {
        return Ok(0.0);
    }
    let g = |u: f64| -> f64 {
        let (Ok(p), Ok(f)) = (params.psi(u), params.phi(u)) else {
            return f64::NAN;
        };
        if f > 0.0 {
            p / f
        } else if p == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    quad::integrate_geometric(&g, lambda, 0.0, Tolerance::default())
}

/// Precomputed sampler for the normalised restriction of a measure to an
/// interval of finite positive mass.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    kind: SamplerKind,
    mass: f64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Atoms { cum: Vec<f64>, pos: Vec<f64> },
    Power { p: f64, a: f64, b: f64 },
    Tempered { p: f64, a: f64, b: f64, theta: f64 },
}

impl JumpSampler {
    pub fn new(measure: &LevyMeasure, domain: Interval) -> Result<Self> {
        let zero = Error::ZeroMass {
            lo: domain.lo,
            hi: domain.hi,
        };
        let mass = measure.mass(domain)?;
        if !(mass > 0.0) {
            return Err(zero);
        }
        if !mass.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "infinite mass on ({}, {}]; raise the jump cutoff",
                domain.lo, domain.hi
            )));
        }
        let kind = match *measure {
            LevyMeasure::Zero => return Err(zero),
            LevyMeasure::FiniteAtoms { ref atoms } => {
                let mut cum = Vec::new();
                let mut pos = Vec::new();
                let mut acc = 0.0;
                for &(z, w) in atoms {
                    if domain.contains(z) && w > 0.0 {
                        acc += w;
                        cum.push(acc);
                        pos.push(z);
                    }
                }
                SamplerKind::Atoms { cum, pos }
            }
            LevyMeasure::PowerLawDensity {
                exponent, cutoff, ..
            } => SamplerKind::Power {
                p: exponent,
                a: domain.lo.max(0.0),
                b: domain.hi.min(cutoff.unwrap_or(f64::INFINITY)),
            },
            LevyMeasure::TemperedPowerLaw {
                exponent,
                tempering,
                ..
            } => {
                let a = domain.lo.max(0.0);
                let mut b = domain.hi;
                if exponent >= -1.0 {
                    b = b.min(a + 50.0 / tempering);
                }
                SamplerKind::Tempered {
                    p: exponent,
                    a,
                    b,
                    theta: tempering,
                }
            }
        };
        Ok(Self { kind, mass })
    }

    /// Mass of the restricted measure.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            SamplerKind::Atoms { ref cum, ref pos } => {
                if pos.len() == 1 {
                    return pos[0];
                }
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let i = cum.partition_point(|&c| c <= u).min(pos.len() - 1);
                pos[i]
            }
            SamplerKind::Power { p, a, b } => power_inverse(p, a, b, rng.random::<f64>()),
            SamplerKind::Tempered { p, a, b, theta } => loop {
                let z = power_inverse(p, a, b, rng.random::<f64>());
                if rng.random::<f64>() <= (-theta * (z - a)).exp() {
                    break z;
                }
            },
        }
    }
}

/// Inverse CDF of the density `∝ z^p` on `(a, b]`.
fn power_inverse(p: f64, a: f64, b: f64, u: f64) -> f64 {
    let q = p + 1.0;
    if q == 0.0 {
        return a * (b / a).powf(u);
    }
    if a == 0.0 {
        return b * u.powf(1.0 / q);
    }
    let r = if b.is_infinite() { 0.0 } else { (b / a).powf(q) };
    a * (1.0 + u * (r - 1.0)).powf(1.0 / q)
}

/// One draw from the normalised restriction of `measure` to `domain`.
pub fn sample_jump<R: Rng + ?Sized>(
    measure: &LevyMeasure,
    domain: Interval,
    rng: &mut R,
) -> Result<f64> {
    Ok(JumpSampler::new(measure, domain)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_argument_series_matches_direct_form() {
        for &x in &[1e-3_f64, 2e-3, 1e-2] {
            let direct = (-x).exp_m1() + x;
            assert!((expm1_neg_plus(x) - direct).abs() <= 1e-15 * direct.max(1e-300) * 1e3);
        }
        assert_eq!(expm1_neg_plus(0.0), 0.0);
    }

    #[test]
    fn power_integral_closed_forms() {
        assert_eq!(power_integral(-2.0, 1.0, f64::INFINITY), 1.0);
        assert_eq!(power_integral(-1.0, 1.0, f64::INFINITY), f64::INFINITY);
        assert!((power_integral(-1.0, 1.0, std::f64::consts::E) - 1.0).abs() < 1e-15);
        assert_eq!(power_integral(-0.5, 0.0, 1.0), 2.0);
        assert_eq!(power_integral(-1.5, 0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn power_inverse_hits_endpoints() {
        assert_eq!(power_inverse(-2.0, 1.0, f64::INFINITY, 0.0), 1.0);
        assert!((power_inverse(-2.0, 1.0, f64::INFINITY, 0.5) - 2.0).abs() < 1e-15);
        assert!((power_inverse(-1.0, 1.0, 4.0, 0.5) - 2.0).abs() < 1e-15);
        assert!((power_inverse(1.0, 0.0, 1.0, 0.25) - 0.5).abs() < 1e-15);
    }
}
