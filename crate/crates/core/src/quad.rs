//! Adaptive Gauss–Kronrod quadrature and geometric shell summation for
//! integrals with endpoints at `0` or `+∞`.
//!
//! Improper integrals are split into dyadic shells `[a·2^k, a·2^{k+1}]`
//! (towards infinity) or `[a·2^{-k-1}, a·2^{-k}]` (towards zero). Each shell
//! is integrated with adaptive G7–K15. The tail beyond the last shell is
//! extrapolated from the ratio of successive shell contributions, which is
//! exact for pure power-law integrands. A shell sequence whose ratio settles
//! at or above one is reported as `±∞`; anything undecidable is an error.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Default absolute tolerance for every quadrature in the crate.
pub const ABS_TOL: f64 = 1e-10;
/// Default relative tolerance.
pub const REL_TOL: f64 = 1e-8;
/// Integrals whose magnitude exceeds this are reported as infinite.
pub const OVERFLOW: f64 = 1e15;

const MAX_SHELLS: usize = 1100;
const MAX_INTERVALS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: ABS_TOL,
            rel: REL_TOL,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn checked<F: Fn(f64) -> f64>(f: &F, z: f64) -> Result<f64> {
    let v = f(z);
    if v.is_nan() {
        Err(Error::NonFiniteIntegrand { at: z })
    } else {
        Ok(v)
    }
}

/// One G7–K15 panel: returns (Kronrod estimate, |K − G|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = checked(f, c)?;
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = checked(f, c - dx)? + checked(f, c + dx)?;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

/// Globally adaptive G7–K15 on a finite interval.
///
/// Infinite panel values (a pole inside the interval) propagate as `±∞`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let (v, e) = gk15(f, a, b)?;
    if !v.is_finite() {
        return Ok(v);
    }
    let mut panels = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > tol.abs.max(tol.rel * total.abs()) {
        if panels.len() >= MAX_INTERVALS {
            // Accept a slightly looser result before giving up.
            if err <= 1e3 * tol.abs.max(tol.rel * total.abs()) {
                break;
            }
            return Err(Error::NonConvergent { lo: a, hi: b });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                if p.3 > best.1 {
                    (i, p.3)
                } else {
                    best
                }
            });
        let (lo, hi, pv, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && hi > mid) {
            // Cannot subdivide further in floating point.
            return Err(Error::NonConvergent { lo: a, hi: b });
        }
        let (v1, e1) = gk15(f, lo, mid)?;
        let (v2, e2) = gk15(f, mid, hi)?;
        if !(v1 + v2).is_finite() {
            return Ok(v1 + v2);
        }
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated round-off from the running updates.
    Ok(panels.iter().map(|p| p.2).sum())
}

/// `∫ f` from `start` towards `end` (either `0` or `+∞`, or a finite point
/// reached geometrically), summing dyadic shells.
pub fn integrate_geometric<F: Fn(f64) -> f64>(
    f: &F,
    start: f64,
    end: f64,
    tol: Tolerance,
) -> Result<f64> {
    debug_assert!(start > 0.0);
    if start == end {
        return Ok(0.0);
    }
    let outward = end > start;
    let factor = if outward { 2.0 } else { 0.5 };
    let shell_tol = Tolerance {
        abs: tol.abs / 16.0,
        rel: tol.rel / 4.0,
    };

    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut prev_abs: Option<f64> = None;
    let mut ratios: VecDeque<f64> = VecDeque::with_capacity(4);
    let mut zero_run = 0;
    let mut near = start;

    for k in 0..MAX_SHELLS {
        let mut far = near * factor;
        let mut last = false;
        if (outward && far >= end) || (!outward && far <= end) {
            far = end;
            last = true;
        }
        if !far.is_finite() || (far == 0.0 && !last) {
            break;
        }
        let (lo, hi) = if outward { (near, far) } else { (far, near) };
        let s = match integrate(f, lo, hi, shell_tol) {
            Ok(s) => s,
            // Far out the integrand may lose precision (subnormal ranges);
            // fall back on the settled shell trend if there is one.
            Err(e) => {
                let total = sum + comp;
                match ratios.back() {
                    Some(&r) if k >= 60 && ratios.len() == 4 && stable(&ratios) => {
                        if r >= 1.0 - 1e-6 {
                            return Ok(total.signum() * f64::INFINITY);
                        }
                        let last = prev_abs.unwrap_or(0.0) * total.signum();
                        return Ok(total + last * r / (1.0 - r));
                    }
                    _ => return Err(e),
                }
            }
        };
        // Neumaier summation.
        let t = sum + s;
        if sum.abs() >= s.abs() {
            comp += (sum - t) + s;
        } else {
            comp += (s - t) + sum;
        }
        sum = t;
        let total = sum + comp;
        if !total.is_finite() || total.abs() > OVERFLOW {
            return Ok(if total < 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            });
        }
        if last {
            return Ok(total);
        }
        near = far;

        let a = s.abs();
        if a == 0.0 {
            zero_run += 1;
            if zero_run >= 3 {
                return Ok(total);
            }
            prev_abs = None;
            ratios.clear();
            continue;
        }
        zero_run = 0;
        if let Some(p) = prev_abs {
            if ratios.len() == 4 {
                ratios.pop_front();
            }
            ratios.push_back(a / p);
        }
        prev_abs = Some(a);

        let thresh = tol.abs.max(tol.rel * total.abs());
        if ratios.len() >= 2 {
            let r = ratios[ratios.len() - 1];
            let rp = ratios[ratios.len() - 2];
            if r < 0.999 && rp < 0.999 {
                let tail = a * r / (1.0 - r);
                if tail <= thresh {
                    return Ok(total + s.signum() * tail);
                }
            }
            // Far out with a settled ratio: extrapolate the geometric tail.
            if ratios.len() == 4 && k >= 60 && stable(&ratios) && r < 1.0 - 1e-6 {
                let tail = s * r / (1.0 - r);
                let out = total + tail;
                if out.abs() > OVERFLOW {
                    return Ok(out.signum() * f64::INFINITY);
                }
                return Ok(out);
            }
        }
    }
    // Shells exhausted (the geometric range of f64 is used up).
    match ratios.back() {
        Some(&r) if r >= 1.0 - 1e-6 && stable(&ratios) => Ok(if sum < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }),
        None if zero_run > 0 => Ok(sum + comp),
        _ => {
            if outward {
                Err(Error::NonConvergent {
                    lo: start,
                    hi: f64::INFINITY,
                })
            } else {
                Err(Error::NonConvergent { lo: 0.0, hi: start })
            }
        }
    }
}

fn stable(ratios: &VecDeque<f64>) -> bool {
    ratios
        .iter()
        .zip(ratios.iter().skip(1))
        .all(|(a, b)| (a - b).abs() <= 1e-6 * b.abs().max(1e-300))
}

/// `∫_a^b f` for `0 ≤ a < b ≤ ∞`, splitting at `pivot` so that the
/// behaviour near zero and near infinity are handled by shell summation.
pub fn integrate_half_line<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    pivot: f64,
    tol: Tolerance,
) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    if a < pivot {
        let top = b.min(pivot);
        total += integrate_geometric(f, top, a, tol)?;
    }
    if b > pivot {
        let bottom = a.max(pivot);
        total += integrate_geometric(f, bottom, b, tol)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((v - 0.0).abs() < 1e-14);
    }

    #[test]
    fn power_tail_towards_infinity() {
        // ∫_1^∞ z^{-2} dz = 1
        let v = integrate_geometric(&|z: f64| z.powi(-2), 1.0, f64::INFINITY, Tolerance::default())
            .unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        // ∫_1^∞ z^{-1.01} dz = 100 converges slowly
        let v = integrate_geometric(&|z: f64| z.powf(-1.01), 1.0, f64::INFINITY, Tolerance::default())
            .unwrap();
        assert!((v - 100.0).abs() < 1e-5, "{v}");
    }

    #[test]
    fn power_singularity_at_zero() {
        // ∫_0^1 z^{-1/2} dz = 2
        let v = integrate_geometric(&|z: f64| z.powf(-0.5), 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn harmonic_divergence_is_infinite() {
        let v = integrate_geometric(&|z: f64| 1.0 / z, 1.0, f64::INFINITY, Tolerance::default())
            .unwrap();
        assert_eq!(v, f64::INFINITY);
        let v = integrate_geometric(&|z: f64| 1.0 / z, 1.0, 0.0, Tolerance::default()).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn growing_shells_overflow_to_infinity() {
        let v = integrate_geometric(&|z: f64| z.powf(-1.2), 1.0, 0.0, Tolerance::default()).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn crossover_is_not_mistaken_for_divergence() {
        // (1 − e^{−λz}) z^{-1.5} grows like λ z^{-0.5} until z ≈ 1/λ.
        let lambda = 1e-9_f64;
        let f = |z: f64| -(-lambda * z).exp_m1() * z.powf(-1.5);
        let v = integrate_half_line(&f, 0.0, f64::INFINITY, 1.0, Tolerance::default()).unwrap();
        // Γ(1/2)·λ^{1/2}/(1/2) = 2√π·√λ
        let exact = 2.0 * std::f64::consts::PI.sqrt() * lambda.sqrt();
        assert!((v - exact).abs() < 1e-8 * exact.max(1.0), "{v} vs {exact}");
    }

    #[test]
    fn nan_integrand_is_an_error() {
        let r = integrate(&|_z: f64| f64::NAN, 0.0, 1.0, Tolerance::default());
        assert!(matches!(r, Err(Error::NonFiniteIntegrand { .. })));
    }
}
