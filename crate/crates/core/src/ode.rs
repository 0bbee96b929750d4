//! Dormand–Prince 5(4) with step-size control and Hermite dense output.

use crate::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights equal the last row of A (FSAL); E = b5 − b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MIN_STEP: f64 = 1e-14;
const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeTolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
        }
    }
}

/// Accepted-step trajectory with derivatives for Hermite interpolation.
#[derive(Debug, Clone)]
pub(crate) struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
    /// Largest accepted normalised local error estimate.
    pub max_err: f64,
}

impl<const N: usize> Trajectory<N> {
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.y[0];
        }
        if t >= self.t[n - 1] {
            return self.y[n - 1];
        }
        let i = self.t.partition_point(|&s| s <= t).saturating_sub(1);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = h00 * self.y[i][k]
                + h10 * h * self.dy[i][k]
                + h01 * self.y[i + 1][k]
                + h11 * h * self.dy[i + 1][k];
        }
        out
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`, landing exactly on every
/// time in `stops` (sorted, inside `[t0, t1]`).
pub(crate) fn solve<F, const N: usize>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    stops: &[f64],
    tol: OdeTolerance,
) -> Result<Trajectory<N>>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    solve_masked(f, t0, y0, t1, stops, tol, [false; N])
}

/// Share of the relative tolerance granted to one step of a log component,
/// so that accumulated error stays within the requested tolerance.
const LOG_HEADROOM: f64 = 0.01;

/// As [`solve`], but components flagged in `log_scale` hold logarithms: their
/// absolute error is a relative error of the underlying quantity and is held
/// to a fraction of `tol.rel`.
pub(crate) fn solve_masked<F, const N: usize>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    stops: &[f64],
    tol: OdeTolerance,
    log_scale: [bool; N],
) -> Result<Trajectory<N>>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, &y)?;
    let mut traj = Trajectory {
        t: vec![t],
        y: vec![y],
        dy: vec![k0],
        max_err: 0.0,
    };
    if t1 <= t0 {
        return Ok(traj);
    }

    let mut h = initial_step(&y, &k0, t1 - t0, tol);
    let mut stop_idx = stops.partition_point(|&s| s <= t0);
    let mut steps = 0;

    while t < t1 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepUnderflow { t });
        }
        let target = if stop_idx < stops.len() && stops[stop_idx] < t1 {
            stops[stop_idx]
        } else {
            t1
        };
        let mut hit = false;
        if t + h >= target || (target - t - h) < 1e-12 * h {
            h = target - t;
            hit = true;
        }
        if h < MIN_STEP && !hit {
            return Err(Error::StepUnderflow { t });
        }

        let mut k = [[0.0; N]; 7];
        k[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for j in 0..s {
                let a = A[s][j];
                if a != 0.0 {
                    for d in 0..N {
                        ys[d] += h * a * k[j][d];
                    }
                }
            }
            k[s] = f(t + C[s] * h, &ys)?;
            if s == 6 {
                // ys is the 5th-order solution (FSAL).
                let mut err = 0.0_f64;
                for d in 0..N {
                    let mut e = 0.0;
                    for j in 0..7 {
                        e += E[j] * k[j][d];
                    }
                    let sc = if log_scale[d] {
                        LOG_HEADROOM * tol.rel
                    } else {
                        tol.abs + tol.rel * y[d].abs().max(ys[d].abs())
                    };
                    err = err.max((h * e / sc).abs());
                }
                if !err.is_finite() || ys.iter().any(|v| !v.is_finite()) {
                    h *= 0.2;
                    if h < MIN_STEP {
                        return Err(Error::StepUnderflow { t });
                    }
                    break;
                }
                if err <= 1.0 {
                    t = if hit { target } else { t + h };
                    y = ys;
                    k0 = k[6];
                    traj.t.push(t);
                    traj.y.push(y);
                    traj.dy.push(k0);
                    traj.max_err = traj.max_err.max(err);
                    if hit && stop_idx < stops.len() && stops[stop_idx] <= t {
                        while stop_idx < stops.len() && stops[stop_idx] <= t {
                            stop_idx += 1;
                        }
                    }
                }
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let fac = if err > 1.0 { fac.min(1.0) } else { fac };
                h *= fac;
                if err > 1.0 && h < MIN_STEP {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
    }
    Ok(traj)
}

fn initial_step<const N: usize>(y: &[f64; N], f0: &[f64; N], span: f64, tol: OdeTolerance) -> f64 {
    let mut d0 = 0.0_f64;
    let mut d1 = 0.0_f64;
    for i in 0..N {
        let sc = tol.abs + tol.rel * y[i].abs();
        d0 = d0.max((y[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span).max(MIN_STEP * 10.0)
}
