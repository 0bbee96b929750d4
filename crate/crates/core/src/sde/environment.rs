//! The environment processes `ξ` and `Z`, driven by one Brownian motion and
//! one Poisson random measure.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use super::rng::{stream_rng, Stream};
use super::{EnvironmentParams, SimConfig};
use crate::flow::StepPath;
use crate::mechanisms::{levy_integral, Interval, JumpSampler};
use crate::Result;

/// Increments of one Euler step of the environment.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct EnvIncrement {
    pub d_xi: f64,
    pub d_z: f64,
    /// Martingale part of `ΔZ`.
    pub d_mart: f64,
}

/// Step constants of the environment.
#[derive(Debug, Clone)]
pub(crate) struct EnvStepper {
    dt: f64,
    sqrt_dt: f64,
    b_e: f64,
    a_e: f64,
    sigma_e: f64,
    /// `∫_{[−1,1]}(e^z − 1) μ_E`, `∫_{[−1,1]} z μ_E`, `∫(e^z − 1) μ_E`.
    comp_z_small: f64,
    comp_xi_small: f64,
    comp_z_all: f64,
    jumps: Option<JumpSampler>,
}

impl EnvStepper {
    pub fn new(env: &EnvironmentParams, dt: f64) -> Result<Self> {
        let small = |f: fn(f64) -> f64| {
            levy_integral(
                &env.mu_e,
                move |z| if (-1.0..=1.0).contains(&z) { f(z) } else { 0.0 },
                Interval::real_line(),
            )
        };
        let comp_z_small = small(f64::exp_m1)?;
        let comp_xi_small = small(|z| z)?;
        let comp_z_all = levy_integral(&env.mu_e, f64::exp_m1, Interval::real_line())?;
        let jumps = if env.mu_e.is_zero() {
            None
        } else {
            Some(JumpSampler::new(&env.mu_e, Interval::real_line())?)
        };
        Ok(Self {
            dt,
            sqrt_dt: dt.sqrt(),
            b_e: env.b_e,
            a_e: env.a_e()?,
            sigma_e: env.sigma_e,
            comp_z_small,
            comp_xi_small,
            comp_z_all,
            jumps,
        })
    }

    /// One step; the draw order is one normal followed by exponential
    /// inter-arrival times and marks.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvIncrement {
        let g: f64 = rng.sample(StandardNormal);
        let w = self.sigma_e * self.sqrt_dt * g;
        let mut jump_z = 0.0;
        let mut jump_xi = 0.0;
        if let Some(s) = &self.jumps {
            let rate = s.mass();
            let mut t: f64 = rng.sample::<f64, _>(Exp1) / rate;
            while t < self.dt {
                let z = s.sample(rng);
                jump_z += z.exp_m1();
                jump_xi += z;
                t += rng.sample::<f64, _>(Exp1) / rate;
            }
        }
        EnvIncrement {
            d_xi: self.a_e * self.dt + w + jump_xi - self.dt * self.comp_xi_small,
            d_z: self.b_e * self.dt + w + jump_z - self.dt * self.comp_z_small,
            d_mart: w + jump_z - self.dt * self.comp_z_all,
        }
    }
}

/// Simulated `ξ` and `Z` on the grid `k·dt`.
#[derive(Debug, Clone, Serialize)]
pub struct EnvironmentPath {
    pub xi: StepPath,
    pub z: StepPath,
}

/// `ξ` and `Z` of path `path_index`; uses the same environment stream, in
/// the same order, as CBIRE simulation of that path.
pub fn simulate_environment(
    env: &EnvironmentParams,
    config: &SimConfig,
    path_index: u64,
) -> Result<EnvironmentPath> {
    env.validate()?;
    let stepper = EnvStepper::new(env, config.dt)?;
    let mut rng = stream_rng(config.master_seed, path_index, Stream::Environment);
    let n = config.steps();
    let mut xi = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let (mut a, mut b) = (0.0, 0.0);
    xi.push(a);
    z.push(b);
    for _ in 0..n {
        let inc = stepper.step(&mut rng);
        a += inc.d_xi;
        b += inc.d_z;
        xi.push(a);
        z.push(b);
    }
    Ok(EnvironmentPath {
        xi: StepPath {
            dt: config.dt,
            values: xi,
        },
        z: StepPath {
            dt: config.dt,
            values: z,
        },
    })
}
