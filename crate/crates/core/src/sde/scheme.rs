//! Euler scheme with thinning for state-dependent jumps.
//!
//! A path is advanced in "lanes": one lane for a single trajectory, two for
//! a coupled pair. Every lane consumes the same Gaussian variate, the same
//! Poisson proposals and the same acceptance uniforms, so the lower member
//! of an ordered pair only ever accepts a subset of the upper member's
//! branching jumps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::environment::EnvStepper;
use super::rng::{stream_rng, Stream};
use super::{ModelSpec, NonlinearRates, SimConfig};
use crate::mechanisms::{levy_integral, Interval, JumpSampler, LevyMeasure};
use crate::{Error, Result};

const THINNING_SAFETY: f64 = 1.5;
const Z_FLOOR: f64 = -1.0 + 1e-12;

#[derive(Debug, Clone)]
enum Coefficients {
    Cbi { beta: f64, b: f64, sigma2: f64 },
    Cnbi(NonlinearRates),
}

/// Precomputed per-step constants of a model.
#[derive(Debug, Clone)]
pub(crate) struct Stepper {
    coef: Coefficients,
    dt: f64,
    /// `∫_{(0,ε]} z² m(dz)`, folded into the diffusion.
    small_var: f64,
    /// `∫_{(ε,∞)} z m(dz)`, the compensator of simulated branching jumps.
    comp_m: f64,
    branching: Option<JumpSampler>,
    /// `∫_{(0,ε]} z ν(dz)`, added as drift.
    small_mean_nu: f64,
    immigration: Option<JumpSampler>,
    env: Option<EnvStepper>,
}

fn split(measure: &LevyMeasure, eps: f64) -> f64 {
    if measure.infinite_activity() {
        eps
    } else {
        0.0
    }
}

fn sampler(measure: &LevyMeasure, eps: f64) -> Result<Option<JumpSampler>> {
    if measure.is_zero() || measure.mass(Interval::above(eps))? == 0.0 {
        Ok(None)
    } else {
        JumpSampler::new(measure, Interval::above(eps)).map(Some)
    }
}

impl Stepper {
    pub fn new(model: &ModelSpec, config: &SimConfig) -> Result<Self> {
        let m = model.branching_measure();
        let nu = model.immigration_measure();
        let eps_m = split(m, config.jump_cutoff);
        let eps_nu = split(nu, config.jump_cutoff);
        let small_var = if eps_m > 0.0 {
            levy_integral(m, |z| z * z, Interval::new(0.0, eps_m))?
        } else {
            0.0
        };
        let comp_m = levy_integral(m, |z| z, Interval::above(eps_m))?;
        if !comp_m.is_finite() {
            return Err(Error::InvalidMeasure(
                "∫_{z>1} z m(dz) must be finite for the compensated branching jumps".into(),
            ));
        }
        let small_mean_nu = if eps_nu > 0.0 {
            levy_integral(nu, |z| z, Interval::new(0.0, eps_nu))?
        } else {
            0.0
        };
        let coef = match model {
            ModelSpec::Cbi(p) => Coefficients::Cbi {
                beta: p.beta,
                b: p.b,
                sigma2: p.sigma * p.sigma,
            },
            ModelSpec::Cbire(p) => Coefficients::Cbi {
                beta: p.cbi.beta,
                b: p.cbi.b,
                sigma2: p.cbi.sigma * p.cbi.sigma,
            },
            ModelSpec::Cnbi(p) => Coefficients::Cnbi(p.rates.clone()),
        };
        let env = match model {
            ModelSpec::Cbire(p) => Some(EnvStepper::new(&p.env, config.dt)?),
            _ => None,
        };
        Ok(Self {
            coef,
            dt: config.dt,
            small_var,
            comp_m,
            branching: sampler(m, eps_m)?,
            small_mean_nu,
            immigration: sampler(nu, eps_nu)?,
            env,
        })
    }

    #[inline]
    fn drift(&self, x: f64) -> f64 {
        match &self.coef {
            Coefficients::Cbi { beta, b, .. } => beta - b * x,
            Coefficients::Cnbi(r) => r.gamma0.eval(x),
        }
    }

    #[inline]
    fn branch_rate(&self, x: f64) -> f64 {
        match &self.coef {
            Coefficients::Cbi { .. } => x.max(0.0),
            Coefficients::Cnbi(r) => r.gamma2.eval(x),
        }
    }

    #[inline]
    fn variance_rate(&self, x: f64) -> f64 {
        match &self.coef {
            Coefficients::Cbi { sigma2, .. } => (sigma2 + self.small_var) * x.max(0.0),
            Coefficients::Cnbi(r) => r.gamma1.eval(x) + r.gamma2.eval(x) * self.small_var,
        }
    }

    /// Advance every lane by one step; `mart` accumulates the martingale
    /// part (diffusion, compensated branching and environment noise).
    fn step<const L: usize>(&self, x: &mut [f64; L], mart: &mut [f64; L], rngs: &mut Streams) {
        let dt = self.dt;
        let g: f64 = rngs.gauss.sample(StandardNormal);
        let mut rates = [0.0; L];
        let mut next = [0.0; L];
        for l in 0..L {
            let xl = x[l];
            rates[l] = self.branch_rate(xl);
            let diff = (self.variance_rate(xl) * dt).sqrt() * g;
            let comp = rates[l] * self.comp_m * dt;
            next[l] = xl + self.drift(xl) * dt + diff - comp + self.small_mean_nu * dt;
            mart[l] += diff - comp;
        }

        if let Some(s) = &self.branching {
            let bound = THINNING_SAFETY * rates.iter().cloned().fold(0.0, f64::max);
            if bound > 0.0 {
                let total = bound * s.mass();
                let rng = &mut rngs.branching;
                let mut t = rng.sample::<f64, _>(Exp1) / total;
                while t < dt {
                    let u = rng.random::<f64>() * bound;
                    let z = s.sample(rng);
                    for l in 0..L {
                        if u <= rates[l] {
                            next[l] += z;
                            mart[l] += z;
                        }
                    }
                    t += rng.sample::<f64, _>(Exp1) / total;
                }
            }
        }

        if let Some(s) = &self.immigration {
            let rate = s.mass();
            let rng = &mut rngs.immigration;
            let mut t = rng.sample::<f64, _>(Exp1) / rate;
            while t < dt {
                let z = s.sample(rng);
                for v in next.iter_mut() {
                    *v += z;
                }
                t += rng.sample::<f64, _>(Exp1) / rate;
            }
        }

        for v in next.iter_mut() {
            *v = v.max(0.0);
        }

        if let Some(env) = &self.env {
            let inc = env.step(&mut rngs.env);
            let factor = 1.0 + inc.d_z.max(Z_FLOOR);
            for l in 0..L {
                mart[l] += next[l] * inc.d_mart;
                next[l] = (next[l] * factor).max(0.0);
            }
        }
        *x = next;
    }
}

struct Streams {
    gauss: ChaCha8Rng,
    branching: ChaCha8Rng,
    immigration: ChaCha8Rng,
    env: ChaCha8Rng,
}

impl Streams {
    fn new(master: u64, path: u64) -> Self {
        Self {
            gauss: stream_rng(master, path, Stream::Gaussian),
            branching: stream_rng(master, path, Stream::Branching),
            immigration: stream_rng(master, path, Stream::Immigration),
            env: stream_rng(master, path, Stream::Environment),
        }
    }
}

struct LaneRun<const L: usize> {
    states: Vec<[f64; L]>,
    mart: Vec<[f64; L]>,
    failure_time: Option<f64>,
    steps_ordered: u64,
    steps_total: u64,
}

fn run_lanes<const L: usize>(
    stepper: &Stepper,
    init: [f64; L],
    config: &SimConfig,
    path: u64,
    record: &[usize],
) -> LaneRun<L> {
    let mut rngs = Streams::new(config.master_seed, path);
    let n = config.steps();
    let mut x = init;
    let mut m = [0.0; L];
    let mut out = LaneRun {
        states: Vec::with_capacity(record.len()),
        mart: Vec::with_capacity(record.len()),
        failure_time: None,
        steps_ordered: 0,
        steps_total: 0,
    };
    let mut next_rec = 0;
    while next_rec < record.len() && record[next_rec] == 0 {
        out.states.push(x);
        out.mart.push(m);
        next_rec += 1;
    }
    for k in 1..=n {
        if next_rec >= record.len() {
            break;
        }
        stepper.step(&mut x, &mut m, &mut rngs);
        if x.iter().any(|v| !v.is_finite()) {
            out.failure_time = Some(k as f64 * config.dt);
            break;
        }
        if L == 2 {
            out.steps_total += 1;
            if x[0] <= x[1] {
                out.steps_ordered += 1;
            }
        }
        while next_rec < record.len() && record[next_rec] == k {
            out.states.push(x);
            out.mart.push(m);
            next_rec += 1;
        }
    }
    out
}

/// One simulated trajectory on the record grid. After a numerical failure
/// `states` stops short of the grid and `failure_time` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Accumulated martingale part at each record time.
    pub martingale: Vec<f64>,
    pub failure_time: Option<f64>,
}

/// Simulate path `path_index` from `x0`.
pub fn simulate_path(
    model: &ModelSpec,
    x0: f64,
    config: &SimConfig,
    path_index: u64,
) -> Result<Trajectory> {
    check_inputs(model, config, &[x0])?;
    let stepper = Stepper::new(model, config)?;
    Ok(single(&stepper, x0, config, path_index, &config.record_steps()))
}

fn single(stepper: &Stepper, x0: f64, config: &SimConfig, path: u64, rec: &[usize]) -> Trajectory {
    let run = run_lanes::<1>(stepper, [x0], config, path, rec);
    Trajectory {
        times: config.record_times.clone(),
        states: run.states.iter().map(|s| s[0]).collect(),
        martingale: run.mart.iter().map(|s| s[0]).collect(),
        failure_time: run.failure_time,
    }
}

fn check_inputs(model: &ModelSpec, config: &SimConfig, states: &[f64]) -> Result<()> {
    model.validate()?;
    config.validate(model)?;
    for &x in states {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::InvalidConfig(format!("initial state {x} must be ≥ 0")));
        }
    }
    Ok(())
}

/// Independent paths from a common initial state.
#[derive(Debug, Clone, Serialize)]
pub struct Ensemble {
    pub x0: f64,
    pub times: Vec<f64>,
    pub paths: Vec<Trajectory>,
}

impl Ensemble {
    /// States at record index `k` of the paths that reached it.
    pub fn values_at(&self, k: usize) -> Vec<f64> {
        self.paths
            .iter()
            .filter_map(|p| p.states.get(k).copied())
            .collect()
    }

    pub fn martingale_at(&self, k: usize) -> Vec<f64> {
        self.paths
            .iter()
            .filter_map(|p| p.martingale.get(k).copied())
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.paths.iter().filter(|p| p.failure_time.is_some()).count()
    }
}

/// `config.n_paths` independent paths, simulated in parallel; the result
/// does not depend on the thread count.
pub fn simulate_ensemble(model: &ModelSpec, x0: f64, config: &SimConfig) -> Result<Ensemble> {
    check_inputs(model, config, &[x0])?;
    let stepper = Stepper::new(model, config)?;
    let rec = config.record_steps();
    let paths = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| single(&stepper, x0, config, i, &rec))
        .collect();
    Ok(Ensemble {
        x0,
        times: config.record_times.clone(),
        paths,
    })
}

/// Two trajectories driven by identical noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairPath {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub failure_time: Option<f64>,
    /// Simulation steps with `X ≤ Y`, out of `steps_total`.
    pub steps_ordered: u64,
    pub steps_total: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledEnsemble {
    pub x0: f64,
    pub y0: f64,
    pub times: Vec<f64>,
    pub pairs: Vec<PairPath>,
}

impl CoupledEnsemble {
    fn collect_at<F: Fn(&PairPath, usize) -> f64>(&self, k: usize, f: F) -> Vec<f64> {
        self.pairs
            .iter()
            .filter(|p| p.x.len() > k)
            .map(|p| f(p, k))
            .collect()
    }

    pub fn x_at(&self, k: usize) -> Vec<f64> {
        self.collect_at(k, |p, k| p.x[k])
    }

    pub fn y_at(&self, k: usize) -> Vec<f64> {
        self.collect_at(k, |p, k| p.y[k])
    }

    /// `|Y − X|` at record index `k`.
    pub fn gaps_at(&self, k: usize) -> Vec<f64> {
        self.collect_at(k, |p, k| (p.y[k] - p.x[k]).abs())
    }

    /// Fraction of (path, record time) pairs with `X ≤ Y`.
    pub fn ordering_fraction(&self) -> f64 {
        let mut ok = 0u64;
        let mut all = 0u64;
        for p in &self.pairs {
            for (a, b) in p.x.iter().zip(&p.y) {
                all += 1;
                if a <= b {
                    ok += 1;
                }
            }
        }
        if all == 0 {
            1.0
        } else {
            ok as f64 / all as f64
        }
    }

    /// Fraction of simulation steps with `X ≤ Y`.
    pub fn step_ordering_fraction(&self) -> f64 {
        let ok: u64 = self.pairs.iter().map(|p| p.steps_ordered).sum();
        let all: u64 = self.pairs.iter().map(|p| p.steps_total).sum();
        if all == 0 {
            1.0
        } else {
            ok as f64 / all as f64
        }
    }

    pub fn failures(&self) -> usize {
        self.pairs.iter().filter(|p| p.failure_time.is_some()).count()
    }
}

/// Coupled pairs from `x0 ≤ y0` (swapped otherwise).
pub fn simulate_coupled(
    model: &ModelSpec,
    x0: f64,
    y0: f64,
    config: &SimConfig,
) -> Result<CoupledEnsemble> {
    check_inputs(model, config, &[x0, y0])?;
    let (x0, y0) = if x0 <= y0 { (x0, y0) } else { (y0, x0) };
    let stepper = Stepper::new(model, config)?;
    let rec = config.record_steps();
    let pairs = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let run = run_lanes::<2>(&stepper, [x0, y0], config, i, &rec);
            PairPath {
                x: run.states.iter().map(|s| s[0]).collect(),
                y: run.states.iter().map(|s| s[1]).collect(),
                mx: run.mart.iter().map(|s| s[0]).collect(),
                my: run.mart.iter().map(|s| s[1]).collect(),
                failure_time: run.failure_time,
                steps_ordered: run.steps_ordered,
                steps_total: run.steps_total,
            }
        })
        .collect();
    Ok(CoupledEnsemble {
        x0,
        y0,
        times: config.record_times.clone(),
        pairs,
    })
}
