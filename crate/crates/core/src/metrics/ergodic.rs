use serde::{Deserialize, Serialize};

use super::{neumaier_sum, MeanEstimate};
use crate::mechanisms::CbiParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Observable {
    Exp { lambda: f64 },
    Identity,
    Log1p,
}

impl Observable {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Exp { lambda } => (-lambda * x).exp(),
            Observable::Identity => x,
            Observable::Log1p => x.ln_1p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeAverage {
    pub value: f64,
    pub batch_means: Vec<f64>,
    /// Batch-means standard error of `value`.
    pub stderr: f64,
    /// The horizon is shorter than ten relaxation times `1/A`.
    pub short_horizon: bool,
}

fn check_grid(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() < 2 || times.len() != values.len() {
        return Err(Error::InvalidParams(
            "a path needs at least two points and matching lengths".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("record times must increase".into()));
    }
    Ok(())
}

/// Trapezoid integrals of `g` over `batches` consecutive, index-aligned
/// blocks of the grid; returns (block integral, block length) pairs.
fn block_integrals(times: &[f64], values: &[f64], batches: usize) -> Vec<(f64, f64)> {
    let intervals = times.len() - 1;
    let batches = batches.clamp(1, intervals);
    let per = intervals / batches;
    (0..batches)
        .map(|j| {
            let start = j * per;
            let end = if j + 1 == batches { intervals } else { start + per };
            let s = neumaier_sum(
                (start..end).map(|i| 0.5 * (values[i] + values[i + 1]) * (times[i + 1] - times[i])),
            );
            (s, times[end] - times[start])
        })
        .collect()
}

/// `(1/T)∫_0^T f(X_s) ds` by the trapezoid rule, with `batches` block
/// averages for a batch-means standard error. `rate` is the contraction
/// rate used for the horizon check.
pub fn time_average(
    times: &[f64],
    states: &[f64],
    f: Observable,
    batches: usize,
    rate: f64,
) -> Result<TimeAverage> {
    check_grid(times, states)?;
    let g: Vec<f64> = states.iter().map(|&x| f.eval(x)).collect();
    let blocks = block_integrals(times, &g, batches.max(1));
    let horizon = times[times.len() - 1] - times[0];
    let value = neumaier_sum(blocks.iter().map(|b| b.0)) / horizon;
    let batch_means: Vec<f64> = blocks.iter().map(|(s, l)| s / l).collect();
    let stderr = if batch_means.len() > 1 {
        MeanEstimate::from_samples(&batch_means)?.stderr
    } else {
        f64::NAN
    };
    Ok(TimeAverage {
        value,
        batch_means,
        stderr,
        short_horizon: !(rate > 0.0) || horizon < 10.0 / rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FcltEstimate {
    pub gamma2: f64,
    pub stderr: f64,
    pub batches: usize,
    pub batch_length: f64,
}

/// Batch-means estimate of the limiting variance of
/// `n^{−1/2}∫_0^{nt} Lf_λ(X_s) ds`, `Lf_λ(y) = e^{−λy}(−ψ(λ) + yφ(λ))`.
///
/// Each path is `(times, states)`; the part before `burn_in` is discarded
/// and the rest split into `batches_per_path` blocks. Blocks of all paths
/// are pooled.
pub fn fclt_variance_empirical(
    paths: &[(&[f64], &[f64])],
    params: &CbiParams,
    lambda: f64,
    batches_per_path: usize,
    burn_in: f64,
) -> Result<FcltEstimate> {
    if paths.is_empty() {
        return Err(Error::EmptySamples);
    }
    let psi = params.psi(lambda)?;
    let phi = params.phi(lambda)?;
    let mut blocks = Vec::new();
    for (times, states) in paths {
        check_grid(times, states)?;
        let start = times.partition_point(|&t| t < burn_in);
        if times.len() - start < batches_per_path + 1 {
            return Err(Error::InvalidParams(
                "path too short after burn-in for the requested batches".into(),
            ));
        }
        let t = &times[start..];
        let g: Vec<f64> = states[start..]
            .iter()
            .map(|&y| (-lambda * y).exp() * (-psi + y * phi))
            .collect();
        blocks.extend(block_integrals(t, &g, batches_per_path));
    }
    let k = blocks.len();
    let total_len: f64 = blocks.iter().map(|b| b.1).sum();
    let grand = neumaier_sum(blocks.iter().map(|b| b.0)) / total_len;
    // Per-block contributions L_j·(mean_j − grand)²; their average is γ².
    let contrib: Vec<f64> = blocks
        .iter()
        .map(|(s, l)| {
            let d = s / l - grand;
            l * d * d
        })
        .collect();
    let mean = neumaier_sum(contrib.iter().copied()) / (k as f64 - 1.0).max(1.0);
    let stderr = if k > 1 {
        MeanEstimate::from_samples(&contrib)?.stderr
    } else {
        f64::NAN
    };
    Ok(FcltEstimate {
        gamma2: mean,
        stderr,
        batches: k,
        batch_length: total_len / k as f64,
    })
}
