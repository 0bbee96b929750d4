//! Empirical distances, decay-rate fits and long-run averages.

mod decay;
mod ergodic;
mod inequality;
mod tv;
mod wasserstein;

use serde::Serialize;

use crate::{Error, Result};

pub use decay::{fit_decay, DecayBand, DecayFit, DecayPoint, Verdict};
pub use ergodic::{fclt_variance_empirical, time_average, FcltEstimate, Observable, TimeAverage};
pub use inequality::{log_inequality_check, LogInequalityReport};
pub use tv::{tv_bootstrap_stderr, tv_histogram, Binning, TvEstimate};
pub use wasserstein::{mean_gap, w1_empirical, wlog_coupled};

/// Compensated (Neumaier) sum, evaluated in iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = xs.len();
        let mean = neumaier_sum(xs.iter().copied()) / n as f64;
        let stderr = if n > 1 {
            let ss = neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, stderr, n })
    }
}
