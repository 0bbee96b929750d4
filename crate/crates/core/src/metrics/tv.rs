use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MeanEstimate;
use crate::{Error, Result};

const MAX_BINS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Binning {
    /// Freedman–Diaconis width on the pooled samples.
    #[default]
    FreedmanDiaconis,
    /// Equal-width bins over the pooled range.
    Count { bins: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvEstimate {
    pub value: f64,
    pub bins: usize,
    /// Some bin has a pooled average count below 5.
    pub sparse_bins: bool,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fd_bins(pooled: &[f64], lo: f64, hi: f64) -> usize {
    let mut s = pooled.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let n = s.len() as f64;
    if iqr > 0.0 {
        let h = 2.0 * iqr * n.powf(-1.0 / 3.0);
        (((hi - lo) / h).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        (n.sqrt().ceil() as usize).clamp(1, MAX_BINS)
    }
}

/// Plug-in total variation `½Σ|p̂ᵢ − q̂ᵢ|` over shared equal-width bins.
pub fn tv_histogram(a: &[f64], b: &[f64], binning: &Binning) -> Result<TvEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParams("samples must be finite".into()));
    }
    if hi == lo {
        return Ok(TvEstimate {
            value: 0.0,
            bins: 1,
            sparse_bins: (a.len() + b.len()) < 10,
        });
    }
    let bins = match binning {
        Binning::FreedmanDiaconis => {
            let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
            fd_bins(&pooled, lo, hi)
        }
        Binning::Count { bins } => (*bins).clamp(1, MAX_BINS),
    };
    let width = hi - lo;
    let index = |x: f64| (((x - lo) / width) * bins as f64).floor().min(bins as f64 - 1.0) as usize;
    let mut ca = vec![0u64; bins];
    let mut cb = vec![0u64; bins];
    for &x in a {
        ca[index(x)] += 1;
    }
    for &x in b {
        cb[index(x)] += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut value = 0.0;
    let mut sparse = false;
    for (x, y) in ca.iter().zip(&cb) {
        value += (*x as f64 / na - *y as f64 / nb).abs();
        if (*x + *y) as f64 / 2.0 < 5.0 {
            sparse = true;
        }
    }
    Ok(TvEstimate {
        value: (0.5 * value).clamp(0.0, 1.0),
        bins,
        sparse_bins: sparse,
    })
}

/// Bootstrap standard error of [`tv_histogram`] over index-paired samples
/// (`a[i]` and `b[i]` are resampled together). The bin count is fixed to
/// that of the full-sample estimate.
pub fn tv_bootstrap_stderr(
    a: &[f64],
    b: &[f64],
    binning: &Binning,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidParams("paired bootstrap needs equal sizes".into()));
    }
    let base = tv_histogram(a, b, binning)?;
    let fixed = Binning::Count { bins: base.bins };
    let n = a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        for k in 0..n {
            let i = rng.random_range(0..n);
            ra[k] = a[i];
            rb[k] = b[i];
        }
        vals.push(tv_histogram(&ra, &rb, &fixed)?.value);
    }
    let m = MeanEstimate::from_samples(&vals)?;
    Ok(m.stderr * (reps as f64).sqrt())
}
