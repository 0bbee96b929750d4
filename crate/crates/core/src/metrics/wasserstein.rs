use super::{neumaier_sum, MeanEstimate};
use crate::sde::CoupledEnsemble;
use crate::{Error, Result};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Exact `W₁` between two empirical measures on the line.
///
/// Equal sizes pair order statistics; unequal sizes integrate
/// `|F⁻¹(u) − G⁻¹(u)|` over the merged quantile breakpoints.
pub fn w1_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sa = sorted(a);
    let sb = sorted(b);
    if sa.len() == sb.len() {
        let n = sa.len() as f64;
        return Ok(neumaier_sum(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs())) / n);
    }
    let (n, m) = (sa.len() as u128, sb.len() as u128);
    // Breakpoints i/n and j/m compared as i·m vs j·n.
    let (mut i, mut j) = (0u128, 0u128);
    let mut prev = 0u128; // in units of 1/(n·m)
    let mut terms = Vec::with_capacity(sa.len() + sb.len());
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let w = (next - prev) as f64 / (n * m) as f64;
        terms.push(w * (sa[i as usize] - sb[j as usize]).abs());
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(neumaier_sum(terms))
}

fn record_index(ens: &CoupledEnsemble, t: f64) -> Result<usize> {
    ens.times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or_else(|| Error::InvalidConfig(format!("t = {t} is not a record time")))
}

/// `E|X_t − Y_t|` over the coupled ensemble, an upper bound for `W₁`.
pub fn mean_gap(ens: &CoupledEnsemble, t: f64) -> Result<MeanEstimate> {
    let k = record_index(ens, t)?;
    MeanEstimate::from_samples(&ens.gaps_at(k))
}

/// `E[log(1 + |X_t − Y_t|)]` over the coupled ensemble. This is the cost
/// of one particular coupling, hence an upper bound for `W_log`, not the
/// infimum itself.
pub fn wlog_coupled(ens: &CoupledEnsemble, t: f64) -> Result<MeanEstimate> {
    let k = record_index(ens, t)?;
    let v: Vec<f64> = ens.gaps_at(k).iter().map(|g| g.ln_1p()).collect();
    MeanEstimate::from_samples(&v)
}
