use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

impl DecayPoint {
    pub fn new(t: f64, value: f64, stderr: f64) -> Self {
        Self { t, value, stderr }
    }
}

/// Accepted range for the fitted rate, as multiples of the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayBand {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl Default for DecayBand {
    fn default() -> Self {
        Self {
            lower: 0.8,
            upper: Some(1.3),
        }
    }
}

impl DecayBand {
    /// Only the lower bound applies.
    pub fn at_least(lower: f64) -> Self {
        Self { lower, upper: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Contracting, but at a rate outside the band.
    OutOfBand,
    /// Fitted rate `≤ 0`.
    NoContraction,
    /// Fewer than four points above the noise floor.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_rate: f64,
    pub rate_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub target_rate: f64,
    pub used_points: usize,
    pub verdict: Verdict,
}

pub const MIN_POINTS: usize = 4;

/// Weighted least squares of `log value` on `t`; the rate is minus the
/// slope. Points whose standard error exceeds a third of the value are
/// dropped, and each remaining point is weighted by `(value/stderr)²`.
pub fn fit_decay(series: &[DecayPoint], target_rate: f64, band: DecayBand) -> DecayFit {
    let used: Vec<&DecayPoint> = series
        .iter()
        .filter(|p| p.value > 0.0 && p.value.is_finite() && !(p.stderr > p.value / 3.0))
        .collect();
    let mut fit = DecayFit {
        times: used.iter().map(|p| p.t).collect(),
        values: used.iter().map(|p| p.value).collect(),
        fitted_rate: f64::NAN,
        rate_stderr: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        target_rate,
        used_points: used.len(),
        verdict: Verdict::Inconclusive,
    };
    if used.len() < MIN_POINTS {
        return fit;
    }
    let rel: Vec<f64> = used.iter().map(|p| p.stderr / p.value).collect();
    let w: Vec<f64> = if rel.iter().all(|r| *r > 0.0) {
        rel.iter().map(|r| 1.0 / (r * r)).collect()
    } else {
        vec![1.0; used.len()]
    };
    let y: Vec<f64> = used.iter().map(|p| p.value.ln()).collect();
    let sw: f64 = w.iter().sum();
    let tbar = used.iter().zip(&w).map(|(p, w)| w * p.t).sum::<f64>() / sw;
    let ybar = y.iter().zip(&w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for ((p, y), w) in used.iter().zip(&y).zip(&w) {
        let dt = p.t - tbar;
        let dy = y - ybar;
        stt += w * dt * dt;
        sty += w * dt * dy;
        syy += w * dy * dy;
    }
    let slope = sty / stt;
    let intercept = ybar - slope * tbar;
    let sse = (syy - slope * sty).max(0.0);
    fit.fitted_rate = -slope;
    fit.intercept = intercept;
    fit.r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    fit.rate_stderr = (sse / (used.len() - 2) as f64 / stt).sqrt();
    fit.verdict = if !(fit.fitted_rate > 0.0) {
        Verdict::NoContraction
    } else if fit.fitted_rate >= band.lower * target_rate
        && band.upper.is_none_or(|u| fit.fitted_rate <= u * target_rate)
    {
        Verdict::Pass
    } else {
        Verdict::OutOfBand
    };
    fit
}
