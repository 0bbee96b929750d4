use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogInequalityReport {
    pub constant: f64,
    pub checked: usize,
    pub violations: usize,
    /// Grid point with the largest `lhs − rhs`: `(a, d, lhs, rhs)`.
    pub worst: (f64, f64, f64, f64),
}

impl LogInequalityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Check `log(1 + a·d) ≤ C·min{a, log(1+d)} + C·a·log(1+d)` on a grid.
pub fn log_inequality_check(c: f64, a_grid: &[f64], d_grid: &[f64]) -> LogInequalityReport {
    let mut report = LogInequalityReport {
        constant: c,
        checked: 0,
        violations: 0,
        worst: (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };
    let mut worst_gap = f64::NEG_INFINITY;
    for &a in a_grid {
        for &d in d_grid {
            let lhs = (a * d).ln_1p();
            let ld = d.ln_1p();
            let rhs = c * a.min(ld) + c * a * ld;
            report.checked += 1;
            // Allow for rounding in the comparison.
            if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
                report.violations += 1;
            }
            if lhs - rhs > worst_gap {
                worst_gap = lhs - rhs;
                report.worst = (a, d, lhs, rhs);
            }
        }
    }
    report
}
