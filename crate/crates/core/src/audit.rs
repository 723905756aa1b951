use rayon::prelude::*;

use crate::error::Result;
use crate::numerics::linspace;

/// Outcome of a grid audit of the truth-telling constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTellingReport {
    pub true_types: Vec<f64>,
    /// Report maximizing each true type's value on the fine grid.
    pub best_reports: Vec<f64>,
    pub fine_spacing: f64,
    pub max_deviation: f64,
    pub passed: bool,
    /// `(true type, best report)` pairs deviating by more than one fine cell.
    pub violations: Vec<(f64, f64)>,
}

/// Number of fine report cells per coarse cell.
pub const REFINEMENT: usize = 5;

/// Relative gap below which two values count as a tie when they are exact.
pub const EXACT_TIE: f64 = 1e-12;

/// For `n` true types on `[lo, hi]`, finds the best report on a nested grid
/// of `REFINEMENT (n - 1) + 1` points. Ties go to the truth.
pub fn audit_truth_telling<F>(lo: f64, hi: f64, n: usize, value: F) -> Result<TruthTellingReport>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    audit_truth_telling_within(lo, hi, n, EXACT_TIE, value)
}

/// [`audit_truth_telling`] where a report must beat the truth by more than
/// `tie · (1 + |truthful value|)` to count.
pub fn audit_truth_telling_within<F>(lo: f64, hi: f64, n: usize, tie: f64, value: F) -> Result<TruthTellingReport>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let true_types = linspace(lo, hi, n.max(1));
    let reports = linspace(lo, hi, REFINEMENT * (n.max(2) - 1) + 1);
    let fine_spacing = if reports.len() > 1 { reports[1] - reports[0] } else { 0.0 };

    let best_reports = true_types
        .par_iter()
        .map(|&t| -> Result<f64> {
            let truthful = value(t, t)?;
            let mut best = (t, truthful);
            for &r in &reports {
                let v = value(t, r)?;
                if v > best.1 {
                    best = (r, v);
                }
            }
            let tie = tie * (1.0 + truthful.abs());
            Ok(if best.1 - truthful <= tie { t } else { best.0 })
        })
        .collect::<Result<Vec<_>>>()?;

    let slack = fine_spacing * (1.0 + 1e-9);
    let mut max_deviation: f64 = 0.0;
    let mut violations = Vec::new();
    for (&t, &r) in true_types.iter().zip(&best_reports) {
        let dev = (r - t).abs();
        max_deviation = max_deviation.max(dev);
        if dev > slack {
            violations.push((t, r));
        }
    }
    Ok(TruthTellingReport {
        passed: violations.is_empty(),
        true_types,
        best_reports,
        fine_spacing,
        max_deviation,
        violations,
    })
}
