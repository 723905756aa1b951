use crate::error::{Error, Result};

const MAX_SUBSTEPS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct IvpSolution {
    /// Solution sampled at the caller's grid.
    pub values: Vec<f64>,
    /// Largest RK4 substep count accepted on any grid interval.
    pub substeps: usize,
    /// Sum over intervals of the gap between the last two refinement levels.
    pub refinement_gap: f64,
    /// Most refinement levels needed on any interval.
    pub levels: usize,
}

/// Integrates `y' = rhs(x, y)` from `(grid[0], y0)` and samples it on `grid`.
///
/// Classical RK4 with a fixed number of substeps per grid interval. On each
/// interval the substep count doubles until two successive levels agree to
/// within that interval's share of `tol` (relative once |y| exceeds 1); the
/// finer level is kept.
pub fn solve_ivp<F>(rhs: F, y0: f64, grid: &[f64], step_init: f64, tol: f64) -> Result<IvpSolution>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    solve_ivp_scaled(rhs, y0, grid, step_init, tol, |y| y.abs().max(1.0))
}

/// [`solve_ivp`] with the acceptance test `gap < tol · share · scale(y)`.
pub fn solve_ivp_scaled<F, S>(rhs: F, y0: f64, grid: &[f64], step_init: f64, tol: f64, scale: S) -> Result<IvpSolution>
where
    F: Fn(f64, f64) -> Result<f64>,
    S: Fn(f64) -> f64,
{
    if grid.is_empty() {
        return Err(Error::Numeric("empty integration grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Numeric("integration grid must be strictly ascending".into()));
    }
    if grid.len() == 1 {
        return Ok(IvpSolution { values: vec![y0], substeps: 1, refinement_gap: 0.0, levels: 0 });
    }
    let span = grid[grid.len() - 1] - grid[0];
    let mut values = Vec::with_capacity(grid.len());
    values.push(y0);
    let (mut y, mut max_substeps, mut max_levels, mut total_gap) = (y0, 1, 0, 0.0);
    let mut hint = 1;
    for w in grid.windows(2) {
        let width = w[1] - w[0];
        let mut m = ((width / step_init).ceil() as usize).max(hint).clamp(1, MAX_SUBSTEPS);
        let mut coarse = march(&rhs, y, w[0], w[1], m)?;
        let mut levels = 1;
        loop {
            if m >= MAX_SUBSTEPS {
                return Err(Error::Numeric(format!(
                    "RK4 refinement did not converge on [{}, {}] after {MAX_SUBSTEPS} substeps",
                    w[0], w[1]
                )));
            }
            m *= 2;
            levels += 1;
            let fine = march(&rhs, y, w[0], w[1], m)?;
            if let (Some(a), Some(b)) = (coarse, fine) {
                let gap = (a - b).abs();
                if gap < tol * width / span * scale(b) {
                    y = b;
                    total_gap += gap;
                    break;
                }
            }
            coarse = fine;
        }
        values.push(y);
        max_substeps = max_substeps.max(m);
        max_levels = max_levels.max(levels);
        hint = (m / 4).max(1);
    }
    Ok(IvpSolution { values, substeps: max_substeps, refinement_gap: total_gap, levels: max_levels })
}

/// RK4 over one interval. `Ok(None)` means the state became non-finite.
fn march<F>(rhs: &F, y0: f64, a: f64, b: f64, substeps: usize) -> Result<Option<f64>>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let h = (b - a) / substeps as f64;
    let mut y = y0;
    for k in 0..substeps {
        let x = a + h * k as f64;
        let k1 = rhs(x, y)?;
        let k2 = rhs(x + 0.5 * h, y + 0.5 * h * k1)?;
        let k3 = rhs(x + 0.5 * h, y + 0.5 * h * k2)?;
        let k4 = rhs(x + h, y + h * k3)?;
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return Ok(None);
        }
    }
    Ok(Some(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linspace;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_rhs_is_constant() {
        let grid = linspace(0.0, 3.0, 11);
        let sol = solve_ivp(|_, _| Ok(0.0), 2.5, &grid, 0.1, 1e-10).unwrap();
        assert!(sol.values.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn exponential_growth_to_e() {
        let grid = linspace(0.0, 1.0, 11);
        let sol = solve_ivp(|_, y| Ok(y), 1.0, &grid, 0.1, 1e-10).unwrap();
        assert_abs_diff_eq!(*sol.values.last().unwrap(), std::f64::consts::E, epsilon = 1e-8);
    }

    #[test]
    fn linear_flows_within_ten_tolerances() {
        let tol = 1e-8;
        for rate in [-2.0, -1.0, 1.0] {
            let grid = linspace(0.0, 1.0, 21);
            let sol = solve_ivp(|_, y| Ok(rate * y), 1.0, &grid, 0.05, tol).unwrap();
            for (x, v) in grid.iter().zip(&sol.values) {
                assert!((v - (rate * x).exp()).abs() <= 10.0 * tol, "rate {rate} x {x}");
            }
        }
    }

    #[test]
    fn rhs_errors_propagate() {
        let grid = linspace(0.0, 1.0, 5);
        let err = solve_ivp(|_, _| Err(Error::Numeric("boom".into())), 0.0, &grid, 0.1, 1e-8);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn finite_time_blowup_fails_to_converge() {
        // y' = y^2, y(0) = 1 explodes at x = 1.
        let grid = linspace(0.0, 1.5, 4);
        assert!(solve_ivp(|_, y| Ok(y * y), 1.0, &grid, 0.5, 1e-8).is_err());
    }
}
