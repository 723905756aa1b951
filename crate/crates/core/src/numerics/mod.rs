//! Shared numerical kernels: adaptive quadrature, fixed-grid RK4, scalar
//! maximization, bisection and damped fixed-point iteration.

mod fixed_point;
mod ode;
mod optimize;
mod quad;

pub use fixed_point::{fixed_point, FixedPointOptions, FixedPointOutcome};
pub use ode::{solve_ivp, solve_ivp_scaled, IvpSolution};
pub use optimize::{bisect, maximize_scalar, try_bisect, try_maximize_scalar, ScalarMax};
pub use quad::{cumulative_integral, gauss_legendre_64, integrate, simpson_weights};

use crate::error::{ensure, Result};

/// Tolerances and grid sizes shared by every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub quad_tol: f64,
    /// Largest RK4 substep used on the first refinement level.
    pub ode_step_init: f64,
    pub ode_tol: f64,
    pub opt_tol: f64,
    pub fp_damping: f64,
    pub fp_max_iter: usize,
    pub grid_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            ode_step_init: 0.05,
            ode_tol: 1e-8,
            opt_tol: 1e-9,
            fp_damping: 1.0,
            fp_max_iter: 500,
            grid_points: 401,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("quad_tol", self.quad_tol),
            ("ode_step_init", self.ode_step_init),
            ("ode_tol", self.ode_tol),
            ("opt_tol", self.opt_tol),
        ] {
            ensure(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))?;
        }
        ensure(self.fp_damping > 0.0 && self.fp_damping <= 1.0, || {
            format!("fp_damping must lie in (0, 1], got {}", self.fp_damping)
        })?;
        ensure(self.fp_max_iter >= 1, || "fp_max_iter must be at least 1".into())?;
        ensure(self.grid_points >= 3, || {
            format!("grid_points must be at least 3, got {}", self.grid_points)
        })?;
        Ok(())
    }

    pub fn with_grid_points(mut self, n: usize) -> Self {
        self.grid_points = n;
        self
    }
}

/// `n` equally spaced points on `[lo, hi]`; a single point when `lo == hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Sum with Neumaier compensation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
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
