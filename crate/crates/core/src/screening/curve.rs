use super::closed_form::{exp_boundary_from_k, exp_k_from_boundary, ExpClosedForm};
use super::TypeProblem;
use crate::error::{Error, Result};
use crate::numerics::{cumulative_integral, fixed_point, linspace, solve_ivp_scaled, FixedPointOptions};

/// Values this far below zero still count as a nonnegative curve.
const FEASIBILITY_SLACK: f64 = 1e-9;
const MAX_REFINEMENT: usize = 512;
/// Target contraction factor of the Picard map on one window.
const WINDOW_CONTRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMethod {
    Ode,
    FixedPoint,
    ClosedForm,
    /// Supplied by the caller rather than solved.
    Custom,
}

impl CurveMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CurveMethod::Ode => "ode",
            CurveMethod::FixedPoint => "fixed_point",
            CurveMethod::ClosedForm => "closed_form",
            CurveMethod::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(CurveMethod::Ode),
            "fixed_point" => Ok(CurveMethod::FixedPoint),
            "closed_form" => Ok(CurveMethod::ClosedForm),
            other => Err(Error::Parameter(format!(
                "unknown curve method '{other}' (expected ode, fixed_point or closed_form)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurveDiagnostics {
    /// RK4 refinement levels, or total Picard iterations over all windows.
    pub iterations: usize,
    /// Final refinement gap (ODE, fixed point) in sup norm.
    pub residual: f64,
    /// Largest observed ratio of successive Picard residuals.
    pub contraction_estimate: f64,
    /// Internal subdivisions per output grid interval.
    pub refinement: usize,
}

/// ξ̂(θ, C) sampled on a θ-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingCurve {
    pub theta_grid: Vec<f64>,
    /// Loading clipped at zero.
    pub xi: Vec<f64>,
    /// dξ/dθ at the nodes, used for Hermite interpolation.
    pub slopes: Vec<f64>,
    /// Integration constant C = 1 + ξ(θ_L).
    pub c: f64,
    /// The exponential closed-form constant K, when known.
    pub closed_form_k: Option<f64>,
    pub method: CurveMethod,
    /// The unclipped curve stayed nonnegative on the whole grid.
    pub feasible: bool,
    pub min_unclipped: f64,
    pub diagnostics: CurveDiagnostics,
}

impl LoadingCurve {
    /// Wraps caller-supplied values; slopes come from finite differences.
    pub fn custom(theta_grid: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        if theta_grid.len() != xi.len() || theta_grid.is_empty() {
            return Err(Error::Parameter("curve grid and values must be non-empty and aligned".into()));
        }
        if theta_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("curve grid must be strictly ascending".into()));
        }
        let slopes = finite_difference_slopes(&theta_grid, &xi);
        let min_unclipped = xi.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            c: 1.0 + xi[0],
            closed_form_k: None,
            method: CurveMethod::Custom,
            feasible: min_unclipped >= -FEASIBILITY_SLACK,
            min_unclipped,
            diagnostics: CurveDiagnostics::default(),
            theta_grid,
            xi,
            slopes,
        })
    }

    /// Cubic Hermite interpolation; constant beyond the grid ends.
    pub fn xi_at(&self, theta: f64) -> f64 {
        let g = &self.theta_grid;
        let n = g.len();
        if n == 1 || theta <= g[0] {
            return self.xi[0];
        }
        if theta >= g[n - 1] {
            return self.xi[n - 1];
        }
        let i = g.partition_point(|&x| x <= theta).clamp(1, n - 1) - 1;
        let h = g[i + 1] - g[i];
        let s = (theta - g[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * self.xi[i] + h10 * h * self.slopes[i] + h01 * self.xi[i + 1] + h11 * h * self.slopes[i + 1])
            .max(0.0)
    }

    pub fn require_feasible(&self) -> Result<()> {
        if self.feasible {
            Ok(())
        } else {
            Err(Error::InfeasibleConstant {
                c: self.c,
                reason: format!("loading curve falls to {:e} before the top of the type range", self.min_unclipped),
            })
        }
    }

    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.xi.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

fn finite_difference_slopes(grid: &[f64], vals: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (vals[b] - vals[a]) / (grid[b] - grid[a])
        })
        .collect()
}

const STENCIL: usize = 7;
const SIXTH_DIFF: [f64; 7] = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];

/// Sixth-order finite-difference derivative on a uniform grid: centred
/// seven-point stencils, shifted near the ends and away from rough patches.
pub(crate) fn fd_derivative(vals: &[f64], h: f64) -> Vec<f64> {
    let n = vals.len();
    if n < STENCIL {
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        return finite_difference_slopes(&grid, vals);
    }
    let half = STENCIL / 2;
    // Sixth differences flag stencils that straddle a kink in a higher derivative.
    let roughness: Vec<f64> = (0..=n - STENCIL)
        .map(|s| (0..STENCIL).map(|j| SIXTH_DIFF[j] * vals[s + j]).sum::<f64>().abs())
        .collect();
    (0..n)
        .map(|i| {
            let centred = i.saturating_sub(half).min(n - STENCIL);
            let first = i.saturating_sub(STENCIL - 1);
            let last = i.min(n - STENCIL);
            let smoothest = (first..=last)
                .min_by(|&a, &b| roughness[a].total_cmp(&roughness[b]))
                .expect("non-empty stencil range");
            let start = if roughness[centred] <= 4.0 * roughness[smoothest] { centred } else { smoothest };
            let w = fornberg_weights((i - start) as f64, STENCIL);
            w.iter().zip(&vals[start..start + STENCIL]).map(|(w, v)| w * v).sum::<f64>() / h
        })
        .collect()
}

/// First-derivative weights at `x0` for unit-spaced nodes 0..m (Fornberg).
fn fornberg_weights(x0: f64, m: usize) -> Vec<f64> {
    let mut c = vec![[0.0f64; 2]; m];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = -x0;
    for i in 1..m {
        let xi = i as f64;
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xi - x0;
        for j in 0..i {
            let c3 = xi - j as f64;
            c2 *= c3;
            if j == i - 1 {
                c[i][1] = c1 * (c[i - 1][0] - c5 * c[i - 1][1]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            c[j][1] = (c4 * c[j][1] - c[j][0]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|r| r[1]).collect()
}

impl TypeProblem {
    /// ξ̂(·, C) on the problem's θ-grid, where C = 1 + ξ(θ_L).
    pub fn solve_loading_curve(&self, c: f64, method: CurveMethod) -> Result<LoadingCurve> {
        if !(c >= 1.0) || !c.is_finite() {
            return Err(Error::Parameter(format!("integration constant must be finite and >= 1, got {c}")));
        }
        let grid = self.theta_grid();
        let (raw, diagnostics, closed_form_k) = match method {
            CurveMethod::Ode => {
                // Marching in u = 1/(1 + ξ) keeps the slope bounded when ξ(θ_L)
                // is huge: u' = u φ(θ, 1/u − 1). The scale turns the tolerance
                // on u into one on ξ.
                let sol = solve_ivp_scaled(
                    |t, u| Ok(u * self.phi(t, 1.0 / u - 1.0)?),
                    1.0 / c,
                    &grid,
                    self.solver.ode_step_init,
                    self.solver.ode_tol,
                    |u| u * u.max((1.0 - u).abs()),
                )?;
                let diag = CurveDiagnostics {
                    iterations: sol.levels,
                    residual: sol.refinement_gap,
                    contraction_estimate: 0.0,
                    refinement: sol.substeps,
                };
                let mut vals: Vec<f64> = sol.values.iter().map(|&u| 1.0 / u - 1.0).collect();
                vals[0] = c - 1.0;
                (vals, diag, None)
            }
            CurveMethod::FixedPoint => {
                let (vals, diag) = self.solve_fixed_point(&grid, c)?;
                (vals, diag, None)
            }
            CurveMethod::ClosedForm => {
                let k = self.closed_form_k_for(c)?;
                let vals = self.closed_form_values(&grid, k)?;
                (vals, CurveDiagnostics::default(), Some(k))
            }
            CurveMethod::Custom => {
                return Err(Error::Usage("custom curves are built with LoadingCurve::custom".into()));
            }
        };
        self.finish_curve(grid, raw, c, method, diagnostics, closed_form_k)
    }

    /// Closed-form curve for the exponential constant K.
    pub fn solve_closed_form_k(&self, k: f64) -> Result<LoadingCurve> {
        if !self.has_closed_form() {
            return Err(Error::Unsupported(
                "the closed form needs exponential claims and constant gamma".into(),
            ));
        }
        let grid = self.theta_grid();
        let vals = self.closed_form_values(&grid, k)?;
        let c = exp_boundary_from_k(self.gamma(grid[0]), grid[0], k);
        self.finish_curve(grid, vals, c, CurveMethod::ClosedForm, CurveDiagnostics::default(), Some(k))
    }

    fn closed_form_k_for(&self, c: f64) -> Result<f64> {
        if !self.has_closed_form() {
            return Err(Error::Unsupported(
                "the closed form needs exponential claims and constant gamma".into(),
            ));
        }
        let (lo, _) = self.support();
        Ok(exp_k_from_boundary(self.gamma(lo), lo, c))
    }

    fn closed_form_values(&self, grid: &[f64], k: f64) -> Result<Vec<f64>> {
        let cf = ExpClosedForm { gamma: self.gamma(grid[0]), k };
        grid.iter().map(|&t| cf.xi(t)).collect()
    }

    fn finish_curve(
        &self,
        theta_grid: Vec<f64>,
        raw: Vec<f64>,
        c: f64,
        method: CurveMethod,
        diagnostics: CurveDiagnostics,
        closed_form_k: Option<f64>,
    ) -> Result<LoadingCurve> {
        let min_unclipped = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let feasible = min_unclipped >= -FEASIBILITY_SLACK;
        let xi: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
        let slopes = theta_grid
            .iter()
            .zip(&raw)
            .map(|(&t, &v)| if v >= 0.0 { self.curve_slope(t, v) } else { Ok(0.0) })
            .collect::<Result<Vec<_>>>()?;
        if !feasible {
            log::debug!("C = {c}: loading curve reaches {min_unclipped:e}, marked infeasible");
        }
        Ok(LoadingCurve {
            theta_grid,
            xi,
            slopes,
            c,
            closed_form_k,
            method,
            feasible,
            min_unclipped,
            diagnostics,
        })
    }

    /// Picard iteration of (Tξ)(θ) = C exp(−∫_{θ_L}^θ φ(z, ξ(z)) dz) − 1,
    /// applied window by window on a refined copy of the grid. Each window is
    /// short enough for T to contract; the grid is refined until two levels
    /// agree at the output nodes.
    fn solve_fixed_point(&self, grid: &[f64], c: f64) -> Result<(Vec<f64>, CurveDiagnostics)> {
        let n = grid.len();
        if n == 1 {
            return Ok((vec![c - 1.0], CurveDiagnostics { refinement: 1, ..Default::default() }));
        }
        let tol = self.solver.ode_tol;
        let mut previous: Option<Vec<f64>> = None;
        let mut last_gap = f64::INFINITY;
        let mut total_iterations = 0;
        let mut refine = 1;
        while refine <= MAX_REFINEMENT {
            let fine = linspace(grid[0], grid[n - 1], (n - 1) * refine + 1);
            match self.picard_windows(&fine, c) {
                Ok((vals, iterations, rate)) => {
                    total_iterations += iterations;
                    let coarse: Vec<f64> = vals.iter().step_by(refine).copied().collect();
                    if let Some(p) = &previous {
                        // Relative above 1: large loadings near θ_L carry rounding from every window.
                        let gap = p.iter().zip(&coarse).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max);
                        if gap < tol {
                            let diag = CurveDiagnostics {
                                iterations: total_iterations,
                                residual: gap,
                                contraction_estimate: rate,
                                refinement: refine,
                            };
                            return Ok((coarse, diag));
                        }
                        last_gap = gap;
                    }
                    previous = Some(coarse);
                }
                Err(Error::NoConvergence { .. }) => {
                    // Too coarse for the windows to contract; try a finer level.
                    previous = None;
                }
                Err(e) => return Err(e),
            }
            refine *= 2;
        }
        Err(Error::NoConvergence {
            iterations: total_iterations,
            residual: last_gap,
            history: vec![last_gap],
        })
    }

    /// One refinement level. Returns the curve, Picard iterations used and
    /// the largest observed contraction rate.
    fn picard_windows(&self, fine: &[f64], c: f64) -> Result<(Vec<f64>, usize, f64)> {
        let n = fine.len();
        let h = fine[1] - fine[0];
        let opts = FixedPointOptions {
            damping: self.solver.fp_damping,
            max_iter: self.solver.fp_max_iter,
            tol: self.solver.ode_tol * 1e-3,
        };
        let mut out = vec![0.0; n];
        out[0] = c - 1.0;
        let mut integral = 0.0;
        let mut a = 0;
        let mut iterations = 0;
        let mut rate: f64 = 0.0;
        while a < n - 1 {
            let xa = out[a];
            let lip = (1.0 + xa.abs()) * self.dphi_dxi(fine[a], xa)?.abs();
            let len = if lip > 0.0 { WINDOW_CONTRACTION / lip } else { f64::INFINITY };
            let remaining = n - 1 - a;
            let mut m = ((len / h).floor() as usize).max(2).min(remaining);
            if remaining - m == 1 {
                m += 1;
            }
            let nodes = &fine[a..=a + m];
            let phi_a = self.phi(fine[a], xa)?;
            let init: Vec<f64> = nodes.iter().map(|&t| (1.0 + xa) * (-phi_a * (t - fine[a])).exp() - 1.0).collect();
            let op = |x: &[f64]| -> Result<Vec<f64>> {
                let phis = nodes.iter().zip(x).map(|(&t, &v)| self.phi(t, v)).collect::<Result<Vec<_>>>()?;
                let cum = cumulative_integral(&phis, h);
                Ok(cum.iter().map(|&s| c * (-(integral + s)).exp() - 1.0).collect())
            };
            let outcome = fixed_point(op, init, opts)?;
            iterations += outcome.iterations;
            rate = rate.max(outcome.observed_rate());
            let phis = nodes
                .iter()
                .zip(&outcome.solution)
                .map(|(&t, &v)| self.phi(t, v))
                .collect::<Result<Vec<_>>>()?;
            integral += cumulative_integral(&phis, h)[m];
            out[a + 1..=a + m].copy_from_slice(&outcome.solution[1..]);
            a += m;
        }
        Ok((out, iterations, rate))
    }

    /// sup |ξ'Ψ + (1 + ξ)Ψ_θ| with ξ' from sixth-order finite differences.
    pub fn ode_residual(&self, curve: &LoadingCurve) -> Result<f64> {
        let n = curve.theta_grid.len();
        if n < 2 {
            return Ok(0.0);
        }
        let h = curve.theta_grid[1] - curve.theta_grid[0];
        let deriv = fd_derivative(&curve.xi, h);
        let mut worst: f64 = 0.0;
        for ((&t, &x), &dx) in curve.theta_grid.iter().zip(&curve.xi).zip(&deriv) {
            let r = dx * self.psi(t, x)? + (1.0 + x) * self.psi_theta(t, x)?;
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Family, RiskAversionSpec, TypeDistribution};
    use crate::market::MarketParams;
    use crate::numerics::SolverConfig;
    use crate::screening::{exp_k_bounds, exp_xi};
    use approx::assert_abs_diff_eq;

    fn exp_problem(lo: f64, hi: f64) -> TypeProblem {
        TypeProblem::new(
            Family::ExponentialMean,
            TypeDistribution::uniform(lo, hi).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default(),
            SolverConfig::default(),
        )
        .unwrap()
    }

    fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn three_methods_agree_on_exponential() {
        let p = exp_problem(1.0, 9.0);
        let (klo, khi) = exp_k_bounds(5.0, 1.0, 9.0);
        let k = klo + 0.5 * (khi - klo);
        let cf = p.solve_closed_form_k(k).unwrap();
        for (t, x) in cf.theta_grid.iter().zip(&cf.xi) {
            assert_abs_diff_eq!(*x, exp_xi(5.0, k, *t).unwrap(), epsilon = 1e-12);
        }
        let ode = p.solve_loading_curve(cf.c, CurveMethod::Ode).unwrap();
        let fp = p.solve_loading_curve(cf.c, CurveMethod::FixedPoint).unwrap();
        assert!(sup_gap(&ode.xi, &cf.xi) <= 1e-6, "ode gap {}", sup_gap(&ode.xi, &cf.xi));
        assert!(sup_gap(&fp.xi, &cf.xi) <= 1e-6, "fp gap {}", sup_gap(&fp.xi, &cf.xi));
        assert!(ode.feasible && fp.feasible && cf.feasible);
        assert_abs_diff_eq!(ode.xi[0], cf.c - 1.0, epsilon = 1e-8);
    }

    #[test]
    fn low_constant_is_infeasible() {
        let p = exp_problem(1.0, 9.0);
        let curve = p.solve_loading_curve(2.0, CurveMethod::Ode).unwrap();
        assert!(!curve.feasible);
        assert!(curve.xi.iter().all(|&x| x >= 0.0));
        assert!(matches!(curve.require_feasible(), Err(Error::InfeasibleConstant { .. })));
    }

    #[test]
    fn closed_form_needs_exponential() {
        let p = TypeProblem::new(
            Family::UniformOnZeroTheta,
            TypeDistribution::uniform(1.0, 2.0).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default(),
            SolverConfig::default(),
        )
        .unwrap();
        assert!(matches!(p.solve_loading_curve(2.0, CurveMethod::ClosedForm), Err(Error::Unsupported(_))));
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let p = exp_problem(1.0, 9.0);
        let (klo, khi) = exp_k_bounds(5.0, 1.0, 9.0);
        let k = klo + 0.2 * (khi - klo);
        let curve = p.solve_closed_form_k(k).unwrap();
        for t in [2.013, 4.567, 8.999] {
            assert_abs_diff_eq!(curve.xi_at(t), exp_xi(5.0, k, t).unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn fd_derivative_of_sextic_is_exact() {
        let h = 0.1;
        let vals: Vec<f64> = (0..12).map(|i| (i as f64 * h).powi(6)).collect();
        let d = fd_derivative(&vals, h);
        for (i, v) in d.iter().enumerate() {
            assert_abs_diff_eq!(*v, 6.0 * (i as f64 * h).powi(5), epsilon = 1e-9);
        }
    }

    #[test]
    fn custom_curve_slopes() {
        let c = LoadingCurve::custom(vec![0.0, 1.0, 2.0], vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(c.slopes, vec![0.0; 3]);
        assert_eq!(c.xi_at(1.5), 2.0);
        assert_eq!(c.c, 3.0);
    }
}
