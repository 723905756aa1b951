use rayon::prelude::*;

use super::closed_form::{exp_boundary_from_k, exp_k_bounds, ExpClosedForm};
use super::curve::{CurveMethod, LoadingCurve};
use super::TypeProblem;
use crate::error::{Error, Result};
use crate::numerics::{simpson_weights, try_maximize_scalar};

const BISECTION_STEPS: usize = 60;
const BOUNDED_CAP_MARGIN: f64 = 0.02;
/// Largest boundary constant tried when bracketing the feasible set.
const C_SEARCH_CAP: f64 = 1e8;
/// Offsets C − C_lo scanned as C_lo · 2^k for k in this range.
const LADDER: std::ops::RangeInclusive<i32> = -24..=24;

/// Integration constants C = 1 + ξ(θ_L) whose curve stays nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleSet {
    pub c_lo: f64,
    /// Infinite when every C above `c_lo` is admissible.
    pub c_hi: f64,
    /// Validated range of the exponential constant K.
    pub closed_form: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeSolution {
    pub c_star: f64,
    pub k_star: Option<f64>,
    pub curve: LoadingCurve,
    pub h: f64,
    /// factor · λT · H(C*).
    pub insurer_value: f64,
    pub feasible: FeasibleSet,
}

impl TypeProblem {
    pub fn feasible_set(&self) -> Result<FeasibleSet> {
        if self.has_closed_form() {
            self.feasible_set_closed_form()
        } else {
            self.feasible_set_numeric()
        }
    }

    fn closed_form_valid(&self, k: f64, grid: &[f64]) -> bool {
        let cf = ExpClosedForm { gamma: self.gamma(grid[0]), k };
        grid.iter().all(|&t| matches!(cf.xi(t), Ok(x) if x >= -1e-12))
    }

    /// Candidate K-bounds, validated on the grid and shrunk where they admit
    /// violations.
    fn feasible_set_closed_form(&self) -> Result<FeasibleSet> {
        let (lo, hi) = self.support();
        let gamma = self.gamma(lo);
        let (k_lo, k_hi) = exp_k_bounds(gamma, lo, hi);
        if k_hi < k_lo {
            return Err(Error::NoContract(format!(
                "no admissible constant: upper bound {k_hi:e} is below lower bound {k_lo:e}"
            )));
        }
        let grid = self.theta_grid();
        let mut lo_k = k_lo;
        if !self.closed_form_valid(lo_k, &grid) {
            // ξ grows with K, so the valid set starts further up.
            let (mut a, mut b) = (k_lo, k_hi);
            for _ in 0..BISECTION_STEPS {
                let m = 0.5 * (a + b);
                if self.closed_form_valid(m, &grid) {
                    b = m;
                } else {
                    a = m;
                }
            }
            lo_k = b;
            if !self.closed_form_valid(lo_k, &grid) {
                return Err(Error::NoContract("closed-form bounds admit no valid constant on the grid".into()));
            }
        }
        let mut hi_k = k_hi;
        if !self.closed_form_valid(hi_k, &grid) {
            let (mut a, mut b) = (lo_k, k_hi);
            for _ in 0..BISECTION_STEPS {
                let m = 0.5 * (a + b);
                if self.closed_form_valid(m, &grid) {
                    a = m;
                } else {
                    b = m;
                }
            }
            hi_k = a;
        }
        Ok(FeasibleSet {
            c_lo: exp_boundary_from_k(gamma, lo, lo_k).max(1.0),
            c_hi: exp_boundary_from_k(gamma, lo, hi_k),
            closed_form: Some((lo_k, hi_k)),
        })
    }

    /// Larger C lifts the whole curve, so feasibility is monotone in C and
    /// the lower end is found by expanding then bisecting.
    fn feasible_set_numeric(&self) -> Result<FeasibleSet> {
        let feasible = |c: f64| -> Result<bool> {
            match self.solve_loading_curve(c, CurveMethod::Ode) {
                Ok(curve) => Ok(curve.feasible),
                Err(e @ (Error::Singular { .. } | Error::Numeric(_))) => {
                    log::warn!("treating C = {c} as infeasible: {e}");
                    Ok(false)
                }
                Err(e) => Err(e),
            }
        };
        let c_hi = self.boundary_cap()?;
        if feasible(1.0)? {
            return Ok(FeasibleSet { c_lo: 1.0, c_hi, closed_form: None });
        }
        let cap = c_hi.min(C_SEARCH_CAP);
        let mut lo = 1.0;
        let mut hi = 2.0f64.min(cap);
        while !feasible(hi)? {
            if hi >= cap {
                return Err(Error::NoContract(format!(
                    "every constant up to {cap:e} drives the loading negative"
                )));
            }
            lo = hi;
            hi = (2.0 * hi).min(cap);
        }
        for _ in 0..BISECTION_STEPS {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let m = 0.5 * (lo + hi);
            if feasible(m)? {
                hi = m;
            } else {
                lo = m;
            }
        }
        Ok(FeasibleSet { c_lo: hi, c_hi, closed_form: None })
    }

    /// With bounded claims, a deductible at the top of the support at θ_L
    /// buys no cover; C stays just below that point.
    fn boundary_cap(&self) -> Result<f64> {
        let (lo, _) = self.support();
        let top = self.dist(lo)?.support_upper();
        Ok(if top.is_finite() { 1.0 + self.gamma(lo) * top * (1.0 - BOUNDED_CAP_MARGIN) } else { f64::INFINITY })
    }

    /// H(C) for a solved curve: the prior average of
    /// ξ E[(Y − d)₊] − (γ_I/2) E[(Y − d)₊²] with d = ξ/γ(θ).
    pub fn h_from_curve(&self, curve: &LoadingCurve) -> Result<f64> {
        let gamma_i = self.market.gamma_i;
        let integrand = |t: f64, xi: f64| -> Result<f64> {
            let dist = self.dist(t)?;
            let d = xi / self.gamma(t);
            Ok(xi * dist.stop_loss(d)? - 0.5 * gamma_i * dist.stop_loss_sq(d)?)
        };
        let grid = &curve.theta_grid;
        if self.prior_theta.is_point_mass() || grid.len() == 1 {
            return self.prior_theta.try_expectation(|t| integrand(t, curve.xi_at(t)));
        }
        let h = grid[1] - grid[0];
        let weights = simpson_weights(grid.len(), h);
        let terms = grid
            .par_iter()
            .zip(&curve.xi)
            .zip(&weights)
            .map(|((&t, &xi), &w)| Ok(w * self.prior_theta.density(t) * integrand(t, xi)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(terms.iter().sum())
    }

    /// H(C) with the curve from `method`; infeasible C is an error.
    pub fn h_objective(&self, c: f64, method: CurveMethod) -> Result<f64> {
        let curve = self.solve_loading_curve(c, method)?;
        curve.require_feasible()?;
        self.h_from_curve(&curve)
    }

    fn search_curve(&self, c: f64) -> Result<LoadingCurve> {
        let method = if self.has_closed_form() { CurveMethod::ClosedForm } else { CurveMethod::Ode };
        self.solve_loading_curve(c, method)
    }

    fn h_or_neg_inf(&self, c: f64) -> Result<f64> {
        let curve = match self.search_curve(c) {
            Ok(curve) => curve,
            Err(Error::InfeasibleConstant { .. }) => return Ok(f64::NEG_INFINITY),
            Err(e @ (Error::Numeric(_) | Error::Singular { .. })) => {
                log::debug!("skipping C = {c} in the search: {e}");
                return Ok(f64::NEG_INFINITY);
            }
            Err(e) => return Err(e),
        };
        if !curve.feasible {
            return Ok(f64::NEG_INFINITY);
        }
        self.h_from_curve(&curve)
    }

    /// Maximizes H over the feasible set. The search runs on the cheapest
    /// curve available; the returned curve is re-solved with `method`.
    pub fn solve_c_star(&self, method: CurveMethod) -> Result<TypeSolution> {
        let feasible = self.feasible_set()?;
        let (c_lo, c_hi) = (feasible.c_lo, feasible.c_hi);
        let mut ladder = vec![c_lo];
        ladder.extend(LADDER.map(|k| c_lo + c_lo * 2f64.powi(k)).filter(|&c| c < c_hi));
        if c_hi.is_finite() {
            ladder.push(c_hi);
        }
        let values = ladder.par_iter().map(|&c| self.h_or_neg_inf(c)).collect::<Result<Vec<_>>>()?;
        let best = values
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });
        if !values[best].is_finite() {
            return Err(Error::NoContract("H is not finite anywhere on the feasible set".into()));
        }
        let a = ladder[best.saturating_sub(1)];
        let b = ladder[(best + 1).min(ladder.len() - 1)];
        let c_star = if b > a {
            let tol = self.solver.opt_tol * b.max(1.0);
            let found = try_maximize_scalar(
                |c| {
                    let v = self.h_or_neg_inf(c)?;
                    Ok(if v.is_finite() { v } else { -1e300 })
                },
                a,
                b,
                tol,
            )?;
            if found.value >= values[best] {
                found.x
            } else {
                ladder[best]
            }
        } else {
            ladder[best]
        };
        let curve = self.solve_loading_curve(c_star, method)?;
        let h = self.h_from_curve(&curve)?;
        let (lo, _) = self.support();
        let k_star = feasible.closed_form.map(|_| super::exp_k_from_boundary(self.gamma(lo), lo, c_star));
        Ok(TypeSolution {
            c_star,
            k_star,
            insurer_value: self.insurer_value_factor * self.market.exposure() * h,
            curve,
            h,
            feasible,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Family, RiskAversionSpec, TypeDistribution};
    use crate::market::MarketParams;
    use crate::numerics::SolverConfig;
    use approx::assert_abs_diff_eq;

    fn exp_problem(prior: TypeDistribution) -> TypeProblem {
        TypeProblem::new(
            Family::ExponentialMean,
            prior,
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default(),
            SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn exponential_feasible_interval() {
        let p = exp_problem(TypeDistribution::uniform(1.0, 9.0).unwrap());
        let fs = p.feasible_set().unwrap();
        let (k_lo, k_hi) = fs.closed_form.unwrap();
        assert!(k_lo >= 5.0 * (-1.0f64 / 45.0).exp() - 1e-12);
        assert!(k_hi <= 6.0 * (-0.2f64).exp());
        assert!(k_lo < k_hi);
        assert!(fs.c_lo >= 1.0 && fs.c_lo < fs.c_hi);
    }

    #[test]
    fn low_type_floor_has_no_contract() {
        let p = exp_problem(TypeDistribution::uniform(0.01, 9.0).unwrap());
        assert!(matches!(p.feasible_set(), Err(Error::NoContract(_))));
        assert!(matches!(p.solve_c_star(CurveMethod::Ode), Err(Error::NoContract(_))));
    }

    #[test]
    fn point_mass_h_and_optimum() {
        let p = exp_problem(TypeDistribution::point_mass(5.0).unwrap());
        // ξ = 6, d = 1.2: 6·5e^{−0.24} − ½·2·25e^{−0.24}.
        let h = p.h_objective(7.0, CurveMethod::Ode).unwrap();
        assert_abs_diff_eq!(h, 5.0 * (-0.24f64).exp(), epsilon = 1e-10);
        // H = 5(ξ − 5)e^{−ξ/25} peaks at ξ = 30.
        let sol = p.solve_c_star(CurveMethod::Ode).unwrap();
        assert_abs_diff_eq!(sol.c_star, 31.0, epsilon = 1e-4);
        let fs = p.feasible_set().unwrap();
        let (k_lo, k_hi) = fs.closed_form.unwrap();
        let (b_lo, b_hi) = exp_k_bounds(5.0, 5.0, 5.0);
        assert_abs_diff_eq!(k_lo, b_lo, epsilon = 1e-12);
        assert!(k_hi <= b_hi && k_hi > b_hi - 1e-9);
    }

    #[test]
    fn zero_loading_gives_zero_h() {
        let p = TypeProblem::new(
            Family::ExponentialMean,
            TypeDistribution::point_mass(2.0).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default().with_gamma_i(0.0),
            SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(p.h_objective(1.0, CurveMethod::Ode).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prior_optimum_sits_at_the_upper_bound() {
        // H climbs monotonically in K towards the bound where ξ(θ_L) diverges.
        let p = exp_problem(TypeDistribution::uniform(1.0, 9.0).unwrap());
        let sol = p.solve_c_star(CurveMethod::ClosedForm).unwrap();
        let (k_lo, k_hi) = sol.feasible.closed_form.unwrap();
        let k = sol.k_star.unwrap();
        assert!(k > k_lo && k <= k_hi, "{k_lo} {k} {k_hi}");
        assert!((k_hi - k) < 1e-6 * (k_hi - k_lo));
        assert!(sol.curve.is_nonincreasing(1e-12));
        for f in [0.0, 0.25, 0.5, 0.75, 0.99] {
            let curve = p.solve_closed_form_k(k_lo + f * (k_hi - k_lo)).unwrap();
            assert!(p.h_from_curve(&curve).unwrap() <= sol.h);
        }
        for c in [sol.feasible.c_lo * 1.5, sol.feasible.c_lo * 4.0, sol.feasible.c_lo * 40.0] {
            let a = p.h_objective(c, CurveMethod::ClosedForm).unwrap();
            let b = p.h_objective(c + 1e-4, CurveMethod::ClosedForm).unwrap();
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn pareto_optimum_is_interior() {
        let p = TypeProblem::new(
            Family::ParetoShapeInvTheta { scale: 3.0 },
            TypeDistribution::truncated_normal(0.15, 0.1, 0.1, 0.5).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default(),
            SolverConfig::default(),
        )
        .unwrap();
        let sol = p.solve_c_star(CurveMethod::Ode).unwrap();
        assert!(sol.c_star > sol.feasible.c_lo * 1.01);
        for c in [sol.feasible.c_lo, sol.c_star * 0.9, sol.c_star * 1.1, sol.c_star * 3.0] {
            assert!(p.h_objective(c, CurveMethod::Ode).unwrap() <= sol.h + 1e-12);
        }
        assert!(sol.curve.is_nonincreasing(1e-12));
    }

    #[test]
    fn numeric_feasible_set_for_uniform_claims() {
        let uniform = |hi: f64, gamma: f64| {
            TypeProblem::new(
                Family::UniformOnZeroTheta,
                TypeDistribution::uniform(1.0, hi).unwrap(),
                RiskAversionSpec::constant(gamma).unwrap(),
                MarketParams::default(),
                SolverConfig::default().with_grid_points(101),
            )
            .unwrap()
        };
        let p = uniform(1.5, 10.0);
        let fs = p.feasible_set().unwrap();
        assert!(fs.c_lo > 1.0 && fs.c_hi < 11.0);
        let at = p.solve_loading_curve(fs.c_lo, CurveMethod::Ode).unwrap();
        assert!(at.feasible && at.xi.last().unwrap().abs() < 1e-6);
        let sol = p.solve_c_star(CurveMethod::Ode).unwrap();
        assert!(sol.c_star > fs.c_lo && sol.c_star < fs.c_hi && sol.h > 0.0);
        // Moderate risk aversion cannot sustain cover over this spread of types.
        assert!(matches!(uniform(3.0, 5.0).feasible_set(), Err(Error::NoContract(_))));
    }
}
