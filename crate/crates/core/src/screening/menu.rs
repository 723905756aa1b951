use super::curve::LoadingCurve;
use super::TypeProblem;
use crate::audit::{audit_truth_telling_within, TruthTellingReport, EXACT_TIE};
use crate::dist::ClaimDistribution;
use crate::error::{ensure, Error, Result};
use crate::market::{Contract, ContractMenu, MenuIndex};
use crate::numerics::{integrate, linspace, try_bisect};

const SCAN_POINTS: usize = 100;
/// Quantile level that stands in for the top of an unbounded support.
const TAIL_LEVEL: f64 = 1.0 - 1e-12;

/// Best deductible for a customer buying a misreported type's loading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisreportSolution {
    /// Infinite when declining cover is optimal.
    pub deductible: f64,
    /// Expected cost per claim: loaded premium plus retained mean and risk charge.
    pub objective: f64,
}

struct Misreport<'a> {
    truth: &'a ClaimDistribution,
    report: &'a ClaimDistribution,
    gamma: f64,
    xi: f64,
}

impl Misreport<'_> {
    /// (1 + ξ̃) E_θ̃[(Y − d)₊] + E_θ[Y ∧ d] + (γ/2) E_θ[(Y ∧ d)²].
    fn cost(&self, d: f64) -> Result<f64> {
        if d == f64::INFINITY {
            return Ok(self.truth.mean()? + 0.5 * self.gamma * self.truth.second_moment()?);
        }
        Ok((1.0 + self.xi) * self.report.stop_loss(d)?
            + self.truth.capped_mean(d)
            + 0.5 * self.gamma * self.truth.capped_sq_moment(d))
    }

    /// d cost / dd.
    fn slope(&self, d: f64) -> f64 {
        (1.0 + self.gamma * d) * self.truth.survival(d) - (1.0 + self.xi) * self.report.survival(d)
    }

    fn scan_grid(&self) -> Vec<f64> {
        let top = self.truth.quantile(TAIL_LEVEL).max(self.report.quantile(TAIL_LEVEL));
        let near = (4.0 * (self.xi / self.gamma).max(self.report.quantile(0.5))).min(top);
        let mut grid = linspace(0.0, near, SCAN_POINTS);
        if top > near {
            let ratio = (top / near).powf(1.0 / SCAN_POINTS as f64);
            grid.extend((1..=SCAN_POINTS).map(|k| near * ratio.powi(k as i32)));
        }
        grid
    }

    /// Global minimizer among the stationary points, the origin and
    /// declining cover; ties go to the smaller deductible.
    fn solve(&self) -> Result<MisreportSolution> {
        let grid = self.scan_grid();
        let slopes: Vec<f64> = grid.iter().map(|&d| self.slope(d)).collect();
        let mut candidates = Vec::new();
        if slopes[0] >= 0.0 {
            candidates.push(0.0);
        }
        for (w, s) in grid.windows(2).zip(slopes.windows(2)) {
            if s[0] < 0.0 && s[1] >= 0.0 {
                let tol = 1e-14 * w[1].max(1.0);
                let root = if s[1] == 0.0 { w[1] } else { try_bisect(|d| Ok(self.slope(d)), w[0], w[1], tol)? };
                candidates.push(root);
            }
        }
        if *slopes.last().expect("non-empty scan") < 0.0 {
            candidates.push(f64::INFINITY);
        }
        let mut best: Option<MisreportSolution> = None;
        for d in candidates {
            let objective = self.cost(d)?;
            if best.is_none_or(|b| objective < b.objective - 1e-14 * b.objective.abs()) {
                best = Some(MisreportSolution { deductible: d, objective });
            }
        }
        best.ok_or_else(|| {
            let trace: Vec<String> = slopes.iter().step_by(20).map(|s| format!("{s:.3e}")).collect();
            Error::Numeric(format!("no stationary deductible found; slope trace {}", trace.join(", ")))
        })
    }
}

impl TypeProblem {
    pub fn build_menu_type(&self, curve: &LoadingCurve) -> Result<ContractMenu> {
        curve.require_feasible()?;
        let lambda = self.market.lambda;
        let contracts = curve
            .theta_grid
            .iter()
            .zip(&curve.xi)
            .map(|(&t, &xi)| Contract::priced(&self.dist(t)?, lambda, xi / self.gamma(t), xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(ContractMenu {
            index: MenuIndex::Theta,
            gamma: curve.theta_grid.iter().map(|&t| self.gamma(t)).collect(),
            grid: curve.theta_grid.clone(),
            contracts,
        })
    }

    /// Deductible chosen by a type-θ customer who reports θ̃ and pays loading ξ̃.
    pub fn misreport_deductible_for(&self, theta: f64, theta_tilde: f64, xi_tilde: f64) -> Result<MisreportSolution> {
        let truth = self.dist(theta)?;
        let gamma = self.gamma(theta);
        if theta_tilde == theta {
            let d = xi_tilde / gamma;
            let m = Misreport { truth: &truth, report: &truth, gamma, xi: xi_tilde };
            return Ok(MisreportSolution { deductible: d, objective: m.cost(d)? });
        }
        let report = self.dist(theta_tilde)?;
        Misreport { truth: &truth, report: &report, gamma, xi: xi_tilde }.solve()
    }

    pub fn misreport_deductible(&self, curve: &LoadingCurve, theta: f64, theta_tilde: f64) -> Result<MisreportSolution> {
        self.misreport_deductible_for(theta, theta_tilde, curve.xi_at(theta_tilde))
    }

    /// Mean–variance value of a type-θ customer reporting θ̃.
    pub fn customer_value_type(&self, curve: &LoadingCurve, theta: f64, theta_tilde: f64) -> Result<f64> {
        let sol = self.misreport_deductible(curve, theta, theta_tilde)?;
        Ok(self.market.x_c - self.market.exposure() * sol.objective)
    }

    /// Truthful value from the claim density directly.
    pub fn truthful_value_type(&self, theta: f64, xi: f64) -> Result<f64> {
        let dist = self.dist(theta)?;
        let gamma = self.gamma(theta);
        let d = xi / gamma;
        let lo = dist.support_lower();
        let retained = if d > lo {
            integrate(|y| (y + 0.5 * gamma * y * y) * dist.pdf(y), lo, d.min(dist.support_upper()), 1e-12)?
        } else {
            0.0
        };
        let cost = (1.0 + xi) * dist.stop_loss(d)? + retained + (d + 0.5 * gamma * d * d) * dist.survival(d);
        Ok(self.market.x_c - self.market.exposure() * cost)
    }

    pub fn no_insurance_value_type(&self, theta: f64) -> Result<f64> {
        let dist = self.dist(theta)?;
        Ok(self.market.x_c
            - self.market.exposure() * (dist.mean()? + 0.5 * self.gamma(theta) * dist.second_moment()?))
    }

    pub fn verify_truth_telling_type(&self, curve: &LoadingCurve, n: usize) -> Result<TruthTellingReport> {
        let (lo, hi) = self.support();
        if lo < hi {
            ensure(n >= 3, || format!("truth-telling audit needs at least 3 types, got {n}"))?;
        }
        // The curve is only known to the ODE tolerance, so value gaps below it are ties.
        let tie = self.solver.ode_tol.max(EXACT_TIE);
        audit_truth_telling_within(lo, hi, n, tie, |t, r| self.customer_value_type(curve, t, r))
    }

    /// Unrestricted optimal coverage of a claim of size `y`, clipped to [0, y].
    pub fn general_coverage(&self, y: f64, theta: f64, theta_tilde: f64, xi_tilde: f64) -> Result<f64> {
        let f = self.dist(theta)?.pdf(y);
        if !(f > 0.0) {
            return Err(Error::Numeric(format!("true-type density vanishes at y = {y}, coverage undefined")));
        }
        let f_tilde = self.dist(theta_tilde)?.pdf(y);
        let gamma = self.gamma(theta);
        Ok((y + 1.0 / gamma - f_tilde * (1.0 + xi_tilde) / (gamma * f)).clamp(0.0, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Family, RiskAversionSpec, TypeDistribution};
    use crate::market::MarketParams;
    use crate::numerics::{maximize_scalar, SolverConfig};
    use crate::screening::{exp_k_bounds, CurveMethod};
    use approx::assert_abs_diff_eq;

    fn problem(family: Family, prior: TypeDistribution, gamma: RiskAversionSpec) -> TypeProblem {
        TypeProblem::new(family, prior, gamma, MarketParams::default(), SolverConfig::default()).unwrap()
    }

    fn exp_19() -> TypeProblem {
        problem(
            Family::ExponentialMean,
            TypeDistribution::uniform(1.0, 9.0).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
        )
    }

    #[test]
    fn truthful_deductible_is_exact() {
        let p = exp_19();
        let curve = p.solve_closed_form_k(4.9).unwrap();
        for t in [1.0, 3.3, 9.0] {
            let s = p.misreport_deductible(&curve, t, t).unwrap();
            assert_eq!(s.deductible, curve.xi_at(t) / 5.0);
        }
    }

    #[test]
    fn zero_loading_means_full_cover() {
        let p = exp_19();
        let zero = LoadingCurve::custom(p.theta_grid(), vec![0.0; 401]).unwrap();
        for (t, r) in [(2.0, 5.0), (5.0, 2.0), (8.0, 1.0)] {
            assert_eq!(p.misreport_deductible(&zero, t, r).unwrap().deductible, 0.0);
        }
    }

    #[test]
    fn under_reporting_raises_the_deductible() {
        let p = exp_19();
        let curve = p.solve_closed_form_k(4.9).unwrap();
        let down = p.misreport_deductible(&curve, 5.0, 4.0).unwrap().deductible;
        let truth = p.misreport_deductible(&curve, 5.0, 5.0).unwrap().deductible;
        assert!(down > truth, "{down} vs {truth}");
    }

    #[test]
    fn misreport_matches_brute_force() {
        let p = exp_19();
        let curve = p.solve_closed_form_k(4.9).unwrap();
        for (t, r) in [(5.0, 4.0), (2.0, 3.0), (7.0, 8.5)] {
            let s = p.misreport_deductible(&curve, t, r).unwrap();
            let truth = p.dist(t).unwrap();
            let report = p.dist(r).unwrap();
            let m = Misreport { truth: &truth, report: &report, gamma: 5.0, xi: curve.xi_at(r) };
            let grid = linspace(0.0, 100.0, 200_001);
            let brute = grid.iter().map(|&d| m.cost(d).unwrap()).fold(f64::INFINITY, f64::min);
            assert!(s.objective <= brute + 1e-12);
            assert!(s.objective >= brute - 1e-6);
        }
    }

    #[test]
    fn truthful_value_agrees_with_density_quadrature() {
        let cases = [
            (exp_19(), 3.0, 2.5),
            (
                problem(
                    Family::ParetoShapeInvTheta { scale: 3.0 },
                    TypeDistribution::uniform(0.1, 0.45).unwrap(),
                    RiskAversionSpec::constant(5.0).unwrap(),
                ),
                0.2,
                30.0,
            ),
            (
                problem(
                    Family::UniformOnZeroTheta,
                    TypeDistribution::uniform(1.0, 1.5).unwrap(),
                    RiskAversionSpec::constant(10.0).unwrap(),
                ),
                1.2,
                4.0,
            ),
        ];
        for (p, t, xi) in cases {
            let curve = LoadingCurve::custom(vec![t - 0.01, t + 0.01], vec![xi, xi]).unwrap();
            let direct = p.customer_value_type(&curve, t, t).unwrap();
            let oracle = p.truthful_value_type(t, xi).unwrap();
            assert_abs_diff_eq!(direct, oracle, epsilon = 1e-10);
            assert!(direct >= p.no_insurance_value_type(t).unwrap());
            let bumped = LoadingCurve::custom(vec![t - 0.01, t + 0.01], vec![xi + 0.1, xi + 0.1]).unwrap();
            assert!(p.customer_value_type(&bumped, t, t).unwrap() < direct);
        }
    }

    #[test]
    fn equilibrium_passes_and_constant_loading_fails() {
        let p = exp_19();
        let sol = p.solve_c_star(CurveMethod::ClosedForm).unwrap();
        let report = p.verify_truth_telling_type(&sol.curve, 50).unwrap();
        assert!(report.passed, "{:?}", report.violations);
        let flat = LoadingCurve::custom(p.theta_grid(), vec![sol.curve.xi[0]; 401]).unwrap();
        assert!(!p.verify_truth_telling_type(&flat, 50).unwrap().passed);
    }

    #[test]
    fn indifferent_types_pass_within_solver_precision() {
        // Deductibles stay below the Pareto scale, so every type retains the
        // same loss and the menu leaves them indifferent up to curve error.
        let p = problem(
            Family::ParetoShapeInvTheta { scale: 3.0 },
            TypeDistribution::truncated_normal(0.15, 0.1, 0.1, 0.3).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
        );
        let sol = p.solve_c_star(CurveMethod::Ode).unwrap();
        assert!(sol.curve.xi[0] / 5.0 < 3.0);
        assert!(p.verify_truth_telling_type(&sol.curve, 50).unwrap().passed);
        let flat = LoadingCurve::custom(sol.curve.theta_grid.clone(), vec![sol.curve.xi[0]; sol.curve.xi.len()]).unwrap();
        assert!(!p.verify_truth_telling_type(&flat, 50).unwrap().passed);
    }

    #[test]
    fn point_support_audit_passes() {
        let p = problem(
            Family::ExponentialMean,
            TypeDistribution::point_mass(5.0).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
        );
        let curve = p.solve_loading_curve(7.0, CurveMethod::Ode).unwrap();
        assert!(p.verify_truth_telling_type(&curve, 1).unwrap().passed);
    }

    #[test]
    fn menu_prices_and_monotonicity() {
        let p = problem(
            Family::ExponentialMean,
            TypeDistribution::uniform(1.0, 9.0).unwrap(),
            RiskAversionSpec::linear(5.0).unwrap(),
        );
        let sol = p.solve_c_star(CurveMethod::Ode).unwrap();
        let menu = p.build_menu_type(&sol.curve).unwrap();
        let d = menu.deductibles();
        let pr = menu.premiums();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(pr.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let (lo, hi) = exp_k_bounds(5.0, 1.0, 9.0);
        assert!(lo < hi);
        let c = menu.contracts[7];
        let t = menu.grid[7];
        assert_abs_diff_eq!(c.premium_rate, (1.0 + c.loading) * t * (-c.deductible / t).exp(), epsilon = 1e-12);
    }

    #[test]
    fn general_coverage_matches_pointwise_minimizer() {
        let p = exp_19();
        assert_abs_diff_eq!(p.general_coverage(1.0, 2.0, 2.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.general_coverage(3.0, 2.0, 2.0, 5.0).unwrap(), 2.0, epsilon = 1e-12);
        let (y, t, r, xi) = (1.0, 2.0, 1.0, 0.5);
        let (f, fr) = (p.dist(t).unwrap().pdf(y), p.dist(r).unwrap().pdf(y));
        let best = maximize_scalar(|l| -((1.0 + xi) * l * fr + ((y - l) + 2.5 * (y - l).powi(2)) * f), 0.0, y, 1e-12)
            .unwrap();
        assert_abs_diff_eq!(p.general_coverage(y, t, r, xi).unwrap(), best.x, epsilon = 1e-6);
    }
}
