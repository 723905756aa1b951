//! Screening on the unobserved risk type θ: the loading curve ξ̂(θ, C), the
//! choice of integration constant, the resulting menu and its audits.

mod closed_form;
mod curve;
mod menu;
mod optimum;
mod psi;

pub use closed_form::{
    exp_boundary_from_k, exp_k_bounds, exp_k_from_boundary, exp_xi, ExpClosedForm,
};
pub use curve::{CurveDiagnostics, CurveMethod, LoadingCurve};
pub use menu::MisreportSolution;
pub use optimum::{FeasibleSet, TypeSolution};
pub use psi::AssumptionBounds;

use crate::dist::{ClaimDistribution, Family, RiskAversionForm, RiskAversionSpec, TypeDistribution};
use crate::error::{ensure, Error, Result};
use crate::market::MarketParams;
use crate::numerics::{linspace, SolverConfig};

/// Upper end of the type support for Pareto shape 1/θ, keeping the variance finite.
pub const PARETO_THETA_CAP: f64 = 0.499;

#[derive(Debug, Clone, PartialEq)]
pub struct TypeProblem {
    pub family: Family,
    pub prior_theta: TypeDistribution,
    pub gamma_spec: RiskAversionSpec,
    pub market: MarketParams,
    pub solver: SolverConfig,
    /// Multiplies λT H(C*) in the reported insurer value.
    pub insurer_value_factor: f64,
}

impl TypeProblem {
    pub fn new(
        family: Family,
        prior_theta: TypeDistribution,
        gamma_spec: RiskAversionSpec,
        market: MarketParams,
        solver: SolverConfig,
    ) -> Result<Self> {
        if !family.is_theta_indexed() {
            return Err(Error::Parameter(format!(
                "risk-type screening needs a theta-indexed family, got {}",
                family.name()
            )));
        }
        market.validate()?;
        solver.validate()?;
        prior_theta.validate()?;
        let prior_theta = clamp_prior(family, prior_theta)?;
        let (lo, hi) = prior_theta.support();
        ensure(lo > 0.0, || format!("theta support must be positive, got lower end {lo}"))?;
        gamma_spec.validate_on(lo, hi)?;
        let p = Self { family, prior_theta, gamma_spec, market, solver, insurer_value_factor: 1.0 };
        p.check_first_order_dominance()?;
        Ok(p)
    }

    pub fn with_insurer_value_factor(mut self, factor: f64) -> Self {
        self.insurer_value_factor = factor;
        self
    }

    pub fn support(&self) -> (f64, f64) {
        self.prior_theta.support()
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        linspace(lo, hi, self.solver.grid_points)
    }

    pub fn dist(&self, theta: f64) -> Result<ClaimDistribution> {
        self.family.at(theta)
    }

    pub fn gamma(&self, theta: f64) -> f64 {
        self.gamma_spec.gamma(theta)
    }

    /// Exponential claims with constant γ admit the closed-form curve.
    pub fn has_closed_form(&self) -> bool {
        matches!(self.family, Family::ExponentialMean) && self.gamma_spec.form == RiskAversionForm::Constant
    }

    /// ∂θF ≤ 0 on a grid over the support.
    fn check_first_order_dominance(&self) -> Result<()> {
        let (lo, hi) = self.support();
        for &t in &linspace(lo, hi, 20) {
            let dist = self.dist(t)?;
            let top = if dist.support_upper().is_finite() {
                dist.support_upper()
            } else {
                dist.quantile(0.999)
            };
            for &y in &linspace(dist.support_lower(), top, 20) {
                let v = dist.dtheta_cdf(y)?;
                ensure(v <= 1e-14, || {
                    format!("first-order dominance fails at theta {t}, y {y}: dF/dtheta = {v}")
                })?;
            }
        }
        Ok(())
    }
}

fn clamp_prior(family: Family, prior: TypeDistribution) -> Result<TypeDistribution> {
    if !matches!(family, Family::ParetoShapeInvTheta { .. }) {
        return Ok(prior);
    }
    let (lo, hi) = prior.support();
    if hi <= PARETO_THETA_CAP {
        return Ok(prior);
    }
    ensure(lo < PARETO_THETA_CAP, || {
        format!("Pareto shape 1/theta needs theta < {PARETO_THETA_CAP}, support starts at {lo}")
    })?;
    log::warn!("clamping theta support [{lo}, {hi}] to [{lo}, {PARETO_THETA_CAP}] so the claim variance stays finite");
    match prior {
        TypeDistribution::Uniform { low, .. } => TypeDistribution::uniform(low, PARETO_THETA_CAP),
        TypeDistribution::TruncatedNormal { low, loc, scale, .. } => {
            TypeDistribution::truncated_normal(loc, scale, low, PARETO_THETA_CAP)
        }
        TypeDistribution::PointMass { .. } => unreachable!("a point mass with hi > cap has lo > cap"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_support_is_clamped() {
        let p = TypeProblem::new(
            Family::ParetoShapeInvTheta { scale: 3.0 },
            TypeDistribution::truncated_normal(0.15, 0.1, 0.1, 0.5).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default(),
            SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(p.support(), (0.1, PARETO_THETA_CAP));
    }

    #[test]
    fn fixed_family_rejected() {
        let r = TypeProblem::new(
            Family::ExponentialFixed { mean: 1.0 },
            TypeDistribution::uniform(1.0, 2.0).unwrap(),
            RiskAversionSpec::constant(5.0).unwrap(),
            MarketParams::default(),
            SolverConfig::default(),
        );
        assert!(matches!(r, Err(Error::Parameter(_))));
    }
}
