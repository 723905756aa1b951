//! Screening on unobserved risk aversion γ. The truthful menu charges one
//! loading for every type, so the whole problem reduces to a scalar search.

use rayon::prelude::*;

use crate::audit::{audit_truth_telling, TruthTellingReport};
use crate::dist::{ClaimDistribution, TypeDistribution};
use crate::error::{ensure, Error, Result};
use crate::market::{Contract, ContractMenu, MarketParams, MenuIndex};
use crate::numerics::{linspace, try_maximize_scalar, SolverConfig};

const MAX_DOUBLINGS: usize = 60;
const SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeProblem {
    pub claim: ClaimDistribution,
    pub prior_gamma: TypeDistribution,
    pub market: MarketParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSolution {
    pub xi_hat: f64,
    /// Insurer objective per unit exposure at `xi_hat`.
    pub objective: f64,
    /// The best loading earns no more than offering no coverage at all.
    pub degenerate: bool,
    /// Right end of the final search interval.
    pub search_upper: f64,
}

impl AttitudeProblem {
    pub fn new(claim: ClaimDistribution, prior_gamma: TypeDistribution, market: MarketParams) -> Result<Self> {
        market.validate()?;
        prior_gamma.validate()?;
        let (lo, _) = prior_gamma.support();
        ensure(lo > 0.0, || format!("risk aversion support must be positive, got lower end {lo}"))?;
        claim.second_moment()?;
        Ok(Self { claim, prior_gamma, market })
    }

    /// ∫ [ξ E(Y − ξ/γ)₊ − γ_I/2 E(Y − ξ/γ)₊²] dG(γ).
    pub fn insurer_objective(&self, xi: f64) -> Result<f64> {
        ensure(xi >= 0.0, || format!("loading must be nonnegative, got {xi}"))?;
        let gi = self.market.gamma_i;
        self.prior_gamma.try_expectation(|g| {
            let d = xi / g;
            Ok(xi * self.claim.stop_loss(d)? - 0.5 * gi * self.claim.stop_loss_sq(d)?)
        })
    }

    pub fn solve_loading(&self, cfg: &SolverConfig) -> Result<AttitudeSolution> {
        let (_, g_hi) = self.prior_gamma.support();
        let mut hi = 10.0 * g_hi * self.claim.mean()?;
        let mut doublings = 0;
        loop {
            let right = self.insurer_objective(hi)?;
            let inner = self.insurer_objective(hi * (1.0 - 1e-3))?;
            if right <= inner || doublings >= MAX_DOUBLINGS {
                break;
            }
            hi *= 2.0;
            doublings += 1;
        }

        // A coarse scan picks the basin; golden section polishes inside it.
        let xs = linspace(0.0, hi, SCAN_POINTS + 1);
        let vals = xs
            .par_iter()
            .map(|&x| self.insurer_objective(x))
            .collect::<Result<Vec<_>>>()?;
        let (k, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let lo = xs[k.saturating_sub(1)];
        let up = xs[(k + 1).min(SCAN_POINTS)];
        let best = try_maximize_scalar(|x| self.insurer_objective(x), lo, up, cfg.opt_tol)?;
        let (xi_hat, objective) = if best.value >= vals[k] { (best.x, best.value) } else { (xs[k], vals[k]) };
        let degenerate = objective <= 1e-14;
        if degenerate {
            log::warn!("attitude market is degenerate: best insurer objective {objective:e}");
        }
        Ok(AttitudeSolution { xi_hat, objective, degenerate, search_upper: hi })
    }

    /// λT times the insurer objective.
    pub fn insurer_value(&self, xi: f64) -> Result<f64> {
        Ok(self.market.exposure() * self.insurer_objective(xi)?)
    }

    pub fn contract_for(&self, gamma: f64, xi_hat: f64) -> Result<Contract> {
        Contract::priced(&self.claim, self.market.lambda, xi_hat / gamma, xi_hat)
    }

    pub fn build_menu(&self, xi_hat: f64, n: usize) -> Result<ContractMenu> {
        ensure(xi_hat >= 0.0, || format!("loading must be nonnegative, got {xi_hat}"))?;
        let (lo, hi) = self.prior_gamma.support();
        let grid = linspace(lo, hi, n);
        let contracts = grid.iter().map(|&g| self.contract_for(g, xi_hat)).collect::<Result<Vec<_>>>()?;
        Ok(ContractMenu { index: MenuIndex::Gamma, gamma: grid.clone(), grid, contracts })
    }

    /// Mean–variance value of a type-γ customer who reports γ̃ and buys the
    /// menu contract for γ̃ under the loading schedule `xi_of`.
    pub fn customer_value_with<S>(&self, gamma: f64, gamma_tilde: f64, xi_of: S) -> Result<f64>
    where
        S: Fn(f64) -> f64,
    {
        let xi = xi_of(gamma_tilde);
        let d = xi / gamma_tilde;
        let lt = self.market.exposure();
        Ok(self.market.x_c
            - lt * self.claim.mean()?
            - lt * xi * self.claim.stop_loss(d)?
            - 0.5 * gamma * lt * self.claim.capped_sq_moment(d))
    }

    pub fn customer_value(&self, gamma: f64, gamma_tilde: f64, xi_hat: f64) -> Result<f64> {
        self.customer_value_with(gamma, gamma_tilde, |_| xi_hat)
    }

    /// Truthful value assembled from the uncapped moments,
    /// using (Y ∧ d)² = Y² − (Y − d)₊² − 2d (Y − d)₊.
    pub fn truthful_value(&self, gamma: f64, xi_hat: f64) -> Result<f64> {
        let d = xi_hat / gamma;
        let sl = self.claim.stop_loss(d)?;
        let capped_sq = self.claim.second_moment()? - self.claim.stop_loss_sq(d)? - 2.0 * d * sl;
        Ok(self.market.x_c - self.market.exposure() * (self.claim.mean()? + xi_hat * sl + 0.5 * gamma * capped_sq))
    }

    pub fn no_insurance_value(&self, gamma: f64) -> Result<f64> {
        Ok(self.market.x_c
            - self.market.exposure() * (self.claim.mean()? + 0.5 * gamma * self.claim.second_moment()?))
    }

    pub fn verify_truth_telling(&self, xi_hat: f64, n: usize) -> Result<TruthTellingReport> {
        self.verify_truth_telling_with(n, |_| xi_hat)
    }

    /// Audits an arbitrary loading schedule γ̃ ↦ ξ(γ̃).
    pub fn verify_truth_telling_with<S>(&self, n: usize, xi_of: S) -> Result<TruthTellingReport>
    where
        S: Fn(f64) -> f64 + Sync,
    {
        ensure(n >= 3, || format!("truth-telling audit needs at least 3 types, got {n}"))?;
        let (lo, hi) = self.prior_gamma.support();
        audit_truth_telling(lo, hi, n, |g, r| self.customer_value_with(g, r, &xi_of))
    }

    /// The single contract offered when γ is known.
    pub fn no_uncertainty_contract(&self, cfg: &SolverConfig) -> Result<Contract> {
        let TypeDistribution::PointMass { atom } = self.prior_gamma else {
            return Err(Error::Usage("a single contract needs a point-mass prior on gamma".into()));
        };
        let sol = self.solve_loading(cfg)?;
        self.contract_for(atom, sol.xi_hat)
    }
}
