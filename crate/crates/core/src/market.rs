use crate::dist::ClaimDistribution;
use crate::error::{ensure, Result};

/// Market constants shared by both screening problems and the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Claim intensity λ.
    pub lambda: f64,
    pub horizon_t: f64,
    /// Insurer risk aversion γ_I.
    pub gamma_i: f64,
    pub x_c: f64,
    /// Insurer initial surplus; only the simulator uses it.
    pub x_i: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self { lambda: 1.0, horizon_t: 1.0, gamma_i: 1.0, x_c: 0.0, x_i: 0.0 }
    }
}

impl MarketParams {
    pub fn with_gamma_i(mut self, gamma_i: f64) -> Self {
        self.gamma_i = gamma_i;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.lambda > 0.0 && self.lambda.is_finite(), || {
            format!("lambda must be positive, got {}", self.lambda)
        })?;
        ensure(self.horizon_t > 0.0 && self.horizon_t.is_finite(), || {
            format!("horizon T must be positive, got {}", self.horizon_t)
        })?;
        ensure(self.gamma_i >= 0.0 && self.gamma_i.is_finite(), || {
            format!("gamma_I must be nonnegative, got {}", self.gamma_i)
        })?;
        ensure(self.x_c.is_finite() && self.x_i.is_finite(), || "initial surpluses must be finite".into())
    }

    /// λT.
    pub fn exposure(&self) -> f64 {
        self.lambda * self.horizon_t
    }
}

/// One excess-of-loss contract: the insurer pays `(y - deductible)₊` per claim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contract {
    pub deductible: f64,
    pub loading: f64,
    /// Premium per unit time.
    pub premium_rate: f64,
}

impl Contract {
    /// Prices a deductible with the expected-value principle.
    pub fn priced(claim: &ClaimDistribution, lambda: f64, deductible: f64, loading: f64) -> Result<Self> {
        ensure(deductible >= 0.0, || format!("deductible must be nonnegative, got {deductible}"))?;
        ensure(loading >= 0.0, || format!("loading must be nonnegative, got {loading}"))?;
        let premium_rate = (1.0 + loading) * lambda * claim.stop_loss(deductible)?;
        Ok(Self { deductible, loading, premium_rate })
    }

    pub fn no_insurance() -> Self {
        Self { deductible: f64::INFINITY, loading: 0.0, premium_rate: 0.0 }
    }

    /// Insurer's payment on a claim of size `y`.
    pub fn indemnity(&self, y: f64) -> f64 {
        (y - self.deductible).max(0.0)
    }

    /// Part of a claim of size `y` the customer retains.
    pub fn retention(&self, y: f64) -> f64 {
        y.min(self.deductible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MenuIndex {
    Gamma,
    Theta,
}

impl MenuIndex {
    pub fn name(&self) -> &'static str {
        match self {
            MenuIndex::Gamma => "gamma",
            MenuIndex::Theta => "theta",
        }
    }
}

/// Contracts indexed by the reported value of the hidden parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractMenu {
    pub index: MenuIndex,
    pub grid: Vec<f64>,
    pub contracts: Vec<Contract>,
    /// Risk aversion at each grid point.
    pub gamma: Vec<f64>,
}

impl ContractMenu {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn deductibles(&self) -> Vec<f64> {
        self.contracts.iter().map(|c| c.deductible).collect()
    }

    pub fn loadings(&self) -> Vec<f64> {
        self.contracts.iter().map(|c| c.loading).collect()
    }

    pub fn premiums(&self) -> Vec<f64> {
        self.contracts.iter().map(|c| c.premium_rate).collect()
    }
}
