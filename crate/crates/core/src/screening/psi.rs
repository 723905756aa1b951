use super::TypeProblem;
use crate::error::{Error, Result};
use crate::numerics::linspace;

/// Below this Ψ is treated as zero.
const PSI_FLOOR: f64 = 1e-14;

/// Grid estimates of the bounds on φ and ∂ξφ and the two sufficient
/// conditions for the fixed-point operator to be a self-map contraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionBounds {
    /// sup φ over the type interval × [0, ξ₀].
    pub k: f64,
    /// sup |∂ξφ| over the same box.
    pub m: f64,
    pub contraction_ok: bool,
    pub positivity_ok: bool,
}

impl TypeProblem {
    /// Ψ(θ, ξ) = ∫_{ξ/γ(θ)}^∞ (1 − F(y; θ)) dy.
    pub fn psi(&self, theta: f64, xi: f64) -> Result<f64> {
        self.dist(theta)?.stop_loss(xi / self.gamma(theta))
    }

    /// Ψ_θ(θ, ξ) = −∫_{ξ/γ(θ)}^∞ ∂θF(y; θ) dy, lower limit held fixed.
    pub fn psi_theta(&self, theta: f64, xi: f64) -> Result<f64> {
        self.dist(theta)?.dtheta_stop_loss(xi / self.gamma(theta))
    }

    /// φ = Ψ_θ / Ψ with 0/0 read as 0. The ratio comes from closed-form log
    /// derivatives, so it stays finite where both factors underflow.
    pub fn phi(&self, theta: f64, xi: f64) -> Result<f64> {
        let v = self.dist(theta)?.dtheta_log_stop_loss(xi / self.gamma(theta))?;
        if v.is_finite() {
            return Ok(v);
        }
        let psi_theta = self.psi_theta(theta, xi)?;
        if self.psi(theta, xi)? <= PSI_FLOOR && psi_theta <= PSI_FLOOR {
            return Ok(0.0);
        }
        Err(Error::Singular { theta, xi, psi_theta })
    }

    /// Central-difference ∂ξφ.
    pub fn dphi_dxi(&self, theta: f64, xi: f64) -> Result<f64> {
        let h = 1e-6 * xi.abs().max(1.0);
        Ok((self.phi(theta, xi + h)? - self.phi(theta, xi - h)?) / (2.0 * h))
    }

    /// Right-hand side of ξ' = −(1 + ξ) φ(θ, ξ).
    pub fn curve_slope(&self, theta: f64, xi: f64) -> Result<f64> {
        Ok(-(1.0 + xi) * self.phi(theta, xi)?)
    }

    pub fn check_assumptions(&self, xi0: f64) -> Result<AssumptionBounds> {
        if !(xi0 >= 0.0) {
            return Err(Error::Parameter(format!("xi0 must be nonnegative, got {xi0}")));
        }
        let (lo, hi) = self.support();
        let (mut k, mut m) = (0.0f64, 0.0f64);
        for &t in &linspace(lo, hi, 101) {
            for &x in &linspace(0.0, xi0, 51) {
                k = k.max(self.phi(t, x)?);
                m = m.max(self.dphi_dxi(t, x)?.abs());
            }
        }
        let width = hi - lo;
        Ok(AssumptionBounds {
            k,
            m,
            contraction_ok: (1.0 + xi0) * m * width < 1.0,
            positivity_ok: (1.0 + xi0) * (-k * width).exp() >= 1.0,
        })
    }
}
