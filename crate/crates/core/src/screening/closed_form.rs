//! Exponential claims with mean θ and constant γ: the screening ODE
//! θξ' = −(1 + ξ)(1 + ξ/(γθ)) has the general solution
//! ξ = 1/(1 + γθ − Kθ e^{1/(γθ)}) − 1, indexed by the constant K.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpClosedForm {
    pub gamma: f64,
    pub k: f64,
}

impl ExpClosedForm {
    pub fn denominator(&self, theta: f64) -> f64 {
        1.0 + self.gamma * theta - self.k * theta * (1.0 / (self.gamma * theta)).exp()
    }

    pub fn xi(&self, theta: f64) -> Result<f64> {
        let den = self.denominator(theta);
        if !(den > 0.0) {
            return Err(Error::InfeasibleConstant {
                c: self.k,
                reason: format!("closed-form denominator {den:e} <= 0 at theta = {theta}"),
            });
        }
        Ok(1.0 / den - 1.0)
    }
}

pub fn exp_xi(gamma: f64, k: f64, theta: f64) -> Result<f64> {
    ExpClosedForm { gamma, k }.xi(theta)
}

/// Candidate bounds on K: the lower one puts ξ(θ_H) = 0, the upper one
/// sends the denominator at θ_L to zero.
pub fn exp_k_bounds(gamma: f64, theta_l: f64, theta_h: f64) -> (f64, f64) {
    let lo = gamma * (-1.0 / (gamma * theta_h)).exp();
    let hi = (1.0 + gamma * theta_l) / theta_l * (-1.0 / (gamma * theta_l)).exp();
    (lo, hi)
}

/// K for the curve with ξ(θ_L) = C − 1.
pub fn exp_k_from_boundary(gamma: f64, theta_l: f64, c: f64) -> f64 {
    (1.0 + gamma * theta_l - 1.0 / c) * (-1.0 / (gamma * theta_l)).exp() / theta_l
}

/// C = 1 + ξ(θ_L) for the constant K; infinite when the denominator vanishes.
pub fn exp_boundary_from_k(gamma: f64, theta_l: f64, k: f64) -> f64 {
    let den = ExpClosedForm { gamma, k }.denominator(theta_l);
    if den > 0.0 {
        1.0 / den
    } else {
        f64::INFINITY
    }
}
