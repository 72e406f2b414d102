//! σ-norm and repulsive potentials.

use std::fmt;
use std::sync::Arc;

use crate::Vec3;

/// Parameter ε > 0 of the σ-norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaParams {
    pub epsilon: f64,
}

/// `(1/ε)(√(1 + ε‖z‖²) − 1)`: a norm surrogate that is smooth at zero.
#[inline]
pub fn sigma_norm(z: &Vec3, eps: f64) -> f64 {
    sigma_of_length(z.norm(), eps)
}

/// σ-norm of any vector with Euclidean length `len`.
#[inline]
pub fn sigma_of_length(len: f64, eps: f64) -> f64 {
    let s2 = eps * len * len;
    // (√(1+s²)−1)/ε rewritten to avoid cancellation for small s
    len * len / ((1.0 + s2).sqrt() + 1.0)
}

/// Gradient `z / √(1 + ε‖z‖²)`.
#[inline]
pub fn sigma_grad(z: &Vec3, eps: f64) -> Vec3 {
    z / (1.0 + eps * z.norm_squared()).sqrt()
}

/// A repulsive potential ψ with derivative φ, supported on `[0, d̂)`.
///
/// Implementations must satisfy ψ(d) = 0 and φ(d) = 0 for d ≥ d̂, and
/// ψ(d) > 0 on `[0, d̂)`.
pub trait RepulsivePotential: Send + Sync + fmt::Debug {
    fn psi(&self, d: f64, d_hat: f64) -> f64;
    fn phi(&self, d: f64, d_hat: f64) -> f64;
}

/// `ψ(d) = ln cosh(d − d̂)`, `φ(d) = tanh(d − d̂)` below d̂, zero above.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LogCosh;

/// `ln cosh x` as `|x| − ln 2 + ln(1 + e^{−2|x|})`; finite for any finite x.
#[inline]
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
}

impl RepulsivePotential for LogCosh {
    #[inline]
    fn psi(&self, d: f64, d_hat: f64) -> f64 {
        if d < d_hat {
            ln_cosh(d - d_hat)
        } else {
            0.0
        }
    }

    #[inline]
    fn phi(&self, d: f64, d_hat: f64) -> f64 {
        if d < d_hat {
            (d - d_hat).tanh()
        } else {
            0.0
        }
    }
}

/// Which potential family a link uses.
#[derive(Clone, Debug)]
pub enum PotentialFamily {
    LogCosh,
    Custom(Arc<dyn RepulsivePotential>),
}

impl PotentialFamily {
    fn get(&self) -> &dyn RepulsivePotential {
        match self {
            PotentialFamily::LogCosh => &LogCosh,
            PotentialFamily::Custom(p) => p.as_ref(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialFamily::LogCosh => "log-cosh",
            PotentialFamily::Custom(_) => "custom",
        }
    }
}

/// Separation potential (ψ, φ) on d̂ and boundary potential (ψ_b, φ_b) on
/// d̂_b, both from the same family.
#[derive(Clone, Debug)]
pub struct PotentialConfig {
    pub d_hat: f64,
    pub d_b_hat: f64,
    pub family: PotentialFamily,
    pub sigma: SigmaParams,
}

impl PotentialConfig {
    pub fn log_cosh(d_hat: f64, d_b_hat: f64, epsilon: f64) -> Self {
        Self {
            d_hat,
            d_b_hat,
            family: PotentialFamily::LogCosh,
            sigma: SigmaParams { epsilon },
        }
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.sigma.epsilon
    }

    #[inline]
    pub fn psi(&self, d: f64) -> f64 {
        self.family.get().psi(d, self.d_hat)
    }

    #[inline]
    pub fn phi(&self, d: f64) -> f64 {
        self.family.get().phi(d, self.d_hat)
    }

    #[inline]
    pub fn psi_b(&self, d: f64) -> f64 {
        self.family.get().psi(d, self.d_b_hat)
    }

    #[inline]
    pub fn phi_b(&self, d: f64) -> f64 {
        self.family.get().phi(d, self.d_b_hat)
    }

    /// ψ(‖z‖_σ) for a relative position z.
    #[inline]
    pub fn pair_potential(&self, z: &Vec3) -> f64 {
        self.psi(sigma_norm(z, self.epsilon()))
    }
}
