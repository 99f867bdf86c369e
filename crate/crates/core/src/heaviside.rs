//! Regularized Heaviside function `H_ε` and its derivative.
//!
//! `H_ε(v) = 0` for `v ≤ 0`, `v²(3ε − 2v)/ε³` on `(0, ε)` and `1` for `v ≥ ε`;
//! it is `C¹` with `H'_ε(v) = 6v(ε − v)/ε³` on `(0, ε)` and zero elsewhere.

use crate::error::{Error, Result};
use crate::grid::Field;

/// A validated regularization scale with infallible pointwise evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Heaviside {
    eps: f64,
}

impl Heaviside {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {eps}")));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn value(&self, v: f64) -> f64 {
        let e = self.eps;
        if v <= 0.0 {
            0.0
        } else if v >= e {
            1.0
        } else {
            v * v * (3.0 * e - 2.0 * v) / (e * e * e)
        }
    }

    pub fn deriv(&self, v: f64) -> f64 {
        let e = self.eps;
        if v <= 0.0 || v >= e {
            0.0
        } else {
            6.0 * v * (e - v) / (e * e * e)
        }
    }

    pub fn field(&self, g: &Field) -> Field {
        g.map(|v| self.value(v))
    }

    pub fn deriv_field(&self, g: &Field) -> Field {
        g.map(|v| self.deriv(v))
    }

    /// Lipschitz constant `3/(2ε)` (the maximum of `H'_ε`, attained at `ε/2`).
    pub fn lipschitz(&self) -> f64 {
        1.5 / self.eps
    }
}

pub fn h_eps(v: f64, eps: f64) -> Result<f64> {
    Ok(Heaviside::new(eps)?.value(v))
}

pub fn h_eps_prime(v: f64, eps: f64) -> Result<f64> {
    Ok(Heaviside::new(eps)?.deriv(v))
}

pub fn h_eps_field(g: &Field, eps: f64) -> Result<Field> {
    Ok(Heaviside::new(eps)?.field(g))
}

pub fn h_eps_prime_field(g: &Field, eps: f64) -> Result<Field> {
    Ok(Heaviside::new(eps)?.deriv_field(g))
}
