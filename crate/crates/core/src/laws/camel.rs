use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{DomainProfile, Mixture};

/// Capacity-aware mixture law
/// `L(r, M) = C + sum_i K_i / (<t_i, r>^alpha_i * M^beta_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamelParams {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub profile: DomainProfile,
    /// Set on fits of a benchmark-proxy target, where `C` may be negative.
    #[serde(default)]
    pub free_offset: bool,
}

/// Partial derivatives of [`CamelParams::eval`] at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CamelGrad {
    pub value: f64,
    pub d_c: f64,
    pub d_k: Vec<f64>,
    pub d_alpha: Vec<f64>,
    pub d_beta: Vec<f64>,
    /// `d_eta[i]`; the profile entry `(i, j)` has partial `d_eta[i] * r_j`.
    pub d_eta: Vec<f64>,
    pub d_r: Vec<f64>,
    pub d_m: f64,
}

impl CamelGrad {
    pub fn d_profile(&self, domain: usize, r: &[f64]) -> Vec<f64> {
        r.iter().map(|w| self.d_eta[domain] * w).collect()
    }
}

impl CamelParams {
    pub fn new(
        c: f64,
        k: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        profile: DomainProfile,
        free_offset: bool,
    ) -> Result<Self> {
        let p = Self { c, k, alpha, beta, profile, free_offset };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.profile.domains();
        for (what, len) in [
            ("CAMEL K length", self.k.len()),
            ("CAMEL alpha length", self.alpha.len()),
            ("CAMEL beta length", self.beta.len()),
        ] {
            if len != k {
                return Err(Error::DimensionMismatch { what, expected: k, found: len });
            }
        }
        if !self.c.is_finite() || (!self.free_offset && self.c < 0.0) {
            return Err(Error::InvalidParams(format!("C = {} violates the offset constraint", self.c)));
        }
        if self.k.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams("every K_i must be positive".into()));
        }
        if self.alpha.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::InvalidParams("every alpha_i must lie in (0, 1)".into()));
        }
        if self.beta.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams("every beta_i must be positive".into()));
        }
        Ok(())
    }

    pub fn domains(&self) -> usize {
        self.profile.domains()
    }

    pub fn datasets(&self) -> usize {
        self.profile.datasets()
    }

    pub fn eval(&self, r: &Mixture, m: f64) -> Result<f64> {
        self.eval_raw(r.weights(), m)
    }

    /// Evaluates on an unvalidated weight slice.
    pub fn eval_raw(&self, r: &[f64], m: f64) -> Result<f64> {
        let eta = self.profile.effective_weights_raw(r)?;
        self.eval_eta(&eta, m)
    }

    /// Evaluates the law at given effective weights `eta`.
    pub fn eval_eta(&self, eta: &[f64], m: f64) -> Result<f64> {
        let ln_m = m.ln();
        let mut total = self.c;
        for (i, &e) in eta.iter().enumerate() {
            if !(e > 0.0) {
                return Err(Error::ZeroEffectiveWeight { domain: i });
            }
            total += self.k[i] * (-self.alpha[i] * e.ln() - self.beta[i] * ln_m).exp();
        }
        Ok(total)
    }

    pub fn eval_grad(&self, r: &[f64], m: f64) -> Result<CamelGrad> {
        let eta = self.profile.effective_weights_raw(r)?;
        let k = eta.len();
        let ln_m = m.ln();
        let mut g = CamelGrad {
            value: self.c,
            d_c: 1.0,
            d_k: vec![0.0; k],
            d_alpha: vec![0.0; k],
            d_beta: vec![0.0; k],
            d_eta: vec![0.0; k],
            d_r: vec![0.0; r.len()],
            d_m: 0.0,
        };
        for (i, &e) in eta.iter().enumerate() {
            if !(e > 0.0) {
                return Err(Error::ZeroEffectiveWeight { domain: i });
            }
            let ln_e = e.ln();
            let unit = (-self.alpha[i] * ln_e - self.beta[i] * ln_m).exp();
            let term = self.k[i] * unit;
            g.value += term;
            g.d_k[i] = unit;
            g.d_alpha[i] = -ln_e * term;
            g.d_beta[i] = -ln_m * term;
            g.d_eta[i] = -self.alpha[i] * term / e;
            g.d_m -= self.beta[i] * term / m;
        }
        for (j, d) in g.d_r.iter_mut().enumerate() {
            *d = (0..k).map(|i| g.d_eta[i] * self.profile.get(i, j)).sum();
        }
        Ok(g)
    }
}

/// Free-function form of [`CamelParams::eval`].
pub fn camel_eval(p: &CamelParams, r: &Mixture, m: f64) -> Result<f64> {
    p.eval(r, m)
}
