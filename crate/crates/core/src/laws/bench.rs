use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic loss-to-benchmark law
/// `Acc(L) = C_b + A_b / (1 + exp(k_b . L + B_b))`.
///
/// `k_b` is aligned with `loss_names`, the ordered list of validation sets
/// whose losses feed the law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchLawParams {
    #[serde(rename = "A")]
    pub amp: f64,
    #[serde(rename = "B")]
    pub offset: f64,
    #[serde(rename = "C")]
    pub floor: f64,
    #[serde(rename = "k")]
    pub coef: Vec<f64>,
    pub loss_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrad {
    pub value: f64,
    pub d_amp: f64,
    pub d_offset: f64,
    pub d_floor: f64,
    pub d_coef: Vec<f64>,
    pub d_losses: Vec<f64>,
}

/// `1 / (1 + exp(x))` without overflow for large `|x|`.
pub fn logistic_tail(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

impl BenchLawParams {
    pub fn new(amp: f64, offset: f64, floor: f64, coef: Vec<f64>, loss_names: Vec<String>) -> Result<Self> {
        let p = Self { amp, offset, floor, coef, loss_names };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coef.len() != self.loss_names.len() {
            return Err(Error::DimensionMismatch {
                what: "benchmark coefficients vs loss names",
                expected: self.loss_names.len(),
                found: self.coef.len(),
            });
        }
        if self.coef.is_empty() {
            return Err(Error::Empty("benchmark loss names"));
        }
        if !(self.amp > 0.0) || !self.amp.is_finite() {
            return Err(Error::InvalidParams("A_b must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.floor) {
            return Err(Error::InvalidParams("C_b must lie in [0, 1]".into()));
        }
        if self.floor + self.amp > 1.0 + 1e-9 {
            return Err(Error::InvalidParams("C_b + A_b exceeds 1".into()));
        }
        if !self.offset.is_finite() || self.coef.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite logit coefficient".into()));
        }
        Ok(())
    }

    fn check_len(&self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.coef.len() {
            return Err(Error::DimensionMismatch {
                what: "loss vector vs benchmark coefficients",
                expected: self.coef.len(),
                found: losses.len(),
            });
        }
        Ok(())
    }

    /// `k_b . L`, the benchmark-proxy loss.
    pub fn proxy(&self, losses: &[f64]) -> Result<f64> {
        self.check_len(losses)?;
        Ok(self.coef.iter().zip(losses).map(|(k, l)| k * l).sum())
    }

    /// Accuracy for a given value of the proxy `k_b . L`.
    pub fn accuracy_from_proxy(&self, proxy: f64) -> f64 {
        self.floor + self.amp * logistic_tail(proxy + self.offset)
    }

    /// Derivative of [`accuracy_from_proxy`](Self::accuracy_from_proxy).
    pub fn accuracy_slope(&self, proxy: f64) -> f64 {
        let s = logistic_tail(proxy + self.offset);
        -self.amp * s * (1.0 - s)
    }

    pub fn accuracy(&self, losses: &[f64]) -> Result<f64> {
        Ok(self.accuracy_from_proxy(self.proxy(losses)?))
    }

    pub fn accuracy_grad(&self, losses: &[f64]) -> Result<BenchGrad> {
        let proxy = self.proxy(losses)?;
        let s = logistic_tail(proxy + self.offset);
        let slope = -self.amp * s * (1.0 - s);
        Ok(BenchGrad {
            value: self.floor + self.amp * s,
            d_amp: s,
            d_offset: slope,
            d_floor: 1.0,
            d_coef: losses.iter().map(|l| slope * l).collect(),
            d_losses: self.coef.iter().map(|k| slope * k).collect(),
        })
    }

    /// Pulls this law's inputs out of a named loss map.
    pub fn loss_vector(&self, losses: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.loss_names
            .iter()
            .map(|name| {
                losses
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::InvalidParams(format!("loss `{name}` missing for benchmark law")))
            })
            .collect()
    }
}

pub fn bench_accuracy(p: &BenchLawParams, losses: &[f64]) -> Result<f64> {
    p.accuracy(losses)
}

pub fn proxy_loss(p: &BenchLawParams, losses: &[f64]) -> Result<f64> {
    p.proxy(losses)
}
