use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Mixture;

/// Fixed-scale data mixing law
/// `L(r) = sum_i S_i [C_i + Kexp_i * exp(sum_j T_ij r_j)]`.
///
/// Unlike CAMEL the coefficient matrix `T` is an unconstrained real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlParams {
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "Kexp")]
    pub kexp: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmlGrad {
    pub value: f64,
    pub d_s: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_kexp: Vec<f64>,
    pub d_t: Vec<Vec<f64>>,
    pub d_r: Vec<f64>,
}

impl DmlParams {
    pub fn new(s: Vec<f64>, c: Vec<f64>, kexp: Vec<f64>, t: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { s, c, kexp, t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.s.len();
        if k == 0 {
            return Err(Error::InvalidParams("DML needs at least one domain".into()));
        }
        if self.c.len() != k || self.kexp.len() != k || self.t.len() != k {
            return Err(Error::DimensionMismatch {
                what: "DML parameter vectors",
                expected: k,
                found: self.c.len().min(self.kexp.len()).min(self.t.len()),
            });
        }
        let n = self.t[0].len();
        if self.t.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidParams("ragged DML T matrix".into()));
        }
        if self.s.iter().chain(&self.kexp).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams("S_i and Kexp_i must be positive".into()));
        }
        if self.c.iter().chain(self.t.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite DML coefficient".into()));
        }
        Ok(())
    }

    pub fn domains(&self) -> usize {
        self.s.len()
    }

    pub fn datasets(&self) -> usize {
        self.t[0].len()
    }

    pub fn eval(&self, r: &Mixture) -> Result<f64> {
        self.eval_raw(r.weights())
    }

    pub fn eval_raw(&self, r: &[f64]) -> Result<f64> {
        self.check_len(r)?;
        Ok((0..self.domains()).map(|i| self.s[i] * (self.c[i] + self.kexp[i] * self.exponent(i, r).exp())).sum())
    }

    pub fn eval_grad(&self, r: &[f64]) -> Result<DmlGrad> {
        self.check_len(r)?;
        let k = self.domains();
        let n = r.len();
        let mut g = DmlGrad {
            value: 0.0,
            d_s: vec![0.0; k],
            d_c: vec![0.0; k],
            d_kexp: vec![0.0; k],
            d_t: vec![vec![0.0; n]; k],
            d_r: vec![0.0; n],
        };
        for i in 0..k {
            let e = self.exponent(i, r).exp();
            let inner = self.c[i] + self.kexp[i] * e;
            g.value += self.s[i] * inner;
            g.d_s[i] = inner;
            g.d_c[i] = self.s[i];
            g.d_kexp[i] = self.s[i] * e;
            let scale = self.s[i] * self.kexp[i] * e;
            for j in 0..n {
                g.d_t[i][j] = scale * r[j];
                g.d_r[j] += scale * self.t[i][j];
            }
        }
        Ok(g)
    }

    fn exponent(&self, i: usize, r: &[f64]) -> f64 {
        self.t[i].iter().zip(r).map(|(t, w)| t * w).sum()
    }

    fn check_len(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.datasets() {
            return Err(Error::DimensionMismatch {
                what: "mixture length vs DML T columns",
                expected: self.datasets(),
                found: r.len(),
            });
        }
        Ok(())
    }
}

pub fn dml_eval(p: &DmlParams, r: &Mixture) -> Result<f64> {
    p.eval(r)
}
