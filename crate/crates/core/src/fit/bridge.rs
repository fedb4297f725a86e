//! Cross-scale extrapolation for the fixed-scale DML baseline.
//!
//! Each per-scale DML fit is evaluated at the target mixture and the
//! resulting values are bridged across scales with `L(M) = c + A / M^b`.
//! For fixed `b` the problem is a two-variable nonnegative least squares,
//! so the search runs over `b` alone: a log-spaced grid followed by
//! golden-section refinement around the best grid point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::DmlParams;
use crate::mixture::Mixture;

pub const MIN_BRIDGE_SCALES: usize = 3;
const B_MIN: f64 = 1e-3;
const B_MAX: f64 = 10.0;
const GRID: usize = 200;
const GOLDEN_STEPS: usize = 120;

/// `c + A (M / m_ref)^(-b)` with `c, A >= 0` and `b` in `[1e-3, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub m_ref: f64,
}

impl PowerLaw {
    pub fn eval(&self, m: f64) -> f64 {
        self.c + self.a * (m / self.m_ref).powf(-self.b)
    }
}

/// Best `(c, A, sse)` for a fixed exponent.
fn project(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sse = |c: f64, a: f64| -> f64 { x.iter().zip(y).map(|(xi, yi)| (c + a * xi - yi).powi(2)).sum() };
    let mut candidates = Vec::with_capacity(4);
    let det = n * sxx - sx * sx;
    if det > 1e-14 * n * sxx {
        let a = (n * sxy - sx * sy) / det;
        let c = (sy - a * sx) / n;
        if a >= 0.0 && c >= 0.0 {
            candidates.push((c, a));
        }
    }
    candidates.push((0.0, (sxy / sxx).max(0.0)));
    candidates.push(((sy / n).max(0.0), 0.0));
    let mut best = (0.0, 0.0, f64::INFINITY);
    for (c, a) in candidates {
        let e = sse(c, a);
        if e < best.2 {
            best = (c, a, e);
        }
    }
    best
}

/// Least-squares fit of `c + A M^-b` to `(scales, values)`.
pub fn fit_power_law(scales: &[f64], values: &[f64]) -> Result<PowerLaw> {
    if scales.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "bridge values vs scales",
            expected: scales.len(),
            found: values.len(),
        });
    }
    if scales.len() < MIN_BRIDGE_SCALES {
        return Err(Error::TooFewScales { need: MIN_BRIDGE_SCALES, found: scales.len() });
    }
    if scales.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::NonPositive("bridge scale"));
    }
    let m_ref = (scales.iter().map(|m| m.ln()).sum::<f64>() / scales.len() as f64).exp();
    let log_s: Vec<f64> = scales.iter().map(|m| (m / m_ref).ln()).collect();
    let at = |log_b: f64| {
        let b = log_b.exp();
        let x: Vec<f64> = log_s.iter().map(|l| (-b * l).exp()).collect();
        project(&x, values)
    };
    let (lo, hi) = (B_MIN.ln(), B_MAX.ln());
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best_i = 0;
    let mut best_sse = f64::INFINITY;
    for i in 0..GRID {
        let e = at(lo + step * i as f64).2;
        if e < best_sse {
            best_sse = e;
            best_i = i;
        }
    }
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = at(x1).2;
    let mut f2 = at(x2).2;
    for _ in 0..GOLDEN_STEPS {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = at(x1).2;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = at(x2).2;
        }
    }
    let mut log_b = 0.5 * (a + b);
    if at(log_b).2 > best_sse {
        log_b = lo + step * best_i as f64;
    }
    let (c, amp, _) = at(log_b);
    Ok(PowerLaw { c, a: amp, b: log_b.exp(), m_ref })
}

/// One fixed-scale DML fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub scale: f64,
    pub params: DmlParams,
}

/// Per-scale DML fits bridged across scales by a power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlBridge {
    pub fits: Vec<ScaleFit>,
}

impl DmlBridge {
    pub fn predict(&self, r: &Mixture, m_target: f64) -> Result<f64> {
        dml_extrapolate(&self.fits, r, m_target)
    }
}

/// Evaluates each per-scale fit at `r`, bridges the values with a power
/// law in `M` and returns the bridge at `m_target`.
pub fn dml_extrapolate(per_scale_fits: &[ScaleFit], r: &Mixture, m_target: f64) -> Result<f64> {
    if !(m_target > 0.0) {
        return Err(Error::NonPositive("target scale"));
    }
    let scales: Vec<f64> = per_scale_fits.iter().map(|f| f.scale).collect();
    let values = per_scale_fits.iter().map(|f| f.params.eval(r)).collect::<Result<Vec<_>>>()?;
    Ok(fit_power_law(&scales, &values)?.eval(m_target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_dml(v: f64, n: usize) -> DmlParams {
        DmlParams::new(vec![1.0], vec![v - 1.0], vec![1.0], vec![vec![0.0; n]]).unwrap()
    }

    #[test]
    fn exact_power_law() {
        let ms = [4.0, 5.0, 6.0, 8.0, 10.0];
        let vs: Vec<f64> = ms.iter().map(|m| 2.0 + 8.0 / m).collect();
        let law = fit_power_law(&ms, &vs).unwrap();
        for target in [12.0, 50.0] {
            assert!((law.eval(target) - (2.0 + 8.0 / target)).abs() < 1e-6);
        }
        assert!((law.b - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_values() {
        let fits: Vec<ScaleFit> =
            [2.0, 4.0, 8.0].iter().map(|&scale| ScaleFit { scale, params: constant_dml(1.7, 2) }).collect();
        let r = Mixture::uniform(2).unwrap();
        let out = dml_extrapolate(&fits, &r, 16.0).unwrap();
        assert!((out - 1.7).abs() < 1e-6);
        assert!(matches!(dml_extrapolate(&fits[..2], &r, 16.0), Err(Error::TooFewScales { need: 3, found: 2 })));
    }

    #[test]
    fn rising_values_clamp_to_flat() {
        // A >= 0 forbids fitting growth; the best feasible law is flat.
        let law = fit_power_law(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((law.eval(10.0) - 2.0).abs() < 1e-9);
        assert!(law.c >= 0.0 && law.a >= 0.0);
    }
}
