//! Ground-truth capacity-allocation world.
//!
//! A model of capacity `M` splits it across `k` intrinsic domains by
//! minimizing the mixture-weighted training loss
//! `sum_i eta_i (C_i + A_i / m_i^a_i)` subject to `sum_i m_i <= M`. The
//! optimum is characterized by one multiplier `lambda` with
//! `m_i = (a_i A_i eta_i / lambda)^(1 / (a_i + 1))`; `lambda` is the unique
//! root of the (strictly decreasing) budget equation and is found here by
//! bisection on `log lambda`. Validation losses follow from the optimal
//! allocation, which makes the world an exact oracle for the laws in
//! [`crate::laws`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{BenchLawParams, CamelParams};
use crate::mixture::{DomainProfile, Mixture};
use crate::records::RunRecord;
use crate::rng::{self, Purpose};

/// Name of the primary validation set in generated runs.
pub const PRIMARY_VAL: &str = "val";

/// Weights and offset of one validation distribution over intrinsic domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSet {
    pub w: Vec<f64>,
    #[serde(rename = "C_val")]
    pub c_val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub k: usize,
    #[serde(rename = "A")]
    pub amp: Vec<f64>,
    pub a: Vec<f64>,
    #[serde(rename = "C_train_offsets")]
    pub train_offsets: Vec<f64>,
    pub w: Vec<f64>,
    #[serde(rename = "C_val")]
    pub c_val: f64,
    pub profile: DomainProfile,
    /// Further validation sets, keyed by the loss name they emit.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_validation: BTreeMap<String, ValidationSet>,
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(Error::InvalidParams("world needs k >= 1".into()));
        }
        for (what, len) in [
            ("world A length", self.amp.len()),
            ("world a length", self.a.len()),
            ("world C offsets length", self.train_offsets.len()),
            ("world w length", self.w.len()),
            ("world profile rows", self.profile.domains()),
        ] {
            if len != k {
                return Err(Error::DimensionMismatch { what, expected: k, found: len });
            }
        }
        if self.amp.iter().chain(&self.a).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams("A_i and a_i must be positive".into()));
        }
        if self.train_offsets.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParams("C_i must be nonnegative".into()));
        }
        check_validation_set(&self.w, self.c_val, k)?;
        for set in self.extra_validation.values() {
            check_validation_set(&set.w, set.c_val, k)?;
        }
        if self.extra_validation.contains_key(PRIMARY_VAL) {
            return Err(Error::InvalidParams(format!("`{PRIMARY_VAL}` is reserved for the primary set")));
        }
        Ok(())
    }

    pub fn datasets(&self) -> usize {
        self.profile.datasets()
    }

    /// All validation sets by loss name, the primary one included.
    pub fn validation_sets(&self) -> BTreeMap<String, ValidationSet> {
        let mut sets = self.extra_validation.clone();
        sets.insert(PRIMARY_VAL.to_string(), ValidationSet { w: self.w.clone(), c_val: self.c_val });
        sets
    }

    pub fn mean_exponent(&self) -> f64 {
        self.a.iter().sum::<f64>() / self.k as f64
    }
}

fn check_validation_set(w: &[f64], c_val: f64, k: usize) -> Result<()> {
    if w.len() != k {
        return Err(Error::DimensionMismatch { what: "validation weights", expected: k, found: w.len() });
    }
    if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams("validation weights must lie on the simplex".into()));
    }
    if !(c_val >= 0.0) || !c_val.is_finite() {
        return Err(Error::InvalidParams("C_val must be nonnegative".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub m_alloc: Vec<f64>,
    pub lambda: f64,
    pub train_loss: f64,
    pub stationarity_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDiagnostics {
    pub a_bar: f64,
    pub eps_a: f64,
    pub eps_r: f64,
    #[serde(rename = "S0")]
    pub s0: f64,
    pub p: f64,
}

const BRACKET_EXPANSIONS: u32 = 200;
const BISECTION_STEPS: u32 = 200;

fn positive_weights(world: &WorldParams, r: &Mixture) -> Result<Vec<f64>> {
    let eta = world.profile.effective_weights(r)?;
    if let Some(domain) = eta.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::ZeroEffectiveWeight { domain });
    }
    Ok(eta)
}

fn check_budget(m: f64) -> Result<()> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::NonPositive("capacity M"));
    }
    Ok(())
}

/// `S(eta) = sum_i (a_i A_i eta_i)^p` with `p = 1 / (a_bar + 1)`.
fn aggregate(world: &WorldParams, eta: &[f64]) -> f64 {
    let p = 1.0 / (world.mean_exponent() + 1.0);
    (0..world.k).map(|i| (world.a[i] * world.amp[i] * eta[i]).powf(p)).sum()
}

/// `lambda = (S(r) / M)^(a_bar + 1)`; exact when every `a_i` is equal.
pub fn closed_form_lambda(world: &WorldParams, r: &Mixture, m: f64) -> Result<f64> {
    check_budget(m)?;
    let eta = positive_weights(world, r)?;
    Ok(lambda_estimate(world, &eta, m))
}

fn lambda_estimate(world: &WorldParams, eta: &[f64], m: f64) -> f64 {
    let a_bar = world.mean_exponent();
    ((aggregate(world, eta) / m).ln() * (a_bar + 1.0)).exp()
}

/// `log sum_i m_i(lambda)` as a function of `log lambda`.
fn log_budget_used(log_x: &[f64], inv_exp: &[f64], log_lambda: f64) -> f64 {
    let logs: Vec<f64> = log_x.iter().zip(inv_exp).map(|(lx, q)| (lx - log_lambda) * q).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// Solves the allocation problem exactly for `(world, r, M)`.
pub fn solve_allocation(world: &WorldParams, r: &Mixture, m: f64) -> Result<AllocationSolution> {
    check_budget(m)?;
    let eta = positive_weights(world, r)?;
    let k = world.k;
    let log_x: Vec<f64> = (0..k).map(|i| (world.a[i] * world.amp[i] * eta[i]).ln()).collect();
    let inv_exp: Vec<f64> = world.a.iter().map(|a| 1.0 / (a + 1.0)).collect();
    let log_m = m.ln();
    let excess = |log_lambda: f64| log_budget_used(&log_x, &inv_exp, log_lambda) - log_m;

    let center = lambda_estimate(world, &eta, m).ln();
    let ln2 = std::f64::consts::LN_2;
    let mut lo = center - ln2;
    let mut hi = center + ln2;
    let mut expansions = 1;
    // excess is strictly decreasing in log lambda.
    while !(excess(lo) >= 0.0 && excess(hi) <= 0.0) {
        if expansions >= BRACKET_EXPANSIONS {
            return Err(Error::NonConvergence(format!("no bracket for lambda after {BRACKET_EXPANSIONS} doublings")));
        }
        expansions += 1;
        lo = center - ln2 * expansions as f64;
        hi = center + ln2 * expansions as f64;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_lambda = if excess(lo).abs() <= excess(hi).abs() { lo } else { hi };
    let lambda = log_lambda.exp();
    let m_alloc: Vec<f64> = (0..k).map(|i| ((log_x[i] - log_lambda) * inv_exp[i]).exp()).collect();
    if m_alloc.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NonConvergence("allocation left the positive orthant".into()));
    }
    let train_loss =
        (0..k).map(|i| eta[i] * (world.train_offsets[i] + world.amp[i] * m_alloc[i].powf(-world.a[i]))).sum();
    let stationarity_residuals =
        (0..k).map(|i| world.a[i] * world.amp[i] * eta[i] / m_alloc[i].powf(world.a[i] + 1.0) - lambda).collect();
    Ok(AllocationSolution { m_alloc, lambda, train_loss, stationarity_residuals })
}

fn val_loss_from_alloc(world: &WorldParams, w: &[f64], c_val: f64, m_alloc: &[f64]) -> f64 {
    c_val + (0..world.k).map(|i| w[i] * world.amp[i] * m_alloc[i].powf(-world.a[i])).sum::<f64>()
}

/// Primary validation loss at the optimal allocation.
pub fn oracle_val_loss(world: &WorldParams, r: &Mixture, m: f64) -> Result<f64> {
    let sol = solve_allocation(world, r, m)?;
    Ok(val_loss_from_alloc(world, &world.w, world.c_val, &sol.m_alloc))
}

/// Every validation loss of the world (primary and extra) at one point.
pub fn oracle_val_losses(world: &WorldParams, r: &Mixture, m: f64) -> Result<BTreeMap<String, f64>> {
    let sol = solve_allocation(world, r, m)?;
    Ok(world
        .validation_sets()
        .into_iter()
        .map(|(name, set)| {
            let v = val_loss_from_alloc(world, &set.w, set.c_val, &sol.m_alloc);
            (name, v)
        })
        .collect())
}

/// The CAMEL parameters implied by the world for its primary validation set.
pub fn camel_params_from_world(world: &WorldParams, reference: &Mixture) -> Result<CamelParams> {
    camel_params_for_validation(world, &world.w, world.c_val, reference)
}

/// The CAMEL parameters implied by the world for an arbitrary validation
/// weighting: `alpha_i = a_i / (a_i + 1)`, `beta_i = a_i`,
/// `K_i = w_i A_i^(1/(a_i+1)) a_i^(-a_i/(a_i+1)) S0^a_i`, `C = c_val`.
pub fn camel_params_for_validation(
    world: &WorldParams,
    w: &[f64],
    c_val: f64,
    reference: &Mixture,
) -> Result<CamelParams> {
    world.validate()?;
    let eta_ref = positive_weights(world, reference)?;
    let s0 = aggregate(world, &eta_ref);
    let k_coef = (0..world.k)
        .map(|i| {
            let a = world.a[i];
            w[i] * world.amp[i].powf(1.0 / (a + 1.0)) * a.powf(-a / (a + 1.0)) * s0.powf(a)
        })
        .collect();
    CamelParams::new(
        c_val,
        k_coef,
        world.a.iter().map(|a| a / (a + 1.0)).collect(),
        world.a.clone(),
        world.profile.clone(),
        c_val < 0.0,
    )
}

/// The CAMEL law for a benchmark's proxy loss `k_b . L`, by linearity of the
/// proxy in the validation losses.
pub fn proxy_camel_from_world(world: &WorldParams, bench: &BenchLawParams, reference: &Mixture) -> Result<CamelParams> {
    let sets = world.validation_sets();
    let mut w = vec![0.0; world.k];
    let mut c = 0.0;
    for (name, coef) in bench.loss_names.iter().zip(&bench.coef) {
        let set =
            sets.get(name).ok_or_else(|| Error::InvalidParams(format!("world has no validation set `{name}`")))?;
        c += coef * set.c_val;
        for (wi, si) in w.iter_mut().zip(&set.w) {
            *wi += coef * si;
        }
    }
    let mut p = camel_params_for_validation(world, &w, 0.0, reference)?;
    p.c = c;
    p.free_offset = true;
    p.validate()?;
    Ok(p)
}

pub fn world_diagnostics(world: &WorldParams, mixtures: &[Mixture], reference: &Mixture) -> Result<WorldDiagnostics> {
    if mixtures.is_empty() {
        return Err(Error::Empty("mixture list"));
    }
    let a_bar = world.mean_exponent();
    let eps_a = world.a.iter().map(|a| (a - a_bar).abs()).fold(0.0, f64::max);
    let eta_ref = positive_weights(world, reference)?;
    let mut eps_r: f64 = 0.0;
    for r in mixtures {
        let eta = world.profile.effective_weights(r)?;
        for (e, e_ref) in eta.iter().zip(&eta_ref) {
            eps_r = eps_r.max((e / e_ref - 1.0).abs());
        }
    }
    Ok(WorldDiagnostics { a_bar, eps_a, eps_r, s0: aggregate(world, &eta_ref), p: 1.0 / (a_bar + 1.0) })
}

/// Ranges for [`sample_world`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub k: usize,
    pub n: usize,
    pub a_bar_range: (f64, f64),
    pub eps_a_max: f64,
    /// `A_i` is drawn log-uniformly from this range.
    pub amp_range: (f64, f64),
    pub train_offset_range: (f64, f64),
    pub c_val_range: (f64, f64),
    /// Number of validation sets besides the primary one.
    pub extra_validation_sets: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            k: 5,
            n: 5,
            a_bar_range: (0.2, 0.6),
            eps_a_max: 0.1,
            amp_range: (1.0, 100.0),
            train_offset_range: (0.0, 0.5),
            c_val_range: (1.5, 2.5),
            extra_validation_sets: 0,
        }
    }
}

impl WorldConfig {
    fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.k == 0 {
            return Err(Error::InvalidRange("k must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidRange("n must be >= 2".into()));
        }
        if !ordered(self.a_bar_range) || !(self.a_bar_range.0 > 0.0) {
            return Err(Error::InvalidRange("a_bar range must be positive and ordered".into()));
        }
        if !(self.eps_a_max >= 0.0) || self.eps_a_max > self.a_bar_range.0 {
            return Err(Error::InvalidRange("eps_a_max must lie in [0, min a_bar]".into()));
        }
        if !ordered(self.amp_range) || !(self.amp_range.0 > 0.0) {
            return Err(Error::InvalidRange("A range must be positive and ordered".into()));
        }
        if !ordered(self.train_offset_range) || self.train_offset_range.0 < 0.0 {
            return Err(Error::InvalidRange("C_i range must be nonnegative and ordered".into()));
        }
        if !ordered(self.c_val_range) || self.c_val_range.0 < 0.0 {
            return Err(Error::InvalidRange("C_val range must be nonnegative and ordered".into()));
        }
        Ok(())
    }
}

/// Draws a world from the seeded generator.
///
/// The draw order does not depend on `eps_a_max`: worlds that share a seed
/// differ only in the spread of their exponents, which is what the
/// exponent-perturbation studies rely on.
pub fn sample_world(config: &WorldConfig, seed: u64) -> Result<WorldParams> {
    config.validate()?;
    let mut rng = rng::stream(seed, Purpose::World, 0);
    let k = config.k;
    let a_bar = rng::uniform(&mut rng, config.a_bar_range.0, config.a_bar_range.1);
    let mut spread: Vec<f64> = (0..k).map(|_| rng::uniform(&mut rng, -1.0, 1.0)).collect();
    let mean = spread.iter().sum::<f64>() / k as f64;
    spread.iter_mut().for_each(|u| *u -= mean);
    let widest = spread.iter().map(|u| u.abs()).fold(0.0, f64::max);
    if widest > 1.0 {
        spread.iter_mut().for_each(|u| *u /= widest);
    }
    let a: Vec<f64> = spread.iter().map(|u| a_bar + config.eps_a_max * u).collect();
    let (lo, hi) = (config.amp_range.0.ln(), config.amp_range.1.ln());
    let amp = (0..k).map(|_| rng::uniform(&mut rng, lo, hi).exp()).collect();
    let train_offsets =
        (0..k).map(|_| rng::uniform(&mut rng, config.train_offset_range.0, config.train_offset_range.1)).collect();
    let c_val = rng::uniform(&mut rng, config.c_val_range.0, config.c_val_range.1);
    let w = rng::flat_dirichlet(&mut rng, k);
    let columns: Vec<Vec<f64>> = (0..config.n).map(|_| rng::flat_dirichlet(&mut rng, k)).collect();
    let profile = DomainProfile::from_columns(&columns)?;
    let extra_validation = (0..config.extra_validation_sets)
        .map(|v| {
            let w = rng::flat_dirichlet(&mut rng, k);
            let c_val = rng::uniform(&mut rng, config.c_val_range.0, config.c_val_range.1);
            (format!("val_{}", v + 1), ValidationSet { w, c_val })
        })
        .collect();
    let world = WorldParams { k, amp, a, train_offsets, w, c_val, profile, extra_validation };
    if world.a.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidRange("sampled a non-positive exponent".into()));
    }
    world.validate()?;
    Ok(world)
}

/// One record per `(scale, mixture)` pair, scale-major, with multiplicative
/// lognormal noise `exp(eps)`, `eps ~ N(0, noise_sigma^2)`, on every loss.
///
/// Record `p` draws its noise from stream `p`, so records are independent of
/// generation order. When `benches` is given each record also carries the
/// accuracies those laws assign to its (noisy) losses.
pub fn generate_runs(
    world: &WorldParams,
    mixtures: &[Mixture],
    scales: &[f64],
    tokens_per_param: f64,
    noise_sigma: f64,
    seed: u64,
    benches: Option<&BTreeMap<String, BenchLawParams>>,
) -> Result<Vec<RunRecord>> {
    if !(tokens_per_param > 0.0) {
        return Err(Error::NonPositive("tokens_per_param"));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidRange("noise_sigma must be >= 0".into()));
    }
    for &s in scales {
        check_budget(s)?;
    }
    let mut out = Vec::with_capacity(mixtures.len() * scales.len());
    for (si, &scale) in scales.iter().enumerate() {
        for (mi, r) in mixtures.iter().enumerate() {
            let index = (si * mixtures.len() + mi) as u64;
            let mut noise = rng::stream(seed, Purpose::Noise, index);
            let mut losses = oracle_val_losses(world, r, scale)?;
            if noise_sigma > 0.0 {
                for v in losses.values_mut() {
                    *v *= (noise_sigma * rng::normal(&mut noise)).exp();
                }
            }
            let benchmarks = match benches {
                Some(laws) => Some(
                    laws.iter()
                        .map(|(name, law)| Ok((name.clone(), law.accuracy(&law.loss_vector(&losses)?)?)))
                        .collect::<Result<BTreeMap<_, _>>>()?,
                ),
                None => None,
            };
            out.push(RunRecord::new(r.clone(), scale, tokens_per_param * scale, losses, benchmarks)?);
        }
    }
    Ok(out)
}

/// A synthetic benchmark law over the given validation sets.
///
/// Coefficients are positive (accuracy falls as loss rises) and the logit
/// offset centres the logistic on `typical_losses`, so accuracies spread
/// over the informative part of the curve.
pub fn sample_bench_law(
    loss_names: &[String],
    typical_losses: &[f64],
    seed: u64,
    index: u64,
) -> Result<BenchLawParams> {
    if loss_names.len() != typical_losses.len() || loss_names.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "typical losses vs loss names",
            expected: loss_names.len(),
            found: typical_losses.len(),
        });
    }
    let mut rng = rng::stream(seed, Purpose::BenchLaw, index);
    let floor = rng::uniform(&mut rng, 0.0, 0.3);
    let amp = (1.0 - floor) * rng::uniform(&mut rng, 0.5, 0.95);
    let gain = rng::uniform(&mut rng, 2.0, 6.0);
    let coef: Vec<f64> = rng::flat_dirichlet(&mut rng, loss_names.len()).into_iter().map(|c| gain * c).collect();
    let centre: f64 = coef.iter().zip(typical_losses).map(|(c, l)| c * l).sum();
    let offset = -centre + rng::uniform(&mut rng, -0.5, 0.5);
    BenchLawParams::new(amp, offset, floor, coef, loss_names.to_vec())
}
