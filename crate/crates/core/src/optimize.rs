//! Mixture optimization over the probability simplex.
//!
//! Objectives are minimized; benchmark maximization negates the weighted
//! accuracy. The optimizer runs exponentiated-gradient descent from many
//! starts, with each step driven by the centered gradient scaled to unit
//! max-norm, so any strictly increasing transform of the objective follows
//! the same path.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{weighted_objective_raw, BenchSuite, CamelParams};
use crate::mixture::{compositions, make_mixture, Mixture};
use crate::records::ObjectiveWeights;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub iterations: usize,
    pub step: f64,
    pub floor: f64,
    /// Lattice spacing of the grid starts.
    pub start_resolution: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: 64, iterations: 2000, step: 0.1, floor: 1e-6, start_resolution: 0.25, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidRange("starts must be >= 1".into()));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::NonPositive("step"));
        }
        if !(self.floor > 0.0 && self.floor < 0.1) {
            return Err(Error::InvalidRange(format!("floor {} outside (0, 0.1)", self.floor)));
        }
        if !(self.start_resolution > 0.0 && self.start_resolution <= 1.0) {
            return Err(Error::InvalidRange(format!("start resolution {}", self.start_resolution)));
        }
        Ok(())
    }
}

/// A smooth function on the simplex to be minimized. Points outside the
/// function's domain evaluate to `+inf`.
pub trait Objective: Sync {
    fn dims(&self) -> usize;
    fn value(&self, r: &[f64]) -> f64;
    /// Value and gradient with respect to the weights.
    fn value_grad(&self, r: &[f64], grad: &mut [f64]) -> f64;
}

/// CAMEL loss at a fixed scale.
pub struct LossObjective<'a> {
    pub law: &'a CamelParams,
    pub scale: f64,
}

impl Objective for LossObjective<'_> {
    fn dims(&self) -> usize {
        self.law.datasets()
    }

    fn value(&self, r: &[f64]) -> f64 {
        self.law.eval_raw(r, self.scale).unwrap_or(f64::INFINITY)
    }

    fn value_grad(&self, r: &[f64], grad: &mut [f64]) -> f64 {
        match self.law.eval_grad(r, self.scale) {
            Ok(g) => {
                grad.copy_from_slice(&g.d_r);
                g.value
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Negated weighted benchmark accuracy at a fixed scale.
pub struct BenchmarkObjective<'a> {
    pub suite: &'a BenchSuite,
    pub weights: &'a ObjectiveWeights,
    pub scale: f64,
}

impl Objective for BenchmarkObjective<'_> {
    fn dims(&self) -> usize {
        self.suite.datasets().unwrap_or(0)
    }

    fn value(&self, r: &[f64]) -> f64 {
        weighted_objective_raw(self.suite, self.weights, r, self.scale, None).map_or(f64::INFINITY, |v| -v)
    }

    fn value_grad(&self, r: &[f64], grad: &mut [f64]) -> f64 {
        match weighted_objective_raw(self.suite, self.weights, r, self.scale, Some(grad)) {
            Ok(v) => {
                grad.iter_mut().for_each(|g| *g = -*g);
                -v
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Total order on candidates: value, then weights lexicographically.
fn candidate_cmp(a: (f64, &[f64]), b: (f64, &[f64])) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| a.1.iter().zip(b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
}

/// Renormalizes onto the simplex with every entry at least `floor`:
/// floored entries sit exactly at the floor and the rest share the
/// remaining mass in proportion.
fn floor_and_normalize(r: &mut [f64], floor: f64) {
    let mut pinned = vec![false; r.len()];
    loop {
        let free: f64 = r.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(v, _)| v.max(0.0)).sum();
        let mass = 1.0 - floor * pinned.iter().filter(|p| **p).count() as f64;
        let mut changed = false;
        for (v, p) in r.iter_mut().zip(pinned.iter_mut()) {
            if *p {
                continue;
            }
            let scaled = if free > 0.0 { v.max(0.0) * mass / free } else { 0.0 };
            if !(scaled >= floor) {
                *p = true;
                changed = true;
            }
        }
        if !changed {
            for (v, p) in r.iter_mut().zip(&pinned) {
                *v = if *p { floor } else { v.max(0.0) * mass / free };
            }
            return;
        }
    }
}

/// Start points: every lattice point at the start resolution, then flat
/// Dirichlet draws until `cfg.starts` points exist. All are floored.
pub fn start_points(n: usize, cfg: &OptimizerConfig) -> Vec<Vec<f64>> {
    let steps = (1.0 / cfg.start_resolution).round().max(1.0) as usize;
    let mut starts: Vec<Vec<f64>> =
        compositions(n, steps).into_iter().map(|c| c.into_iter().map(|v| v as f64 / steps as f64).collect()).collect();
    let mut draw = 0u64;
    while starts.len() < cfg.starts {
        starts.push(rng::flat_dirichlet(&mut rng::stream(cfg.seed, Purpose::MixtureStarts, draw), n));
        draw += 1;
    }
    for s in &mut starts {
        floor_and_normalize(s, cfg.floor);
    }
    starts
}

/// Best point found by one exponentiated-gradient run, including the start.
fn descend(obj: &dyn Objective, start: &[f64], cfg: &OptimizerConfig) -> (f64, Vec<f64>) {
    let n = start.len();
    let mut r = start.to_vec();
    let mut grad = vec![0.0; n];
    let mut best = (f64::INFINITY, r.clone());
    for t in 1..=cfg.iterations + 1 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let value = obj.value_grad(&r, &mut grad);
        if candidate_cmp((value, &r), (best.0, &best.1)).is_lt() {
            best = (value, r.clone());
        }
        if t > cfg.iterations || !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            break;
        }
        let mean = grad.iter().sum::<f64>() / n as f64;
        grad.iter_mut().for_each(|g| *g -= mean);
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale == 0.0 {
            break;
        }
        let eta = cfg.step / (t as f64).sqrt() / scale;
        for (rj, gj) in r.iter_mut().zip(&grad) {
            *rj *= (-eta * gj).exp();
        }
        floor_and_normalize(&mut r, cfg.floor);
    }
    best
}

/// The optimum found and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub mixture: Mixture,
    pub value: f64,
}

pub fn minimize(obj: &dyn Objective, cfg: &OptimizerConfig) -> Result<Optimum> {
    cfg.validate()?;
    let n = obj.dims();
    if n == 0 {
        return Err(Error::TooFewEntries(0));
    }
    if cfg.floor * n as f64 >= 1.0 {
        return Err(Error::InvalidRange(format!("floor {} too large for {n} entries", cfg.floor)));
    }
    let starts = start_points(n, cfg);
    let runs: Vec<(f64, Vec<f64>)> = starts.par_iter().map(|s| descend(obj, s, cfg)).collect();
    let (value, weights) =
        runs.into_iter().min_by(|a, b| candidate_cmp((a.0, &a.1), (b.0, &b.1))).expect("at least one start");
    if !value.is_finite() {
        return Err(Error::NonConvergence("objective is not finite at any start".into()));
    }
    let mixture = make_mixture(&weights)?;
    let value = obj.value(mixture.weights());
    Ok(Optimum { mixture, value })
}

/// Loss-minimizing mixture of a CAMEL law at scale `m`.
pub fn optimal_mixture_loss(p: &CamelParams, m: f64, cfg: &OptimizerConfig) -> Result<Mixture> {
    if !(m > 0.0) {
        return Err(Error::NonPositive("scale"));
    }
    p.validate()?;
    Ok(minimize(&LossObjective { law: p, scale: m }, cfg)?.mixture)
}

fn check_benchmarks(suite: &BenchSuite, weights: &ObjectiveWeights) -> Result<()> {
    for (name, w) in weights.iter() {
        if w > 0.0 && suite.get(name).is_none() {
            return Err(Error::MissingBenchmark(name.to_string()));
        }
    }
    Ok(())
}

/// Mixture maximizing the weighted benchmark objective at scale `m`.
pub fn optimal_mixture_benchmarks(
    suite: &BenchSuite,
    weights: &ObjectiveWeights,
    m: f64,
    cfg: &OptimizerConfig,
) -> Result<Mixture> {
    if !(m > 0.0) {
        return Err(Error::NonPositive("scale"));
    }
    check_benchmarks(suite, weights)?;
    let obj = BenchmarkObjective { suite, weights, scale: m };
    Ok(minimize(&obj, cfg)?.mixture)
}

/// Exhaustive minimization over the lattice with spacing `resolution`.
/// NaN values count as `+inf`; ties go to the lexicographically smallest
/// point.
pub fn grid_search(objective: impl Fn(&[f64]) -> f64, n: usize, resolution: f64) -> Result<Mixture> {
    if n == 0 || n > 5 || !(resolution >= 0.01) || resolution > 1.0 {
        return Err(Error::LatticeTooLarge { n, resolution });
    }
    let steps = (1.0 / resolution).round() as usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in compositions(n, steps) {
        let r: Vec<f64> = c.iter().map(|&v| v as f64 / steps as f64).collect();
        let v = objective(&r);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if best.as_ref().is_none_or(|b| candidate_cmp((v, &r), (b.0, &b.1)).is_lt()) {
            best = Some((v, r));
        }
    }
    let (_, r) = best.expect("non-empty lattice");
    make_mixture(&r)
}

/// What a sweep optimizes at each scale.
#[derive(Debug, Clone, Copy)]
pub enum SweepTarget<'a> {
    Loss(&'a CamelParams),
    Benchmarks(&'a BenchSuite, &'a ObjectiveWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    pub mixture: Mixture,
}

pub fn mixture_scale_sweep(target: SweepTarget<'_>, scales: &[f64], cfg: &OptimizerConfig) -> Result<Vec<SweepRow>> {
    if scales.is_empty() {
        return Err(Error::EmptyScales);
    }
    if scales.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::UnsortedScales);
    }
    scales
        .iter()
        .map(|&m| {
            let mixture = match target {
                SweepTarget::Loss(p) => optimal_mixture_loss(p, m, cfg)?,
                SweepTarget::Benchmarks(s, w) => optimal_mixture_benchmarks(s, w, m, cfg)?,
            };
            Ok(SweepRow { scale: m, mixture })
        })
        .collect()
}

/// `scale,w_0,...,w_{n-1}` with one row per scale.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let n = rows.first().map_or(0, |r| r.mixture.len());
    let mut out = String::from("scale");
    for j in 0..n {
        out.push_str(&format!(",w_{j}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.scale.to_string());
        for w in row.mixture.weights() {
            out.push(',');
            out.push_str(&w.to_string());
        }
        out.push('\n');
    }
    out
}
