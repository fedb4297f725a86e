//! Compute-budgeted sampling plans over model scales.
//!
//! Each strategy is a fixed priority cycle over the scales, smallest
//! first in index order. [`allocate`] walks the cycle repeatedly, granting
//! one point to each visited scale that is still affordable and below the
//! per-scale cap, and stops once a full period of cycles grants nothing.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{extrapolation_error, fit_camel_target, FitConfig, Target};
use crate::mixture::{mixture_pool, Mixture, POOL_FACTOR_DOWN, POOL_FACTOR_UP};
use crate::oracle::{generate_runs, sample_world, WorldConfig, WorldParams};
use crate::records::RunRecord;
use crate::rng::{self, Purpose};

/// Default cap on points per scale: the size of the perturbation pool.
pub const DEFAULT_MAX_PER_SCALE: usize = 11;
pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Rectangle,
    Triangle,
    InvertedTriangle,
    Diamond,
    Hourglass,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Rectangle, Strategy::Triangle, Strategy::InvertedTriangle, Strategy::Diamond, Strategy::Hourglass];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rectangle => "rectangle",
            Strategy::Triangle => "triangle",
            Strategy::InvertedTriangle => "inverted_triangle",
            Strategy::Diamond => "diamond",
            Strategy::Hourglass => "hourglass",
        }
    }

    /// Visit order within one cycle, as 0-based scale indices.
    pub fn cycle_order(self, scales: usize) -> Vec<usize> {
        let s = scales;
        match self {
            Strategy::Rectangle | Strategy::Triangle => (0..s).collect(),
            Strategy::InvertedTriangle => (0..s).rev().collect(),
            Strategy::Diamond => {
                let centre = s.div_ceil(2) - 1;
                let mut order = vec![centre];
                for d in 1..s {
                    if d <= centre {
                        order.push(centre - d);
                    }
                    if centre + d < s {
                        order.push(centre + d);
                    }
                }
                order
            }
            Strategy::Hourglass => {
                let (mut lo, mut hi) = (0, s - 1);
                let mut order = Vec::with_capacity(s);
                while lo < hi {
                    order.push(lo);
                    order.push(hi);
                    lo += 1;
                    hi -= 1;
                }
                if lo == hi {
                    order.push(lo);
                }
                order
            }
        }
    }

    /// Number of cycles after which the visiting pattern repeats.
    fn period(self, scales: usize) -> usize {
        match self {
            Strategy::Triangle | Strategy::InvertedTriangle => scales,
            _ => 1,
        }
    }

    /// Whether 0-based scale `j` is visited on 1-based cycle `cycle`.
    /// Triangle visits `s_j` (1-based) on cycles `c <= S - j + 1` of each
    /// period, which tapers the counts linearly toward larger scales;
    /// inverted triangle mirrors it.
    fn visits(self, j: usize, cycle: usize, scales: usize) -> bool {
        let phase = (cycle - 1) % scales + 1;
        match self {
            Strategy::Triangle => phase + j <= scales,
            Strategy::InvertedTriangle => phase <= j + 1,
            _ => true,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s || (s == "inverted-triangle" && *st == Strategy::InvertedTriangle))
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}

/// FLOPs of one training run: `6 N D`.
pub fn run_cost(n: f64, d: f64) -> Result<f64> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NonPositive("N"));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::NonPositive("D"));
    }
    Ok(6.0 * n * d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCost {
    pub scale_id: String,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub cost: f64,
}

impl ScaleCost {
    pub fn new(scale_id: impl Into<String>, n: f64, d: f64) -> Result<Self> {
        Ok(Self { scale_id: scale_id.into(), n, d, cost: run_cost(n, d)? })
    }

    /// A scale of capacity `n` trained on `tokens_per_param * n` tokens,
    /// identified by its capacity.
    pub fn from_scale(n: f64, tokens_per_param: f64) -> Result<Self> {
        Self::new(scale_label(n), n, tokens_per_param * n)
    }
}

/// Canonical label of a scale value: the shortest round-trip decimal.
pub fn scale_label(n: f64) -> String {
    format!("{n}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub strategy: Strategy,
    pub budget: f64,
    pub counts: IndexMap<String, usize>,
    pub total_cost: f64,
    /// Set when not even one point fits in the budget.
    #[serde(default)]
    pub unaffordable: bool,
}

impl Allocation {
    pub fn points(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn allocate(strategy: Strategy, costs: &[ScaleCost], budget: f64, max_per_scale: usize) -> Result<Allocation> {
    if costs.is_empty() {
        return Err(Error::EmptyScales);
    }
    if costs.windows(2).any(|w| w[1].n < w[0].n) {
        return Err(Error::UnsortedScales);
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::NonPositive("budget"));
    }
    if max_per_scale == 0 {
        return Err(Error::NonPositive("max_per_scale"));
    }
    for c in costs {
        if !(c.cost > 0.0) || (c.cost - 6.0 * c.n * c.d).abs() > 1e-12 * c.cost {
            return Err(Error::InvalidParams(format!("scale `{}` cost is not 6ND", c.scale_id)));
        }
    }
    let s = costs.len();
    let mut counts = vec![0usize; s];
    let mut remaining = budget;
    let unaffordable = costs.iter().all(|c| c.cost > budget);
    if !unaffordable {
        let order = strategy.cycle_order(s);
        let period = strategy.period(s);
        let mut idle_cycles = 0;
        let mut cycle = 1;
        while idle_cycles < period {
            let mut granted = false;
            for &j in &order {
                if strategy.visits(j, cycle, s) && counts[j] < max_per_scale && costs[j].cost <= remaining {
                    counts[j] += 1;
                    remaining -= costs[j].cost;
                    granted = true;
                }
            }
            idle_cycles = if granted { 0 } else { idle_cycles + 1 };
            cycle += 1;
        }
    }
    let total_cost = counts.iter().zip(costs).map(|(n, c)| *n as f64 * c.cost).sum();
    Ok(Allocation {
        strategy,
        budget,
        counts: costs.iter().zip(&counts).map(|(c, n)| (c.scale_id.clone(), *n)).collect(),
        total_cost,
        unaffordable,
    })
}

/// The runs available at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePool {
    pub cost: ScaleCost,
    pub runs: Vec<RunRecord>,
}

/// Pools drawn from an oracle world: every mixture at every scale.
pub fn oracle_pools(
    world: &WorldParams,
    mixtures: &[Mixture],
    scales: &[f64],
    tokens_per_param: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<ScalePool>> {
    let runs = generate_runs(world, mixtures, scales, tokens_per_param, noise_sigma, seed, None)?;
    scales
        .iter()
        .zip(runs.chunks(mixtures.len()))
        .map(|(&m, chunk)| Ok(ScalePool { cost: ScaleCost::from_scale(m, tokens_per_param)?, runs: chunk.to_vec() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub budget: f64,
    pub mean_mare: f64,
    pub per_repeat: Vec<f64>,
    pub allocation: Allocation,
}

/// Allocates `budget` with `strategy`, then for each repeat samples the
/// allocated number of runs per scale without replacement, fits CAMEL on
/// the sample and measures the MARE on `heldout`.
pub fn evaluate_strategy(
    pools: &[ScalePool],
    heldout: &[RunRecord],
    strategy: Strategy,
    budget: f64,
    repeats: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<StrategyReport> {
    if repeats == 0 {
        return Err(Error::InvalidRange("repeats must be >= 1".into()));
    }
    let costs: Vec<ScaleCost> = pools.iter().map(|p| p.cost.clone()).collect();
    let allocation = allocate(strategy, &costs, budget, DEFAULT_MAX_PER_SCALE)?;
    for (pool, &need) in pools.iter().zip(allocation.counts.values()) {
        if need > pool.runs.len() {
            return Err(Error::PoolTooSmall { scale: pool.cost.scale_id.clone(), need, have: pool.runs.len() });
        }
    }
    if allocation.points() == 0 {
        return Err(Error::Empty("allocation"));
    }
    let target = Target::parse(&cfg.target, None)?;
    let per_repeat = (0..repeats)
        .into_par_iter()
        .map(|repeat| {
            let mut stream = rng::stream(seed, Purpose::StrategySample, repeat as u64);
            let mut sample = Vec::with_capacity(allocation.points());
            for (pool, &need) in pools.iter().zip(allocation.counts.values()) {
                let mut picked = index::sample(&mut stream, pool.runs.len(), need).into_vec();
                picked.sort_unstable();
                sample.extend(picked.into_iter().map(|i| pool.runs[i].clone()));
            }
            let fit = fit_camel_target(&sample, &target, cfg)?;
            Ok(extrapolation_error(fit.camel().expect("CAMEL fit"), heldout, &target)?.mare)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(StrategyReport {
        strategy,
        budget,
        mean_mare: per_repeat.iter().sum::<f64>() / repeats as f64,
        per_repeat,
        allocation,
    })
}

/// The fixed synthetic strategy study: one oracle world, the 11-mixture
/// pool around the uniform mixture at every training scale, budgets given
/// as fractions of the cost of running the whole pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySuite {
    pub world: WorldConfig,
    pub scales: Vec<f64>,
    pub heldout_scale: f64,
    pub tokens_per_param: f64,
    pub noise_sigma: f64,
    pub budget_fractions: Vec<f64>,
    pub repeats: usize,
    pub fit: FitConfig,
}

impl Default for StrategySuite {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            scales: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            heldout_scale: 20.0,
            tokens_per_param: 20.0,
            noise_sigma: 0.01,
            budget_fractions: vec![0.05, 0.10, 0.20],
            repeats: DEFAULT_REPEATS,
            fit: FitConfig {
                restarts: 8,
                iterations: 1000,
                polish_restarts: 2,
                polish_iterations: 500,
                ..FitConfig::default()
            },
        }
    }
}

/// The materialized suite: pools, noiseless held-out runs and budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteData {
    pub pools: Vec<ScalePool>,
    pub heldout: Vec<RunRecord>,
    pub budgets: Vec<f64>,
}

impl StrategySuite {
    pub fn build(&self, seed: u64) -> Result<SuiteData> {
        let world = sample_world(&self.world, seed)?;
        let pool = mixture_pool(&Mixture::uniform(self.world.n)?, POOL_FACTOR_UP, POOL_FACTOR_DOWN)?;
        let pools = oracle_pools(&world, &pool, &self.scales, self.tokens_per_param, self.noise_sigma, seed)?;
        let heldout = generate_runs(&world, &pool, &[self.heldout_scale], self.tokens_per_param, 0.0, seed, None)?;
        let full: f64 = pools.iter().map(|p| p.runs.len() as f64 * p.cost.cost).sum();
        Ok(SuiteData { pools, heldout, budgets: self.budget_fractions.iter().map(|f| f * full).collect() })
    }

    /// Reports in budget-major order, strategies in the given order.
    pub fn run(&self, strategies: &[Strategy], seed: u64) -> Result<Vec<StrategyReport>> {
        let data = self.build(seed)?;
        let cfg = FitConfig { seed, ..self.fit.clone() };
        let mut reports = Vec::with_capacity(data.budgets.len() * strategies.len());
        for &budget in &data.budgets {
            for &strategy in strategies {
                reports.push(evaluate_strategy(
                    &data.pools,
                    &data.heldout,
                    strategy,
                    budget,
                    self.repeats,
                    &cfg,
                    seed,
                )?);
            }
        }
        Ok(reports)
    }
}

/// Strategy-by-budget matrix of mean MARE: one row per strategy in first
/// appearance order, one column per budget in first appearance order.
pub fn strategy_matrix_csv(reports: &[StrategyReport]) -> String {
    let mut budgets: Vec<f64> = Vec::new();
    let mut strategies: Vec<Strategy> = Vec::new();
    for r in reports {
        if !budgets.iter().any(|b| b.to_bits() == r.budget.to_bits()) {
            budgets.push(r.budget);
        }
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let mut out = String::from("strategy");
    for b in &budgets {
        out.push_str(&format!(",{b:e}"));
    }
    out.push('\n');
    for st in strategies {
        out.push_str(st.name());
        for b in &budgets {
            let cell = reports
                .iter()
                .find(|r| r.strategy == st && r.budget.to_bits() == b.to_bits())
                .map_or(String::new(), |r| r.mean_mare.to_string());
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}
