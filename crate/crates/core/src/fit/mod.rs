//! Multi-start least-squares fitting of the three laws, extrapolation
//! error metrics and the DML cross-scale baseline.
//!
//! Fits are deterministic functions of the run set and the config. Runs
//! are first sorted into a canonical order and exact duplicates merged
//! into weighted points, so permuting or uniformly duplicating the input
//! leaves the result bit-identical. Restarts run in parallel and are
//! reduced by `(error, restart index)`.

mod bridge;
mod models;
mod solver;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bridge::{dml_extrapolate, fit_power_law, DmlBridge, PowerLaw, ScaleFit, MIN_BRIDGE_SCALES};
use models::{BenchModel, CamelModel, DmlModel};
use solver::{adam, refine, Model, Settings};

use crate::error::{Error, Result};
use crate::laws::{BenchLawParams, CamelParams, DmlParams};
use crate::params::LawBundle;
use crate::records::RunRecord;
use crate::rng::{self, Purpose};

/// Restarts whose Adam result is refined by Levenberg-Marquardt.
pub const POLISHED_RESTARTS: usize = 4;
/// Iteration cap of each Levenberg-Marquardt refinement.
pub const POLISH_ITERATIONS: usize = 3000;

fn default_polish_restarts() -> usize {
    POLISHED_RESTARTS
}

fn default_polish_iterations() -> usize {
    POLISH_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub step: f64,
    pub seed: u64,
    /// A loss name, `proxy:<benchmark>` or `benchmark:<name>`.
    pub target: String,
    pub k: usize,
    /// Best restarts handed to the Levenberg-Marquardt refinement.
    #[serde(default = "default_polish_restarts")]
    pub polish_restarts: usize,
    #[serde(default = "default_polish_iterations")]
    pub polish_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            iterations: 5000,
            step: 0.01,
            seed: 0,
            target: "val".into(),
            k: 5,
            polish_restarts: POLISHED_RESTARTS,
            polish_iterations: POLISH_ITERATIONS,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.iterations == 0 || self.k == 0 {
            return Err(Error::InvalidParams("restarts, iterations and k must be >= 1".into()));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::NonPositive("step"));
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        Settings { iterations: self.iterations, step: self.step, polish_iterations: self.polish_iterations }
    }
}

/// What a fit or an error report reads off each run.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Loss(String),
    /// `k_b . L` under a fitted benchmark law.
    Proxy {
        benchmark: String,
        law: BenchLawParams,
    },
    Benchmark(String),
}

impl Target {
    /// Parses a target spec; `proxy:<b>` needs the benchmark's fitted law.
    pub fn parse(spec: &str, law: Option<&BenchLawParams>) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("proxy:") {
            let law =
                law.ok_or_else(|| Error::InvalidParams(format!("target `{spec}` needs a fitted benchmark law")))?;
            Ok(Target::Proxy { benchmark: name.to_string(), law: law.clone() })
        } else if let Some(name) = spec.strip_prefix("benchmark:") {
            Ok(Target::Benchmark(name.to_string()))
        } else {
            Ok(Target::Loss(spec.to_string()))
        }
    }

    pub fn label(&self) -> String {
        match self {
            Target::Loss(name) => name.clone(),
            Target::Proxy { benchmark, .. } => format!("proxy:{benchmark}"),
            Target::Benchmark(name) => format!("benchmark:{name}"),
        }
    }

    /// The observed target value of run `index`.
    pub fn observe(&self, run: &RunRecord, index: usize) -> Result<f64> {
        let missing = || Error::MissingTarget { index, target: self.label() };
        match self {
            Target::Loss(name) => run.loss(name).ok_or_else(missing),
            Target::Proxy { law, .. } => {
                let losses = law.loss_vector(&run.losses).map_err(|_| missing())?;
                law.proxy(&losses)
            }
            Target::Benchmark(name) => run.benchmark(name).ok_or_else(missing),
        }
    }

    fn is_proxy(&self) -> bool {
        matches!(self, Target::Proxy { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LawBundle,
    pub train_error: f64,
    pub restart_errors: Vec<f64>,
    pub converged: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn camel(&self) -> Option<&CamelParams> {
        match &self.params {
            LawBundle::Camel(p) => Some(p),
            _ => None,
        }
    }

    pub fn dml(&self) -> Option<&DmlParams> {
        match &self.params {
            LawBundle::Dml(p) => Some(p),
            _ => None,
        }
    }

    pub fn bench(&self) -> Option<&BenchLawParams> {
        match &self.params {
            LawBundle::Bench(p) => Some(p),
            _ => None,
        }
    }
}

/// Observation points in canonical order with multiplicity weights.
struct Points {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

fn compare_points(ax: &[f64], ay: f64, bx: &[f64], by: f64) -> Ordering {
    for (x, y) in ax.iter().zip(bx) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    ax.len().cmp(&bx.len()).then(ay.total_cmp(&by))
}

fn canonical(mut raw: Vec<(Vec<f64>, f64)>) -> Points {
    raw.sort_by(|a, b| compare_points(&a.0, a.1, &b.0, b.1));
    let total = raw.len() as f64;
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (x, y) in raw {
        let same = match (features.last(), targets.last()) {
            (Some(fx), Some(&fy)) => compare_points(fx, fy, &x, y) == Ordering::Equal,
            _ => false,
        };
        if same {
            *counts.last_mut().unwrap() += 1;
        } else {
            features.push(x);
            targets.push(y);
            counts.push(1);
        }
    }
    Points { features, targets, weights: counts.into_iter().map(|c| c as f64 / total).collect() }
}

struct Multistart {
    theta: Vec<f64>,
    restart_errors: Vec<f64>,
    converged: Vec<bool>,
}

fn multistart<M, F>(model: &M, cfg: &FitConfig, purpose_index: u64, init: F) -> Result<Multistart>
where
    M: Model,
    F: Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Vec<f64> + Sync,
{
    let settings = cfg.settings();
    let mut outcomes: Vec<_> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut stream = rng::stream(cfg.seed, Purpose::FitInit, (purpose_index << 32) | restart as u64);
            let theta0 = init(restart, &mut stream);
            adam(model, theta0, &settings)
        })
        .collect();
    let mut order: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].error.is_finite()).collect();
    order.sort_by(|&a, &b| outcomes[a].error.total_cmp(&outcomes[b].error).then(a.cmp(&b)));
    order.truncate(cfg.polish_restarts);
    let refined: Vec<_> = order.par_iter().map(|&i| (i, refine(model, outcomes[i].clone(), &settings))).collect();
    for (i, out) in refined {
        outcomes[i] = out;
    }
    let mut best: Option<usize> = None;
    for (i, out) in outcomes.iter().enumerate() {
        debug_assert!(!(out.error > out.initial_error));
        if out.error.is_finite() && best.is_none_or(|b| out.error < outcomes[b].error) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::NonConvergence("every restart diverged".into()))?;
    Ok(Multistart {
        theta: outcomes[best].theta.clone(),
        restart_errors: outcomes.iter().map(|o| o.error).collect(),
        converged: outcomes.iter().map(|o| o.converged).collect(),
    })
}

fn data_warning(points: usize, params: usize) -> Vec<String> {
    if points < params {
        let msg = format!("insufficient data: {points} runs for {params} parameters");
        log::warn!("{msg}");
        vec![msg]
    } else {
        Vec::new()
    }
}

fn check_mixture_lengths(runs: &[RunRecord]) -> Result<usize> {
    let first = runs.first().ok_or(Error::Empty("run set"))?;
    let n = first.mixture.len();
    if let Some(bad) = runs.iter().find(|r| r.mixture.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "mixture length across runs",
            expected: n,
            found: bad.mixture.len(),
        });
    }
    Ok(n)
}

/// Fits CAMEL to the target named in `cfg.target`.
pub fn fit_camel(runs: &[RunRecord], cfg: &FitConfig) -> Result<FitResult> {
    fit_camel_target(runs, &Target::parse(&cfg.target, None)?, cfg)
}

/// Fits CAMEL to an explicit target. Proxy targets leave the offset `C`
/// unconstrained.
pub fn fit_camel_target(runs: &[RunRecord], target: &Target, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_mixture_lengths(runs)?;
    let raw = runs
        .iter()
        .enumerate()
        .map(|(i, run)| {
            let mut x = run.mixture.weights().to_vec();
            x.push(run.scale);
            Ok((x, target.observe(run, i)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = canonical(raw);
    let (mixtures, scales): (Vec<Vec<f64>>, Vec<f64>) = points
        .features
        .into_iter()
        .map(|mut x| {
            let m = x.pop().unwrap();
            (x, m)
        })
        .unzip();
    let model = CamelModel::new(cfg.k, target.is_proxy(), mixtures, &scales, points.targets, points.weights);
    let warnings = data_warning(runs.len(), model.n_params());
    let fit = multistart(&model, cfg, 0, |restart, s| model.initial(restart, s))?;
    Ok(FitResult {
        params: LawBundle::Camel(model.to_params(&fit.theta)?),
        train_error: fit.restart_errors.iter().copied().fold(f64::INFINITY, f64::min),
        restart_errors: fit.restart_errors,
        converged: fit.converged,
        warnings,
    })
}

/// Fits DML to runs that all share one scale.
pub fn fit_dml(runs_at_one_scale: &[RunRecord], cfg: &FitConfig) -> Result<FitResult> {
    fit_dml_target(runs_at_one_scale, &Target::parse(&cfg.target, None)?, cfg)
}

pub fn fit_dml_target(runs: &[RunRecord], target: &Target, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let n = check_mixture_lengths(runs)?;
    let scale = runs[0].scale;
    if let Some(other) = runs.iter().find(|r| r.scale != scale) {
        return Err(Error::MixedScales(scale, other.scale));
    }
    let raw = runs
        .iter()
        .enumerate()
        .map(|(i, run)| Ok((run.mixture.weights().to_vec(), target.observe(run, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let points = canonical(raw);
    let model = DmlModel { k: cfg.k, n, mixtures: points.features, targets: points.targets, weights: points.weights };
    let warnings = data_warning(runs.len(), model.n_params());
    let fit = multistart(&model, cfg, 1, |restart, s| model.initial(restart, s))?;
    Ok(FitResult {
        params: LawBundle::Dml(model.to_params(&fit.theta)?),
        train_error: fit.restart_errors.iter().copied().fold(f64::INFINITY, f64::min),
        restart_errors: fit.restart_errors,
        converged: fit.converged,
        warnings,
    })
}

/// One DML fit per distinct scale, ascending, ready for [`dml_extrapolate`].
pub fn fit_dml_bridge(runs: &[RunRecord], cfg: &FitConfig) -> Result<DmlBridge> {
    let target = Target::parse(&cfg.target, None)?;
    let mut by_scale: BTreeMap<u64, Vec<RunRecord>> = BTreeMap::new();
    for run in runs {
        by_scale.entry(run.scale.to_bits()).or_default().push(run.clone());
    }
    if by_scale.len() < MIN_BRIDGE_SCALES {
        return Err(Error::TooFewScales { need: MIN_BRIDGE_SCALES, found: by_scale.len() });
    }
    let fits = by_scale
        .into_values()
        .map(|group| {
            let result = fit_dml_target(&group, &target, cfg)?;
            Ok(ScaleFit { scale: group[0].scale, params: result.dml().cloned().expect("DML fit yields DML params") })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DmlBridge { fits })
}

/// Fits the logistic law of one benchmark from its recorded accuracies.
pub fn fit_bench_law(records: &[RunRecord], benchmark: &str, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let first = records.first().ok_or(Error::Empty("record set"))?;
    let names: Vec<String> = first.losses.keys().cloned().collect();
    let keys: BTreeSet<&String> = first.losses.keys().collect();
    let mut raw = Vec::with_capacity(records.len());
    for (index, rec) in records.iter().enumerate() {
        if rec.losses.keys().collect::<BTreeSet<_>>() != keys {
            return Err(Error::InconsistentLossKeys { index });
        }
        let acc = rec.benchmark(benchmark).ok_or_else(|| Error::MissingBenchmark(benchmark.to_string()))?;
        raw.push((rec.losses.values().copied().collect::<Vec<f64>>(), acc));
    }
    let points = canonical(raw);
    let model = BenchModel::new(names, points.features, points.targets, points.weights);
    let warnings = data_warning(records.len(), model.n_params());
    let fit = multistart(&model, cfg, 2, |restart, s| model.initial(restart, s))?;
    Ok(FitResult {
        params: LawBundle::Bench(model.to_params(&fit.theta)?),
        train_error: fit.restart_errors.iter().copied().fold(f64::INFINITY, f64::min),
        restart_errors: fit.restart_errors,
        converged: fit.converged,
        warnings,
    })
}

/// Anything that predicts a target value for a run.
pub trait Predictor {
    fn predict(&self, run: &RunRecord) -> Result<f64>;
}

impl Predictor for CamelParams {
    fn predict(&self, run: &RunRecord) -> Result<f64> {
        self.eval(&run.mixture, run.scale)
    }
}

impl Predictor for DmlParams {
    fn predict(&self, run: &RunRecord) -> Result<f64> {
        self.eval(&run.mixture)
    }
}

impl Predictor for DmlBridge {
    fn predict(&self, run: &RunRecord) -> Result<f64> {
        DmlBridge::predict(self, &run.mixture, run.scale)
    }
}

/// Accuracy from the run's recorded losses.
impl Predictor for BenchLawParams {
    fn predict(&self, run: &RunRecord) -> Result<f64> {
        self.accuracy(&self.loss_vector(&run.losses)?)
    }
}

impl Predictor for LawBundle {
    fn predict(&self, run: &RunRecord) -> Result<f64> {
        match self {
            LawBundle::Camel(p) => p.predict(run),
            LawBundle::Dml(p) => p.predict(run),
            LawBundle::Bench(p) => p.predict(run),
            LawBundle::DmlBridge(p) => Predictor::predict(p, run),
            LawBundle::BenchSuite(_) => Err(Error::InvalidParams(
                "a benchmark suite predicts a weighted objective, not a per-run target".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mare: f64,
    pub mse: f64,
    /// `pred - obs` per held-out run, in input order.
    pub per_point: Vec<f64>,
}

pub fn extrapolation_error(predict: &dyn Predictor, heldout: &[RunRecord], target: &Target) -> Result<ErrorReport> {
    if heldout.is_empty() {
        return Err(Error::Empty("held-out set"));
    }
    let mut per_point = Vec::with_capacity(heldout.len());
    let mut rel = 0.0;
    let mut sq = 0.0;
    for (index, run) in heldout.iter().enumerate() {
        let obs = target.observe(run, index)?;
        if obs == 0.0 {
            return Err(Error::ZeroObservation { index });
        }
        let residual = predict.predict(run)? - obs;
        rel += (residual / obs).abs();
        sq += residual * residual;
        per_point.push(residual);
    }
    let count = heldout.len() as f64;
    Ok(ErrorReport { mare: rel / count, mse: sq / count, per_point })
}

/// Repeats of the resampled-subset protocol.
pub const RESAMPLE_REPEATS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub mean_mare: f64,
    pub per_repeat: Vec<f64>,
}

/// Fits CAMEL on `repeats` random subsets of `subset_size` training runs
/// and averages the held-out MARE. Subset `j` is drawn from its own
/// stream, so the report is a function of `seed` alone.
pub fn resampled_extrapolation(
    train: &[RunRecord],
    heldout: &[RunRecord],
    subset_size: usize,
    repeats: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<ResampleReport> {
    if subset_size == 0 || subset_size > train.len() {
        return Err(Error::InvalidRange(format!("subset size {subset_size} outside 1..={}", train.len())));
    }
    if repeats == 0 {
        return Err(Error::InvalidRange("repeats must be >= 1".into()));
    }
    let target = Target::parse(&cfg.target, None)?;
    let per_repeat = (0..repeats)
        .map(|j| {
            let mut stream = rng::stream(seed, Purpose::Resample, j as u64);
            let mut picked = index::sample(&mut stream, train.len(), subset_size).into_vec();
            picked.sort_unstable();
            let subset: Vec<RunRecord> = picked.into_iter().map(|i| train[i].clone()).collect();
            let fit = fit_camel_target(&subset, &target, cfg)?;
            Ok(extrapolation_error(fit.camel().unwrap(), heldout, &target)?.mare)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ResampleReport { mean_mare: per_repeat.iter().sum::<f64>() / repeats as f64, per_repeat })
}
