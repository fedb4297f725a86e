use std::collections::BTreeMap;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use mixlaw::fit::{
    extrapolation_error, fit_bench_law, fit_camel, fit_camel_target, fit_dml, fit_dml_bridge, FitConfig, Predictor,
    Target,
};
use mixlaw::laws::{predicted_accuracy, BenchEntry, BenchLawParams, BenchSuite};
use mixlaw::mixture::{mixture_pool, Mixture, POOL_FACTOR_DOWN, POOL_FACTOR_UP};
use mixlaw::optimize::{mixture_scale_sweep, optimal_mixture_benchmarks, optimal_mixture_loss, sweep_csv, SweepTarget};
use mixlaw::oracle::{generate_runs, sample_bench_law, sample_world, WorldConfig};
use mixlaw::params::{load_params, save_params, save_world, SCHEMA_VERSION};
use mixlaw::plan::{
    allocate, evaluate_strategy, scale_label, strategy_matrix_csv, ScaleCost, ScalePool, Strategy, StrategyReport,
    StrategySuite,
};
use mixlaw::records::{load_runs, save_runs, PRESET_BENCHMARKS};
use mixlaw::{LawBundle, ObjectiveWeights, RunRecord};

use crate::args::*;
use crate::output::{csv_string, emit, emit_study, to_json, InputDigest, Meta};
use crate::report;

/// Training scales handed out by `synth --scales <count>`.
pub const SCALE_LADDER: [f64; 10] = [4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0];
/// Synthetic comparison and ablation protocol: six training scales and a
/// held-out larger one.
const STUDY_SCALES: [f64; 6] = [4.0, 5.0, 6.0, 7.0, 8.0, 10.0];
const STUDY_HELDOUT: f64 = 12.0;
const TOKENS_PER_PARAM: f64 = 20.0;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Plan(a) => plan(&a),
        Command::Fit(a) => fit(&a),
        Command::Predict(a) => predict(&a),
        Command::Optimize(a) => optimize(&a),
        Command::EvalStrategies(a) => eval_strategies(&a),
        Command::Sweep(a) => sweep(&a),
        Command::AblateK(a) => ablate_k(&a),
        Command::Compare(a) => compare(&a),
        Command::Report(a) => report::run(&a),
    }
}

fn pool(n: usize) -> Result<Vec<Mixture>> {
    Ok(mixture_pool(&Mixture::uniform(n)?, POOL_FACTOR_UP, POOL_FACTOR_DOWN)?)
}

fn benchmark_name(index: usize, count: usize) -> String {
    if count <= PRESET_BENCHMARKS.len() {
        PRESET_BENCHMARKS[index].to_string()
    } else {
        format!("bench_{index}")
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let scales = match &a.scale_values {
        Some(v) => v.clone(),
        None => {
            ensure!(
                (1..=SCALE_LADDER.len()).contains(&a.scales),
                "--scales must be between 1 and {}",
                SCALE_LADDER.len()
            );
            SCALE_LADDER[..a.scales].to_vec()
        }
    };
    let config = WorldConfig {
        k: a.k,
        n: a.n,
        eps_a_max: a.eps_a_max,
        extra_validation_sets: a.extra_val,
        ..WorldConfig::default()
    };
    let world = sample_world(&config, a.seed)?;
    let mixtures = pool(a.n)?;
    let mut runs = generate_runs(&world, &mixtures, &scales, a.tokens_per_param, a.noise, a.seed, None)?;
    let mut laws: BTreeMap<String, BenchLawParams> = BTreeMap::new();
    if a.benchmarks > 0 {
        let names: Vec<String> = world.validation_sets().keys().cloned().collect();
        let typical: Vec<f64> =
            names.iter().map(|n| runs.iter().filter_map(|r| r.loss(n)).sum::<f64>() / runs.len() as f64).collect();
        for b in 0..a.benchmarks {
            laws.insert(benchmark_name(b, a.benchmarks), sample_bench_law(&names, &typical, a.seed, b as u64)?);
        }
        runs = generate_runs(&world, &mixtures, &scales, a.tokens_per_param, a.noise, a.seed, Some(&laws))?;
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_world(&a.out.join("world.json"), &world)?;
    save_runs(&a.out.join("runs.jsonl"), &runs)?;
    if let Some(m) = a.heldout_scale {
        let benches = (!laws.is_empty()).then_some(&laws);
        let heldout = generate_runs(&world, &mixtures, &[m], a.tokens_per_param, 0.0, a.seed, benches)?;
        save_runs(&a.out.join("heldout.jsonl"), &heldout)?;
    }
    if !laws.is_empty() {
        emit(Some(&a.out.join("bench_laws.json")), &to_json(&laws)?)?;
    }
    log::info!("wrote {} runs to {}", runs.len(), a.out.display());
    Ok(())
}

fn plan(a: &PlanArgs) -> Result<()> {
    let costs =
        a.scales.iter().map(|&n| ScaleCost::from_scale(n, a.tokens_per_param)).collect::<mixlaw::Result<Vec<_>>>()?;
    let allocation = allocate(a.strategy, &costs, a.budget, a.max_per_scale)?;
    if allocation.unaffordable {
        log::warn!("no single run fits in the budget");
    }
    emit(a.out.as_deref(), &to_json(&allocation)?)
}

#[derive(Debug, Serialize)]
struct BenchFitSummary {
    bench_train_error: f64,
    bench_train_mae: f64,
    proxy_train_error: f64,
    proxy_train_mare: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    schema_version: u32,
    law: &'static str,
    target: String,
    seed: u64,
    config: FitConfig,
    input: InputDigest,
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_mare: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_error: Option<f64>,
    restart_errors: Vec<f64>,
    converged: Vec<bool>,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    benchmarks: BTreeMap<String, BenchFitSummary>,
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn fit(a: &FitCommand) -> Result<()> {
    let runs = load_runs(&a.runs).with_context(|| format!("loading {}", a.runs.display()))?;
    let cfg = a.fit.apply(FitConfig { seed: a.seed, target: a.target.clone(), ..FitConfig::default() });
    let mut report = FitReport {
        schema_version: SCHEMA_VERSION,
        law: "",
        target: a.target.clone(),
        seed: a.seed,
        config: cfg.clone(),
        input: InputDigest::of(&a.runs)?,
        points: runs.len(),
        train_mare: None,
        train_mse: None,
        train_error: None,
        restart_errors: Vec::new(),
        converged: Vec::new(),
        warnings: Vec::new(),
        benchmarks: BTreeMap::new(),
    };
    let bundle = match a.law {
        LawKind::Camel | LawKind::Dml => {
            let target = Target::parse(&a.target, None)?;
            let single_scale = runs.iter().all(|r| r.scale == runs[0].scale);
            let bundle = if a.law == LawKind::Camel {
                let result = fit_camel(&runs, &cfg)?;
                absorb(&mut report, &result);
                result.params
            } else if single_scale {
                let result = fit_dml(&runs, &cfg)?;
                absorb(&mut report, &result);
                result.params
            } else {
                LawBundle::DmlBridge(fit_dml_bridge(&runs, &cfg)?)
            };
            let err = extrapolation_error(&bundle, &runs, &target)?;
            report.train_mare = Some(err.mare);
            report.train_mse = Some(err.mse);
            bundle
        }
        LawKind::Bench => {
            let names = match &a.benchmarks {
                Some(n) => n.clone(),
                None => runs
                    .first()
                    .and_then(|r| r.benchmarks.as_ref())
                    .map(|b| b.keys().cloned().collect())
                    .unwrap_or_default(),
            };
            ensure!(!names.is_empty(), "the runs record no benchmarks");
            let mut suite = BenchSuite::default();
            for name in &names {
                let law_fit = fit_bench_law(&runs, name, &cfg)?;
                let law = law_fit.bench().cloned().expect("bench fit yields a bench law");
                let acc_err = extrapolation_error(&law, &runs, &Target::Benchmark(name.clone()))?;
                let proxy_target = Target::Proxy { benchmark: name.clone(), law: law.clone() };
                let proxy_fit = fit_camel_target(&runs, &proxy_target, &cfg)?;
                let proxy = proxy_fit.camel().cloned().expect("CAMEL fit yields CAMEL params");
                let proxy_err = extrapolation_error(&proxy, &runs, &proxy_target)?;
                report.warnings.extend(law_fit.warnings.iter().chain(&proxy_fit.warnings).cloned());
                report.benchmarks.insert(
                    name.clone(),
                    BenchFitSummary {
                        bench_train_error: law_fit.train_error,
                        bench_train_mae: mean_abs(&acc_err.per_point),
                        proxy_train_error: proxy_fit.train_error,
                        proxy_train_mare: proxy_err.mare,
                    },
                );
                suite.insert(name.clone(), law, proxy);
            }
            LawBundle::BenchSuite(suite)
        }
    };
    report.law = bundle.kind();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_params(&a.out.join("params.json"), &bundle)?;
    emit(Some(&a.out.join("fit_report.json")), &to_json(&report)?)
}

fn absorb(report: &mut FitReport, result: &mixlaw::FitResult) {
    report.train_error = Some(result.train_error);
    report.restart_errors = result.restart_errors.clone();
    report.converged = result.converged.clone();
    report.warnings = result.warnings.clone();
}

/// End-to-end benchmark accuracy of one suite entry.
struct SuiteAccuracy<'a>(&'a BenchEntry);

impl Predictor for SuiteAccuracy<'_> {
    fn predict(&self, run: &RunRecord) -> mixlaw::Result<f64> {
        predicted_accuracy(&self.0.bench, &self.0.proxy, &run.mixture, run.scale)
    }
}

fn suite_entry<'a>(suite: &'a BenchSuite, name: &str) -> Result<&'a BenchEntry> {
    suite.get(name).with_context(|| format!("benchmark `{name}` is not in the suite"))
}

#[derive(Debug, Serialize)]
struct PredictSummary {
    target: String,
    points: usize,
    observed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mare: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mse: Option<f64>,
}

fn predict(a: &PredictArgs) -> Result<()> {
    let bundle = load_params(&a.params).with_context(|| format!("loading {}", a.params.display()))?;
    let runs = load_runs(&a.runs).with_context(|| format!("loading {}", a.runs.display()))?;
    let (predictor, target): (Box<dyn Predictor + '_>, Target) = match &bundle {
        LawBundle::BenchSuite(suite) => {
            if let Some(name) = a.target.strip_prefix("proxy:") {
                let entry = suite_entry(suite, name)?;
                (Box::new(entry.proxy.clone()), Target::parse(&a.target, Some(&entry.bench))?)
            } else if let Some(name) = a.target.strip_prefix("benchmark:") {
                (Box::new(SuiteAccuracy(suite_entry(suite, name)?)), Target::parse(&a.target, None)?)
            } else {
                bail!("a benchmark suite predicts `benchmark:<name>` or `proxy:<name>` targets");
            }
        }
        LawBundle::Bench(law) => {
            let target = if a.target.contains(':') {
                Target::parse(&a.target, None)?
            } else {
                bail!("a benchmark law predicts `benchmark:<name>` targets");
            };
            (Box::new(law.clone()), target)
        }
        other => (Box::new(other.clone()), Target::parse(&a.target, None)?),
    };
    let mut rows = Vec::with_capacity(runs.len());
    let mut observed_runs = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let pred = predictor.predict(run)?;
        let obs = target.observe(run, i).ok();
        if obs.is_some() {
            observed_runs.push(run.clone());
        }
        rows.push(vec![
            i.to_string(),
            run.scale.to_string(),
            obs.map_or(String::new(), |v| v.to_string()),
            pred.to_string(),
        ]);
    }
    let csv = csv_string(&["index", "scale", "observed", "predicted"], &rows)?;
    emit(a.out.as_deref(), &csv)?;
    if a.out.is_some() {
        let err = if observed_runs.is_empty() {
            None
        } else {
            Some(extrapolation_error(predictor.as_ref(), &observed_runs, &target)?)
        };
        let summary = PredictSummary {
            target: target.label(),
            points: runs.len(),
            observed: observed_runs.len(),
            mare: err.as_ref().map(|e| e.mare),
            mse: err.as_ref().map(|e| e.mse),
        };
        emit(None, &to_json(&summary)?)?;
    }
    Ok(())
}

fn load_weights(spec: &str) -> Result<ObjectiveWeights> {
    if let Some(w) = ObjectiveWeights::preset(spec) {
        return Ok(w);
    }
    if spec.trim_start().starts_with('{') {
        return serde_json::from_str(spec).context("parsing inline weights");
    }
    let text =
        std::fs::read_to_string(spec).with_context(|| format!("`{spec}` is neither a preset nor a readable file"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing weights {spec}"))
}

#[derive(Debug, Serialize)]
struct OptimizeOutput {
    objective: &'static str,
    scale: f64,
    mixture: Mixture,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<ObjectiveWeights>,
}

fn optimize(a: &OptimizeCommand) -> Result<()> {
    let bundle = load_params(&a.params).with_context(|| format!("loading {}", a.params.display()))?;
    let cfg = a.opt.config(a.seed);
    let out = match (a.objective, &bundle) {
        (ObjectiveKind::Loss, LawBundle::Camel(p)) => {
            let mixture = optimal_mixture_loss(p, a.scale, &cfg)?;
            OptimizeOutput {
                objective: "loss",
                scale: a.scale,
                value: p.eval(&mixture, a.scale)?,
                mixture,
                weights: None,
            }
        }
        (ObjectiveKind::Benchmarks, LawBundle::BenchSuite(suite)) => {
            let weights = load_weights(&a.weights)?;
            let mixture = optimal_mixture_benchmarks(suite, &weights, a.scale, &cfg)?;
            OptimizeOutput {
                objective: "benchmarks",
                scale: a.scale,
                value: mixlaw::laws::weighted_objective(suite, &weights, &mixture, a.scale)?,
                mixture,
                weights: Some(weights),
            }
        }
        (ObjectiveKind::Loss, other) => bail!("loss optimization needs CAMEL params, got `{}`", other.kind()),
        (ObjectiveKind::Benchmarks, other) => {
            bail!("benchmark optimization needs a bench_suite, got `{}`", other.kind())
        }
    };
    emit(a.out.as_deref(), &to_json(&out)?)
}

fn parse_strategies(spec: &str) -> Result<Vec<Strategy>> {
    if spec == "all" {
        return Ok(Strategy::ALL.to_vec());
    }
    let list = spec.split(',').map(|s| s.trim().parse::<Strategy>()).collect::<mixlaw::Result<Vec<_>>>()?;
    ensure!(!list.is_empty(), "no strategies given");
    Ok(list)
}

/// Groups a runs file by scale: the held-out scale becomes the test set.
fn pools_from_runs(runs: Vec<RunRecord>, heldout_scale: f64) -> Result<(Vec<ScalePool>, Vec<RunRecord>)> {
    let mut groups: BTreeMap<u64, Vec<RunRecord>> = BTreeMap::new();
    let mut heldout = Vec::new();
    for run in runs {
        if run.scale == heldout_scale {
            heldout.push(run);
        } else {
            ensure!(run.scale > 0.0, "run scale must be positive");
            groups.entry(run.scale.to_bits()).or_default().push(run);
        }
    }
    ensure!(!heldout.is_empty(), "no runs at held-out scale {heldout_scale}");
    let pools = groups
        .into_values()
        .map(|runs| {
            let tokens = runs[0].tokens;
            ensure!(runs.iter().all(|r| r.tokens == tokens), "runs at scale {} disagree on tokens", runs[0].scale);
            Ok(ScalePool { cost: ScaleCost::new(scale_label(runs[0].scale), runs[0].scale, tokens)?, runs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pools, heldout))
}

#[derive(Debug, Serialize)]
struct StrategyConfig {
    source: String,
    strategies: Vec<Strategy>,
    budgets: Vec<f64>,
    repeats: usize,
    fit: FitConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<StrategySuite>,
}

fn eval_strategies(a: &EvalStrategiesArgs) -> Result<()> {
    let strategies = parse_strategies(&a.strategies)?;
    let mut suite = StrategySuite::default();
    if let Some(n) = a.budgets {
        ensure!(
            (1..=suite.budget_fractions.len()).contains(&n),
            "--budgets must be between 1 and {}",
            suite.budget_fractions.len()
        );
        suite.budget_fractions.truncate(n);
    }
    if let Some(f) = &a.budget_fractions {
        suite.budget_fractions = f.clone();
    }
    if let Some(r) = a.repeats {
        suite.repeats = r;
    }
    suite.fit = a.fit.apply(suite.fit.clone());
    let mut inputs = Vec::new();
    let (pools, heldout, fractions_budgets, source) = match &a.runs {
        Some(path) => {
            inputs.push(InputDigest::of(path)?);
            let runs = load_runs(path).with_context(|| format!("loading {}", path.display()))?;
            let (pools, heldout) = pools_from_runs(runs, a.heldout_scale.expect("clap enforces the pair"))?;
            let full: f64 = pools.iter().map(|p| p.runs.len() as f64 * p.cost.cost).sum();
            let budgets = suite.budget_fractions.iter().map(|f| f * full).collect();
            (pools, heldout, budgets, path.display().to_string())
        }
        None => {
            if let Some(m) = a.heldout_scale {
                suite.heldout_scale = m;
            }
            let data = suite.build(a.seed)?;
            (data.pools, data.heldout, data.budgets, "synthetic suite".to_string())
        }
    };
    let budgets = match a.budget {
        Some(b) => vec![b],
        None => fractions_budgets,
    };
    let cfg = FitConfig { seed: a.seed, ..suite.fit.clone() };
    let mut reports: Vec<StrategyReport> = Vec::new();
    for &budget in &budgets {
        for &strategy in &strategies {
            reports.push(evaluate_strategy(&pools, &heldout, strategy, budget, suite.repeats, &cfg, a.seed)?);
        }
    }
    if let Some(path) = &a.details {
        emit(Some(path), &to_json(&reports)?)?;
    }
    let meta = Meta {
        command: "eval-strategies",
        seed: a.seed,
        inputs,
        config: StrategyConfig {
            source,
            strategies,
            budgets,
            repeats: suite.repeats,
            fit: cfg,
            suite: a.runs.is_none().then_some(suite),
        },
    };
    emit_study(a.out.as_deref(), &strategy_matrix_csv(&reports), &meta)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let bundle = load_params(&a.params).with_context(|| format!("loading {}", a.params.display()))?;
    let cfg = a.opt.config(a.seed);
    let weights;
    let target = match &bundle {
        LawBundle::Camel(p) => SweepTarget::Loss(p),
        LawBundle::BenchSuite(s) => {
            weights = load_weights(&a.weights)?;
            SweepTarget::Benchmarks(s, &weights)
        }
        other => bail!("sweeps need CAMEL params or a bench_suite, got `{}`", other.kind()),
    };
    let rows = mixture_scale_sweep(target, &a.scales, &cfg)?;
    let meta = Meta {
        command: "sweep",
        seed: a.seed,
        inputs: vec![InputDigest::of(&a.params)?],
        config: serde_json::json!({ "law": bundle.kind(), "scales": a.scales, "optimizer": cfg }),
    };
    emit_study(a.out.as_deref(), &sweep_csv(&rows), &meta)
}

struct Study {
    train: Vec<RunRecord>,
    heldout: Vec<RunRecord>,
    inputs: Vec<InputDigest>,
    source: serde_json::Value,
}

fn study_data(d: &StudyData, seed: u64) -> Result<Study> {
    match &d.runs {
        Some(path) => {
            let runs = load_runs(path).with_context(|| format!("loading {}", path.display()))?;
            let m = d.heldout_scale.expect("clap enforces the pair");
            let (heldout, train): (Vec<_>, Vec<_>) = runs.into_iter().partition(|r| r.scale == m);
            ensure!(!heldout.is_empty(), "no runs at held-out scale {m}");
            ensure!(!train.is_empty(), "no training runs besides the held-out scale");
            Ok(Study {
                train,
                heldout,
                inputs: vec![InputDigest::of(path)?],
                source: serde_json::json!({ "runs": path.display().to_string(), "heldout_scale": m }),
            })
        }
        None => {
            let config = WorldConfig { k: d.world_k, ..WorldConfig::default() };
            let world = sample_world(&config, seed)?;
            let mixtures = pool(config.n)?;
            let heldout_scale = d.heldout_scale.unwrap_or(STUDY_HELDOUT);
            Ok(Study {
                train: generate_runs(&world, &mixtures, &STUDY_SCALES, TOKENS_PER_PARAM, d.noise, seed, None)?,
                heldout: generate_runs(&world, &mixtures, &[heldout_scale], TOKENS_PER_PARAM, 0.0, seed, None)?,
                inputs: Vec::new(),
                source: serde_json::json!({
                    "world": config,
                    "scales": STUDY_SCALES,
                    "heldout_scale": heldout_scale,
                    "noise": d.noise,
                    "tokens_per_param": TOKENS_PER_PARAM,
                }),
            })
        }
    }
}

fn ablate_k(a: &AblateKArgs) -> Result<()> {
    ensure!(a.k_min >= 1 && a.k_min <= a.k_max, "need 1 <= k-min <= k-max");
    let study = study_data(&a.data, a.seed)?;
    let target = Target::Loss("val".into());
    let base = a.fit.apply(FitConfig { seed: a.seed, ..FitConfig::default() });
    let mut rows = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for k in a.k_min..=a.k_max {
        let cfg = FitConfig { k, ..base.clone() };
        let fit = fit_camel(&study.train, &cfg)?;
        let law = fit.camel().expect("CAMEL fit");
        let train = extrapolation_error(law, &study.train, &target)?;
        let held = extrapolation_error(law, &study.heldout, &target)?;
        if best.is_none_or(|(_, e)| held.mare < e) {
            best = Some((k, held.mare));
        }
        rows.push(vec![k.to_string(), fit.train_error.to_string(), train.mare.to_string(), held.mare.to_string()]);
    }
    if let Some((k, e)) = best {
        eprintln!("minimum held-out MARE {e:.4e} at k = {k}");
    }
    let csv = csv_string(&["k", "train_error", "train_mare", "heldout_mare"], &rows)?;
    let meta = Meta {
        command: "ablate-k",
        seed: a.seed,
        inputs: study.inputs,
        config: serde_json::json!({ "data": study.source, "fit": base, "k_min": a.k_min, "k_max": a.k_max }),
    };
    emit_study(a.out.as_deref(), &csv, &meta)
}

fn compare(a: &CompareArgs) -> Result<()> {
    let study = study_data(&a.data, a.seed)?;
    let target = Target::Loss("val".into());
    let cfg = a.fit.apply(FitConfig { seed: a.seed, ..FitConfig::default() });
    let camel = fit_camel(&study.train, &cfg)?;
    let bridge = fit_dml_bridge(&study.train, &cfg)?;
    let mut rows = Vec::new();
    for (name, law) in [("camel", camel.params), ("dml", LawBundle::DmlBridge(bridge))] {
        let err = extrapolation_error(&law, &study.heldout, &target)?;
        rows.push(vec![name.to_string(), err.mare.to_string(), err.mse.to_string()]);
    }
    let csv = csv_string(&["law", "heldout_mare", "heldout_mse"], &rows)?;
    let meta = Meta {
        command: "compare",
        seed: a.seed,
        inputs: study.inputs,
        config: serde_json::json!({ "data": study.source, "fit": cfg }),
    };
    emit_study(a.out.as_deref(), &csv, &meta)
}
