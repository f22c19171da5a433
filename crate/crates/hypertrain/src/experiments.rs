//! One function per subcommand. Each turns an [`ExperimentConfig`] into
//! [`RunArtifacts`] without touching the filesystem beyond reading data.

use hypertrain_core::algorithms::{
    self, CvConfig, GlobalConfig, HyperConfig, HyperDistribution, HyperOutcome, JointConfig, Problem, SimplifiedConfig,
};
use hypertrain_core::data::ridge::RidgeProblem;
use hypertrain_core::exec::Executor;
use hypertrain_core::gradcheck::{self, SuiteConfig};
use hypertrain_core::model;
use hypertrain_core::optim::AdamConfig;
use hypertrain_core::rng::{self, Stream};
use hypertrain_core::surrogate::{self, GpHyper, Kernel, MethodReport, MleConfig, SurrogateConfig};
use hypertrain_core::{ElementaryWeights, HyperPoint, HypernetParams, ModelSpec, RegSpec};
use serde_json::{json, Map, Value};

use crate::artifacts::{RunArtifacts, Table};
use crate::config::{Command, ExperimentConfig, RegKind};
use crate::error::Result;
use crate::io::{self, Splits};

/// Grid on which a ridge hypernetwork is compared with the closed form.
pub const ORACLE_GRID: (f64, f64, usize) = (-2.0, 2.0, 41);
/// Range and resolution of the dense search for the ridge optimum.
pub const ORACLE_SEARCH: (f64, f64, usize) = (-10.0, 10.0, 2001);

pub fn run<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<RunArtifacts> {
    cfg.validate()?;
    if cfg.command == Command::Gradcheck {
        return gradcheck(cfg);
    }
    let splits = io::prepare(&cfg.data, cfg.seed)?;
    let problem = build_problem(cfg, &splits)?;
    let mut run = match cfg.command {
        Command::GlobalBr => global_br(cfg, &problem, splits.ridge.as_ref()),
        Command::Joint => joint(cfg, &problem, splits.ridge.as_ref()),
        Command::Simplified => simplified(cfg, &problem, splits.ridge.as_ref()),
        Command::CvBaseline => cv_baseline(cfg, &problem, exec),
        Command::Perweight => perweight(cfg, &problem),
        Command::CompareSurrogates => compare_surrogates(cfg, &problem, exec),
        Command::SweepCurve => sweep_curve(cfg, &problem, exec),
        Command::Gradcheck => unreachable!("handled above"),
    }?;
    run.summary.insert("command".into(), json!(cfg.command.name()));
    run.summary.insert("seed".into(), json!(cfg.seed));
    run.summary.insert("config".into(), json!(cfg.entries()));
    Ok(run)
}

fn build_problem<'a>(cfg: &ExperimentConfig, splits: &'a Splits) -> Result<Problem<'a>> {
    let mut sizes = vec![splits.train.input_dim()];
    sizes.extend(&cfg.model.hidden);
    sizes.push(splits.train.output_dim());
    let reg = match cfg.model.reg {
        RegKind::Scalar => RegSpec::SCALAR,
        RegKind::PerWeight => RegSpec::PER_WEIGHT,
    };
    let full = |n: usize, len: usize| if n == 0 { len } else { n };
    Ok(Problem::new(ModelSpec::new(sizes)?, reg, &splits.train, &splits.valid)?
        .with_test(&splits.test)?
        .with_batch_sizes(
            full(cfg.data.batch_size, splits.train.len()),
            full(cfg.data.valid_batch_size, splits.valid.len()),
        )?)
}

fn adam(cfg: &ExperimentConfig, lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: cfg.optim.beta1,
        beta2: cfg.optim.beta2,
        eps: cfg.optim.eps,
    }
}

pub fn hyper_config(cfg: &ExperimentConfig) -> HyperConfig {
    HyperConfig {
        arch: cfg.hypernet.arch,
        init_scale: cfg.hypernet.init_scale,
        phi_adam: adam(cfg, cfg.optim.lr),
        lambda_adam: adam(cfg, cfg.optim.lambda_lr),
        hyper_samples: cfg.train.hyper_samples,
        lambda_init: cfg.train.lambda_init,
        trust_box: (cfg.train.trust_lo, cfg.train.trust_hi),
        log_every: cfg.train.log_every,
        seed: cfg.seed,
    }
}

fn global_distribution(cfg: &ExperimentConfig) -> HyperDistribution {
    HyperDistribution::Global {
        mean: cfg.dist.mean,
        variance: cfg.dist.global_variance,
    }
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn opt_fmt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Mean of λ̂; equals λ̂ itself for a scalar hyperparameter.
fn lambda_summary(lambda: &HyperPoint) -> f64 {
    lambda.values().iter().sum::<f64>() / lambda.len() as f64
}

fn metric_table(summary: &Map<String, Value>) -> Table {
    let mut t = Table::new(&["metric", "value"]);
    for (k, v) in summary {
        let cell = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        t.push(vec![k.clone(), cell]);
    }
    t
}

fn outcome_summary(problem: &Problem<'_>, out: &HyperOutcome) -> Result<Map<String, Value>> {
    let (train, valid, test) = problem.evaluate(&out.weights, &out.lambda)?;
    let mut m = Map::new();
    m.insert("lambda".into(), json!(lambda_summary(&out.lambda)));
    m.insert("lambda_dim".into(), json!(out.lambda.len()));
    m.insert("train_loss".into(), json!(train));
    m.insert("valid_loss".into(), json!(valid));
    m.insert("test_loss".into(), json!(test));
    m.insert("grad_evals".into(), json!(out.grad_evals));
    m.insert("clamp_events".into(), json!(out.clamp_events));
    Ok(m)
}

/// Worst relative weight error and train-loss gap of a hypernetwork against
/// the ridge closed form over [`ORACLE_GRID`].
pub fn oracle_fit(ridge: &RidgeProblem, problem: &Problem<'_>, phi: &HypernetParams) -> Result<(f64, f64)> {
    let (lo, hi, n) = ORACLE_GRID;
    let batch = problem.train.batch();
    let mut worst_rel: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for l in grid(lo, hi, n) {
        let lambda = HyperPoint::scalar(l);
        let w = phi.emit(&problem.model, &lambda)?;
        let star = ridge.best_response(&lambda)?;
        let diff: f64 = w
            .flat()
            .data()
            .iter()
            .zip(star.flat().data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst_rel = worst_rel.max(diff / star.flat().norm().max(1e-8));
        let gap = model::train_loss(&w, &lambda, &batch, problem.reg)? - ridge.optimal_train_loss(&lambda)?;
        worst_gap = worst_gap.max(gap);
    }
    Ok((worst_rel, worst_gap))
}

fn add_ridge_optimum(m: &mut Map<String, Value>, ridge: Option<&RidgeProblem>, lambda: &HyperPoint) -> Result<()> {
    if let (Some(ridge), 1) = (ridge, lambda.len()) {
        let (lo, hi, n) = ORACLE_SEARCH;
        let (star, loss) = ridge.validation_optimum(lo, hi, n)?;
        m.insert("oracle_lambda".into(), json!(star));
        m.insert("oracle_valid_loss".into(), json!(loss));
        m.insert("oracle_abs_error".into(), json!((lambda.values()[0] - star).abs()));
    }
    Ok(())
}

/// λ on `points` grid values in `[lo, hi]` minimizing the validation loss
/// of `emit(φ, λ)`.
pub fn hypernet_argmin(
    problem: &Problem<'_>,
    phi: &HypernetParams,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(f64, f64)> {
    let valid = problem.valid.batch();
    let mut best = (f64::NAN, f64::INFINITY);
    for l in grid(lo, hi, points) {
        let w = phi.emit(&problem.model, &HyperPoint::filled(problem.hyper_dim(), l))?;
        let v = model::pred_loss(&w, &valid)?;
        if v < best.1 {
            best = (l, v);
        }
    }
    Ok(best)
}

fn global_br(cfg: &ExperimentConfig, problem: &Problem<'_>, ridge: Option<&RidgeProblem>) -> Result<RunArtifacts> {
    let out = algorithms::hypertrain_global(
        problem,
        &GlobalConfig {
            common: hyper_config(cfg),
            distribution: global_distribution(cfg),
            phase1_iters: cfg.train.phase1_iters,
            phase2_iters: cfg.train.phase2_iters,
        },
    )?;
    let mut m = outcome_summary(problem, &out)?;
    let (arg, loss) = hypernet_argmin(problem, &out.phi, cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.points)?;
    m.insert("grid_argmin_lambda".into(), json!(arg));
    m.insert("grid_argmin_valid_loss".into(), json!(loss));
    if let Some(ridge) = ridge {
        let (rel, gap) = oracle_fit(ridge, problem, &out.phi)?;
        m.insert("oracle_max_rel_error".into(), json!(rel));
        m.insert("oracle_max_train_gap".into(), json!(gap));
    }
    add_ridge_optimum(&mut m, ridge, &out.lambda)?;
    Ok(RunArtifacts {
        table: metric_table(&m),
        summary: m,
        records: out.records,
        params: Some(out.phi),
        report: None,
    })
}

/// Phase-1 global training used to warm-start the local procedures.
fn warm_start(cfg: &ExperimentConfig, problem: &Problem<'_>) -> Result<Option<HypernetParams>> {
    if cfg.train.warm_start_iters == 0 {
        return Ok(None);
    }
    let out = algorithms::hypertrain_global(
        problem,
        &GlobalConfig {
            common: HyperConfig {
                log_every: 0,
                ..hyper_config(cfg)
            },
            distribution: global_distribution(cfg),
            phase1_iters: cfg.train.warm_start_iters,
            phase2_iters: 0,
        },
    )?;
    Ok(Some(out.phi))
}

fn joint(cfg: &ExperimentConfig, problem: &Problem<'_>, ridge: Option<&RidgeProblem>) -> Result<RunArtifacts> {
    let out = algorithms::hypertrain_joint(
        problem,
        &JointConfig {
            common: hyper_config(cfg),
            local_variance: cfg.dist.local_variance,
            iters: cfg.train.iters,
            phi_steps: cfg.train.phi_steps,
            lambda_steps: cfg.train.lambda_steps,
            warm_start: warm_start(cfg, problem)?,
        },
    )?;
    let mut m = outcome_summary(problem, &out)?;
    add_ridge_optimum(&mut m, ridge, &out.lambda)?;
    Ok(RunArtifacts {
        table: metric_table(&m),
        summary: m,
        records: out.records,
        params: Some(out.phi),
        report: None,
    })
}

fn simplified(cfg: &ExperimentConfig, problem: &Problem<'_>, ridge: Option<&RidgeProblem>) -> Result<RunArtifacts> {
    let out = algorithms::hypertrain_simplified(
        problem,
        &SimplifiedConfig {
            common: hyper_config(cfg),
            iters: cfg.train.iters,
            warm_start: warm_start(cfg, problem)?,
        },
    )?;
    let mut m = outcome_summary(problem, &out)?;
    add_ridge_optimum(&mut m, ridge, &out.lambda)?;
    Ok(RunArtifacts {
        table: metric_table(&m),
        summary: m,
        records: out.records,
        params: Some(out.phi),
        report: None,
    })
}

fn cv_config(cfg: &ExperimentConfig, lo: f64, hi: f64, candidates: usize) -> CvConfig {
    CvConfig {
        search: cfg.cv.search,
        candidates,
        range: (lo, hi),
        inner_iters: cfg.cv.inner_iters,
        adam: adam(cfg, cfg.cv.inner_lr),
        select_on: cfg.cv.select_on,
        seed: cfg.seed,
    }
}

fn cv_baseline<E: Executor>(cfg: &ExperimentConfig, problem: &Problem<'_>, exec: &E) -> Result<RunArtifacts> {
    let out = algorithms::cross_validation(problem, &cv_config(cfg, cfg.cv.lo, cfg.cv.hi, cfg.cv.candidates), exec)?;
    let mut table = Table::new(&["lambda", "train_loss", "valid_loss", "test_loss", "status"]);
    for c in &out.candidates {
        let l = fmt(lambda_summary(&c.lambda));
        match &c.fit {
            Ok(f) => table.push(vec![
                l,
                fmt(f.train_loss),
                fmt(f.valid_loss),
                opt_fmt(f.test_loss),
                "ok".into(),
            ]),
            Err(e) => table.push(vec![l, String::new(), String::new(), String::new(), e.to_string()]),
        }
    }
    let best = out.best_fit();
    let mut m = Map::new();
    m.insert("lambda".into(), json!(lambda_summary(out.best_lambda())));
    m.insert("train_loss".into(), json!(best.train_loss));
    m.insert("valid_loss".into(), json!(best.valid_loss));
    m.insert("test_loss".into(), json!(best.test_loss));
    m.insert("grad_evals".into(), json!(out.grad_evals));
    m.insert("failures".into(), json!(out.failures().count()));
    Ok(RunArtifacts {
        records: out.records,
        table,
        summary: m,
        params: None,
        report: None,
    })
}

/// Per-weight joint hyper-training against a model trained for the same
/// number of steps with every λ fixed at `train.lambda_init`.
fn perweight(cfg: &ExperimentConfig, problem: &Problem<'_>) -> Result<RunArtifacts> {
    let out = algorithms::hypertrain_joint(
        problem,
        &JointConfig {
            common: hyper_config(cfg),
            local_variance: cfg.dist.local_variance,
            iters: cfg.train.iters,
            phi_steps: cfg.train.phi_steps,
            lambda_steps: cfg.train.lambda_steps,
            warm_start: warm_start(cfg, problem)?,
        },
    )?;
    let fixed = HyperPoint::filled(problem.hyper_dim(), cfg.train.lambda_init);
    let steps = cfg.train.iters * cfg.train.phi_steps;
    let mut batches = rng::stream(cfg.seed, Stream::Candidate(0));
    let baseline = algorithms::train_elementary(
        problem,
        &fixed,
        ElementaryWeights::init(problem.model.clone(), cfg.seed),
        steps,
        adam(cfg, cfg.optim.lr),
        &mut batches,
    )?;
    let (_, base_valid, base_test) = problem.evaluate(&baseline, &fixed)?;
    let mut m = outcome_summary(problem, &out)?;
    let valid = m["valid_loss"].as_f64().unwrap_or(f64::NAN);
    m.insert("baseline_lambda".into(), json!(cfg.train.lambda_init));
    m.insert("baseline_valid_loss".into(), json!(base_valid));
    m.insert("baseline_test_loss".into(), json!(base_test));
    m.insert("baseline_steps".into(), json!(steps));
    m.insert("below_baseline".into(), json!(valid < base_valid));
    m.insert("hypernet_params".into(), json!(out.phi.spec().param_count()));
    Ok(RunArtifacts {
        table: metric_table(&m),
        summary: m,
        records: out.records,
        params: Some(out.phi),
        report: None,
    })
}

pub fn surrogate_config(cfg: &ExperimentConfig) -> SurrogateConfig {
    let s = &cfg.surrogate;
    let common = hyper_config(cfg);
    let budget = s.tuples * s.inner_iters;
    SurrogateConfig {
        tuples: s.tuples,
        held_out: s.held_out,
        distribution: global_distribution(cfg),
        inner_iters: s.inner_iters,
        inner_adam: adam(cfg, s.inner_lr),
        hyper: common,
        fixed_iters: if s.fixed_iters == 0 {
            budget / common.hyper_samples
        } else {
            s.fixed_iters
        },
        gp: match s.gp {
            crate::config::GpKind::Fixed => GpHyper::Fixed(Kernel {
                length_scale: s.gp_length_scale,
                signal_var: s.gp_signal_var,
                noise_var: s.gp_noise_var,
            }),
            crate::config::GpKind::Mle => GpHyper::Mle(MleConfig {
                starts: s.gp_starts,
                iters: s.gp_iters,
                seed: cfg.seed,
                ..MleConfig::default()
            }),
        },
        bins: s.bins,
    }
}

fn method_json(m: &MethodReport) -> Value {
    let points: Vec<Value> = m
        .predictions
        .iter()
        .map(|p| json!({ "lambda": p.lambda, "inferred": p.inferred, "true": p.truth }))
        .collect();
    json!({
        "name": m.name,
        "mean_signed_error": m.mean_signed_error,
        "mean_abs_error": m.mean_abs_error,
        "grad_evals": m.grad_evals,
        "histogram": { "edges": m.histogram.edges, "counts": m.histogram.counts },
        "predictions": points,
    })
}

fn compare_surrogates<E: Executor>(cfg: &ExperimentConfig, problem: &Problem<'_>, exec: &E) -> Result<RunArtifacts> {
    let report = surrogate::compare_surrogates(problem, &surrogate_config(cfg), exec)?;
    let mut table = Table::new(&["method", "index", "inferred", "true", "error"]);
    let mut m = Map::new();
    for method in report.methods() {
        for (i, p) in method.predictions.iter().enumerate() {
            table.push(vec![
                method.name.into(),
                i.to_string(),
                fmt(p.inferred),
                fmt(p.truth),
                fmt(p.inferred - p.truth),
            ]);
        }
        m.insert(
            format!("{}_mean_signed_error", method.name),
            json!(method.mean_signed_error),
        );
        m.insert(format!("{}_mean_abs_error", method.name), json!(method.mean_abs_error));
        m.insert(format!("{}_grad_evals", method.name), json!(method.grad_evals));
    }
    let k = report.gp_kernel;
    m.insert("gp_length_scale".into(), json!(k.length_scale));
    m.insert("gp_signal_var".into(), json!(k.signal_var));
    m.insert("gp_noise_var".into(), json!(k.noise_var));
    m.insert("warnings".into(), json!(report.warnings));
    let full = json!({
        "methods": report.methods().iter().map(|m| method_json(m)).collect::<Vec<_>>(),
        "gp_kernel": { "length_scale": k.length_scale, "signal_var": k.signal_var, "noise_var": k.noise_var },
        "warnings": report.warnings,
    });
    Ok(RunArtifacts {
        records: Vec::new(),
        table,
        summary: m,
        params: None,
        report: Some(full),
    })
}

fn gradcheck(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let report = gradcheck::run_suite(&SuiteConfig {
        cases: cfg.gradcheck.cases,
        step: cfg.gradcheck.step,
        relu_margin: cfg.gradcheck.relu_margin,
        seed: cfg.seed,
        ..SuiteConfig::default()
    })?;
    let mut table = Table::new(&["case", "description", "inputs", "rel_error"]);
    for c in &report.cases {
        table.push(vec![
            c.index.to_string(),
            c.description.clone(),
            c.inputs.to_string(),
            fmt(c.rel_error),
        ]);
    }
    let (archs, depths) = gradcheck::coverage(&report);
    let mut m = Map::new();
    m.insert("command".into(), json!(cfg.command.name()));
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("config".into(), json!(cfg.entries()));
    m.insert("cases".into(), json!(report.cases.len()));
    m.insert("max_rel_error".into(), json!(report.max_rel_error));
    m.insert("redraws".into(), json!(report.redraws));
    m.insert("covers_all_archs".into(), json!(archs));
    m.insert("covers_all_depths".into(), json!(depths));
    Ok(RunArtifacts {
        records: Vec::new(),
        table,
        summary: m,
        params: None,
        report: None,
    })
}

/// Loss curves over a λ grid: through a globally trained hypernetwork and by
/// training one model per grid point.
fn sweep_curve<E: Executor>(cfg: &ExperimentConfig, problem: &Problem<'_>, exec: &E) -> Result<RunArtifacts> {
    let (lo, hi, points) = (cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.points);
    let out = algorithms::hypertrain_global(
        problem,
        &GlobalConfig {
            common: hyper_config(cfg),
            distribution: global_distribution(cfg),
            phase1_iters: cfg.train.phase1_iters,
            phase2_iters: 0,
        },
    )?;
    let mut table = Table::new(&["lambda", "train_loss", "valid_loss", "source"]);
    let train = problem.train.batch();
    let valid = problem.valid.batch();
    let dim = problem.hyper_dim();
    for l in grid(lo, hi, points) {
        let lambda = HyperPoint::filled(dim, l);
        let w = out.phi.emit(&problem.model, &lambda)?;
        table.push(vec![
            fmt(l),
            fmt(model::train_loss(&w, &lambda, &train, problem.reg)?),
            fmt(model::pred_loss(&w, &valid)?),
            "hypernet".into(),
        ]);
    }
    let cv = algorithms::cross_validation(
        problem,
        &CvConfig {
            search: algorithms::Search::Grid,
            ..cv_config(cfg, lo, hi, points)
        },
        exec,
    )?;
    for c in &cv.candidates {
        if let Ok(f) = &c.fit {
            table.push(vec![
                fmt(lambda_summary(&c.lambda)),
                fmt(f.train_loss),
                fmt(f.valid_loss),
                "cv".into(),
            ]);
        }
    }
    let (arg, loss) = hypernet_argmin(problem, &out.phi, lo, hi, points)?;
    let mut m = Map::new();
    m.insert("hypernet_argmin_lambda".into(), json!(arg));
    m.insert("hypernet_argmin_valid_loss".into(), json!(loss));
    m.insert("cv_argmin_lambda".into(), json!(lambda_summary(cv.best_lambda())));
    m.insert("cv_argmin_valid_loss".into(), json!(cv.best_fit().valid_loss));
    m.insert("grad_evals".into(), json!(out.grad_evals + cv.grad_evals));
    let mut records = out.records;
    records.extend(cv.records);
    Ok(RunArtifacts {
        records,
        table,
        summary: m,
        params: Some(out.phi),
        report: None,
    })
}
