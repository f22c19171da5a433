//! Surrogates of the validation loss as a function of hyperparameters.
//!
//! [`gp_fit`] builds Gaussian-process regression with an RBF kernel over
//! standardized inputs and a zero prior mean. [`compare_surrogates`] pits the
//! GP against two hypernetworks as predictors of the true validation loss of
//! fully trained weights: one regressed onto a fixed set of optimized weights,
//! one trained by stochastic hyper-training under the same gradient budget.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::algorithms::{self, GlobalConfig, HyperConfig, HyperDistribution, Problem};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::hypernet::{emit_var, HyperPoint, HypernetParams, HypernetSpec};
use crate::model::{self, ElementaryWeights};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{self, Stream};
use crate::tape::{Tape, Var};

/// RBF kernel `s²·exp(−‖a − b‖²/(2ℓ²))` plus observation noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel {
            length_scale: 1.0,
            signal_var: 1.0,
            noise_var: 1e-10,
        }
    }
}

impl Kernel {
    /// Noise-free covariance between two inputs.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_var * libm::exp(-0.5 * d2 / (self.length_scale * self.length_scale))
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.length_scale) && ok(self.signal_var) && self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(Error::Config(format!("invalid kernel {self:?}")));
        }
        Ok(())
    }

    fn to_log(self) -> [f64; 3] {
        [
            libm::log(self.length_scale),
            libm::log(self.signal_var),
            libm::log(self.noise_var),
        ]
    }

    fn from_log(t: [f64; 3]) -> Self {
        Kernel {
            length_scale: libm::exp(t[0]),
            signal_var: libm::exp(t[1]),
            noise_var: libm::exp(t[2]),
        }
    }
}

/// Multi-start gradient ascent on the log marginal likelihood over
/// `(log ℓ, log s², log σ²_n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleConfig {
    pub starts: usize,
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            starts: 5,
            iters: 300,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// How kernel hyperparameters are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GpHyper {
    Fixed(Kernel),
    Mle(MleConfig),
}

/// Bounds on the log kernel parameters during likelihood maximization.
const LOG_BOUNDS: [(f64, f64); 3] = [(-4.6, 6.9), (-9.2, 9.2), (-23.0, 2.3)];

/// Added to the diagonal, scaled by its mean, until the factorization succeeds.
const JITTER_LADDER: [f64; 7] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];

/// A fitted Gaussian process.
#[derive(Clone, Debug)]
pub struct GpModel {
    shift: Vec<f64>,
    scale: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    kernel: Kernel,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

fn gram(inputs: &[Vec<f64>], kernel: &Kernel) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| kernel.eval(&inputs[i], &inputs[j]))
}

fn factor(mut k: DMatrix<f64>, noise: f64) -> Result<Factor> {
    let n = k.nrows();
    let mean_diag = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64 + noise;
    for i in 0..n {
        k[(i, i)] += noise;
    }
    for &rel in &JITTER_LADDER {
        let jitter = rel * mean_diag;
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = a.cholesky() {
            return Ok(Factor { chol, jitter });
        }
    }
    Err(Error::IllConditioned(format!(
        "GP covariance of {n} points stays indefinite after jitter {:e}",
        JITTER_LADDER[JITTER_LADDER.len() - 1] * mean_diag
    )))
}

/// Log marginal likelihood of `targets` under `kernel` on already
/// standardized `inputs`, with its gradient in `(log ℓ, log s², log σ²_n)`.
pub fn log_marginal_likelihood(inputs: &[Vec<f64>], targets: &[f64], kernel: &Kernel) -> Result<(f64, [f64; 3])> {
    kernel.validate()?;
    let n = inputs.len();
    let k = gram(inputs, kernel);
    let f = factor(k.clone(), kernel.noise_var)?;
    let y = DVector::from_column_slice(targets);
    let alpha = f.chol.solve(&y);
    let l = f.chol.l_dirty();
    let log_det: f64 = (0..n).map(|i| libm::log(l[(i, i)])).sum();
    let value = -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * libm::log(2.0 * core::f64::consts::PI);

    // ½·tr((ααᵀ − K⁻¹)·∂K/∂θ)
    let inv = f.chol.inverse();
    let ell2 = kernel.length_scale * kernel.length_scale;
    let mut grad = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - inv[(i, j)];
            let kij = k[(i, j)];
            let d2: f64 = inputs[i].iter().zip(&inputs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            grad[0] += w * kij * d2 / ell2;
            grad[1] += w * kij;
            if i == j {
                grad[2] += w * kernel.noise_var;
            }
        }
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((value, grad))
}

fn standardization(inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len() as f64;
    let dim = inputs[0].len();
    let mut shift = vec![0.0; dim];
    let mut scale = vec![1.0; dim];
    for d in 0..dim {
        let mean = inputs.iter().map(|x| x[d]).sum::<f64>() / n;
        let var = inputs.iter().map(|x| (x[d] - mean) * (x[d] - mean)).sum::<f64>() / n;
        shift[d] = mean;
        if var > 0.0 {
            scale[d] = libm::sqrt(var);
        }
    }
    (shift, scale)
}

fn maximize_likelihood(inputs: &[Vec<f64>], targets: &[f64], cfg: &MleConfig) -> Result<Kernel> {
    use rand::Rng as _;
    if cfg.starts == 0 {
        return Err(Error::Config("likelihood maximization needs at least one start".into()));
    }
    let dim = inputs[0].len() as f64;
    let y_power = (targets.iter().map(|y| y * y).sum::<f64>() / targets.len() as f64).max(1e-12);
    let mut rng = rng::stream(cfg.seed, Stream::Sampling);
    let mut best: Option<(f64, Kernel)> = None;
    for s in 0..cfg.starts {
        // Deterministic spread of length scales around √dim, then random ones.
        let ell = if s < 3 {
            libm::sqrt(dim) * [1.0, 0.3, 3.0][s]
        } else {
            libm::sqrt(dim) * libm::exp(rng.random_range(-1.5..1.5))
        };
        let start = Kernel {
            length_scale: ell,
            signal_var: y_power,
            noise_var: 1e-2 * y_power,
        };
        let mut theta = start.to_log();
        for (t, (lo, hi)) in theta.iter_mut().zip(LOG_BOUNDS) {
            *t = t.clamp(lo, hi);
        }
        let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), 3);
        let mut local: Option<(f64, [f64; 3])> = None;
        for _ in 0..=cfg.iters {
            let Ok((v, g)) = log_marginal_likelihood(inputs, targets, &Kernel::from_log(theta)) else {
                break;
            };
            if !v.is_finite() {
                break;
            }
            if local.is_none_or(|(b, _)| v > b) {
                local = Some((v, theta));
            }
            let ascent = [-g[0], -g[1], -g[2]];
            if opt.step(&mut theta, &ascent).is_err() {
                break;
            }
            for (t, (lo, hi)) in theta.iter_mut().zip(LOG_BOUNDS) {
                *t = t.clamp(lo, hi);
            }
        }
        if let Some((v, t)) = local {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, Kernel::from_log(t)));
            }
        }
    }
    best.map(|(_, k)| k)
        .ok_or_else(|| Error::IllConditioned("no start of likelihood maximization produced a finite value".into()))
}

/// Fits a zero-mean GP to `(inputs[i], targets[i])`. Inputs are standardized
/// per coordinate over the training set before the kernel is applied.
pub fn gp_fit(inputs: &[Vec<f64>], targets: &[f64], hyper: &GpHyper) -> Result<GpModel> {
    let n = inputs.len();
    if n < 2 || targets.len() != n {
        return Err(Error::domain(format!(
            "GP needs at least two inputs with one target each, got {n} inputs and {} targets",
            targets.len()
        )));
    }
    let dim = inputs[0].len();
    if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
        return Err(Error::shape("gp inputs", &[n, dim], &[n, dim]));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::domain("GP data must be finite"));
    }
    for i in 0..n {
        for j in 0..i {
            if inputs[i] == inputs[j] {
                return Err(Error::domain(format!("GP inputs {j} and {i} coincide")));
            }
        }
    }
    let (shift, scale) = standardization(inputs);
    let std_inputs: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| {
            x.iter()
                .zip(&shift)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let kernel = match hyper {
        GpHyper::Fixed(k) => {
            k.validate()?;
            *k
        }
        GpHyper::Mle(cfg) => maximize_likelihood(&std_inputs, targets, cfg)?,
    };
    let f = factor(gram(&std_inputs, &kernel), kernel.noise_var)?;
    let y = DVector::from_column_slice(targets);
    let alpha = f.chol.solve(&y);
    let l = f.chol.l_dirty();
    let log_det: f64 = (0..n).map(|i| libm::log(l[(i, i)])).sum();
    let log_likelihood = -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * libm::log(2.0 * core::f64::consts::PI);
    Ok(GpModel {
        shift,
        scale,
        inputs: std_inputs,
        kernel,
        jitter: f.jitter,
        chol: f.chol,
        alpha,
        log_likelihood,
    })
}

impl GpModel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Extra diagonal added for a successful factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Training inputs after standardization.
    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Posterior mean and predictive variance (including observation noise).
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.shift.len() {
            return Err(Error::shape("gp_predict", &[x.len()], &[self.shift.len()]));
        }
        let z = self.standardize(x);
        let k = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.eval(xi, &z)));
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .ok_or_else(|| Error::IllConditioned("GP triangular solve".into()))?;
        let var = (self.kernel.signal_var + self.kernel.noise_var - v.dot(&v)).max(0.0);
        Ok((mean, var))
    }
}

/// A hyperparameter, the weights trained under it and their validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTuple {
    pub lambda: HyperPoint,
    pub weights: ElementaryWeights,
    pub valid_loss: f64,
}

/// Settings for [`compare_surrogates`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateConfig {
    /// Tuples the GP and the fixed-set hypernetwork learn from.
    pub tuples: usize,
    /// Held-out tuples every predictor is scored on.
    pub held_out: usize,
    /// Sampling distribution for all tuples and for hyper-training.
    pub distribution: HyperDistribution,
    /// Inner Adam steps per tuple.
    pub inner_iters: usize,
    pub inner_adam: AdamConfig,
    /// Architecture, optimizer and seed of both hypernetworks.
    pub hyper: HyperConfig,
    /// Regression steps of the fixed-set hypernetwork; each step uses
    /// `hyper.hyper_samples` tuples.
    pub fixed_iters: usize,
    pub gp: GpHyper,
    /// Bins of each error histogram.
    pub bins: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            tuples: 25,
            held_out: 200,
            distribution: HyperDistribution::Global {
                mean: 0.0,
                variance: 1.5,
            },
            inner_iters: 1000,
            inner_adam: AdamConfig::default(),
            hyper: HyperConfig::default(),
            fixed_iters: 12_500,
            gp: GpHyper::Mle(MleConfig::default()),
            bins: 20,
        }
    }
}

/// One scored prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub lambda: Vec<f64>,
    pub inferred: f64,
    pub truth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub name: &'static str,
    pub predictions: Vec<Prediction>,
    /// Mean of `inferred − truth`.
    pub mean_signed_error: f64,
    pub mean_abs_error: f64,
    pub histogram: Histogram,
    /// Training-loss gradients spent building the predictor.
    pub grad_evals: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub gp: MethodReport,
    pub fixed: MethodReport,
    pub stochastic: MethodReport,
    pub gp_kernel: Kernel,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn methods(&self) -> [&MethodReport; 3] {
        [&self.gp, &self.fixed, &self.stochastic]
    }
}

/// Trains one elementary model per hyperparameter; failures are returned as
/// messages. `offset` separates the minibatch streams of different tuple sets.
pub fn build_tuples<E: Executor>(
    problem: &Problem<'_>,
    lambdas: &[HyperPoint],
    iters: usize,
    adam: AdamConfig,
    seed: u64,
    offset: usize,
    exec: &E,
) -> (Vec<EvalTuple>, Vec<String>) {
    let init = ElementaryWeights::init(problem.model.clone(), seed);
    let valid = problem.valid.batch();
    let results = exec.map(lambdas.len(), |i| {
        let mut batches = rng::stream(seed, Stream::Candidate((offset + i) as u32));
        let lambda = &lambdas[i];
        algorithms::train_elementary(problem, lambda, init.clone(), iters, adam, &mut batches).and_then(|w| {
            let valid_loss = model::pred_loss(&w, &valid)?;
            if !valid_loss.is_finite() {
                return Err(Error::Divergence {
                    phase: "inner training",
                    iteration: iters,
                });
            }
            Ok(EvalTuple {
                lambda: lambda.clone(),
                weights: w,
                valid_loss,
            })
        })
    });
    let mut tuples = Vec::new();
    let mut warnings = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => tuples.push(t),
            Err(e) => warnings.push(format!("tuple {} dropped: {e}", offset + i)),
        }
    }
    (tuples, warnings)
}

/// A GP from each tuple's hyperparameter to its validation loss.
pub fn gp_fit_tuples(tuples: &[EvalTuple], hyper: &GpHyper) -> Result<GpModel> {
    let inputs: Vec<Vec<f64>> = tuples.iter().map(|t| t.lambda.values().to_vec()).collect();
    let targets: Vec<f64> = tuples.iter().map(|t| t.valid_loss).collect();
    gp_fit(&inputs, &targets, hyper)
}

/// Regresses `emit(φ, λ_i)` onto the optimized weights `w_i` by mean squared
/// error in weight space.
pub fn fit_fixed_hypernet(
    spec: HypernetSpec,
    tuples: &[EvalTuple],
    cfg: &HyperConfig,
    iters: usize,
) -> Result<HypernetParams> {
    use rand::seq::index;
    if tuples.is_empty() {
        return Err(Error::domain("no tuples to fit"));
    }
    let mut phi = HypernetParams::init_scaled(spec, cfg.seed, cfg.init_scale);
    let mut opt = AdamState::new(cfg.phi_adam, spec.param_count());
    let mut rng = rng::stream(cfg.seed, Stream::Batch);
    let per_step = cfg.hyper_samples.min(tuples.len());
    for it in 0..iters {
        let picks = index::sample(&mut rng, tuples.len(), per_step).into_vec();
        let tape = Tape::new();
        let p = tape.param(phi.flat().clone());
        let mut total: Option<Var<'_>> = None;
        for &i in &picks {
            let l = tape.constant(tuples[i].lambda.tensor().clone());
            let target = tape.constant(tuples[i].weights.flat().clone());
            let err = emit_var(&spec, p, l)?.sub(target)?.square().mean()?;
            total = Some(match total {
                None => err,
                Some(acc) => acc.add(err)?,
            });
        }
        let loss = total.expect("at least one pick").scale(1.0 / per_step as f64);
        let g = tape.backward(loss)?.take(p).expect("phi is a parameter");
        opt.step(phi.flat_mut(), g.data()).map_err(|_| Error::Divergence {
            phase: "fixed-set regression",
            iteration: it + 1,
        })?;
    }
    Ok(phi)
}

fn summarize(name: &'static str, predictions: Vec<Prediction>, grad_evals: u64) -> MethodReport {
    let n = predictions.len().max(1) as f64;
    let errs: Vec<f64> = predictions.iter().map(|p| p.inferred - p.truth).collect();
    MethodReport {
        name,
        mean_signed_error: errs.iter().sum::<f64>() / n,
        mean_abs_error: errs.iter().map(|e| e.abs()).sum::<f64>() / n,
        predictions,
        histogram: Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        },
        grad_evals,
    }
}

fn fill_histograms(methods: &mut [&mut MethodReport], bins: usize) {
    let errs = |m: &MethodReport| -> Vec<f64> { m.predictions.iter().map(|p| p.inferred - p.truth).collect() };
    let all: Vec<f64> = methods.iter().flat_map(|m| errs(m)).collect();
    let (lo, hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let bins = bins.max(1);
    let (lo, hi) = if all.is_empty() || lo == hi {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    for m in methods.iter_mut() {
        let mut counts = vec![0; bins];
        for e in errs(m) {
            let b = (((e - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        m.histogram = Histogram {
            edges: edges.clone(),
            counts,
        };
    }
}

/// Scores three predictors of validation loss on held-out hyperparameters:
/// a GP on `tuples` (λ, loss) pairs, a hypernetwork regressed onto the same
/// tuples' weights, and a hypernetwork trained by global hyper-training with
/// at most the gradient budget spent building the tuples.
pub fn compare_surrogates<E: Executor>(
    problem: &Problem<'_>,
    cfg: &SurrogateConfig,
    exec: &E,
) -> Result<ComparisonReport> {
    if cfg.tuples < 2 || cfg.held_out == 0 {
        return Err(Error::Config("need at least two tuples and one held-out point".into()));
    }
    if !matches!(cfg.distribution, HyperDistribution::Global { .. }) {
        return Err(Error::Config("surrogate tuples need a global distribution".into()));
    }
    let seed = cfg.hyper.seed;
    let dim = problem.hyper_dim();
    let mut sampler = rng::stream(seed, Stream::Sampling);
    let origin = HyperPoint::filled(dim, 0.0);
    let mut draw =
        |n: usize| -> Vec<HyperPoint> { (0..n).map(|_| cfg.distribution.sample(&origin, &mut sampler)).collect() };
    let train_lambdas = draw(cfg.tuples);
    let test_lambdas = draw(cfg.held_out);

    let (tuples, mut warnings) = build_tuples(problem, &train_lambdas, cfg.inner_iters, cfg.inner_adam, seed, 0, exec);
    let (held_out, w2) = build_tuples(
        problem,
        &test_lambdas,
        cfg.inner_iters,
        cfg.inner_adam,
        seed,
        cfg.tuples,
        exec,
    );
    warnings.extend(w2);
    if tuples.len() < 2 || held_out.is_empty() {
        return Err(Error::Domain(format!(
            "too few successful inner trainings ({} tuples, {} held out)",
            tuples.len(),
            held_out.len()
        )));
    }
    let budget = (tuples.len() * cfg.inner_iters) as u64;

    let gp = gp_fit_tuples(&tuples, &cfg.gp)?;

    let spec = HypernetSpec::for_model(cfg.hyper.arch, dim, &problem.model)?;
    let fixed = fit_fixed_hypernet(spec, &tuples, &cfg.hyper, cfg.fixed_iters)?;

    let phase1_iters = (budget / cfg.hyper.hyper_samples as u64) as usize;
    let global = GlobalConfig {
        common: cfg.hyper,
        distribution: cfg.distribution,
        phase1_iters,
        phase2_iters: 0,
    };
    let stochastic = algorithms::hypertrain_global(problem, &global)?;
    debug_assert!(stochastic.grad_evals <= budget);

    let valid: Batch = problem.valid.batch();
    let through = |phi: &HypernetParams, lambda: &HyperPoint| -> Result<f64> {
        model::pred_loss(&phi.emit(&problem.model, lambda)?, &valid)
    };
    let mut gp_preds = Vec::with_capacity(held_out.len());
    let mut fixed_preds = Vec::with_capacity(held_out.len());
    let mut stoch_preds = Vec::with_capacity(held_out.len());
    for t in &held_out {
        let lambda = t.lambda.values().to_vec();
        gp_preds.push(Prediction {
            lambda: lambda.clone(),
            inferred: gp.predict(&lambda)?.0,
            truth: t.valid_loss,
        });
        fixed_preds.push(Prediction {
            lambda: lambda.clone(),
            inferred: through(&fixed, &t.lambda)?,
            truth: t.valid_loss,
        });
        stoch_preds.push(Prediction {
            lambda,
            inferred: through(&stochastic.phi, &t.lambda)?,
            truth: t.valid_loss,
        });
    }
    let mut gp_report = summarize("gp", gp_preds, budget);
    let mut fixed_report = summarize("fixed", fixed_preds, budget);
    let mut stoch_report = summarize("stochastic", stoch_preds, stochastic.grad_evals);
    fill_histograms(&mut [&mut gp_report, &mut fixed_report, &mut stoch_report], cfg.bins);
    Ok(ComparisonReport {
        gp: gp_report,
        fixed: fixed_report,
        stochastic: stoch_report,
        gp_kernel: *gp.kernel(),
        warnings,
    })
}

/// Validation loss of `weights` recomputed from scratch.
pub fn tuple_loss(t: &EvalTuple, valid: &Batch) -> Result<f64> {
    model::pred_loss(&t.weights, valid)
}
