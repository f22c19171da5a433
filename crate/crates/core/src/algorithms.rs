//! Cross-validation and the three hyper-training procedures.
//!
//! Each procedure is a single-threaded state machine seeded from one `u64`.
//! Minibatches come from the [`Stream::Batch`] substream, hyperparameter
//! draws from [`Stream::Sampling`] and initial parameters from
//! [`Stream::Init`], so a fixed seed reproduces every [`RunRecord`].
//!
//! `grad_evals` counts elementary training-loss gradients: one per sampled
//! hyperparameter per hypernetwork step, one per inner step of
//! cross-validation. Hypergradients use validation data only and are not
//! counted.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{self, Batch, Dataset};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::hypernet::{emit_var, Arch, HyperPoint, HypernetParams, HypernetSpec};
use crate::model::{self, ElementaryWeights, ModelSpec, RegSpec};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{self, Rng, Stream};
use crate::tape::{Tape, Var};

/// An elementary model, its regularizer and the data it is tuned on.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub model: ModelSpec,
    pub reg: RegSpec,
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pub test: Option<&'a Dataset>,
    pub batch_size: usize,
    pub valid_batch_size: usize,
}

impl<'a> Problem<'a> {
    /// Full-batch training and validation by default.
    pub fn new(model: ModelSpec, reg: RegSpec, train: &'a Dataset, valid: &'a Dataset) -> Result<Self> {
        let p = Problem {
            model,
            reg,
            train,
            valid,
            test: None,
            batch_size: train.len(),
            valid_batch_size: train.len(),
        };
        p.check()?;
        Ok(p)
    }

    pub fn with_test(mut self, test: &'a Dataset) -> Result<Self> {
        self.test = Some(test);
        self.check()?;
        Ok(self)
    }

    pub fn with_batch_sizes(mut self, train: usize, valid: usize) -> Result<Self> {
        self.batch_size = train;
        self.valid_batch_size = valid;
        self.check()?;
        Ok(self)
    }

    pub fn hyper_dim(&self) -> usize {
        self.reg.hyper_dim(&self.model)
    }

    fn check(&self) -> Result<()> {
        let want = [self.model.input_dim(), self.model.output_dim()];
        let sets = [Some(self.train), Some(self.valid), self.test];
        for d in sets.into_iter().flatten() {
            if d.is_empty() {
                return Err(Error::Config("datasets must be non-empty".into()));
            }
            let got = [d.input_dim(), d.output_dim()];
            if got != want {
                return Err(Error::shape("problem data", &got, &want));
            }
        }
        if self.batch_size == 0 || self.valid_batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        Ok(())
    }

    /// Full-dataset losses of `w` at `lambda`: (train loss, validation
    /// prediction loss, test prediction loss).
    pub fn evaluate(&self, w: &ElementaryWeights, lambda: &HyperPoint) -> Result<(f64, f64, Option<f64>)> {
        let train = model::train_loss(w, lambda, &self.train.batch(), self.reg)?;
        let valid = model::pred_loss(w, &self.valid.batch())?;
        let test = match self.test {
            Some(d) => Some(model::pred_loss(w, &d.batch())?),
            None => None,
        };
        Ok((train, valid, test))
    }
}

/// Which loop produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Hypernetwork training under a global hyperparameter distribution.
    Hypernet,
    /// Hyperparameter descent through a frozen hypernetwork.
    Hyperparameter,
    /// Alternating hypernetwork and hyperparameter updates.
    Joint,
    /// One cross-validation candidate.
    Candidate,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Hypernet => "hypernet",
            Phase::Hyperparameter => "hyperparameter",
            Phase::Joint => "joint",
            Phase::Candidate => "candidate",
        }
    }
}

/// One logged point of a run. `iteration` counts optimizer updates (or
/// candidates) and strictly increases within a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub phase: Phase,
    pub iteration: u64,
    pub lambda: Vec<f64>,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub test_loss: Option<f64>,
    pub grad_evals: u64,
    pub seed: u64,
    /// The hyperparameter left the trust box on this step and was clamped.
    pub clamped: bool,
}

/// Hyperparameter sampling distribution for hypernetwork training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HyperDistribution {
    /// `N(mean, variance)` independently per coordinate.
    Global { mean: f64, variance: f64 },
    /// `N(λ̂, variance)` around the current hyperparameter.
    Local { variance: f64 },
}

impl HyperDistribution {
    fn variance(&self) -> f64 {
        match *self {
            HyperDistribution::Global { variance, .. } | HyperDistribution::Local { variance } => variance,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.variance();
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("sampling variance must be positive, got {v}")));
        }
        Ok(())
    }

    /// One draw; `center` fixes the dimension and the mean of `Local`.
    pub fn sample(&self, center: &HyperPoint, rng: &mut Rng) -> HyperPoint {
        let v = self.variance();
        let values = center
            .values()
            .iter()
            .map(|&c| {
                let mean = match *self {
                    HyperDistribution::Global { mean, .. } => mean,
                    HyperDistribution::Local { .. } => c,
                };
                rng::normal(rng, mean, v)
            })
            .collect();
        HyperPoint::new(values)
    }
}

/// Settings shared by all hyper-training procedures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperConfig {
    pub arch: Arch,
    /// Multiplier on the fan-in initialization bound of the hypernetwork.
    pub init_scale: f64,
    /// Hypernetwork optimizer.
    pub phi_adam: AdamConfig,
    /// Hyperparameter optimizer.
    pub lambda_adam: AdamConfig,
    /// Hyperparameter draws averaged per hypernetwork step.
    pub hyper_samples: usize,
    /// Initial value of every coordinate of λ̂.
    pub lambda_init: f64,
    /// λ̂ is clamped coordinate-wise into `[lo, hi]`.
    pub trust_box: (f64, f64),
    /// Record every `log_every` outer iterations; 0 records only the end.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            arch: Arch::Linear,
            init_scale: 1.0,
            phi_adam: AdamConfig::default(),
            lambda_adam: AdamConfig::default(),
            hyper_samples: 2,
            lambda_init: 0.0,
            trust_box: (-10.0, 10.0),
            log_every: 0,
            seed: 0,
        }
    }
}

impl HyperConfig {
    fn validate(&self) -> Result<()> {
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        if self.hyper_samples == 0 {
            return Err(Error::Config("hyper_samples must be at least 1".into()));
        }
        let (lo, hi) = self.trust_box;
        if !(lo < hi) || !(lo..=hi).contains(&self.lambda_init) {
            return Err(Error::Config(format!(
                "trust box [{lo}, {hi}] must be non-empty and contain lambda_init {}",
                self.lambda_init
            )));
        }
        for (name, a) in [("phi_adam", self.phi_adam), ("lambda_adam", self.lambda_adam)] {
            if !(a.lr >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
                return Err(Error::Config(format!("invalid {name} settings {a:?}")));
            }
        }
        Ok(())
    }
}

/// Hypernetwork training, then hyperparameter descent with φ frozen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalConfig {
    pub common: HyperConfig,
    pub distribution: HyperDistribution,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            common: HyperConfig::default(),
            distribution: HyperDistribution::Global {
                mean: 0.0,
                variance: 1.5,
            },
            phase1_iters: 1000,
            phase2_iters: 1000,
        }
    }
}

/// Alternating updates with hyperparameters drawn near λ̂.
#[derive(Clone, Debug, PartialEq)]
pub struct JointConfig {
    pub common: HyperConfig,
    pub local_variance: f64,
    pub iters: usize,
    /// Hypernetwork steps per outer iteration.
    pub phi_steps: usize,
    /// Hyperparameter steps per outer iteration.
    pub lambda_steps: usize,
    /// Start from these hypernetwork parameters instead of a fresh init.
    pub warm_start: Option<HypernetParams>,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            common: HyperConfig::default(),
            local_variance: 1e-5,
            iters: 1000,
            phi_steps: 10,
            lambda_steps: 1,
            warm_start: None,
        }
    }
}

/// One hypernetwork step at exactly λ̂, then one hyperparameter step.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplifiedConfig {
    pub common: HyperConfig,
    pub iters: usize,
    /// Start from these hypernetwork parameters instead of a fresh init.
    pub warm_start: Option<HypernetParams>,
}

impl Default for SimplifiedConfig {
    fn default() -> Self {
        SimplifiedConfig {
            common: HyperConfig::default(),
            iters: 1000,
            warm_start: None,
        }
    }
}

/// Result of a hyper-training run.
#[derive(Clone, Debug)]
pub struct HyperOutcome {
    pub lambda: HyperPoint,
    /// `emit(φ, λ̂)`.
    pub weights: ElementaryWeights,
    pub phi: HypernetParams,
    pub records: Vec<RunRecord>,
    pub grad_evals: u64,
    /// Number of hyperparameter steps that hit the trust box.
    pub clamp_events: usize,
}

/// Validation prediction loss of `emit(φ, λ)` on `batch` and its gradient
/// with respect to `λ`, taken through the hypernetwork only.
pub fn hyper_gradient(
    model: &ModelSpec,
    phi: &HypernetParams,
    lambda: &HyperPoint,
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let p = tape.constant(phi.flat().clone());
    let l = tape.param(lambda.tensor().clone());
    let w = emit_var(phi.spec(), p, l)?;
    let y = model::forward_var(model, w, tape.constant(batch.x.clone()))?;
    let loss = model::pred_loss_var(y, tape.constant(batch.t.clone()))?;
    let value = loss.item()?;
    let mut grads = tape.backward(loss)?;
    let g = grads.take(l).expect("hyperparameter is a tape parameter");
    Ok((value, g.into_data()))
}

/// Mean over `lambdas` of the training loss of `emit(φ, λ)` on `batch`, and
/// its gradient with respect to φ.
pub fn hypernet_gradient(
    problem: &Problem<'_>,
    phi: &HypernetParams,
    lambdas: &[HyperPoint],
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    if lambdas.is_empty() {
        return Err(Error::domain("no hyperparameter samples"));
    }
    let tape = Tape::new();
    let p = tape.param(phi.flat().clone());
    let x = tape.constant(batch.x.clone());
    let t = tape.constant(batch.t.clone());
    let mut total: Option<Var<'_>> = None;
    for lambda in lambdas {
        let l = tape.constant(lambda.tensor().clone());
        let w = emit_var(phi.spec(), p, l)?;
        let loss = model::train_loss_var(&problem.model, w, l, x, t, problem.reg)?;
        total = Some(match total {
            None => loss,
            Some(acc) => acc.add(loss)?,
        });
    }
    let loss = total.expect("non-empty").scale(1.0 / lambdas.len() as f64);
    let value = loss.item()?;
    let mut grads = tape.backward(loss)?;
    let g = grads.take(p).expect("phi is a tape parameter");
    Ok((value, g.into_data()))
}

struct Trainer<'p, 'a> {
    problem: &'p Problem<'a>,
    cfg: HyperConfig,
    phi: HypernetParams,
    lambda: HyperPoint,
    phi_opt: AdamState,
    lambda_opt: AdamState,
    batches: Rng,
    samples: Rng,
    grad_evals: u64,
    steps: u64,
    records: Vec<RunRecord>,
    clamp_events: usize,
}

impl<'p, 'a> Trainer<'p, 'a> {
    fn new(problem: &'p Problem<'a>, cfg: HyperConfig, warm_start: Option<HypernetParams>) -> Result<Self> {
        cfg.validate()?;
        let dim = problem.hyper_dim();
        let spec = HypernetSpec::for_model(cfg.arch, dim, &problem.model)?;
        let phi = match warm_start {
            Some(phi) if *phi.spec() == spec => phi,
            Some(phi) => {
                return Err(Error::Config(format!(
                    "warm start hypernetwork {:?} does not match {:?}",
                    phi.spec(),
                    spec
                )))
            }
            None => HypernetParams::init_scaled(spec, cfg.seed, cfg.init_scale),
        };
        Ok(Trainer {
            problem,
            phi_opt: AdamState::new(cfg.phi_adam, spec.param_count()),
            lambda_opt: AdamState::new(cfg.lambda_adam, dim),
            phi,
            lambda: HyperPoint::filled(dim, cfg.lambda_init),
            batches: rng::stream(cfg.seed, Stream::Batch),
            samples: rng::stream(cfg.seed, Stream::Sampling),
            cfg,
            grad_evals: 0,
            steps: 0,
            records: Vec::new(),
            clamp_events: 0,
        })
    }

    fn diverged(&self, phase: Phase) -> Error {
        Error::Divergence {
            phase: phase.name(),
            iteration: self.steps as usize,
        }
    }

    fn phi_step(&mut self, lambdas: &[HyperPoint], phase: Phase) -> Result<()> {
        let batch = data::minibatch(self.problem.train, self.problem.batch_size, &mut self.batches)?;
        let (loss, grad) = hypernet_gradient(self.problem, &self.phi, lambdas, &batch)?;
        self.steps += 1;
        if !loss.is_finite() {
            return Err(self.diverged(phase));
        }
        if self.phi_opt.step(self.phi.flat_mut(), &grad).is_err() {
            return Err(self.diverged(phase));
        }
        self.grad_evals += lambdas.len() as u64;
        Ok(())
    }

    /// Returns whether λ̂ was clamped.
    fn lambda_step(&mut self, phase: Phase) -> Result<bool> {
        let batch = data::minibatch(self.problem.valid, self.problem.valid_batch_size, &mut self.batches)?;
        let (loss, grad) = hyper_gradient(&self.problem.model, &self.phi, &self.lambda, &batch)?;
        self.steps += 1;
        if !loss.is_finite() {
            return Err(self.diverged(phase));
        }
        if self.lambda_opt.step(self.lambda.values_mut(), &grad).is_err() {
            return Err(self.diverged(phase));
        }
        let (lo, hi) = self.cfg.trust_box;
        let mut clamped = false;
        for v in self.lambda.values_mut() {
            if *v < lo || *v > hi {
                *v = v.clamp(lo, hi);
                clamped = true;
            }
        }
        if clamped {
            self.clamp_events += 1;
        }
        Ok(clamped)
    }

    fn due(&self, outer: usize) -> bool {
        self.cfg.log_every > 0 && outer % self.cfg.log_every == 0
    }

    fn record(&mut self, phase: Phase, clamped: bool) -> Result<()> {
        if self.records.last().is_some_and(|r| r.iteration == self.steps) {
            return Ok(());
        }
        let w = self.phi.emit(&self.problem.model, &self.lambda)?;
        let (train_loss, valid_loss, test_loss) = self.problem.evaluate(&w, &self.lambda)?;
        if !(train_loss.is_finite() && valid_loss.is_finite()) {
            return Err(self.diverged(phase));
        }
        self.records.push(RunRecord {
            phase,
            iteration: self.steps,
            lambda: self.lambda.values().to_vec(),
            train_loss,
            valid_loss,
            test_loss,
            grad_evals: self.grad_evals,
            seed: self.cfg.seed,
            clamped,
        });
        Ok(())
    }

    fn finish(mut self, phase: Phase) -> Result<HyperOutcome> {
        self.record(phase, false)?;
        Ok(HyperOutcome {
            weights: self.phi.emit(&self.problem.model, &self.lambda)?,
            lambda: self.lambda,
            phi: self.phi,
            records: self.records,
            grad_evals: self.grad_evals,
            clamp_events: self.clamp_events,
        })
    }

    fn draw(&mut self, dist: HyperDistribution) -> Vec<HyperPoint> {
        (0..self.cfg.hyper_samples)
            .map(|_| dist.sample(&self.lambda, &mut self.samples))
            .collect()
    }
}

/// Trains φ on hyperparameters drawn from a global distribution, then
/// descends the validation loss in λ̂ through the frozen hypernetwork.
pub fn hypertrain_global(problem: &Problem<'_>, cfg: &GlobalConfig) -> Result<HyperOutcome> {
    if !matches!(cfg.distribution, HyperDistribution::Global { .. }) {
        return Err(Error::Config(
            "global hyper-training needs a global distribution".into(),
        ));
    }
    cfg.distribution.validate()?;
    let mut tr = Trainer::new(problem, cfg.common, None)?;
    for it in 1..=cfg.phase1_iters {
        let lambdas = tr.draw(cfg.distribution);
        tr.phi_step(&lambdas, Phase::Hypernet)?;
        if tr.due(it) {
            tr.record(Phase::Hypernet, false)?;
        }
    }
    if cfg.phase1_iters > 0 {
        tr.record(Phase::Hypernet, false)?;
    }
    for it in 1..=cfg.phase2_iters {
        let clamped = tr.lambda_step(Phase::Hyperparameter)?;
        if clamped || tr.due(it) {
            tr.record(Phase::Hyperparameter, clamped)?;
        }
    }
    tr.finish(Phase::Hyperparameter)
}

/// Alternates `phi_steps` hypernetwork steps on `N(λ̂, local_variance)` with
/// `lambda_steps` hyperparameter steps.
pub fn hypertrain_joint(problem: &Problem<'_>, cfg: &JointConfig) -> Result<HyperOutcome> {
    if cfg.phi_steps == 0 || cfg.lambda_steps == 0 {
        return Err(Error::Config("phi_steps and lambda_steps must be at least 1".into()));
    }
    let dist = HyperDistribution::Local {
        variance: cfg.local_variance,
    };
    dist.validate()?;
    let mut tr = Trainer::new(problem, cfg.common, cfg.warm_start.clone())?;
    for it in 1..=cfg.iters {
        for _ in 0..cfg.phi_steps {
            let lambdas = tr.draw(dist);
            tr.phi_step(&lambdas, Phase::Joint)?;
        }
        let mut clamped = false;
        for _ in 0..cfg.lambda_steps {
            clamped |= tr.lambda_step(Phase::Joint)?;
        }
        if clamped || tr.due(it) {
            tr.record(Phase::Joint, clamped)?;
        }
    }
    tr.finish(Phase::Joint)
}

/// One hypernetwork step at exactly λ̂, then one hyperparameter step, per
/// iteration; the movement of λ̂ is the only source of variation in λ.
pub fn hypertrain_simplified(problem: &Problem<'_>, cfg: &SimplifiedConfig) -> Result<HyperOutcome> {
    let mut tr = Trainer::new(problem, cfg.common, cfg.warm_start.clone())?;
    for it in 1..=cfg.iters {
        let at = [tr.lambda.clone()];
        tr.phi_step(&at, Phase::Joint)?;
        let clamped = tr.lambda_step(Phase::Joint)?;
        if clamped || tr.due(it) {
            tr.record(Phase::Joint, clamped)?;
        }
    }
    tr.finish(Phase::Joint)
}

/// How cross-validation proposes hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Search {
    /// Evenly spaced over the range, endpoints included.
    Grid,
    /// Uniform over the range.
    Random,
}

/// Which loss picks the cross-validation winner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectOn {
    Train,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvConfig {
    pub search: Search,
    pub candidates: usize,
    pub range: (f64, f64),
    pub inner_iters: usize,
    pub adam: AdamConfig,
    pub select_on: SelectOn,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            search: Search::Grid,
            candidates: 21,
            range: (-6.0, 6.0),
            inner_iters: 1000,
            adam: AdamConfig::default(),
            select_on: SelectOn::Valid,
            seed: 0,
        }
    }
}

/// Losses of one successfully trained candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateFit {
    pub weights: ElementaryWeights,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub lambda: HyperPoint,
    pub fit: core::result::Result<CandidateFit, Error>,
    pub grad_evals: u64,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    /// Index of the selected candidate.
    pub best: usize,
    pub candidates: Vec<Candidate>,
    pub records: Vec<RunRecord>,
    pub grad_evals: u64,
}

impl CvOutcome {
    pub fn best_lambda(&self) -> &HyperPoint {
        &self.candidates[self.best].lambda
    }

    pub fn best_fit(&self) -> &CandidateFit {
        self.candidates[self.best]
            .fit
            .as_ref()
            .expect("selected candidate succeeded")
    }

    /// Candidates that failed, with their error.
    pub fn failures(&self) -> impl Iterator<Item = (usize, &Error)> {
        self.candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.fit.as_ref().err().map(|e| (i, e)))
    }
}

/// Proposed hyperparameters, each broadcast to `dim` coordinates.
pub fn candidate_lambdas(cfg: &CvConfig, dim: usize) -> Result<Vec<HyperPoint>> {
    let (lo, hi) = cfg.range;
    if cfg.candidates == 0 || !(lo <= hi) {
        return Err(Error::Config(format!(
            "cross-validation needs at least one candidate and lo <= hi, got {} over [{lo}, {hi}]",
            cfg.candidates
        )));
    }
    Ok(match cfg.search {
        Search::Grid => (0..cfg.candidates)
            .map(|i| {
                let v = if cfg.candidates == 1 {
                    (lo + hi) / 2.0
                } else {
                    lo + (hi - lo) * i as f64 / (cfg.candidates - 1) as f64
                };
                HyperPoint::filled(dim, v)
            })
            .collect(),
        Search::Random => {
            use rand::Rng as _;
            let mut rng = rng::stream(cfg.seed, Stream::Sampling);
            (0..cfg.candidates)
                .map(|_| HyperPoint::filled(dim, if lo == hi { lo } else { rng.random_range(lo..hi) }))
                .collect()
        }
    })
}

/// `iters` minibatch Adam steps on the training loss from `init`.
pub fn train_elementary(
    problem: &Problem<'_>,
    lambda: &HyperPoint,
    init: ElementaryWeights,
    iters: usize,
    adam: AdamConfig,
    batches: &mut Rng,
) -> Result<ElementaryWeights> {
    let mut w = init;
    let mut opt = AdamState::new(adam, w.flat().len());
    for i in 0..iters {
        let batch = data::minibatch(problem.train, problem.batch_size, batches)?;
        let tape = Tape::new();
        let wv = tape.param(w.flat().clone());
        let l = tape.constant(lambda.tensor().clone());
        let loss = model::train_loss_var(
            &problem.model,
            wv,
            l,
            tape.constant(batch.x),
            tape.constant(batch.t),
            problem.reg,
        )?;
        let diverged = Error::Divergence {
            phase: "inner training",
            iteration: i + 1,
        };
        if !loss.item()?.is_finite() {
            return Err(diverged);
        }
        let g = tape.backward(loss)?.take(wv).expect("weights are a tape parameter");
        opt.step(w.flat_mut(), g.data()).map_err(|_| diverged)?;
    }
    Ok(w)
}

/// Trains one freshly initialized model per proposed hyperparameter and
/// selects the best by `cfg.select_on`. Failed candidates are kept in the
/// outcome but never selected.
pub fn cross_validation<E: Executor>(problem: &Problem<'_>, cfg: &CvConfig, exec: &E) -> Result<CvOutcome> {
    let lambdas = candidate_lambdas(cfg, problem.hyper_dim())?;
    let init = ElementaryWeights::init(problem.model.clone(), cfg.seed);
    let candidates = exec.map(lambdas.len(), |i| {
        let lambda = lambdas[i].clone();
        let mut batches = rng::stream(cfg.seed, Stream::Candidate(i as u32));
        let fit =
            train_elementary(problem, &lambda, init.clone(), cfg.inner_iters, cfg.adam, &mut batches).and_then(|w| {
                let (train_loss, valid_loss, test_loss) = problem.evaluate(&w, &lambda)?;
                if !(train_loss.is_finite() && valid_loss.is_finite()) {
                    return Err(Error::Divergence {
                        phase: "inner training",
                        iteration: cfg.inner_iters,
                    });
                }
                Ok(CandidateFit {
                    weights: w,
                    train_loss,
                    valid_loss,
                    test_loss,
                })
            });
        Candidate {
            lambda,
            fit,
            grad_evals: cfg.inner_iters as u64,
        }
    });

    let score = |c: &CandidateFit| match cfg.select_on {
        SelectOn::Train => c.train_loss,
        SelectOn::Valid => c.valid_loss,
    };
    let mut best: Option<(usize, f64)> = None;
    let mut records = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if let Ok(fit) = &c.fit {
            if best.is_none_or(|(_, s)| score(fit) < s) {
                best = Some((i, score(fit)));
            }
            records.push(RunRecord {
                phase: Phase::Candidate,
                iteration: i as u64,
                lambda: c.lambda.values().to_vec(),
                train_loss: fit.train_loss,
                valid_loss: fit.valid_loss,
                test_loss: fit.test_loss,
                grad_evals: c.grad_evals,
                seed: cfg.seed,
                clamped: false,
            });
        }
    }
    let best = match best {
        Some((i, _)) => i,
        None => {
            let reason = candidates
                .first()
                .and_then(|c| c.fit.as_ref().err())
                .map(|e| format!("{e}"))
                .unwrap_or_default();
            return Err(Error::Domain(format!(
                "every cross-validation candidate failed: {reason}"
            )));
        }
    };
    Ok(CvOutcome {
        best,
        grad_evals: candidates.iter().map(|c| c.grad_evals).sum(),
        candidates,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ridge::{RidgeConfig, RidgeProblem};
    use crate::exec::Sequential;

    fn small_ridge() -> RidgeProblem {
        RidgeProblem::generate(RidgeConfig {
            features: 3,
            n_train: 8,
            n_valid: 10,
            n_test: 4,
            ..RidgeConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn single_candidate_is_selected() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let cfg = CvConfig {
            candidates: 1,
            inner_iters: 5,
            ..CvConfig::default()
        };
        let out = cross_validation(&p, &cfg, &Sequential).unwrap();
        assert_eq!(out.best, 0);
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.grad_evals, 5);
    }

    #[test]
    fn zero_phase_two_keeps_initial_lambda() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let mut cfg = GlobalConfig {
            phase1_iters: 3,
            phase2_iters: 0,
            ..GlobalConfig::default()
        };
        cfg.common.lambda_init = 0.7;
        let out = hypertrain_global(&p, &cfg).unwrap();
        assert_eq!(out.lambda.values(), &[0.7]);
        assert_eq!(out.grad_evals, 6);
    }

    #[test]
    fn zero_iterations_return_initial_state() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let cfg = SimplifiedConfig {
            iters: 0,
            ..SimplifiedConfig::default()
        };
        let out = hypertrain_simplified(&p, &cfg).unwrap();
        let spec = HypernetSpec::for_model(Arch::Linear, 1, &p.model).unwrap();
        let init = HypernetParams::init(spec, 0);
        assert_eq!(out.lambda.values(), &[0.0]);
        assert_eq!(out.weights, init.emit(&p.model, &HyperPoint::scalar(0.0)).unwrap());
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn local_distribution_needs_positive_variance() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let cfg = JointConfig {
            local_variance: 0.0,
            ..JointConfig::default()
        };
        assert!(matches!(hypertrain_joint(&p, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn global_rejects_local_distribution() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let cfg = GlobalConfig {
            distribution: HyperDistribution::Local { variance: 1.0 },
            ..GlobalConfig::default()
        };
        assert!(hypertrain_global(&p, &cfg).is_err());
    }

    #[test]
    fn lambda_is_clamped_into_the_trust_box() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let mut cfg = JointConfig {
            iters: 40,
            phi_steps: 1,
            ..JointConfig::default()
        };
        cfg.common.lambda_adam = AdamConfig::with_lr(1.0);
        cfg.common.trust_box = (-0.5, 0.5);
        let out = hypertrain_joint(&p, &cfg).unwrap();
        assert!(out.clamp_events > 0);
        assert!(out.records.iter().any(|r| r.clamped));
        assert!(out.lambda.values()[0].abs() <= 0.5);
    }

    #[test]
    fn records_strictly_increase() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let mut cfg = GlobalConfig {
            phase1_iters: 20,
            phase2_iters: 20,
            ..GlobalConfig::default()
        };
        cfg.common.log_every = 3;
        let out = hypertrain_global(&p, &cfg).unwrap();
        assert!(out.records.windows(2).all(|w| w[0].iteration < w[1].iteration));
        assert_eq!(out.records.last().unwrap().iteration, 40);
    }

    #[test]
    fn divergence_names_phase() {
        let rp = small_ridge();
        let p = Problem::new(rp.model_spec().clone(), RegSpec::SCALAR, &rp.train, &rp.valid).unwrap();
        let cfg = CvConfig {
            candidates: 1,
            inner_iters: 50,
            range: (-1e6, -1e6),
            adam: AdamConfig::with_lr(1e300),
            ..CvConfig::default()
        };
        let lambda = candidate_lambdas(&cfg, 1).unwrap().remove(0);
        let init = ElementaryWeights::init(p.model.clone(), 0);
        let mut r = rng::stream(0, Stream::Batch);
        let err = train_elementary(&p, &lambda, init, 50, AdamConfig::with_lr(1e300), &mut r).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Divergence {
                    phase: "inner training",
                    ..
                }
            ),
            "{err:?}"
        );
    }
}
