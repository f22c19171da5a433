//! Experiment configuration.
//!
//! Files are flat `key = value` lines. Keys are grouped by a dotted prefix
//! (`data.train_size`, `optim.lr`); a `[section]` header prefixes the keys
//! that follow it. `#` starts a comment. Unknown keys are errors, so typos
//! never silently fall back to defaults.
//!
//! Every subcommand starts from its own defaults (see [`ExperimentConfig::defaults`])
//! and the file overrides individual keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hypertrain_core::algorithms::{Search, SelectOn};
use hypertrain_core::Arch;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GlobalBr,
    Joint,
    Simplified,
    CvBaseline,
    Perweight,
    CompareSurrogates,
    Gradcheck,
    SweepCurve,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::GlobalBr,
        Command::Joint,
        Command::Simplified,
        Command::CvBaseline,
        Command::Perweight,
        Command::CompareSurrogates,
        Command::Gradcheck,
        Command::SweepCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GlobalBr => "global-br",
            Command::Joint => "joint",
            Command::Simplified => "simplified",
            Command::CvBaseline => "cv-baseline",
            Command::Perweight => "perweight",
            Command::CompareSurrogates => "compare-surrogates",
            Command::Gradcheck => "gradcheck",
            Command::SweepCurve => "sweep-curve",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// Synthetic ridge regression with a closed-form best response.
    Ridge,
    /// Image/label pairs in IDX files.
    Idx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegKind {
    Scalar,
    PerWeight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpKind {
    Fixed,
    Mle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding `train-*` and `t10k-*` IDX files.
    pub idx_dir: PathBuf,
    /// Square images are resampled to `image_side × image_side`.
    pub image_side: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    /// Minibatch sizes; 0 means the whole split.
    pub batch_size: usize,
    pub valid_batch_size: usize,
    pub ridge_features: usize,
    pub ridge_feature_scale: f64,
    pub ridge_noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub reg: RegKind,
    /// Expected input width; 0 takes it from the data.
    pub input_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypernetConfig {
    pub arch: Arch,
    pub init_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistConfig {
    pub mean: f64,
    pub global_variance: f64,
    pub local_variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub lambda_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub iters: usize,
    pub phi_steps: usize,
    pub lambda_steps: usize,
    pub hyper_samples: usize,
    pub lambda_init: f64,
    pub trust_lo: f64,
    pub trust_hi: f64,
    pub log_every: usize,
    /// Global hypernetwork steps run before joint or simplified training; 0
    /// starts from a fresh initialization.
    pub warm_start_iters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvSettings {
    pub search: Search,
    pub candidates: usize,
    pub lo: f64,
    pub hi: f64,
    pub inner_iters: usize,
    pub inner_lr: f64,
    pub select_on: SelectOn,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateSettings {
    pub tuples: usize,
    pub held_out: usize,
    pub inner_iters: usize,
    pub inner_lr: f64,
    /// Steps of the fixed-set regression; 0 matches the stochastic run.
    pub fixed_iters: usize,
    pub gp: GpKind,
    pub gp_length_scale: f64,
    pub gp_signal_var: f64,
    pub gp_noise_var: f64,
    pub gp_starts: usize,
    pub gp_iters: usize,
    pub bins: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckSettings {
    pub cases: usize,
    pub step: f64,
    pub relu_margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSettings {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub hypernet: HypernetConfig,
    pub dist: DistConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub cv: CvSettings,
    pub surrogate: SurrogateSettings,
    pub gradcheck: GradcheckSettings,
    pub sweep: SweepSettings,
}

/// The digits fixture shipped with this crate.
pub fn bundled_digits() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/digits")
}

impl ExperimentConfig {
    /// Defaults for one subcommand.
    pub fn defaults(command: Command) -> Self {
        let mut cfg = ExperimentConfig {
            command,
            seed: 0,
            data: DataConfig {
                source: DataSource::Idx,
                idx_dir: bundled_digits(),
                image_side: 28,
                train_size: 10,
                valid_size: 200,
                test_size: 200,
                batch_size: 0,
                valid_batch_size: 0,
                ridge_features: 20,
                ridge_feature_scale: 50.0,
                ridge_noise: 3.0,
            },
            model: ModelConfig {
                hidden: Vec::new(),
                reg: RegKind::Scalar,
                input_dim: 0,
            },
            hypernet: HypernetConfig {
                arch: Arch::Mlp { hidden: 50 },
                init_scale: 1.0,
            },
            dist: DistConfig {
                mean: 0.0,
                global_variance: 1.5,
                local_variance: 1e-5,
            },
            optim: OptimConfig {
                lr: 1e-4,
                lambda_lr: 1e-4,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            train: TrainConfig {
                phase1_iters: 1000,
                phase2_iters: 1000,
                iters: 1000,
                phi_steps: 10,
                lambda_steps: 1,
                hyper_samples: 2,
                lambda_init: 0.0,
                trust_lo: -10.0,
                trust_hi: 10.0,
                log_every: 0,
                warm_start_iters: 0,
            },
            cv: CvSettings {
                search: Search::Grid,
                candidates: 21,
                lo: -6.0,
                hi: 6.0,
                inner_iters: 1000,
                inner_lr: 1e-4,
                select_on: SelectOn::Valid,
            },
            surrogate: SurrogateSettings {
                tuples: 25,
                held_out: 200,
                inner_iters: 1000,
                inner_lr: 1e-2,
                fixed_iters: 0,
                gp: GpKind::Mle,
                gp_length_scale: 1.0,
                gp_signal_var: 1.0,
                gp_noise_var: 1e-10,
                gp_starts: 5,
                gp_iters: 300,
                bins: 20,
            },
            gradcheck: GradcheckSettings {
                cases: 50,
                step: 1e-5,
                relu_margin: 1e-3,
            },
            sweep: SweepSettings {
                lo: -6.0,
                hi: 6.0,
                points: 21,
            },
        };
        let ridge = |cfg: &mut ExperimentConfig| {
            cfg.data.source = DataSource::Ridge;
            cfg.data.train_size = 15;
            cfg.data.valid_size = 100;
            cfg.data.test_size = 100;
            cfg.data.valid_batch_size = 100;
            cfg.hypernet.arch = Arch::Linear;
        };
        match command {
            Command::GlobalBr | Command::CvBaseline | Command::SweepCurve => {
                cfg.train.phase1_iters = 20_000;
                cfg.train.phase2_iters = 1000;
                cfg.optim.lambda_lr = 1e-2;
            }
            Command::Joint => {
                ridge(&mut cfg);
                cfg.hypernet.init_scale = 0.0;
                cfg.dist.local_variance = 1e-3;
                cfg.optim.lambda_lr = 1e-3;
                cfg.train.iters = 20_000;
                cfg.train.warm_start_iters = 20_000;
            }
            Command::Simplified => {
                ridge(&mut cfg);
                cfg.optim.lambda_lr = 1e-3;
                cfg.train.iters = 20_000;
                cfg.train.warm_start_iters = 200_000;
            }
            Command::Perweight => {
                cfg.data.train_size = 1000;
                cfg.data.valid_size = 250;
                cfg.data.test_size = 500;
                cfg.data.batch_size = 100;
                cfg.data.valid_batch_size = 100;
                cfg.model.reg = RegKind::PerWeight;
                cfg.hypernet.arch = Arch::Factorized { width: 10 };
                cfg.optim.lambda_lr = 1e-2;
                cfg.train.iters = 500;
            }
            Command::CompareSurrogates => {
                cfg.data.image_side = 4;
                cfg.data.train_size = 100;
                cfg.data.valid_size = 500;
                cfg.model.reg = RegKind::PerWeight;
                cfg.hypernet.arch = Arch::Linear;
                cfg.hypernet.init_scale = 0.0;
                cfg.dist.mean = -3.0;
            }
            Command::Gradcheck => {}
        }
        cfg
    }

    /// Defaults for `command` overridden by the text of a config file.
    pub fn parse(command: Command, text: &str) -> Result<Self> {
        let mut cfg = Self::defaults(command);
        for (key, (value, line)) in parse_pairs(text)? {
            cfg.set(&key, &value)
                .map_err(|msg| HarnessError::Syntax { line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(command, &text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let d = &mut self.data;
        let t = &mut self.train;
        let s = &mut self.surrogate;
        match key {
            "seed" => self.seed = num(key, value)?,
            "data.source" => {
                d.source = match value {
                    "ridge" => DataSource::Ridge,
                    "idx" => DataSource::Idx,
                    _ => return Err(format!("{key}: expected ridge or idx, got {value:?}")),
                }
            }
            "data.idx_dir" => d.idx_dir = PathBuf::from(value),
            "data.image_side" => d.image_side = num(key, value)?,
            "data.train_size" => d.train_size = num(key, value)?,
            "data.valid_size" => d.valid_size = num(key, value)?,
            "data.test_size" => d.test_size = num(key, value)?,
            "data.batch_size" => d.batch_size = num(key, value)?,
            "data.valid_batch_size" => d.valid_batch_size = num(key, value)?,
            "data.ridge_features" => d.ridge_features = num(key, value)?,
            "data.ridge_feature_scale" => d.ridge_feature_scale = num(key, value)?,
            "data.ridge_noise" => d.ridge_noise = num(key, value)?,
            "model.hidden" => {
                self.model.hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|v| num(key, v))
                    .collect::<Result<_, _>>()?
            }
            "model.reg" => {
                self.model.reg = match value {
                    "scalar" => RegKind::Scalar,
                    "perweight" => RegKind::PerWeight,
                    _ => return Err(format!("{key}: expected scalar or perweight, got {value:?}")),
                }
            }
            "model.input_dim" => self.model.input_dim = num(key, value)?,
            "hypernet.arch" => self.hypernet.arch = parse_arch(value).map_err(|e| format!("{key}: {e}"))?,
            "hypernet.init_scale" => self.hypernet.init_scale = num(key, value)?,
            "dist.mean" => self.dist.mean = num(key, value)?,
            "dist.global_variance" => self.dist.global_variance = num(key, value)?,
            "dist.local_variance" => self.dist.local_variance = num(key, value)?,
            "optim.lr" => self.optim.lr = num(key, value)?,
            "optim.lambda_lr" => self.optim.lambda_lr = num(key, value)?,
            "optim.beta1" => self.optim.beta1 = num(key, value)?,
            "optim.beta2" => self.optim.beta2 = num(key, value)?,
            "optim.eps" => self.optim.eps = num(key, value)?,
            "train.phase1_iters" => t.phase1_iters = num(key, value)?,
            "train.phase2_iters" => t.phase2_iters = num(key, value)?,
            "train.iters" => t.iters = num(key, value)?,
            "train.phi_steps" => t.phi_steps = num(key, value)?,
            "train.lambda_steps" => t.lambda_steps = num(key, value)?,
            "train.hyper_samples" => t.hyper_samples = num(key, value)?,
            "train.lambda_init" => t.lambda_init = num(key, value)?,
            "train.trust_lo" => t.trust_lo = num(key, value)?,
            "train.trust_hi" => t.trust_hi = num(key, value)?,
            "train.log_every" => t.log_every = num(key, value)?,
            "train.warm_start_iters" => t.warm_start_iters = num(key, value)?,
            "cv.search" => {
                self.cv.search = match value {
                    "grid" => Search::Grid,
                    "random" => Search::Random,
                    _ => return Err(format!("{key}: expected grid or random, got {value:?}")),
                }
            }
            "cv.candidates" => self.cv.candidates = num(key, value)?,
            "cv.lo" => self.cv.lo = num(key, value)?,
            "cv.hi" => self.cv.hi = num(key, value)?,
            "cv.inner_iters" => self.cv.inner_iters = num(key, value)?,
            "cv.inner_lr" => self.cv.inner_lr = num(key, value)?,
            "cv.select_on" => self.cv.select_on = parse_select_on(value).map_err(|e| format!("{key}: {e}"))?,
            "surrogate.tuples" => s.tuples = num(key, value)?,
            "surrogate.held_out" => s.held_out = num(key, value)?,
            "surrogate.inner_iters" => s.inner_iters = num(key, value)?,
            "surrogate.inner_lr" => s.inner_lr = num(key, value)?,
            "surrogate.fixed_iters" => s.fixed_iters = num(key, value)?,
            "surrogate.gp" => {
                s.gp = match value {
                    "fixed" => GpKind::Fixed,
                    "mle" => GpKind::Mle,
                    _ => return Err(format!("{key}: expected fixed or mle, got {value:?}")),
                }
            }
            "surrogate.gp_length_scale" => s.gp_length_scale = num(key, value)?,
            "surrogate.gp_signal_var" => s.gp_signal_var = num(key, value)?,
            "surrogate.gp_noise_var" => s.gp_noise_var = num(key, value)?,
            "surrogate.gp_starts" => s.gp_starts = num(key, value)?,
            "surrogate.gp_iters" => s.gp_iters = num(key, value)?,
            "surrogate.bins" => s.bins = num(key, value)?,
            "gradcheck.cases" => self.gradcheck.cases = num(key, value)?,
            "gradcheck.step" => self.gradcheck.step = num(key, value)?,
            "gradcheck.relu_margin" => self.gradcheck.relu_margin = num(key, value)?,
            "sweep.lo" => self.sweep.lo = num(key, value)?,
            "sweep.hi" => self.sweep.hi = num(key, value)?,
            "sweep.points" => self.sweep.points = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Checks internal consistency before any data is loaded.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Invalid(msg));
        let d = &self.data;
        let t = &self.train;
        if d.source == DataSource::Idx {
            if d.image_side == 0 {
                return fail("data.image_side must be positive".into());
            }
            let width = d.image_side * d.image_side;
            if self.model.input_dim != 0 && self.model.input_dim != width {
                return fail(format!(
                    "model.input_dim = {} disagrees with data.image_side = {} ({width} pixels)",
                    self.model.input_dim, d.image_side
                ));
            }
        } else if self.model.input_dim != 0 && self.model.input_dim != d.ridge_features {
            return fail(format!(
                "model.input_dim = {} disagrees with data.ridge_features = {}",
                self.model.input_dim, d.ridge_features
            ));
        }
        if d.source == DataSource::Ridge && !self.model.hidden.is_empty() {
            return fail(format!(
                "model.hidden = {:?} needs data.source = idx; the ridge oracle covers linear models only",
                self.model.hidden
            ));
        }
        if d.train_size == 0 || d.valid_size == 0 {
            return fail("data.train_size and data.valid_size must be positive".into());
        }
        if d.batch_size > d.train_size {
            return fail(format!(
                "data.batch_size = {} exceeds data.train_size = {}",
                d.batch_size, d.train_size
            ));
        }
        if d.valid_batch_size > d.valid_size {
            return fail(format!(
                "data.valid_batch_size = {} exceeds data.valid_size = {}",
                d.valid_batch_size, d.valid_size
            ));
        }
        if self.model.hidden.contains(&0) {
            return fail("model.hidden widths must be positive".into());
        }
        if let Arch::Factorized { width: 0 } | Arch::Mlp { hidden: 0 } = self.hypernet.arch {
            return fail("hypernet.arch width must be positive".into());
        }
        for (name, v) in [
            ("dist.global_variance", self.dist.global_variance),
            ("dist.local_variance", self.dist.local_variance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(t.trust_lo < t.trust_hi) {
            return fail(format!(
                "train.trust_lo = {} must be below train.trust_hi = {}",
                t.trust_lo, t.trust_hi
            ));
        }
        if !(t.trust_lo..=t.trust_hi).contains(&t.lambda_init) {
            return fail(format!(
                "train.lambda_init = {} lies outside train.trust_lo..train.trust_hi = [{}, {}]",
                t.lambda_init, t.trust_lo, t.trust_hi
            ));
        }
        if t.hyper_samples == 0 || t.phi_steps == 0 || t.lambda_steps == 0 {
            return fail("train.hyper_samples, train.phi_steps and train.lambda_steps must be positive".into());
        }
        if !(self.cv.lo <= self.cv.hi) {
            return fail(format!("cv.lo = {} must not exceed cv.hi = {}", self.cv.lo, self.cv.hi));
        }
        if self.cv.candidates == 0 {
            return fail("cv.candidates must be positive".into());
        }
        if !(self.sweep.lo <= self.sweep.hi) || self.sweep.points == 0 {
            return fail(format!(
                "sweep.lo = {} must not exceed sweep.hi = {} and sweep.points must be positive",
                self.sweep.lo, self.sweep.hi
            ));
        }
        let s = &self.surrogate;
        if s.tuples < 2 || s.held_out == 0 {
            return fail("surrogate.tuples must be at least 2 and surrogate.held_out positive".into());
        }
        if s.tuples * s.inner_iters < t.hyper_samples {
            return fail(format!(
                "surrogate.tuples × surrogate.inner_iters = {} buys less than one step of train.hyper_samples = {}",
                s.tuples * s.inner_iters,
                t.hyper_samples
            ));
        }
        let o = &self.optim;
        if !(o.lr > 0.0 && o.lambda_lr > 0.0 && o.eps > 0.0)
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
        {
            return fail(format!("invalid optimizer settings {o:?}"));
        }
        if !(self.gradcheck.step > 0.0) || self.gradcheck.cases == 0 {
            return fail("gradcheck.step and gradcheck.cases must be positive".into());
        }
        Ok(())
    }

    /// Every key with its current value, sorted by key.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let d = &self.data;
        let t = &self.train;
        let s = &self.surrogate;
        let mut m = BTreeMap::new();
        let source = match d.source {
            DataSource::Ridge => "ridge",
            DataSource::Idx => "idx",
        };
        let reg = match self.model.reg {
            RegKind::Scalar => "scalar",
            RegKind::PerWeight => "perweight",
        };
        let hidden: Vec<String> = self.model.hidden.iter().map(usize::to_string).collect();
        let search = match self.cv.search {
            Search::Grid => "grid",
            Search::Random => "random",
        };
        let select = match self.cv.select_on {
            SelectOn::Train => "train",
            SelectOn::Valid => "valid",
        };
        let gp = match s.gp {
            GpKind::Fixed => "fixed",
            GpKind::Mle => "mle",
        };
        let pairs: Vec<(&'static str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data.source", source.into()),
            ("data.idx_dir", d.idx_dir.display().to_string()),
            ("data.image_side", d.image_side.to_string()),
            ("data.train_size", d.train_size.to_string()),
            ("data.valid_size", d.valid_size.to_string()),
            ("data.test_size", d.test_size.to_string()),
            ("data.batch_size", d.batch_size.to_string()),
            ("data.valid_batch_size", d.valid_batch_size.to_string()),
            ("data.ridge_features", d.ridge_features.to_string()),
            ("data.ridge_feature_scale", d.ridge_feature_scale.to_string()),
            ("data.ridge_noise", d.ridge_noise.to_string()),
            ("model.hidden", hidden.join(",")),
            ("model.reg", reg.into()),
            ("model.input_dim", self.model.input_dim.to_string()),
            ("hypernet.arch", ArchName(self.hypernet.arch).to_string()),
            ("hypernet.init_scale", self.hypernet.init_scale.to_string()),
            ("dist.mean", self.dist.mean.to_string()),
            ("dist.global_variance", self.dist.global_variance.to_string()),
            ("dist.local_variance", self.dist.local_variance.to_string()),
            ("optim.lr", self.optim.lr.to_string()),
            ("optim.lambda_lr", self.optim.lambda_lr.to_string()),
            ("optim.beta1", self.optim.beta1.to_string()),
            ("optim.beta2", self.optim.beta2.to_string()),
            ("optim.eps", self.optim.eps.to_string()),
            ("train.phase1_iters", t.phase1_iters.to_string()),
            ("train.phase2_iters", t.phase2_iters.to_string()),
            ("train.iters", t.iters.to_string()),
            ("train.phi_steps", t.phi_steps.to_string()),
            ("train.lambda_steps", t.lambda_steps.to_string()),
            ("train.hyper_samples", t.hyper_samples.to_string()),
            ("train.lambda_init", t.lambda_init.to_string()),
            ("train.trust_lo", t.trust_lo.to_string()),
            ("train.trust_hi", t.trust_hi.to_string()),
            ("train.log_every", t.log_every.to_string()),
            ("train.warm_start_iters", t.warm_start_iters.to_string()),
            ("cv.search", search.into()),
            ("cv.candidates", self.cv.candidates.to_string()),
            ("cv.lo", self.cv.lo.to_string()),
            ("cv.hi", self.cv.hi.to_string()),
            ("cv.inner_iters", self.cv.inner_iters.to_string()),
            ("cv.inner_lr", self.cv.inner_lr.to_string()),
            ("cv.select_on", select.into()),
            ("surrogate.tuples", s.tuples.to_string()),
            ("surrogate.held_out", s.held_out.to_string()),
            ("surrogate.inner_iters", s.inner_iters.to_string()),
            ("surrogate.inner_lr", s.inner_lr.to_string()),
            ("surrogate.fixed_iters", s.fixed_iters.to_string()),
            ("surrogate.gp", gp.into()),
            ("surrogate.gp_length_scale", s.gp_length_scale.to_string()),
            ("surrogate.gp_signal_var", s.gp_signal_var.to_string()),
            ("surrogate.gp_noise_var", s.gp_noise_var.to_string()),
            ("surrogate.gp_starts", s.gp_starts.to_string()),
            ("surrogate.gp_iters", s.gp_iters.to_string()),
            ("surrogate.bins", s.bins.to_string()),
            ("gradcheck.cases", self.gradcheck.cases.to_string()),
            ("gradcheck.step", self.gradcheck.step.to_string()),
            ("gradcheck.relu_margin", self.gradcheck.relu_margin.to_string()),
            ("sweep.lo", self.sweep.lo.to_string()),
            ("sweep.hi", self.sweep.hi.to_string()),
            ("sweep.points", self.sweep.points.to_string()),
        ];
        m.extend(pairs);
        m
    }
}

/// Renders an architecture the way `hypernet.arch` parses it.
pub struct ArchName(pub Arch);

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Arch::Linear => f.write_str("linear"),
            Arch::Factorized { width } => write!(f, "factorized({width})"),
            Arch::Mlp { hidden } => write!(f, "mlp({hidden})"),
        }
    }
}

/// `linear`, `factorized(k)` or `mlp(h)`.
pub fn parse_arch(text: &str) -> Result<Arch, String> {
    let text = text.trim();
    if text == "linear" {
        return Ok(Arch::Linear);
    }
    let width = |prefix: &str| -> Option<Result<usize, String>> {
        let inner = text.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
        Some(inner.trim().parse().map_err(|_| format!("bad width in {text:?}")))
    };
    if let Some(w) = width("factorized") {
        return Ok(Arch::Factorized { width: w? });
    }
    if let Some(w) = width("mlp") {
        return Ok(Arch::Mlp { hidden: w? });
    }
    Err(format!("expected linear, factorized(k) or mlp(h), got {text:?}"))
}

pub fn parse_select_on(text: &str) -> Result<SelectOn, String> {
    match text {
        "train" => Ok(SelectOn::Train),
        "valid" => Ok(SelectOn::Valid),
        _ => Err(format!("expected train or valid, got {text:?}")),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?} as {}", std::any::type_name::<T>()))
}

/// `(key, (value, line))` in file order, with section prefixes applied.
fn parse_pairs(text: &str) -> Result<Vec<(String, (String, usize))>> {
    let mut out: Vec<(String, (String, usize))> = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(HarnessError::Syntax {
                line,
                msg: format!("expected `key = value`, got {body:?}"),
            });
        };
        let key = key.trim();
        let key = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if let Some((_, (_, first))) = out.iter().find(|(k, _)| *k == key) {
            return Err(HarnessError::Syntax {
                line,
                msg: format!("{key} already set on line {first}"),
            });
        }
        out.push((key, (value.trim().to_string(), line)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let cfg = ExperimentConfig::parse(
            Command::Joint,
            "seed = 4\n[optim]\nlr = 0.01 # faster\n\n[train]\niters = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.optim.lr, 0.01);
        assert_eq!(cfg.train.iters, 7);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::parse(Command::Joint, "seed = 1\noptim.lrr = 3\n").unwrap_err();
        assert!(matches!(err, HarnessError::Syntax { line: 2, .. }), "{err}");
        let err = ExperimentConfig::parse(Command::Joint, "seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(ExperimentConfig::parse(Command::Joint, "just words").is_err());
    }

    #[test]
    fn arch_round_trip() {
        for arch in [Arch::Linear, Arch::Factorized { width: 10 }, Arch::Mlp { hidden: 50 }] {
            assert_eq!(parse_arch(&ArchName(arch).to_string()).unwrap(), arch);
        }
        assert!(parse_arch("mlp(x)").is_err());
        assert!(parse_arch("conv").is_err());
    }

    #[test]
    fn every_default_validates_and_every_entry_parses_back() {
        for command in Command::ALL {
            let cfg = ExperimentConfig::defaults(command);
            cfg.validate().unwrap();
            let text: String = cfg.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
            assert_eq!(ExperimentConfig::parse(command, &text).unwrap(), cfg);
        }
    }
}
