//! Finite-difference validation of tape gradients.
//!
//! [`check`] compares reverse-mode gradients of any [`Objective`] with central
//! differences. [`run_suite`] draws random objectives covering every tape
//! operation, elementary MLPs with up to two hidden layers and all three
//! hypernetwork architectures.
//!
//! Errors are norm-wise: `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`,
//! taken over every input jointly. Draws whose ReLU inputs come within
//! `relu_margin` of the kink are redrawn.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hypernet::{emit_var, Arch, HypernetSpec};
use crate::model::{self, ModelSpec, RegSpec};
use crate::rng::{self, Rng, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A scalar function of tensors, recorded on a tape.
pub trait Objective {
    fn eval<'t>(&self, tape: &'t Tape, inputs: &[Var<'t>]) -> Result<Var<'t>>;
}

/// Outcome of one gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_error: f64,
    /// Smallest `|x|` over ReLU inputs at the base point, if any ReLU ran.
    pub relu_margin: Option<f64>,
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|x| x * x).sum::<f64>());
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn value_at<O: Objective + ?Sized>(obj: &O, inputs: &[Tensor]) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    obj.eval(&tape, &vars)?.item()
}

/// Reverse-mode gradient of `obj` against central differences with step `h`,
/// flattened over all inputs in order.
pub fn check<O: Objective + ?Sized>(obj: &O, inputs: &[Tensor], h: f64) -> Result<Comparison> {
    if !(h > 0.0) {
        return Err(Error::domain("finite-difference step must be positive"));
    }
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = obj.eval(&tape, &vars)?;
    let relu_margin = tape.min_abs_relu_input();
    let grads = tape.backward(loss)?;
    let mut analytic = Vec::new();
    for v in &vars {
        analytic.extend_from_slice(grads.get(*v).expect("inputs are parameters").data());
    }

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for k in 0..inputs.len() {
        for i in 0..inputs[k].len() {
            let x = inputs[k].data()[i];
            probe[k].data_mut()[i] = x + h;
            let up = value_at(obj, &probe)?;
            probe[k].data_mut()[i] = x - h;
            let down = value_at(obj, &probe)?;
            probe[k].data_mut()[i] = x;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok(Comparison {
        rel_error: relative_error(&analytic, &numeric),
        analytic,
        numeric,
        relu_margin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteConfig {
    pub cases: usize,
    pub step: f64,
    pub relu_margin: f64,
    /// Redraws allowed per case before giving up.
    pub max_redraws: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            cases: 50,
            step: 1e-5,
            relu_margin: 1e-3,
            max_redraws: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub index: usize,
    pub description: String,
    pub inputs: usize,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
    pub max_rel_error: f64,
    /// Draws rejected for ReLU inputs too close to zero.
    pub redraws: usize,
}

/// Element-wise ops and reductions with scalar broadcasting.
struct Elementwise;

impl Objective for Elementwise {
    fn eval<'t>(&self, _: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
        let (a, b, c, s) = (v[0], v[1], v[2], v[3]);
        let mixed = a.exp().mul(b)?.sub(c.square())?.add(a.relu())?;
        let scaled = s.mul(mixed)?.scale(0.7);
        scaled.sum()?.add(b.mul(c)?.relu().mean()?)
    }
}

/// Matrix products, reshapes and slices.
struct Linear {
    rows: usize,
    inner: usize,
    cols: usize,
}

impl Objective for Linear {
    fn eval<'t>(&self, _: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
        let (a, flat) = (v[0], v[1]);
        let b = flat.slice(0, vec![self.inner, self.cols])?;
        let c = flat.slice(self.inner * self.cols, vec![self.cols, 1])?;
        let prod = a.matmul(b)?.matmul(c)?;
        let col = prod.reshape(vec![self.rows])?;
        col.square()
            .sum()?
            .add(a.reshape(vec![self.rows * self.inner])?.exp().mean()?)
    }
}

/// Training loss of an elementary model, differentiated in weights and λ.
struct Elementary {
    spec: ModelSpec,
    reg: RegSpec,
    x: Tensor,
    t: Tensor,
}

impl Objective for Elementary {
    fn eval<'t>(&self, tape: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
        let x = tape.constant(self.x.clone());
        let t = tape.constant(self.t.clone());
        model::train_loss_var(&self.spec, v[0], v[1], x, t, self.reg)
    }
}

/// Loss through a hypernetwork, differentiated in φ and λ. With `validation`
/// the objective is the prediction loss only, as used for hypergradients.
struct Hyper {
    model: ModelSpec,
    net: HypernetSpec,
    reg: RegSpec,
    validation: bool,
    x: Tensor,
    t: Tensor,
}

impl Objective for Hyper {
    fn eval<'t>(&self, tape: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
        let (phi, lambda) = (v[0], v[1]);
        let w = emit_var(&self.net, phi, lambda)?;
        let x = tape.constant(self.x.clone());
        let t = tape.constant(self.t.clone());
        if self.validation {
            let y = model::forward_var(&self.model, w, x)?;
            model::pred_loss_var(y, t)
        } else {
            model::train_loss_var(&self.model, w, lambda, x, t, self.reg)
        }
    }
}

fn uniform(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(shape, data).expect("matching length")
}

fn random_spec(rng: &mut Rng, hidden_layers: usize) -> ModelSpec {
    let mut sizes = vec![rng.random_range(1..=4)];
    for _ in 0..hidden_layers {
        sizes.push(rng.random_range(2..=4));
    }
    sizes.push(rng.random_range(1..=3));
    ModelSpec::new(sizes).expect("positive sizes")
}

fn random_arch(rng: &mut Rng, which: usize) -> Arch {
    match which % 3 {
        0 => Arch::Linear,
        1 => Arch::Factorized {
            width: rng.random_range(1..=3),
        },
        _ => Arch::Mlp {
            hidden: rng.random_range(2..=4),
        },
    }
}

/// Draws case `index`: an objective, its inputs and a description.
fn draw_case(index: usize, rng: &mut Rng) -> Result<(Box<dyn Objective>, Vec<Tensor>, String)> {
    let batch = rng.random_range(1..=4);
    Ok(match index % 5 {
        0 => {
            let n = rng.random_range(1..=6);
            let inputs = vec![
                uniform(rng, vec![n]),
                uniform(rng, vec![n]),
                uniform(rng, vec![n]),
                uniform(rng, Vec::new()),
            ];
            (Box::new(Elementwise), inputs, format!("elementwise n={n}"))
        }
        1 => {
            let (rows, inner, cols) = (
                rng.random_range(1..=4),
                rng.random_range(1..=4),
                rng.random_range(1..=4),
            );
            let inputs = vec![uniform(rng, vec![rows, inner]), uniform(rng, vec![inner * cols + cols])];
            (
                Box::new(Linear { rows, inner, cols }),
                inputs,
                format!("matmul {rows}x{inner}x{cols}"),
            )
        }
        2 => {
            let spec = random_spec(rng, (index / 5) % 3);
            let reg = if rng.random_bool(0.5) {
                RegSpec::SCALAR
            } else {
                RegSpec::PER_WEIGHT
            };
            let inputs = vec![
                uniform(rng, vec![spec.param_count()]),
                uniform(rng, vec![reg.hyper_dim(&spec)]),
            ];
            let desc = format!("elementary {:?} {:?}", spec.layer_sizes(), reg.mode);
            let obj = Elementary {
                x: uniform(rng, vec![batch, spec.input_dim()]),
                t: uniform(rng, vec![batch, spec.output_dim()]),
                spec,
                reg,
            };
            (Box::new(obj), inputs, desc)
        }
        k => {
            let validation = k == 4;
            let model = random_spec(rng, (index / 5) % 3);
            let reg = if rng.random_bool(0.3) {
                RegSpec::PER_WEIGHT
            } else {
                RegSpec::SCALAR
            };
            let arch = random_arch(rng, index / 5);
            let net = HypernetSpec::for_model(arch, reg.hyper_dim(&model), &model)?;
            let inputs = vec![uniform(rng, vec![net.param_count()]), uniform(rng, vec![net.in_dim])];
            let desc = format!(
                "hypernet {arch:?} -> {:?} {:?}{}",
                model.layer_sizes(),
                reg.mode,
                if validation { " validation" } else { "" }
            );
            let obj = Hyper {
                x: uniform(rng, vec![batch, model.input_dim()]),
                t: uniform(rng, vec![batch, model.output_dim()]),
                model,
                net,
                reg,
                validation,
            };
            (Box::new(obj), inputs, desc)
        }
    })
}

/// Runs `cfg.cases` random gradient checks.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = rng::stream(cfg.seed, Stream::Sampling);
    let mut cases = Vec::with_capacity(cfg.cases);
    let mut redraws = 0;
    for index in 0..cfg.cases {
        let mut attempt = 0;
        loop {
            let (obj, inputs, description) = draw_case(index, &mut rng)?;
            let cmp = check(obj.as_ref(), &inputs, cfg.step)?;
            if cmp.relu_margin.is_some_and(|m| m < cfg.relu_margin) {
                attempt += 1;
                redraws += 1;
                if attempt > cfg.max_redraws {
                    return Err(Error::Domain(format!(
                        "case {index} ({description}) kept drawing ReLU inputs near zero"
                    )));
                }
                continue;
            }
            cases.push(CaseReport {
                index,
                description,
                inputs: cmp.analytic.len(),
                rel_error: cmp.rel_error,
            });
            break;
        }
    }
    let max_rel_error = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(SuiteReport {
        cases,
        max_rel_error,
        redraws,
    })
}

/// Whether a suite exercised every architecture and model depth.
pub fn coverage(report: &SuiteReport) -> (bool, bool) {
    let archs = ["Linear", "Factorized", "Mlp"]
        .iter()
        .all(|a| report.cases.iter().any(|c| c.description.contains(a)));
    let depths = (2..=4).all(|len| {
        report
            .cases
            .iter()
            .any(|c| c.description.starts_with("elementary") && layer_count(&c.description) == Some(len))
    });
    (archs, depths)
}

fn layer_count(desc: &str) -> Option<usize> {
    let start = desc.find('[')?;
    let end = desc.find(']')?;
    Some(desc[start + 1..end].split(',').count())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SumSquares;

    impl Objective for SumSquares {
        fn eval<'t>(&self, _: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
            v[0].square().sum()
        }
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_matches() {
        let cmp = check(&SumSquares, &[Tensor::vector(vec![1.0, -2.0])], 1e-5).unwrap();
        assert_eq!(cmp.analytic, vec![2.0, -4.0]);
        assert!(cmp.rel_error < 1e-9);
        assert_eq!(cmp.relu_margin, None);
    }

    #[test]
    fn suite_is_deterministic() {
        let cfg = SuiteConfig {
            cases: 10,
            ..SuiteConfig::default()
        };
        assert_eq!(run_suite(&cfg).unwrap(), run_suite(&cfg).unwrap());
    }
}
