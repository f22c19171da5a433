//! Synthetic linear regression problems with an analytic best response.
//!
//! The elementary model is linear `d → k` with bias, so for an augmented
//! design `X̃ = [X | 1]` the training loss is
//! `(1/(n·k))·‖X̃·W − T‖² + Σ exp(λ_i)·w_i²`. Setting its gradient to zero
//! gives, per output column `j`,
//!
//! `(X̃ᵀX̃ + n·k·diag(exp(λ_j))) · w_j = X̃ᵀ t_j`
//!
//! where `λ_j` holds the hyperparameters of that column's weights and bias.
//! The factor `n·k` converts the mean-squared-error convention of the model
//! losses to the summed form of the usual ridge closed form.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::hypernet::HyperPoint;
use crate::model::{self, ElementaryWeights, ModelSpec, RegMode, RegSpec};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Generator settings for [`RidgeProblem::generate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgeConfig {
    pub features: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// Standard deviation of each input feature.
    pub feature_scale: f64,
    /// Target noise standard deviation, relative to `feature_scale`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            features: 20,
            n_train: 15,
            n_valid: 100,
            n_test: 100,
            feature_scale: 50.0,
            noise: 3.0,
            seed: 0,
        }
    }
}

/// A regression problem with train/valid/test splits and its closed-form
/// best response `w*(λ)`.
#[derive(Clone, Debug)]
pub struct RidgeProblem {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    spec: ModelSpec,
    gram: DMatrix<f64>,
    xty: DMatrix<f64>,
}

/// Reciprocal condition estimate below which a solve is rejected.
const MIN_RCOND: f64 = 1e-15;

impl RidgeProblem {
    /// Gaussian design `X ~ N(0, scale²)`, weights `w ~ N(0, 1)`, targets
    /// `X·w + N(0, (noise·scale)²)`, all targets divided by the standard
    /// deviation of the training targets.
    pub fn generate(cfg: RidgeConfig) -> Result<Self> {
        if cfg.features == 0 || cfg.n_train == 0 || cfg.n_valid == 0 || cfg.n_test == 0 {
            return Err(Error::Config("ridge problem sizes must be positive".into()));
        }
        let mut rng = rng::stream(cfg.seed, Stream::Data);
        let d = cfg.features;
        let truth: Vec<f64> = (0..d).map(|_| rng::normal(&mut rng, 0.0, 1.0)).collect();
        let mut draw = |n: usize| -> (Vec<f64>, Vec<f64>) {
            let mut x = Vec::with_capacity(n * d);
            let mut t = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..d)
                    .map(|_| rng::normal(&mut rng, 0.0, cfg.feature_scale * cfg.feature_scale))
                    .collect();
                let clean: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
                let sd = cfg.noise * cfg.feature_scale;
                t.push(clean + rng::normal(&mut rng, 0.0, sd * sd));
                x.extend(row);
            }
            (x, t)
        };
        let (xtr, ttr) = draw(cfg.n_train);
        let (xva, tva) = draw(cfg.n_valid);
        let (xte, tte) = draw(cfg.n_test);

        let mean = ttr.iter().sum::<f64>() / ttr.len() as f64;
        let var = ttr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ttr.len() as f64;
        let scale = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        let build = |x: Vec<f64>, t: Vec<f64>, n: usize, split| -> Result<Dataset> {
            Dataset::new(
                Tensor::matrix(n, d, x)?,
                Tensor::matrix(n, 1, t.into_iter().map(|v| v / scale).collect())?,
                split,
            )
        };
        Self::from_splits(
            build(xtr, ttr, cfg.n_train, Split::Train)?,
            build(xva, tva, cfg.n_valid, Split::Valid)?,
            build(xte, tte, cfg.n_test, Split::Test)?,
        )
    }

    pub fn from_splits(train: Dataset, valid: Dataset, test: Dataset) -> Result<Self> {
        let (d, k) = (train.input_dim(), train.output_dim());
        for other in [&valid, &test] {
            if other.input_dim() != d || other.output_dim() != k {
                return Err(Error::shape(
                    "ridge splits",
                    &[d, k],
                    &[other.input_dim(), other.output_dim()],
                ));
            }
        }
        let xa = augmented(&train);
        let t = DMatrix::from_row_slice(train.len(), k, train.t().data());
        let gram = xa.transpose() * &xa;
        let xty = xa.transpose() * t;
        Ok(RidgeProblem {
            spec: ModelSpec::linear(d, k)?,
            train,
            valid,
            test,
            gram,
            xty,
        })
    }

    pub fn model_spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn penalty_scale(&self) -> f64 {
        (self.train.len() * self.train.output_dim()) as f64
    }

    /// Infers scalar or per-weight mode from the dimension of `lambda`.
    fn reg_for(&self, lambda: &HyperPoint) -> Result<RegSpec> {
        if lambda.len() == 1 {
            Ok(RegSpec::SCALAR)
        } else if lambda.len() == self.spec.param_count() {
            Ok(RegSpec::PER_WEIGHT)
        } else {
            Err(Error::shape(
                "ridge lambda",
                &[lambda.len()],
                &[self.spec.param_count()],
            ))
        }
    }

    /// `(row index in the augmented system, flat weight index)` for column `j`.
    fn column_indices(&self, j: usize) -> impl Iterator<Item = (usize, usize)> {
        let (d, k) = (self.spec.input_dim(), self.spec.output_dim());
        (0..=d).map(move |i| (i, if i < d { i * k + j } else { d * k + j }))
    }

    fn factor(&self, diag: &[f64]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mut a = self.gram.clone();
        for (i, v) in diag.iter().enumerate() {
            a[(i, i)] += v;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::IllConditioned("ridge normal equations".into()))?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..l.nrows() {
            lo = lo.min(l[(i, i)].abs());
            hi = hi.max(l[(i, i)].abs());
        }
        if hi == 0.0 || (lo / hi) * (lo / hi) < MIN_RCOND {
            return Err(Error::IllConditioned(alloc::format!(
                "ridge normal equations, rcond ≈ {:e}",
                (lo / hi) * (lo / hi)
            )));
        }
        Ok(chol)
    }

    /// Exact minimizer of the training loss at `lambda` (scalar or per-weight).
    pub fn best_response(&self, lambda: &HyperPoint) -> Result<ElementaryWeights> {
        let reg = self.reg_for(lambda)?;
        let coef = reg.coefficients(&self.spec, lambda)?;
        let c = self.penalty_scale();
        let k = self.spec.output_dim();
        let mut flat = vec![0.0; self.spec.param_count()];
        if reg.mode == RegMode::Scalar {
            let diag = vec![c * coef[0]; self.gram.nrows()];
            let sol = self.factor(&diag)?.solve(&self.xty);
            for j in 0..k {
                for (row, idx) in self.column_indices(j) {
                    flat[idx] = sol[(row, j)];
                }
            }
        } else {
            for j in 0..k {
                let idx: Vec<(usize, usize)> = self.column_indices(j).collect();
                let diag: Vec<f64> = idx.iter().map(|&(_, w)| c * coef[w]).collect();
                let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&(r, _)| self.xty[(r, j)]));
                let sol = self.factor(&diag)?.solve(&rhs);
                for &(row, w) in &idx {
                    flat[w] = sol[row];
                }
            }
        }
        ElementaryWeights::new(self.spec.clone(), flat)
    }

    /// `dw*/dλ` for scalar λ by implicit differentiation:
    /// `−(X̃ᵀX̃ + c·I)⁻¹ · c · w*` with `c = n·k·exp(λ)`.
    pub fn best_response_derivative(&self, lambda: f64) -> Result<Tensor> {
        let w = self.best_response(&HyperPoint::scalar(lambda))?;
        let c = self.penalty_scale() * libm::exp(lambda);
        let chol = self.factor(&vec![c; self.gram.nrows()])?;
        let k = self.spec.output_dim();
        let mut out = vec![0.0; self.spec.param_count()];
        for j in 0..k {
            let idx: Vec<(usize, usize)> = self.column_indices(j).collect();
            let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&(_, wi)| -c * w.flat().data()[wi]));
            let sol = chol.solve(&rhs);
            for &(row, wi) in &idx {
                out[wi] = sol[row];
            }
        }
        Ok(Tensor::vector(out))
    }

    /// Validation prediction loss of the best response.
    pub fn validation_loss(&self, lambda: &HyperPoint) -> Result<f64> {
        model::pred_loss(&self.best_response(lambda)?, &self.valid.batch())
    }

    /// Minimum over `w` of the training loss at `lambda`.
    pub fn optimal_train_loss(&self, lambda: &HyperPoint) -> Result<f64> {
        let reg = self.reg_for(lambda)?;
        model::train_loss(&self.best_response(lambda)?, lambda, &self.train.batch(), reg)
    }

    /// Scalar λ minimizing the validation loss of `w*(λ)`: dense grid over
    /// `[lo, hi]` followed by golden-section refinement around the best point.
    pub fn validation_optimum(&self, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)> {
        if points < 3 || lo >= hi {
            return Err(Error::domain("validation_optimum needs lo < hi and at least 3 points"));
        }
        let f = |l: f64| self.validation_loss(&HyperPoint::scalar(l));
        let step = (hi - lo) / (points - 1) as f64;
        let mut best = (0, f64::INFINITY);
        for i in 0..points {
            let v = f(lo + step * i as f64)?;
            if v < best.1 {
                best = (i, v);
            }
        }
        let center = lo + step * best.0 as f64;
        let (mut a, mut b) = ((center - step).max(lo), (center + step).min(hi));
        let ratio = (libm::sqrt(5.0) - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = f(d)?;
            }
        }
        let (l, v) = if fc < fd { (c, fc) } else { (d, fd) };
        Ok(if v < best.1 { (l, v) } else { (center, best.1) })
    }
}

/// Summed-form ridge solution `(XᵀX + penalty·I)⁻¹ Xᵀ t` without an
/// intercept; `t` may have several columns.
pub fn ridge_solution(x: &Tensor, t: &Tensor, penalty: f64) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    let (nt, k) = t.dims2()?;
    if n != nt {
        return Err(Error::shape("ridge_solution", x.shape(), t.shape()));
    }
    let xm = DMatrix::from_row_slice(n, d, x.data());
    let tm = DMatrix::from_row_slice(n, k, t.data());
    let a = xm.transpose() * &xm + DMatrix::identity(d, d) * penalty;
    let sol = a
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("ridge_solution".into()))?
        .solve(&(xm.transpose() * tm));
    let mut out = Vec::with_capacity(d * k);
    for r in 0..d {
        for c in 0..k {
            out.push(sol[(r, c)]);
        }
    }
    Tensor::matrix(d, k, out)
}

fn augmented(data: &Dataset) -> DMatrix<f64> {
    let (n, d) = (data.len(), data.input_dim());
    DMatrix::from_fn(n, d + 1, |r, c| if c < d { data.x().row(r)[c] } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem() -> RidgeProblem {
        // X = I (2×2), t = e1; the bias column makes the augmented system 3×3.
        let x = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let t = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        let ds = Dataset::new(x, t, Split::Train).unwrap();
        RidgeProblem::from_splits(ds.clone(), ds.clone(), ds).unwrap()
    }

    #[test]
    fn summed_form_identity_case() {
        let x = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let t = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        let w = ridge_solution(&x, &t, 1.0).unwrap();
        assert!((w.data()[0] - 0.5).abs() < 1e-15 && w.data()[1].abs() < 1e-15);
    }

    #[test]
    fn huge_penalty_gives_zero_weights() {
        let p = RidgeProblem::generate(RidgeConfig::default()).unwrap();
        let w = p.best_response(&HyperPoint::scalar(30.0)).unwrap();
        assert!(w.flat().norm() < 1e-8);
    }

    #[test]
    fn identity_design_closed_form() {
        // Augmented gram [[1,0,1],[0,1,1],[1,1,2]] + c·I with c = n·k = 2,
        // rhs X̃ᵀt = [1, 0, 1]; solved by hand: w = [4/15, -1/15, 1/5].
        let p = identity_problem();
        let w = p.best_response(&HyperPoint::scalar(0.0)).unwrap();
        let want = [4.0 / 15.0, -1.0 / 15.0, 1.0 / 5.0];
        for (a, b) in w.flat().data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn per_weight_mode_with_equal_entries_matches_scalar() {
        let p = RidgeProblem::generate(RidgeConfig::default()).unwrap();
        let n = p.model_spec().param_count();
        let a = p.best_response(&HyperPoint::scalar(1.3)).unwrap();
        let b = p.best_response(&HyperPoint::filled(n, 1.3)).unwrap();
        for (x, y) in a.flat().data().iter().zip(b.flat().data()) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn tiny_penalty_on_underdetermined_design_is_rejected() {
        let p = RidgeProblem::generate(RidgeConfig::default()).unwrap();
        assert!(matches!(
            p.best_response(&HyperPoint::scalar(-60.0)),
            Err(Error::IllConditioned(_))
        ));
    }
}
