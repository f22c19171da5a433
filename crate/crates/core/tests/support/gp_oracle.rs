//! Dense Gaussian-process formulas evaluated with an explicit inverse, used
//! as an independent reference for the Cholesky implementation.

use hypertrain_core::surrogate::{gp_fit, GpHyper, Kernel};

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        log_det += p.abs().ln();
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r != col && f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    (m.into_iter().map(|r| r[n..].to_vec()).collect(), log_det)
}

fn rbf(k: &Kernel, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    k.signal_var * (-d2 / (2.0 * k.length_scale * k.length_scale)).exp()
}

/// Posterior mean, predictive variance (with noise) and log marginal
/// likelihood from the textbook formulas.
pub struct Reference {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub log_likelihood: f64,
}

pub fn reference(inputs: &[Vec<f64>], targets: &[f64], queries: &[Vec<f64>], k: &Kernel, jitter: f64) -> Reference {
    let n = inputs.len();
    // Population deviation per coordinate; constant coordinates keep unit
    // scale. Queries share the training statistics.
    let n_f = n as f64;
    let dim = inputs[0].len();
    let stats: Vec<(f64, f64)> = (0..dim)
        .map(|d| {
            let mean = inputs.iter().map(|x| x[d]).sum::<f64>() / n_f;
            let var = inputs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n_f;
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .collect();
    let z = |x: &Vec<f64>| -> Vec<f64> { x.iter().zip(&stats).map(|(v, (m, s))| (v - m) / s).collect() };
    let xs: Vec<Vec<f64>> = inputs.iter().map(z).collect();
    let qs: Vec<Vec<f64>> = queries.iter().map(z).collect();

    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| rbf(k, &xs[i], &xs[j]) + if i == j { k.noise_var + jitter } else { 0.0 })
                .collect()
        })
        .collect();
    let (inv, log_det) = invert(&gram);
    let apply = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| inv[i][j] * v[j]).sum()).collect() };
    // One round of iterative refinement: the explicit inverse alone loses
    // digits once the Gram matrix is poorly conditioned.
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut x = apply(rhs);
        let residual: Vec<f64> = (0..n)
            .map(|i| rhs[i] - (0..n).map(|j| gram[i][j] * x[j]).sum::<f64>())
            .collect();
        for (a, d) in x.iter_mut().zip(apply(&residual)) {
            *a += d;
        }
        x
    };
    let alpha = solve(targets);
    let fit: f64 = targets.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let log_likelihood = -0.5 * fit - 0.5 * log_det - 0.5 * n_f * (2.0 * std::f64::consts::PI).ln();

    let mut mean = Vec::new();
    let mut var = Vec::new();
    for q in &qs {
        let ks: Vec<f64> = xs.iter().map(|x| rbf(k, x, q)).collect();
        mean.push(ks.iter().zip(&alpha).map(|(a, b)| a * b).sum());
        let quad: f64 = ks.iter().zip(solve(&ks)).map(|(a, b)| a * b).sum();
        var.push(k.signal_var + k.noise_var - quad);
    }
    Reference {
        mean,
        var,
        log_likelihood,
    }
}

/// Largest error of `gp_fit` + `predict` against [`reference`], relative to
/// `max(1, |reference|)`, over mean, variance and log likelihood.
pub fn worst_error(inputs: &[Vec<f64>], targets: &[f64], queries: &[Vec<f64>], hyper: &GpHyper) -> f64 {
    let gp = gp_fit(inputs, targets, hyper).expect("gp fits");
    let r = reference(inputs, targets, queries, gp.kernel(), gp.jitter());
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst = rel(gp.log_marginal_likelihood(), r.log_likelihood);
    for (i, q) in queries.iter().enumerate() {
        let (m, v) = gp.predict(q).expect("prediction");
        worst = worst.max(rel(m, r.mean[i])).max(rel(v, r.var[i].max(0.0)));
    }
    worst
}
