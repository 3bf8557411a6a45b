use serde::{Deserialize, Serialize};

use super::cv::complement;
use super::metrics::roc_auc;
use super::Result;
use crate::forest::Dataset;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 10_000;

/// `sigma(w . x + b)` after z-scoring with the training means and SDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Row-major design matrix for the objective.
pub struct Design<'a> {
    pub x: &'a [f64],
    pub y: &'a [u8],
    pub d: usize,
}

impl Design<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.x
            .chunks(self.d)
            .map(|row| b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    /// Mean log-loss plus `lambda / 2 |w|^2`; the bias is not penalised.
    pub fn objective(&self, w: &[f64], b: f64, lambda: f64) -> f64 {
        let z = self.margins(w, b);
        let loss: f64 = z
            .iter()
            .zip(self.y)
            .map(|(&z, &y)| softplus(z) - f64::from(y) * z)
            .sum::<f64>()
            / self.n() as f64;
        loss + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Gradient with respect to `(w, b)`; the bias component is last.
    pub fn gradient(&self, w: &[f64], b: f64, lambda: f64) -> Vec<f64> {
        let z = self.margins(w, b);
        let n = self.n() as f64;
        let mut g = vec![0.0; self.d + 1];
        for (row, (&z, &y)) in self.x.chunks(self.d).zip(z.iter().zip(self.y)) {
            let r = sigmoid(z) - f64::from(y);
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[self.d] += r;
        }
        for (j, gj) in g.iter_mut().enumerate() {
            *gj /= n;
            if j < self.d {
                *gj += lambda * w[j];
            }
        }
        g
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Objective values remembered by the non-monotone line search.
const HISTORY: usize = 10;

/// Full-batch gradient descent from zero. Step lengths come from the
/// Barzilai-Borwein rule, halved until the objective falls below the
/// largest of the last few values by the Armijo margin. The comparison
/// allows a few ulps of slack so that roundoff near the optimum cannot
/// stall the search.
pub fn fit_logistic_design(design: &Design, lambda: f64) -> (Vec<f64>, f64, usize, bool) {
    let d = design.d;
    let mut theta = vec![0.0; d + 1];
    let f = |t: &[f64]| design.objective(&t[..d], t[d], lambda);
    let grad = |t: &[f64]| design.gradient(&t[..d], t[d], lambda);
    let mut g = grad(&theta);
    let mut history = std::collections::VecDeque::from([f(&theta)]);
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for it in 0..MAX_ITER {
        let gn = norm(&g);
        if gn <= GRAD_TOL {
            return (theta[..d].to_vec(), theta[d], it, true);
        }
        if let Some((pt, pg)) = &prev {
            let s: Vec<f64> = theta.iter().zip(pt).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            if sy > 0.0 {
                step = s.iter().map(|v| v * v).sum::<f64>() / sy;
            }
        }
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 8.0 * f64::EPSILON * reference.abs().max(1.0);
        let mut t = step;
        let (next, fc) = loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let fc = f(&cand);
            if fc <= reference - 1e-4 * t * gn * gn + slack || t < 1e-20 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        prev = Some((std::mem::replace(&mut theta, next), g));
        if history.len() == HISTORY {
            history.pop_front();
        }
        history.push_back(fc);
        g = grad(&theta);
    }
    let ok = norm(&g) <= GRAD_TOL;
    (theta[..d].to_vec(), theta[d], MAX_ITER, ok)
}

impl LogisticModel {
    /// Fits on `rows` of `data` (z-scored with their own statistics).
    pub fn fit(data: &Dataset, y: &[u8], rows: &[usize], lambda: f64) -> Self {
        let d = data.n_cols;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for c in 0..d {
            let col = data.column(c);
            let m = rows.iter().map(|&r| col[r]).sum::<f64>() / n;
            let v = rows.iter().map(|&r| (col[r] - m).powi(2)).sum::<f64>() / n;
            mean[c] = m;
            scale[c] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        let mut x = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            x.extend((0..d).map(|c| (data.get(r, c) - mean[c]) / scale[c]));
        }
        let yy: Vec<u8> = rows.iter().map(|&r| y[r]).collect();
        let (weights, bias, iterations, converged) =
            fit_logistic_design(&Design { x: &x, y: &yy, d }, lambda);
        if !converged {
            log::warn!("logistic regression stopped after {iterations} iterations without reaching tolerance");
        }
        Self {
            weights,
            bias,
            mean,
            scale,
            iterations,
            converged,
        }
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> f64 {
        let z = self.bias
            + x.iter()
                .enumerate()
                .map(|(c, v)| self.weights[c] * (v - self.mean[c]) / self.scale[c])
                .sum::<f64>();
        sigmoid(z)
    }

    pub fn predict_proba(&self, data: &Dataset, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.predict_proba_row(&data.row(r))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticReport {
    pub fold_auc: Vec<f64>,
    /// Folds whose fit stopped at the iteration cap.
    pub non_converged: Vec<usize>,
}

/// Held-out AUC per test fold; standardisation is fit on the training part.
pub fn logistic_baseline(data: &Dataset, y: &[u8], folds: &[Vec<usize>], lambda: f64) -> Result<LogisticReport> {
    let mut fold_auc = Vec::with_capacity(folds.len());
    let mut non_converged = Vec::new();
    for (k, test) in folds.iter().enumerate() {
        let train = complement(y.len(), test);
        let m = LogisticModel::fit(data, y, &train, lambda);
        if !m.converged {
            non_converged.push(k);
        }
        let yt: Vec<u8> = test.iter().map(|&i| y[i]).collect();
        fold_auc.push(roc_auc(&m.predict_proba(data, test), &yt)?);
    }
    Ok(LogisticReport {
        fold_auc,
        non_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_1d() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let data = Dataset::from_rows(20, 1, &xs, vec!["x".into()]).unwrap();
        let folds = super::super::stratified_kfold(&y, 2, 1).unwrap();
        let r = logistic_baseline(&data, &y, &folds, DEFAULT_LAMBDA).unwrap();
        assert_eq!(r.fold_auc, vec![1.0, 1.0]);
        assert!(r.non_converged.is_empty());
    }

    #[test]
    fn zero_model_is_chance() {
        let y = [0u8, 1, 0, 1];
        let x = [0.0; 4];
        let des = Design { x: &x, y: &y, d: 1 };
        let g = des.gradient(&[0.0], 0.0, 1.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (w, b, _, ok) = fit_logistic_design(&des, 1.0);
        assert!(ok);
        assert_eq!((w[0], b), (0.0, 0.0));
        assert_eq!(roc_auc(&[0.5; 4], &y).unwrap(), 0.5);
    }
}
