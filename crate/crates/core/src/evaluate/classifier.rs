//! Linear genre classifiers: L2-regularised multinomial logistic regression
//! (default) and one-vs-rest squared-hinge linear SVM, both trained with
//! L-BFGS on optionally standardised features.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logistic,
    LinearSvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    /// Weight of `λ/2 ‖W‖²` against the mean per-example loss. Biases are
    /// not penalised.
    pub l2: f64,
    /// Centre and scale features with training-set statistics.
    pub standardize: bool,
    pub grad_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Logistic,
            l2: 1e-2,
            standardize: true,
            grad_tolerance: 1e-6,
            max_iterations: 500,
        }
    }
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    inv_scale: Vec<f64>,
}

impl Standardizer {
    /// Constant features are centred but left unscaled.
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, inv_scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            inv_scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// `argmax_k (W_k · z(x) + b_k)`, lowest index on ties.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    kind: ClassifierKind,
    num_classes: usize,
    dim: usize,
    /// Row-major `num_classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    standardizer: Standardizer,
}

impl LinearClassifier {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Weights of class `k` in standardised feature space.
    pub fn weights(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "classifier expects {} features, got {}",
                self.dim,
                x.len()
            )));
        }
        let z = self.standardizer.apply(x);
        Ok((0..self.num_classes)
            .map(|k| self.bias[k] + dot(self.weights(k), &z))
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let s = self.scores(x)?;
        Ok(argmax(&s))
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in s.iter().enumerate() {
        if v > s[best] {
            best = k;
        }
    }
    best
}

/// Fits a linear classifier on rows `x` with labels `y` in `0..num_classes`.
pub fn train_classifier(
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
    cfg: &ClassifierConfig,
) -> Result<LinearClassifier> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} feature rows but {} labels", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("feature rows have differing lengths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{num_classes}")));
    }
    let mut present = vec![false; num_classes];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidArgument(
            "classifier training needs at least two genres".into(),
        ));
    }
    if cfg.l2 < 0.0 || !cfg.l2.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid l2 weight {}", cfg.l2)));
    }
    let standardizer = if cfg.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(dim)
    };
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let lb = LbfgsConfig {
        grad_tolerance: cfg.grad_tolerance,
        max_iterations: cfg.max_iterations,
        ..LbfgsConfig::default()
    };
    let (weights, bias) = match cfg.kind {
        ClassifierKind::Logistic => fit_logistic(&z, y, num_classes, cfg.l2, &lb),
        ClassifierKind::LinearSvm => fit_svm(&z, y, num_classes, cfg.l2, &lb),
    };
    Ok(LinearClassifier {
        kind: cfg.kind,
        num_classes,
        dim,
        weights,
        bias,
        standardizer,
    })
}

fn fit_logistic(z: &[Vec<f64>], y: &[usize], k: usize, l2: f64, lb: &LbfgsConfig) -> (Vec<f64>, Vec<f64>) {
    let d = z.first().map_or(0, Vec::len);
    let n = z.len() as f64;
    let wlen = k * d;
    let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let (w, b) = theta.split_at(wlen);
        grad.fill(0.0);
        let mut loss = 0.0;
        let mut s = vec![0.0; k];
        for (row, &label) in z.iter().zip(y) {
            for c in 0..k {
                s[c] = b[c] + dot(&w[c * d..(c + 1) * d], row);
            }
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - s[label];
            let (gw, gb) = grad.split_at_mut(wlen);
            for c in 0..k {
                let p = (s[c] - lse).exp() - if c == label { 1.0 } else { 0.0 };
                gb[c] += p / n;
                if p != 0.0 {
                    let scale = p / n;
                    gw[c * d..(c + 1) * d].iter_mut().zip(row).for_each(|(g, v)| *g += scale * v);
                }
            }
        }
        let mut penalty = 0.0;
        for (g, wi) in grad[..wlen].iter_mut().zip(w) {
            *g += l2 * wi;
            penalty += wi * wi;
        }
        loss / n + 0.5 * l2 * penalty
    };
    let r = minimize(objective, vec![0.0; wlen + k], lb);
    debug!(
        "logistic regression: {} iterations, converged {}, objective {:.6}",
        r.iterations, r.converged, r.value
    );
    let mut x = r.x;
    let b = x.split_off(wlen);
    (x, b)
}

fn fit_svm(z: &[Vec<f64>], y: &[usize], k: usize, l2: f64, lb: &LbfgsConfig) -> (Vec<f64>, Vec<f64>) {
    let d = z.first().map_or(0, Vec::len);
    let n = z.len() as f64;
    let per_class: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|c| {
            let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
                let (w, b) = theta.split_at(d);
                grad.fill(0.0);
                let mut loss = 0.0;
                for (row, &label) in z.iter().zip(y) {
                    let t = if label == c { 1.0 } else { -1.0 };
                    let margin = 1.0 - t * (b[0] + dot(w, row));
                    if margin > 0.0 {
                        loss += margin * margin;
                        let coef = -2.0 * margin * t / n;
                        grad[d] += coef;
                        grad[..d].iter_mut().zip(row).for_each(|(g, v)| *g += coef * v);
                    }
                }
                let mut penalty = 0.0;
                for (g, wi) in grad[..d].iter_mut().zip(w) {
                    *g += l2 * wi;
                    penalty += wi * wi;
                }
                loss / n + 0.5 * l2 * penalty
            };
            minimize(objective, vec![0.0; d + 1], lb).x
        })
        .collect();
    let mut weights = Vec::with_capacity(k * d);
    let mut bias = Vec::with_capacity(k);
    for mut theta in per_class {
        bias.push(theta[d]);
        theta.truncate(d);
        weights.extend(theta);
    }
    (weights, bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_toy_is_fit_exactly() {
        let x = vec![vec![0.0, 1.0], vec![0.2, 0.9], vec![1.0, 0.0], vec![0.8, 0.1]];
        let y = vec![0, 0, 1, 1];
        for kind in [ClassifierKind::Logistic, ClassifierKind::LinearSvm] {
            let cfg = ClassifierConfig {
                kind,
                ..ClassifierConfig::default()
            };
            let clf = train_classifier(&x, &y, 2, &cfg).unwrap();
            assert_eq!(clf.predict_all(&x).unwrap(), y);
        }
    }

    #[test]
    fn constant_features_predict_majority() {
        let x = vec![vec![1.0, 2.0]; 5];
        let y = vec![1, 0, 1, 2, 1];
        let clf = train_classifier(&x, &y, 3, &ClassifierConfig::default()).unwrap();
        assert!(clf.predict_all(&x).unwrap().iter().all(|&p| p == 1));
    }

    #[test]
    fn single_genre_is_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(train_classifier(&x, &[0, 0], 2, &ClassifierConfig::default()).is_err());
        assert!(train_classifier(&x, &[0], 2, &ClassifierConfig::default()).is_err());
    }

    #[test]
    fn vanishing_penalty_matches_closed_form() {
        // Classes A = 0 at x ∈ {-1, 2}, B = 1 at x ∈ {-2, 1}. The mirror
        // symmetry forces a zero intercept and the slope solves
        // 2σ(-2w) = σ(w).
        let x = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
        let y = vec![1, 0, 1, 0];
        let cfg = ClassifierConfig {
            l2: 1e-10,
            standardize: false,
            grad_tolerance: 1e-10,
            max_iterations: 1000,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&x, &y, 2, &cfg).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * sig(-2.0 * mid) > sig(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = clf.weights(0)[0] - clf.weights(1)[0];
        let b = clf.bias()[0] - clf.bias()[1];
        assert!((w - lo).abs() < 1e-5, "{w} vs {lo}");
        assert!(b.abs() < 1e-5);
    }
}
