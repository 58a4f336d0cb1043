//! Linear classifiers used to split conflicting states.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Linear SVM trained by hinge-loss subgradient descent.
    Svm,
    LogisticRegression,
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "svm" => Ok(ClassifierKind::Svm),
            "logreg" | "logistic_regression" | "lr" => Ok(ClassifierKind::LogisticRegression),
            other => Err(format!(
                "unknown classifier `{other}` (expected svm or logreg)"
            )),
        }
    }
}

pub const EPOCHS: usize = 200;
pub const LEARNING_RATE: f64 = 0.1;
pub const L2: f64 = 1e-4;

/// One binary scorer per class (a single scorer for two classes).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    n_classes: usize,
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl LinearClassifier {
    /// Fits on weighted examples with labels in `0..n_classes`, using
    /// full-batch gradient descent. One-vs-rest when `n_classes > 2`.
    pub fn fit(
        kind: ClassifierKind,
        x: &[&[f64]],
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
    ) -> Self {
        assert!(n_classes >= 2);
        let d = x.first().map_or(0, |v| v.len());
        let scorers = if n_classes == 2 { 1 } else { n_classes };
        let mut w = Vec::with_capacity(scorers);
        let mut b = Vec::with_capacity(scorers);
        for c in 0..scorers {
            let positive = if n_classes == 2 { 1 } else { c };
            let targets: Vec<bool> = y.iter().map(|&l| l == positive).collect();
            let (wc, bc) = fit_binary(kind, x, &targets, weights, d);
            w.push(wc);
            b.push(bc);
        }
        LinearClassifier { n_classes, w, b }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let score = |c: usize| self.b[c] + self.w[c].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        if self.n_classes == 2 {
            return usize::from(score(0) > 0.0);
        }
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..self.n_classes {
            let s = score(c);
            if s > best.1 {
                best = (c, s);
            }
        }
        best.0
    }
}

fn fit_binary(
    kind: ClassifierKind,
    x: &[&[f64]],
    y: &[bool],
    weights: &[f64],
    d: usize,
) -> (Vec<f64>, f64) {
    let total: f64 = weights.iter().sum();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..EPOCHS {
        let mut gw: Vec<f64> = w.iter().map(|wi| L2 * wi).collect();
        let mut gb = 0.0;
        for ((xi, &yi), &wt) in x.iter().zip(y).zip(weights) {
            let s = b + w.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>();
            let coef = match kind {
                ClassifierKind::Svm => {
                    let sign = if yi { 1.0 } else { -1.0 };
                    if sign * s < 1.0 {
                        -sign
                    } else {
                        0.0
                    }
                }
                ClassifierKind::LogisticRegression => {
                    1.0 / (1.0 + (-s).exp()) - f64::from(u8::from(yi))
                }
            };
            if coef != 0.0 {
                let c = coef * wt / total;
                gb += c;
                for (g, v) in gw.iter_mut().zip(xi.iter()) {
                    *g += c * v;
                }
            }
        }
        for (wi, g) in w.iter_mut().zip(gw) {
            *wi -= LEARNING_RATE * g;
        }
        b -= LEARNING_RATE * gb;
    }
    (w, b)
}
