//! Elman network parameters, forward pass, and backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, softmax, Matrix};
use super::spectral::SpectralEstimate;

/// Weights of a single-layer Elman network and its output head.
///
/// `h_t = tanh(W_h h_{t-1} + W_x e(x_t) + b_h)`. The head reads
/// `concat(h_{t-1}, e(x_t))` (transduction) or `h` alone (other objectives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    /// One row per token.
    pub embed: Matrix,
    pub w_h: Matrix,
    pub w_x: Matrix,
    pub b_h: Vec<f64>,
    pub w_y: Matrix,
    pub b_y: Vec<f64>,
}

impl ModelParams {
    /// PyTorch-style initialization: N(0, 1) embeddings, U(±1/√d) recurrent
    /// weights, U(±1/√fan_in) head.
    pub fn init<R: Rng>(
        n_tokens: usize,
        dim: usize,
        head_in: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Self {
        let k = 1.0 / (dim as f64).sqrt();
        let ky = 1.0 / (head_in as f64).sqrt();
        ModelParams {
            dim,
            embed: Matrix::normal(n_tokens, dim, rng),
            w_h: Matrix::uniform(dim, dim, k, rng),
            w_x: Matrix::uniform(dim, dim, k, rng),
            b_h: Matrix::uniform(1, dim, k, rng).data,
            w_y: Matrix::uniform(n_out, head_in, ky, rng),
            b_y: Matrix::uniform(1, n_out, ky, rng).data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            dim: self.dim,
            embed: Matrix::zeros(self.embed.rows, self.embed.cols),
            w_h: Matrix::zeros(self.dim, self.dim),
            w_x: Matrix::zeros(self.dim, self.dim),
            b_h: vec![0.0; self.dim],
            w_y: Matrix::zeros(self.w_y.rows, self.w_y.cols),
            b_y: vec![0.0; self.b_y.len()],
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.embed.rows
    }

    pub fn n_outputs(&self) -> usize {
        self.w_y.rows
    }

    /// Parameter tensors in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.embed.data,
            &self.w_h.data,
            &self.w_x.data,
            &self.b_h,
            &self.w_y.data,
            &self.b_y,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.embed.data,
            &mut self.w_h.data,
            &mut self.w_x.data,
            &mut self.b_h,
            &mut self.w_y.data,
            &mut self.b_y,
        ]
    }

    pub const TENSOR_NAMES: [&'static str; 6] = ["embed", "w_h", "w_x", "b_h", "w_y", "b_y"];

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// One recurrence step.
    pub fn step(&self, h: &[f64], token: usize) -> Vec<f64> {
        let mut z = self.b_h.clone();
        self.w_h.mul_vec_acc(h, &mut z);
        self.w_x.mul_vec_acc(self.embed.row(token), &mut z);
        z.iter_mut().for_each(|x| *x = x.tanh());
        z
    }

    /// Hidden states `h_0 = 0, h_1, …, h_T`.
    pub fn forward(&self, tokens: &[usize]) -> Vec<Vec<f64>> {
        let mut hs = Vec::with_capacity(tokens.len() + 1);
        hs.push(vec![0.0; self.dim]);
        for &tok in tokens {
            let next = self.step(hs.last().expect("h_0"), tok);
            hs.push(next);
        }
        hs
    }

    /// Head logits for hidden state `h` and, for the transduction head, the
    /// embedding of the next input token.
    pub fn logits(&self, h: &[f64], next: Option<usize>) -> Vec<f64> {
        let mut out = self.b_y.clone();
        let d = self.dim;
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.w_y.row(r);
            *o += dot(&row[..d], h);
            if let Some(tok) = next {
                *o += dot(&row[d..], self.embed.row(tok));
            }
        }
        out
    }

    /// `softmax(W_y · concat(h, e(next)) + b_y)`.
    pub fn predict_step(&self, h: &[f64], next: usize) -> Vec<f64> {
        let mut p = self.logits(h, Some(next));
        softmax(&mut p);
        p
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// What the head predicts for one training sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// One class per step, predicted from `h_{t-1}` (and `e(x_t)` when the
    /// head reads the next input).
    Steps(Vec<usize>),
    /// Sequence-level accept/reject from `h_T`.
    Accept(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub target: Target,
}

impl Example {
    pub fn positions(&self) -> usize {
        match &self.target {
            Target::Steps(ys) => ys.len(),
            Target::Accept(_) => 1,
        }
    }
}

/// Loss settings that affect the gradient.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec {
    pub head_reads_input: bool,
    pub label_smoothing: f64,
    pub lambda_sn: f64,
    pub average_penalty: bool,
}

/// Dropout masks for the hidden state fed to the head, one per position.
pub trait DropoutSource {
    fn mask(&mut self, dim: usize) -> Option<Vec<f64>>;
}

/// No dropout.
pub struct NoDropout;

impl DropoutSource for NoDropout {
    fn mask(&mut self, _dim: usize) -> Option<Vec<f64>> {
        None
    }
}

/// Inverted dropout with keep-probability `1 - rate`.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

impl<R: Rng> DropoutSource for Dropout<'_, R> {
    fn mask(&mut self, dim: usize) -> Option<Vec<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.rate;
        Some(
            (0..dim)
                .map(|_| {
                    if self.rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }
}

/// Mean label-smoothed cross-entropy over all positions plus the spectral
/// penalty, and its gradient. `spectral` holds the singular-vector estimates
/// for `W_h` and `W_x`; they are treated as constants.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[&Example],
    spec: LossSpec,
    spectral: &[SpectralEstimate; 2],
    dropout: &mut dyn DropoutSource,
) -> (f64, ModelParams) {
    let mut grad = params.zeros_like();
    let positions: usize = batch.iter().map(|e| e.positions()).sum();
    let scale = 1.0 / positions.max(1) as f64;
    let d = params.dim;
    let mut total = 0.0;

    for ex in batch {
        let hs = params.forward(&ex.tokens);
        let t_len = ex.tokens.len();
        let mut dh = vec![vec![0.0; d]; t_len + 1];

        match &ex.target {
            Target::Steps(ys) => {
                let n_out = params.n_outputs();
                let eps = spec.label_smoothing;
                for (t, &y) in ys.iter().enumerate() {
                    let mask = dropout.mask(d);
                    let h_in: Vec<f64> = match &mask {
                        Some(m) => hs[t].iter().zip(m).map(|(h, m)| h * m).collect(),
                        None => hs[t].clone(),
                    };
                    let next = spec.head_reads_input.then(|| ex.tokens[t]);
                    let logits = params.logits(&h_in, next);
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                    let mut g = vec![0.0; n_out];
                    for (k, &l) in logits.iter().enumerate() {
                        let q = eps / n_out as f64 + if k == y { 1.0 - eps } else { 0.0 };
                        let logp = l - lse;
                        total -= q * logp;
                        g[k] = (logp.exp() - q) * scale;
                    }
                    // head gradients
                    for (k, &gk) in g.iter().enumerate() {
                        if gk == 0.0 {
                            continue;
                        }
                        grad.b_y[k] += gk;
                        let row = grad.w_y.row_mut(k);
                        super::matrix::axpy(gk, &h_in, &mut row[..d]);
                        if let Some(tok) = next {
                            super::matrix::axpy(gk, params.embed.row(tok), &mut row[d..]);
                        }
                    }
                    let mut d_in = vec![0.0; params.w_y.cols];
                    params.w_y.mul_t_vec_acc(&g, &mut d_in);
                    match &mask {
                        Some(m) => {
                            for i in 0..d {
                                dh[t][i] += d_in[i] * m[i];
                            }
                        }
                        None => super::matrix::axpy(1.0, &d_in[..d], &mut dh[t]),
                    }
                    if let Some(tok) = next {
                        super::matrix::axpy(1.0, &d_in[d..], grad.embed.row_mut(tok));
                    }
                }
            }
            Target::Accept(label) => {
                let mask = dropout.mask(d);
                let h_in: Vec<f64> = match &mask {
                    Some(m) => hs[t_len].iter().zip(m).map(|(h, m)| h * m).collect(),
                    None => hs[t_len].clone(),
                };
                let logit = params.b_y[0] + dot(&params.w_y.row(0)[..d], &h_in);
                let y = if *label { 1.0 } else { 0.0 };
                // softplus form of binary cross-entropy
                let softplus = |x: f64| {
                    if x > 0.0 {
                        x + (-x).exp().ln_1p()
                    } else {
                        x.exp().ln_1p()
                    }
                };
                total += y * softplus(-logit) + (1.0 - y) * softplus(logit);
                let p = 1.0 / (1.0 + (-logit).exp());
                let g = (p - y) * scale;
                grad.b_y[0] += g;
                super::matrix::axpy(g, &h_in, &mut grad.w_y.row_mut(0)[..d]);
                for i in 0..d {
                    let m = mask.as_ref().map_or(1.0, |m| m[i]);
                    dh[t_len][i] += g * params.w_y.get(0, i) * m;
                }
            }
        }

        for t in (1..=t_len).rev() {
            let dz: Vec<f64> = dh[t]
                .iter()
                .zip(&hs[t])
                .map(|(g, h)| g * (1.0 - h * h))
                .collect();
            let tok = ex.tokens[t - 1];
            grad.w_h.add_outer(&dz, &hs[t - 1]);
            grad.w_x.add_outer(&dz, params.embed.row(tok));
            super::matrix::axpy(1.0, &dz, &mut grad.b_h);
            let mut de = vec![0.0; d];
            params.w_x.mul_t_vec_acc(&dz, &mut de);
            super::matrix::axpy(1.0, &de, grad.embed.row_mut(tok));
            let (before, after) = dh.split_at_mut(t);
            let _ = after;
            params.w_h.mul_t_vec_acc(&dz, &mut before[t - 1]);
        }
    }

    let mut loss = total * scale;
    if spec.lambda_sn != 0.0 {
        let weight = if spec.average_penalty {
            spec.lambda_sn / 2.0
        } else {
            spec.lambda_sn
        };
        loss += weight * (spectral[0].evaluate(&params.w_h) + spectral[1].evaluate(&params.w_x));
        spectral[0].add_gradient(weight, &mut grad.w_h);
        spectral[1].add_gradient(weight, &mut grad.w_x);
    }
    (loss, grad)
}
