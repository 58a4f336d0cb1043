use rand::seq::SliceRandom;
use rand::Rng;

use super::params::{loss_and_grad, Dropout, Example, LossSpec, ModelParams, NoDropout, Target};
use super::spectral::PowerIteration;
use super::{Model, Objective, OutputVocab, PairVocab, RnnError, TrainConfig};
use crate::align::{MergedSequence, MergedStep};
use crate::fst::{SymbolId, SymbolTable, EPSILON};
use crate::rng::substream;

struct AdamW {
    m: ModelParams,
    v: ModelParams,
    t: i32,
    lr: f64,
    weight_decay: f64,
}

impl AdamW {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ModelParams, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            lr,
            weight_decay,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, frozen: &[bool; 6]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let decay = 1.0 - self.lr * self.weight_decay;
        let (lr, b1, b2) = (self.lr, Self::BETA1, Self::BETA2);
        let ps = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let gs = grad.tensors();
        for (k, (((p, m), v), g)) in ps.into_iter().zip(ms).zip(vs).zip(gs).enumerate() {
            if frozen[k] {
                continue;
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] *= decay;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Builds the untrained model for `data`: vocabularies and initial weights.
fn init_model(
    data: &[MergedSequence],
    negatives: &[MergedSequence],
    input_table: &SymbolTable,
    output_table: &SymbolTable,
    cfg: &TrainConfig,
) -> Model {
    let mut vocab = OutputVocab::from_data(data);
    let mut pairs = PairVocab::default();
    if cfg.objective != Objective::Transduction {
        for step in data.iter().chain(negatives).flat_map(|s| &s.steps) {
            let l = vocab.intern(&step.output);
            pairs.intern((step.input, l));
        }
    }
    let d = cfg.dim;
    let (n_tokens, head_in, n_out) = match cfg.objective {
        Objective::Transduction => (input_table.len(), 2 * d, vocab.len()),
        Objective::LanguageModel => (pairs.len(), d, pairs.len()),
        Objective::BinaryClassification => (pairs.len(), d, 1),
    };
    let mut rng = substream(cfg.seed, "init");
    let mut params = ModelParams::init(n_tokens, d, head_in, n_out, &mut rng);
    if !cfg.use_bias {
        params.b_h.iter_mut().for_each(|x| *x = 0.0);
        params.b_y.iter_mut().for_each(|x| *x = 0.0);
    }
    Model {
        params,
        objective: cfg.objective,
        input_table: input_table.clone(),
        output_table: output_table.clone(),
        vocab,
        pairs,
    }
}

/// One negative per sequence, made by replacing a random output symbol with
/// a different one. Sequences with no output, or a one-symbol output
/// alphabet, get no negative.
pub fn make_negatives<R: Rng>(
    data: &[MergedSequence],
    output_table: &SymbolTable,
    rng: &mut R,
) -> Vec<MergedSequence> {
    let alphabet: Vec<SymbolId> = output_table.iter().map(|(id, _)| id).collect();
    let mut out = Vec::new();
    for seq in data {
        let positions: Vec<(usize, usize)> = seq
            .steps
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.output.len()).map(move |j| (i, j)))
            .collect();
        if positions.is_empty() || alphabet.len() < 2 {
            continue;
        }
        let (i, j) = positions[rng.gen_range(0..positions.len())];
        let old = seq.steps[i].output[j];
        let choices: Vec<SymbolId> = alphabet
            .iter()
            .copied()
            .filter(|&s| s != old && s != EPSILON)
            .collect();
        let mut neg = seq.clone();
        neg.steps[i] = MergedStep {
            input: seq.steps[i].input,
            output: {
                let mut o = seq.steps[i].output.clone();
                o[j] = choices[rng.gen_range(0..choices.len())];
                o
            },
        };
        out.push(neg);
    }
    out
}

fn loss_spec(cfg: &TrainConfig) -> LossSpec {
    LossSpec {
        head_reads_input: cfg.objective == Objective::Transduction,
        label_smoothing: if cfg.objective == Objective::BinaryClassification {
            0.0
        } else {
            cfg.label_smoothing
        },
        lambda_sn: cfg.lambda_sn,
        average_penalty: cfg.average_penalty,
    }
}

/// Trains a model on merged sequences with minibatch AdamW and full BPTT.
/// Deterministic given `cfg.seed`; returns the final-epoch parameters.
pub fn train(
    data: &[MergedSequence],
    input_table: &SymbolTable,
    output_table: &SymbolTable,
    cfg: &TrainConfig,
) -> Result<Model, RnnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(RnnError::EmptyData);
    }
    let negatives = if cfg.objective == Objective::BinaryClassification {
        make_negatives(data, output_table, &mut substream(cfg.seed, "negatives"))
    } else {
        Vec::new()
    };
    let mut model = init_model(data, &negatives, input_table, output_table, cfg);
    let mut examples = model.examples(data)?;
    for neg in model.examples(&negatives)? {
        examples.push(Example {
            target: Target::Accept(false),
            ..neg
        });
    }

    let spec = loss_spec(cfg);
    let frozen = [false, false, false, !cfg.use_bias, false, !cfg.use_bias];
    let mut opt = AdamW::new(&model.params, cfg.learning_rate, cfg.weight_decay);
    let mut pi_h = PowerIteration::new(cfg.dim, cfg.seed);
    let mut pi_x = PowerIteration::new(cfg.dim, cfg.seed.wrapping_add(1));
    let mut shuffle = substream(cfg.seed, "shuffle");
    let mut drop_rng = substream(cfg.seed, "dropout");
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let est = [
                pi_h.estimate(&model.params.w_h, 1),
                pi_x.estimate(&model.params.w_x, 1),
            ];
            let (loss, mut grad) = if cfg.dropout > 0.0 {
                let mut d = Dropout {
                    rate: cfg.dropout,
                    rng: &mut drop_rng,
                };
                loss_and_grad(&model.params, &batch, spec, &est, &mut d)
            } else {
                loss_and_grad(&model.params, &batch, spec, &est, &mut NoDropout)
            };
            if let Some(clip) = cfg.clip_norm {
                let n = grad.global_norm();
                if n > clip {
                    grad.scale(clip / n);
                }
            }
            opt.step(&mut model.params, &grad, &frozen);
            epoch_loss += loss * batch.len() as f64;
        }
        if epoch % 50 == 0 || epoch + 1 == cfg.epochs {
            log::debug!(
                "epoch {epoch}: loss {:.5}",
                epoch_loss / examples.len() as f64
            );
        }
    }
    Ok(model)
}

/// Objective value of `model` on `batch`: mean label-smoothed cross-entropy
/// plus the spectral penalty with well-converged norm estimates.
pub fn loss(model: &Model, batch: &[MergedSequence], cfg: &TrainConfig) -> Result<f64, RnnError> {
    let examples = model.examples(batch)?;
    let refs: Vec<&Example> = examples.iter().collect();
    let est = [
        PowerIteration::new(model.dim(), cfg.seed).estimate(&model.params.w_h, 100),
        PowerIteration::new(model.dim(), cfg.seed.wrapping_add(1)).estimate(&model.params.w_x, 100),
    ];
    let spec = loss_spec(&TrainConfig {
        objective: model.objective,
        ..cfg.clone()
    });
    Ok(loss_and_grad(&model.params, &refs, spec, &est, &mut NoDropout).0)
}
