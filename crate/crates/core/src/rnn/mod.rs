//! Elman recurrent transducer trained on merged alignments.
//!
//! The network reads one input symbol per step and predicts the merged output
//! label of that step from the previous hidden state and the embedding of the
//! symbol about to be read. A spectral-norm penalty on the recurrent weights
//! keeps the hidden-state geometry smooth enough to cluster.

mod checkpoint;
pub mod matrix;
pub mod params;
pub mod spectral;
mod train;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::MergedSequence;
use crate::fst::{SymbolId, SymbolTable};
use matrix::argmax;
pub use params::ModelParams;
use params::{Example, Target};
pub use train::{loss, make_negatives, train};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("unknown symbol id {0}")]
    UnknownSymbol(SymbolId),
    #[error("output label not in the model vocabulary")]
    UnknownLabel,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("empty training data")]
    EmptyData,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Index into an [`OutputVocab`].
pub type LabelId = usize;

/// The distinct merged output strings, in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<SymbolId>>", into = "Vec<Vec<SymbolId>>")]
pub struct OutputVocab {
    labels: Vec<Vec<SymbolId>>,
    index: HashMap<Vec<SymbolId>, LabelId>,
}

impl OutputVocab {
    pub fn from_data(data: &[MergedSequence]) -> Self {
        let mut v = OutputVocab::default();
        for step in data.iter().flat_map(|s| &s.steps) {
            v.intern(&step.output);
        }
        v
    }

    pub fn intern(&mut self, label: &[SymbolId]) -> LabelId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        self.labels.push(label.to_vec());
        self.index.insert(label.to_vec(), self.labels.len() - 1);
        self.labels.len() - 1
    }

    pub fn get(&self, label: &[SymbolId]) -> Option<LabelId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: LabelId) -> &[SymbolId] {
        &self.labels[id]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Vec<SymbolId>] {
        &self.labels
    }
}

impl From<Vec<Vec<SymbolId>>> for OutputVocab {
    fn from(labels: Vec<Vec<SymbolId>>) -> Self {
        let mut v = OutputVocab::default();
        for l in &labels {
            v.intern(l);
        }
        v
    }
}

impl From<OutputVocab> for Vec<Vec<SymbolId>> {
    fn from(v: OutputVocab) -> Self {
        v.labels
    }
}

/// Joint (input symbol, output label) tokens used by the alternative
/// objectives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(SymbolId, LabelId)>", into = "Vec<(SymbolId, LabelId)>")]
pub struct PairVocab {
    pairs: Vec<(SymbolId, LabelId)>,
    index: HashMap<(SymbolId, LabelId), usize>,
}

impl PairVocab {
    pub fn intern(&mut self, pair: (SymbolId, LabelId)) -> usize {
        if let Some(&id) = self.index.get(&pair) {
            return id;
        }
        self.pairs.push(pair);
        self.index.insert(pair, self.pairs.len() - 1);
        self.pairs.len() - 1
    }

    pub fn get(&self, pair: (SymbolId, LabelId)) -> Option<usize> {
        self.index.get(&pair).copied()
    }

    pub fn pair(&self, id: usize) -> (SymbolId, LabelId) {
        self.pairs[id]
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(SymbolId, LabelId)> {
        self.pairs.iter()
    }

    /// Token ids whose input is `input`, in id order.
    pub fn with_input(&self, input: SymbolId) -> impl Iterator<Item = usize> + '_ {
        self.pairs
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.0 == input)
            .map(|(i, _)| i)
    }
}

impl From<Vec<(SymbolId, LabelId)>> for PairVocab {
    fn from(pairs: Vec<(SymbolId, LabelId)>) -> Self {
        let mut v = PairVocab::default();
        for &p in &pairs {
            v.intern(p);
        }
        v
    }
}

impl From<PairVocab> for Vec<(SymbolId, LabelId)> {
    fn from(v: PairVocab) -> Self {
        v.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Predict each step's output label from `h_{t-1}` and the next input.
    Transduction,
    /// Predict the next aligned (input, output) pair from `h_t`.
    LanguageModel,
    /// Accept or reject a whole aligned pair sequence from `h_T`.
    BinaryClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub lambda_sn: f64,
    pub learning_rate: f64,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub objective: Objective,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub use_bias: bool,
    /// Average rather than sum the two spectral norms in the penalty.
    pub average_penalty: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            lambda_sn: 0.1,
            learning_rate: 2e-3,
            dropout: 0.0,
            label_smoothing: 0.1,
            batch_size: 16,
            epochs: 600,
            seed: 0,
            objective: Objective::Transduction,
            weight_decay: 0.01,
            clip_norm: Some(5.0),
            use_bias: true,
            average_penalty: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RnnError> {
        let bad = |what: &str| Err(RnnError::Config(what.to_owned()));
        if self.dim == 0 || self.dim > 1024 {
            return bad("dim must be in 1..=1024");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lambda_sn >= 0.0 && self.lambda_sn.is_finite()) {
            return bad("lambda_sn must be non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// Hidden states `h_0..h_T` of one string and the label on each step.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace {
    pub states: Vec<Vec<f64>>,
    pub labels: Vec<(SymbolId, LabelId)>,
}

/// A trained network together with its symbol tables and vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub objective: Objective,
    pub input_table: SymbolTable,
    pub output_table: SymbolTable,
    pub vocab: OutputVocab,
    /// Token inventory for the alternative objectives; empty for transduction.
    pub pairs: PairVocab,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    fn check_input(&self, s: SymbolId) -> Result<(), RnnError> {
        if s == crate::fst::EPSILON || s as usize >= self.input_table.len() {
            Err(RnnError::UnknownSymbol(s))
        } else {
            Ok(())
        }
    }

    /// Hidden states for a transduction model; `h_0` is the zero vector.
    pub fn forward(&self, input: &[SymbolId]) -> Result<Vec<Vec<f64>>, RnnError> {
        for &s in input {
            self.check_input(s)?;
        }
        match self.objective {
            Objective::Transduction => {
                let tokens: Vec<usize> = input.iter().map(|&s| s as usize).collect();
                Ok(self.params.forward(&tokens))
            }
            _ => Ok(self.trace(input, None)?.states),
        }
    }

    /// Output-label distribution for the step that reads `next` from `h`.
    pub fn predict_step(&self, h: &[f64], next: SymbolId) -> Result<Vec<f64>, RnnError> {
        self.check_input(next)?;
        assert_eq!(
            self.objective,
            Objective::Transduction,
            "predict_step needs a transduction head"
        );
        Ok(self.params.predict_step(h, next as usize))
    }

    /// Runs `input` through the network. With `gold` labels the recurrence
    /// follows them; otherwise each step takes the model's best label.
    pub fn trace(
        &self,
        input: &[SymbolId],
        gold: Option<&[LabelId]>,
    ) -> Result<HiddenTrace, RnnError> {
        for &s in input {
            self.check_input(s)?;
        }
        let p = &self.params;
        let mut states = Vec::with_capacity(input.len() + 1);
        states.push(vec![0.0; p.dim]);
        let mut labels = Vec::with_capacity(input.len());
        for (t, &x) in input.iter().enumerate() {
            let h = &states[t];
            let label = match gold {
                Some(g) => g[t],
                None => self.best_label(h, x)?,
            };
            let next = match self.objective {
                Objective::Transduction => p.step(h, x as usize),
                _ => {
                    let tok = self.pairs.get((x, label)).ok_or(RnnError::UnknownLabel)?;
                    p.step(h, tok)
                }
            };
            labels.push((x, label));
            states.push(next);
        }
        Ok(HiddenTrace { states, labels })
    }

    fn best_label(&self, h: &[f64], x: SymbolId) -> Result<LabelId, RnnError> {
        match self.objective {
            Objective::Transduction => Ok(argmax(&self.params.predict_step(h, x as usize))),
            Objective::LanguageModel => {
                let logits = self.params.logits(h, None);
                self.pairs
                    .with_input(x)
                    .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
                    .map(|tok| self.pairs.pair(tok).1)
                    .ok_or(RnnError::UnknownSymbol(x))
            }
            Objective::BinaryClassification => self
                .pairs
                .with_input(x)
                .map(|tok| {
                    let h2 = self.params.step(h, tok);
                    (tok, self.params.logits(&h2, None)[0])
                })
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(tok, _)| self.pairs.pair(tok).1)
                .ok_or(RnnError::UnknownSymbol(x)),
        }
    }

    /// The model's own transduction of `input`.
    pub fn transduce(&self, input: &[SymbolId]) -> Result<Vec<SymbolId>, RnnError> {
        let tr = self.trace(input, None)?;
        Ok(tr
            .labels
            .iter()
            .flat_map(|&(_, l)| self.vocab.label(l).iter().copied())
            .collect())
    }

    /// Gold label ids of a merged sequence.
    pub fn gold_labels(&self, seq: &MergedSequence) -> Result<Vec<LabelId>, RnnError> {
        seq.steps
            .iter()
            .map(|s| self.vocab.get(&s.output).ok_or(RnnError::UnknownLabel))
            .collect()
    }

    /// Encodes merged sequences as training examples for this model's
    /// objective. Binary examples are all positive.
    pub(crate) fn examples(&self, data: &[MergedSequence]) -> Result<Vec<Example>, RnnError> {
        data.iter()
            .map(|seq| {
                let input = seq.input();
                for &s in &input {
                    self.check_input(s)?;
                }
                let labels = self.gold_labels(seq)?;
                Ok(match self.objective {
                    Objective::Transduction => Example {
                        tokens: input.iter().map(|&s| s as usize).collect(),
                        target: Target::Steps(labels),
                    },
                    _ => {
                        let toks = input
                            .iter()
                            .zip(&labels)
                            .map(|(&x, &l)| self.pairs.get((x, l)).ok_or(RnnError::UnknownLabel))
                            .collect::<Result<Vec<_>, _>>()?;
                        let target = if self.objective == Objective::LanguageModel {
                            Target::Steps(toks.clone())
                        } else {
                            Target::Accept(true)
                        };
                        Example {
                            tokens: toks,
                            target,
                        }
                    }
                })
            })
            .collect()
    }

    /// Per-step accuracy of predicted labels against gold, for transduction
    /// models.
    pub fn step_accuracy(&self, data: &[MergedSequence]) -> Result<f64, RnnError> {
        let (mut right, mut total) = (0usize, 0usize);
        for seq in data {
            let gold = self.gold_labels(seq)?;
            let tr = self.trace(&seq.input(), None)?;
            right += tr
                .labels
                .iter()
                .zip(&gold)
                .filter(|(p, g)| p.1 == **g)
                .count();
            total += gold.len();
        }
        Ok(if total == 0 {
            1.0
        } else {
            right as f64 / total as f64
        })
    }

    /// Accept score in (0, 1) of a merged sequence under a binary model.
    pub fn accept_probability(&self, seq: &MergedSequence) -> Result<f64, RnnError> {
        assert_eq!(self.objective, Objective::BinaryClassification);
        let labels = self.gold_labels(seq)?;
        let tr = self.trace(&seq.input(), Some(&labels))?;
        let h = tr.states.last().expect("h_0");
        let logit = self.params.logits(h, None)[0];
        Ok(1.0 / (1.0 + (-logit).exp()))
    }

    pub fn to_json(&self) -> String {
        checkpoint::to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Model, RnnError> {
        checkpoint::from_json(text)
    }
}
