//! Transducer extraction from recurrent hidden states.
//!
//! Hidden states over training and synthetic inputs become activation
//! records. Records are clustered into states, record-to-record edges become
//! labeled transitions, and conflicting transitions are resolved by
//! splitting states with a linear classifier. The result is pruned and
//! minimized.

mod automaton;
mod classifier;
mod kmeans;

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::MergedSequence;
use crate::fst::{FstError, RawTransition, StateId, SymbolId, Transducer};
use crate::rnn::{HiddenTrace, LabelId, Model, RnnError};

pub use automaton::{cluster, resolve_transitions, ClusteredAutomaton, Resolution, TransitionKey};
pub use classifier::{ClassifierKind, LinearClassifier};
pub use kmeans::{kmeans, standardize, KMeans};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error("k = {k} is outside 1..={distinct} (number of distinct hidden states)")]
    InvalidK { k: usize, distinct: usize },
    #[error("invalid extraction configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fst(#[from] FstError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub k: usize,
    pub classifier: ClassifierKind,
    /// Minimum support for a transition to survive; `None` disables
    /// splitting.
    pub lambda_trans: Option<u64>,
    pub seed: u64,
    /// Give the `h_0` root record a state of its own instead of clustering it.
    pub pin_root: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            k: 50,
            classifier: ClassifierKind::Svm,
            lambda_trans: Some(2),
            seed: 0,
            pin_root: false,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.k == 0 {
            return Err(ExtractError::Config("k must be at least 1".into()));
        }
        if matches!(self.lambda_trans, Some(l) if l < 2) {
            return Err(ExtractError::Config(
                "lambda_trans must be at least 2 when set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Root,
    Train,
    Synthetic,
}

pub type RecordId = usize;

/// One hidden state reached by some input prefix. Record 0 is the shared
/// `h_0` root. Prefixes that reach the same record by the same labeled step
/// are merged, and `weight` counts how many strings pass through.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub vector: Vec<f64>,
    pub prev: Option<RecordId>,
    pub label: Option<(SymbolId, LabelId)>,
    pub source: Source,
    /// First string (train strings first, then synthetic) and position that
    /// produced the record.
    pub string: usize,
    pub position: usize,
    pub weight: u64,
}

/// Records for the training sequences, labeled with their gold outputs, and
/// for synthetic inputs, labeled with the model's predictions. Synthetic
/// inputs that repeat a training input are skipped.
pub fn collect_activations(
    model: &Model,
    train: &[MergedSequence],
    synthetic: &[Vec<SymbolId>],
) -> Result<Vec<ActivationRecord>, ExtractError> {
    let train_inputs: Vec<Vec<SymbolId>> = train.iter().map(MergedSequence::input).collect();
    let mut seen: HashSet<&[SymbolId]> = train_inputs.iter().map(Vec::as_slice).collect();
    let synthetic: Vec<&Vec<SymbolId>> = synthetic
        .iter()
        .filter(|s| seen.insert(s.as_slice()))
        .collect();

    let train_traces: Vec<HiddenTrace> = train
        .par_iter()
        .zip(&train_inputs)
        .map(|(seq, input)| {
            let gold = model.gold_labels(seq)?;
            model.trace(input, Some(&gold))
        })
        .collect::<Result<_, RnnError>>()?;
    let synth_traces: Vec<HiddenTrace> = synthetic
        .par_iter()
        .map(|s| model.trace(s, None))
        .collect::<Result<_, RnnError>>()?;

    let mut records = vec![ActivationRecord {
        vector: vec![0.0; model.dim()],
        prev: None,
        label: None,
        source: Source::Root,
        string: 0,
        position: 0,
        weight: 0,
    }];
    let mut trie: HashMap<(RecordId, SymbolId, LabelId), RecordId> = HashMap::new();
    let tagged = train_traces
        .iter()
        .map(|t| (t, Source::Train))
        .chain(synth_traces.iter().map(|t| (t, Source::Synthetic)));
    for (string, (trace, source)) in tagged.enumerate() {
        records[0].weight += 1;
        let mut cur = 0;
        for (t, &label) in trace.labels.iter().enumerate() {
            cur = match trie.get(&(cur, label.0, label.1)) {
                Some(&r) => {
                    records[r].weight += 1;
                    r
                }
                None => {
                    records.push(ActivationRecord {
                        vector: trace.states[t + 1].clone(),
                        prev: Some(cur),
                        label: Some(label),
                        source,
                        string,
                        position: t + 1,
                        weight: 1,
                    });
                    trie.insert((cur, label.0, label.1), records.len() - 1);
                    records.len() - 1
                }
            };
        }
    }
    Ok(records)
}

/// Builds the transducer from resolved transitions, then prunes and
/// minimizes it.
pub fn finalize(model: &Model, resolution: &Resolution) -> Result<Transducer, ExtractError> {
    let raw = resolution.transitions.iter().map(|&(s, i, l, d)| {
        RawTransition::new(s as StateId, i, model.vocab.label(l).to_vec(), d as StateId)
    });
    let t = Transducer::new(
        model.input_table.clone(),
        model.output_table.clone(),
        resolution.num_states,
        resolution.initial as StateId,
        raw,
    )?;
    Ok(t.minimize())
}

/// Summary of one extraction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub k: usize,
    pub records: usize,
    pub splits: usize,
    pub split_failures: usize,
    pub budget_exhausted: bool,
    pub states_before_minimize: usize,
    pub states_after_minimize: usize,
    pub transitions: usize,
    pub dropped_transitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub fst: Transducer,
    pub resolution: Resolution,
    pub report: ExtractionReport,
}

/// Collects activations, clusters, resolves and finalizes.
pub fn extract(
    model: &Model,
    train: &[MergedSequence],
    synthetic: &[Vec<SymbolId>],
    cfg: &ExtractionConfig,
) -> Result<Extraction, ExtractError> {
    let records = collect_activations(model, train, synthetic)?;
    extract_from_records(model, &records, cfg)
}

/// The clustering half of [`extract`], for reuse of collected records.
pub fn extract_from_records(
    model: &Model,
    records: &[ActivationRecord],
    cfg: &ExtractionConfig,
) -> Result<Extraction, ExtractError> {
    cfg.validate()?;
    let mut ca = cluster(records, cfg.k, cfg.seed, cfg.pin_root)?;
    let resolution = resolve_transitions(&mut ca, cfg);
    let fst = finalize(model, &resolution)?;
    let reachable: HashSet<usize> = std::iter::once(resolution.initial)
        .chain(resolution.transitions.iter().map(|t| t.3))
        .collect();
    let report = ExtractionReport {
        k: cfg.k,
        records: records.len(),
        splits: resolution.splits,
        split_failures: resolution.split_failures,
        budget_exhausted: resolution.budget_exhausted,
        states_before_minimize: reachable.len(),
        states_after_minimize: fst.num_states(),
        transitions: fst.num_transitions(),
        dropped_transitions: resolution.dropped,
        dev_accuracy: None,
    };
    Ok(Extraction {
        fst,
        resolution,
        report,
    })
}

/// Number of distinct hidden vectors among `records`.
pub fn distinct_vectors(records: &[ActivationRecord]) -> usize {
    records
        .iter()
        .map(|r| r.vector.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}
