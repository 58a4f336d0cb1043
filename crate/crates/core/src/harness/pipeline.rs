use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, Task};
use crate::align::{
    crp_align, med_align, merge_epsilons_greedy, merge_epsilons_right, AlignError, AlignMethod,
    AlignedSequence, CrpConfig, MergeStrategy, MergedSequence, StringPair, SymbolMatcher,
};
use crate::domain::{gen_inflection_swap, gen_ngram_strings, DomainError, NgramModel};
use crate::extract::{extract, ExtractError, Extraction, ExtractionConfig};
use crate::fst::{SymbolId, EPSILON};
use crate::rnn::{train, Model, RnnError, TrainConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("alignment of pair {index}: {source}")]
    Align { index: usize, source: AlignError },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("sweep: {0}")]
    Sweep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub align: AlignMethod,
    /// Defaults by task when unset: greedy for inflection, right otherwise.
    pub merge: Option<MergeStrategy>,
    pub crp: CrpConfig,
    pub synthetic: bool,
    pub ngram_order: usize,
    pub max_len: usize,
    pub synthetic_cap: usize,
    pub train: TrainConfig,
    pub extraction: ExtractionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            align: AlignMethod::Crp,
            merge: None,
            crp: CrpConfig::default(),
            synthetic: true,
            ngram_order: 2,
            max_len: 6,
            synthetic_cap: 50_000,
            train: TrainConfig::default(),
            extraction: ExtractionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn merge_for(&self, task: Task) -> MergeStrategy {
        self.merge.unwrap_or(match task {
            Task::Inflection => MergeStrategy::Greedy,
            Task::G2p | Task::Normalization => MergeStrategy::Right,
        })
    }
}

/// Aligns the training pairs. For inflection only the lemma is aligned with
/// the form; each tag becomes a step with empty output. Every sequence ends
/// with an end-marker step that can carry trailing output.
pub fn align_raw(ds: &Dataset, cfg: &PipelineConfig) -> Vec<AlignedSequence> {
    let split: Vec<usize> = ds
        .train
        .iter()
        .map(|p| {
            p.input
                .iter()
                .position(|&s| !ds.is_tag(s))
                .unwrap_or(p.input.len())
        })
        .collect();
    let core: Vec<StringPair> = ds
        .train
        .iter()
        .zip(&split)
        .map(|(p, &k)| StringPair::new(p.input[k..].to_vec(), p.output.clone()))
        .collect();
    let aligned = match cfg.align {
        AlignMethod::Crp => crp_align(&core, &cfg.crp),
        AlignMethod::Med => med_align(
            &core,
            &SymbolMatcher::new(&ds.input_table, &ds.output_table),
            cfg.crp.equal_length_positional,
        ),
    };
    let end = ds.end_marker();
    aligned
        .into_iter()
        .zip(ds.train.iter().zip(&split))
        .map(|(a, (p, &k))| {
            let mut steps: Vec<_> = p.input[..k].iter().map(|&t| (t, EPSILON)).collect();
            steps.extend(a.steps);
            steps.push((end, EPSILON));
            AlignedSequence::new(steps)
        })
        .collect()
}

/// [`align_raw`] followed by the configured ε merge.
pub fn align_dataset(
    ds: &Dataset,
    cfg: &PipelineConfig,
) -> Result<Vec<MergedSequence>, PipelineError> {
    let full = align_raw(ds, cfg);
    let merged: Vec<Result<MergedSequence, AlignError>> = match cfg.merge_for(ds.task) {
        MergeStrategy::Right => full.iter().map(merge_epsilons_right).collect(),
        MergeStrategy::Greedy => merge_epsilons_greedy(&full),
    };
    merged
        .into_iter()
        .enumerate()
        .map(|(index, m)| m.map_err(|source| PipelineError::Align { index, source }))
        .collect()
}

/// Synthetic inputs, each ending in the end marker: tag/lemma swaps for
/// inflection, otherwise strings admitted by an n-gram model of the training
/// inputs. Empty when synthetic data is off.
pub fn synthetic_inputs(
    ds: &Dataset,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<SymbolId>>, PipelineError> {
    if !cfg.synthetic {
        return Ok(Vec::new());
    }
    let inputs: Vec<Vec<SymbolId>> = ds.train.iter().map(|p| p.input.clone()).collect();
    let seed = cfg.train.seed;
    let mut out = match ds.task {
        Task::Inflection => {
            gen_inflection_swap(&inputs, |s| ds.is_tag(s), cfg.synthetic_cap, seed)?
        }
        Task::G2p | Task::Normalization => {
            let model = NgramModel::new(cfg.ngram_order, &inputs);
            gen_ngram_strings(&model, cfg.max_len, cfg.synthetic_cap, seed)
        }
    };
    let end = ds.end_marker();
    for s in &mut out {
        s.push(end);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub merged: Vec<MergedSequence>,
    pub model: Model,
    pub extraction: Extraction,
}

/// Align, train, generate synthetic inputs and extract, with one
/// configuration.
pub fn train_and_extract(
    ds: &Dataset,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let merged = align_dataset(ds, cfg)?;
    let model = train(&merged, &ds.input_table, &ds.output_table, &cfg.train)?;
    let synthetic = synthetic_inputs(ds, cfg)?;
    let extraction = extract(&model, &merged, &synthetic, &cfg.extraction)?;
    Ok(PipelineOutput {
        merged,
        model,
        extraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RawPair;

    fn raw(i: &[&str], o: &[&str]) -> RawPair {
        (
            i.iter().map(|s| s.to_string()).collect(),
            o.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn toy() -> Dataset {
        let train = vec![
            raw(&["[PL]", "c", "a", "t"], &["c", "a", "t", "s"]),
            raw(&["[PL]", "d", "o", "g"], &["d", "o", "g", "s"]),
            raw(&["[SG]", "c", "a", "t"], &["c", "a", "t"]),
        ];
        Dataset::from_raw(Task::Inflection, "toy", &train, &[], &[])
    }

    #[test]
    fn aligned_sequences_reconstruct_pairs_and_end_with_marker() {
        let ds = toy();
        for merge in [MergeStrategy::Right, MergeStrategy::Greedy] {
            for align in [AlignMethod::Crp, AlignMethod::Med] {
                let cfg = PipelineConfig {
                    align,
                    merge: Some(merge),
                    ..Default::default()
                };
                let merged = align_dataset(&ds, &cfg).unwrap();
                for (m, p) in merged.iter().zip(&ds.train) {
                    let mut input = p.input.clone();
                    input.push(ds.end_marker());
                    assert_eq!(m.input(), input);
                    assert_eq!(m.output(), p.output);
                }
            }
        }
    }

    #[test]
    fn swap_synthetic_excludes_train_and_is_marked() {
        let ds = toy();
        let syn = synthetic_inputs(&ds, &PipelineConfig::default()).unwrap();
        // [SG] d o g is the only new combination.
        assert_eq!(syn.len(), 1);
        assert_eq!(ds.decode_input(&syn[0]), ["[SG]", "d", "o", "g", "⋉"]);
        let off = PipelineConfig {
            synthetic: false,
            ..Default::default()
        };
        assert!(synthetic_inputs(&ds, &off).unwrap().is_empty());
    }

    #[test]
    fn end_to_end_leaves_test_split_untouched() {
        let ds = toy();
        let cfg = PipelineConfig {
            train: TrainConfig {
                dim: 8,
                epochs: 5,
                ..Default::default()
            },
            extraction: ExtractionConfig {
                k: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train_and_extract(&ds, &cfg).unwrap();
        assert!(out.extraction.fst.num_states() >= 1);
        assert_eq!(ds.test_reads(), 0);
    }
}
