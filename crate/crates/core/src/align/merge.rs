//! Folding ε-input alignment steps into neighbouring steps.

use std::collections::HashMap;

use super::{AlignError, AlignedSequence, MergedSequence, MergedStep};
use crate::fst::{SymbolId, EPSILON};

/// Prepends each ε-input step's output to the next step with a real input.
/// ε-input steps after the last real input are appended to it instead.
pub fn merge_epsilons_right(a: &AlignedSequence) -> Result<MergedSequence, AlignError> {
    let mut steps: Vec<MergedStep> = Vec::with_capacity(a.steps.len());
    let mut pending: Vec<SymbolId> = Vec::new();
    for &(i, o) in &a.steps {
        if i == EPSILON {
            pending.push(o);
            continue;
        }
        let mut output = std::mem::take(&mut pending);
        if o != EPSILON {
            output.push(o);
        }
        steps.push(MergedStep { input: i, output });
    }
    if !pending.is_empty() {
        let last = steps.last_mut().ok_or(AlignError::TrailingEpsilon)?;
        last.output.extend(pending);
    }
    Ok(MergedSequence { steps })
}

/// Working representation: input may still be ε.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Cell {
    input: SymbolId,
    output: Vec<SymbolId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Side {
    /// The real-input neighbour precedes the ε step: `(a,x)(ε,y) -> (a,xy)`.
    Left,
    /// The real-input neighbour follows the ε step: `(ε,y)(c,z) -> (c,yz)`.
    Right,
}

/// A merge candidate. Field order defines the tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Candidate {
    neighbour: Cell,
    epsilon_output: Vec<SymbolId>,
    side: Side,
}

fn candidate_at(seq: &[Cell], k: usize, side: Side) -> Option<Candidate> {
    let eps = &seq[k];
    if eps.input != EPSILON {
        return None;
    }
    let n = match side {
        Side::Left => k.checked_sub(1)?,
        Side::Right => k + 1,
    };
    let neighbour = seq.get(n)?;
    (neighbour.input != EPSILON).then(|| Candidate {
        neighbour: neighbour.clone(),
        epsilon_output: eps.output.clone(),
        side,
    })
}

/// Corpus-level greedy merging: count every adjacent (real, ε) and (ε, real)
/// candidate, merge all instances of the most frequent one, recount, and
/// repeat until no ε input remains. Ties go to the smallest candidate label.
///
/// Sequences without any real input cannot be merged and yield
/// [`AlignError::TrailingEpsilon`].
pub fn merge_epsilons_greedy(
    alignments: &[AlignedSequence],
) -> Vec<Result<MergedSequence, AlignError>> {
    let mut corpus: Vec<Vec<Cell>> = alignments
        .iter()
        .map(|a| {
            a.steps
                .iter()
                .map(|&(i, o)| Cell {
                    input: i,
                    output: if o == EPSILON { vec![] } else { vec![o] },
                })
                .collect()
        })
        .collect();
    let mergeable: Vec<bool> = corpus
        .iter()
        .map(|s| s.iter().any(|c| c.input != EPSILON))
        .collect();

    loop {
        let mut counts: HashMap<Candidate, usize> = HashMap::new();
        for (seq, _) in corpus.iter().zip(&mergeable).filter(|(_, &m)| m) {
            for k in 0..seq.len() {
                for side in [Side::Left, Side::Right] {
                    if let Some(c) = candidate_at(seq, k, side) {
                        *counts.entry(c).or_default() += 1;
                    }
                }
            }
        }
        let Some(best) = counts
            .into_iter()
            .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then_with(|| cb.cmp(ca)))
            .map(|(c, _)| c)
        else {
            break;
        };
        for (seq, _) in corpus.iter_mut().zip(&mergeable).filter(|(_, &m)| m) {
            apply_candidate(seq, &best);
        }
    }

    corpus
        .into_iter()
        .zip(mergeable)
        .map(|(seq, ok)| {
            if !ok {
                return Err(AlignError::TrailingEpsilon);
            }
            Ok(MergedSequence {
                steps: seq
                    .into_iter()
                    .map(|c| MergedStep {
                        input: c.input,
                        output: c.output,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Merges every non-overlapping instance of `cand`, scanning left to right.
fn apply_candidate(seq: &mut Vec<Cell>, cand: &Candidate) {
    let mut k = 0;
    while k < seq.len() {
        if candidate_at(seq, k, cand.side).as_ref() == Some(cand) {
            let eps = seq.remove(k);
            match cand.side {
                Side::Left => {
                    seq[k - 1].output.extend(eps.output);
                }
                Side::Right => {
                    let n = &mut seq[k];
                    let mut out = eps.output;
                    out.extend_from_slice(&n.output);
                    n.output = out;
                    k += 1;
                }
            }
        } else {
            k += 1;
        }
    }
}
