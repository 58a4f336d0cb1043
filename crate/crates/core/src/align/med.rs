//! Per-pair minimum-edit-distance alignment with unit costs.

use super::{AlignedSequence, Step, StringPair};
use crate::fst::{SymbolId, SymbolTable, EPSILON};

/// Maps input symbol ids to the output id spelled the same way, if any.
#[derive(Debug, Clone, Default)]
pub struct SymbolMatcher {
    to_output: Vec<Option<SymbolId>>,
}

impl SymbolMatcher {
    pub fn new(input: &SymbolTable, output: &SymbolTable) -> Self {
        let mut to_output = vec![None; input.len()];
        for (id, sym) in input.iter() {
            to_output[id as usize] = output.get(sym);
        }
        SymbolMatcher { to_output }
    }

    pub fn matches(&self, input: SymbolId, output: SymbolId) -> bool {
        input != EPSILON
            && self
                .to_output
                .get(input as usize)
                .copied()
                .flatten()
                .is_some_and(|o| o == output)
    }
}

/// Levenshtein alignment of each pair. Backtracking prefers match, then
/// substitution, then insertion `(ε, out)`, then deletion `(in, ε)`.
///
/// With `equal_length_positional`, pairs of equal length are aligned
/// position by position.
pub fn med_align(
    pairs: &[StringPair],
    matcher: &SymbolMatcher,
    equal_length_positional: bool,
) -> Vec<AlignedSequence> {
    pairs
        .iter()
        .map(|p| {
            if equal_length_positional && p.input.len() == p.output.len() {
                AlignedSequence::new(
                    p.input
                        .iter()
                        .copied()
                        .zip(p.output.iter().copied())
                        .collect(),
                )
            } else {
                AlignedSequence::new(align_one(p, matcher))
            }
        })
        .collect()
}

fn align_one(pair: &StringPair, matcher: &SymbolMatcher) -> Vec<Step> {
    let (x, y) = (&pair.input, &pair.output);
    let (n, m) = (x.len(), y.len());
    let w = m + 1;
    let mut d = vec![0u32; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i as u32;
    }
    for (j, v) in d[..w].iter_mut().enumerate() {
        *v = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + u32::from(!matcher.matches(x[i - 1], y[j - 1]));
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let is_match = matcher.matches(x[i - 1], y[j - 1]);
            let diag = d[(i - 1) * w + j - 1];
            if is_match && diag == here {
                steps.push((x[i - 1], y[j - 1]));
                i -= 1;
                j -= 1;
                continue;
            }
            if !is_match && diag + 1 == here {
                steps.push((x[i - 1], y[j - 1]));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            steps.push((EPSILON, y[j - 1]));
            j -= 1;
            continue;
        }
        steps.push((x[i - 1], EPSILON));
        i -= 1;
    }
    steps.reverse();
    steps
}

/// Unit-cost edit cost of an alignment.
pub fn alignment_cost(a: &AlignedSequence, matcher: &SymbolMatcher) -> usize {
    a.steps
        .iter()
        .filter(|&&(i, o)| !matcher.matches(i, o))
        .count()
}
