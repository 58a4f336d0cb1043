//! Character alignment of input/output pairs and input-ε merging.
//!
//! An [`AlignedSequence`] is a monotone sequence of `(in, out)` steps where
//! either side may be ε (but not both). Transducer transitions cannot carry ε
//! inputs, so the ε-input steps are folded into a neighbour, producing a
//! [`MergedSequence`] whose steps become transition labels.

mod crp;
mod med;
mod merge;

use std::fmt::Write as _;

use thiserror::Error;

use crate::fst::{SymbolId, SymbolTable, EPSILON};

pub use crp::{crp_align, CrpConfig, PairCounts};
pub use med::{alignment_cost, med_align, SymbolMatcher};
pub use merge::{merge_epsilons_greedy, merge_epsilons_right};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignError {
    /// Trailing ε-input steps had no following input step, and there was no
    /// earlier input step to absorb them either.
    #[error("sequence has no input symbol to carry epsilon-input outputs")]
    TrailingEpsilon,
}

/// A training pair of encoded symbol sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StringPair {
    pub input: Vec<SymbolId>,
    pub output: Vec<SymbolId>,
}

impl StringPair {
    pub fn new(input: Vec<SymbolId>, output: Vec<SymbolId>) -> Self {
        StringPair { input, output }
    }
}

/// One alignment step; [`EPSILON`] marks an empty side.
pub type Step = (SymbolId, SymbolId);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AlignedSequence {
    pub steps: Vec<Step>,
}

impl AlignedSequence {
    pub fn new(steps: Vec<Step>) -> Self {
        AlignedSequence { steps }
    }

    pub fn input_projection(&self) -> Vec<SymbolId> {
        self.steps
            .iter()
            .map(|s| s.0)
            .filter(|&s| s != EPSILON)
            .collect()
    }

    pub fn output_projection(&self) -> Vec<SymbolId> {
        self.steps
            .iter()
            .map(|s| s.1)
            .filter(|&s| s != EPSILON)
            .collect()
    }

    /// Checks the projections against `pair` and that no step is (ε, ε).
    pub fn is_valid_for(&self, pair: &StringPair) -> bool {
        self.steps
            .iter()
            .all(|&(i, o)| i != EPSILON || o != EPSILON)
            && self.input_projection() == pair.input
            && self.output_projection() == pair.output
    }

    pub fn has_input_epsilon(&self) -> bool {
        self.steps.iter().any(|s| s.0 == EPSILON)
    }

    /// Space-separated `in:out` tokens with ε written as `_`.
    pub fn render(&self, input: &SymbolTable, output: &SymbolTable) -> String {
        let side = |table: &SymbolTable, id: SymbolId| {
            if id == EPSILON {
                "_".to_owned()
            } else {
                table.symbol(id).unwrap_or("<?>").to_owned()
            }
        };
        let mut s = String::new();
        for (k, &(i, o)) in self.steps.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{}:{}", side(input, i), side(output, o));
        }
        s
    }
}

/// A merged step: a real input symbol and a possibly empty output string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MergedStep {
    pub input: SymbolId,
    pub output: Vec<SymbolId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MergedSequence {
    pub steps: Vec<MergedStep>,
}

impl MergedSequence {
    pub fn input(&self) -> Vec<SymbolId> {
        self.steps.iter().map(|s| s.input).collect()
    }

    pub fn output(&self) -> Vec<SymbolId> {
        self.steps
            .iter()
            .flat_map(|s| s.output.iter().copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Which aligner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMethod {
    Crp,
    Med,
}

/// How ε-input steps are folded into neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeStrategy {
    Right,
    Greedy,
}
