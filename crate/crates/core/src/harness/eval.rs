use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::StringPair;
use crate::fst::{SymbolId, SymbolTable, Transducer};
use crate::rnn::Model;
use crate::END_MARKER;

/// A system that maps an input id sequence to output symbols, or has no
/// answer for it.
pub trait Transduce: Sync {
    fn transduce(&self, input: &[SymbolId]) -> Option<Vec<String>>;

    fn size(&self) -> (usize, usize) {
        (0, 0)
    }
}

/// A transducer applied to inputs followed by the end marker. Inputs are
/// given in the dataset's input ids and mapped by symbol name.
pub struct MarkedFst<'a> {
    fst: &'a Transducer,
    map: Vec<Option<SymbolId>>,
    end: Option<SymbolId>,
}

impl<'a> MarkedFst<'a> {
    pub fn new(fst: &'a Transducer, data_inputs: &SymbolTable) -> Self {
        let map = (0..data_inputs.len() as SymbolId)
            .map(|id| {
                data_inputs
                    .symbol(id)
                    .and_then(|s| fst.input_table().get(s))
            })
            .collect();
        MarkedFst {
            fst,
            map,
            end: fst.input_table().get(END_MARKER),
        }
    }
}

impl Transduce for MarkedFst<'_> {
    fn transduce(&self, input: &[SymbolId]) -> Option<Vec<String>> {
        let mut ids = input
            .iter()
            .map(|&s| self.map.get(s as usize).copied().flatten())
            .collect::<Option<Vec<_>>>()?;
        ids.push(self.end?);
        let out = self.fst.apply(&ids).ok()?;
        Some(self.fst.output_table().decode(&out))
    }

    fn size(&self) -> (usize, usize) {
        (self.fst.num_states(), self.fst.num_transitions())
    }
}

impl Transduce for Model {
    fn transduce(&self, input: &[SymbolId]) -> Option<Vec<String>> {
        let end = self.input_table.get(END_MARKER)?;
        let mut ids = input.to_vec();
        ids.push(end);
        let out = Model::transduce(self, &ids).ok()?;
        Some(self.output_table.decode(&out))
    }
}

/// Copies every non-tag input symbol to the output.
pub struct NoChange<'a> {
    input_table: &'a SymbolTable,
    is_tag: Box<dyn Fn(SymbolId) -> bool + Sync + 'a>,
}

impl<'a> NoChange<'a> {
    pub fn new(
        input_table: &'a SymbolTable,
        is_tag: impl Fn(SymbolId) -> bool + Sync + 'a,
    ) -> Self {
        NoChange {
            input_table,
            is_tag: Box::new(is_tag),
        }
    }
}

impl Transduce for NoChange<'_> {
    fn transduce(&self, input: &[SymbolId]) -> Option<Vec<String>> {
        let kept: Vec<SymbolId> = input
            .iter()
            .copied()
            .filter(|&s| !(self.is_tag)(s))
            .collect();
        Some(crate::baselines::no_change(&self.input_table.decode(&kept)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub wrong_output: usize,
    pub no_path: usize,
    pub total: usize,
    pub states: usize,
    pub transitions: usize,
    pub wall_clock_s: f64,
}

/// Exact-match accuracy of `system` on `pairs`, whose outputs are ids in
/// `output_table`. An empty split scores 0.
pub fn evaluate(
    system: &dyn Transduce,
    pairs: &[StringPair],
    output_table: &SymbolTable,
) -> EvalReport {
    let start = Instant::now();
    let (mut correct, mut wrong_output, mut no_path) = (0, 0, 0);
    for p in pairs {
        match system.transduce(&p.input) {
            Some(out) if out == output_table.decode(&p.output) => correct += 1,
            Some(_) => wrong_output += 1,
            None => no_path += 1,
        }
    }
    let (states, transitions) = system.size();
    EvalReport {
        accuracy: if pairs.is_empty() {
            0.0
        } else {
            correct as f64 / pairs.len() as f64
        },
        correct,
        wrong_output,
        no_path,
        total: pairs.len(),
        states,
        transitions,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::RawTransition;

    struct Oracle(SymbolTable);

    impl Transduce for Oracle {
        fn transduce(&self, input: &[SymbolId]) -> Option<Vec<String>> {
            Some(self.0.decode(input))
        }
    }

    fn tables() -> (SymbolTable, SymbolTable) {
        let mut i = SymbolTable::new();
        let mut o = SymbolTable::new();
        for s in ["a", "b"] {
            i.intern(s);
            o.intern(s);
        }
        i.intern(END_MARKER);
        (i, o)
    }

    #[test]
    fn perfect_system_and_count_identity() {
        let (i, o) = tables();
        let pairs = vec![
            StringPair::new(vec![1, 2], vec![1, 2]),
            StringPair::new(vec![2], vec![2]),
        ];
        let r = evaluate(&Oracle(i.clone()), &pairs, &o);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.correct + r.wrong_output + r.no_path, r.total);
    }

    #[test]
    fn no_change_counts_identity_pairs() {
        let (i, o) = tables();
        let pairs = vec![
            StringPair::new(vec![1, 2], vec![1, 2]),
            StringPair::new(vec![1], vec![2]),
            StringPair::new(vec![2, 2], vec![2, 2]),
            StringPair::new(vec![2], vec![2, 1]),
        ];
        let expected = pairs
            .iter()
            .filter(|p| i.decode(&p.input) == o.decode(&p.output))
            .count();
        let r = evaluate(&NoChange::new(&i, |_| false), &pairs, &o);
        assert_eq!(r.correct, expected);
        assert_eq!(r.wrong_output, 2);
    }

    #[test]
    fn marked_fst_appends_end_marker_and_reports_no_path() {
        let (i, o) = tables();
        let end = i.get(END_MARKER).unwrap();
        // a -> a, then the end marker emits b.
        let fst = Transducer::new(
            i.clone(),
            o.clone(),
            2,
            0,
            [
                RawTransition::new(0, 1, vec![1], 0),
                RawTransition::new(0, end, vec![2], 1),
            ],
        )
        .unwrap();
        let pairs = vec![
            StringPair::new(vec![1], vec![1, 2]),
            StringPair::new(vec![1, 1], vec![1, 1]),
            StringPair::new(vec![2], vec![2]),
        ];
        let r = evaluate(&MarkedFst::new(&fst, &i), &pairs, &o);
        assert_eq!((r.correct, r.wrong_output, r.no_path), (1, 1, 1));
        assert_eq!((r.states, r.transitions), (2, 2));
    }
}
