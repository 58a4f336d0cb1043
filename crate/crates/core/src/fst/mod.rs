//! Unweighted, input-deterministic finite-state transducers.
//!
//! A [`Transducer`] is the tuple (Σ, Π, Q, q₀, δ) where δ maps a
//! `(state, input symbol)` pair to an output string and a destination. There
//! is no final-state set: every state accepts, and a string is rejected only
//! when some step has no transition.

mod io;
mod minimize;
mod symbols;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use thiserror::Error;

pub use io::{parse_att, to_att_text, to_dot, Format};
pub use symbols::{SymbolId, SymbolTable, EPSILON};

pub type StateId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FstError {
    #[error("unknown input symbol `{0}`")]
    UnknownSymbol(String),
    #[error("no transition from state {state} on `{symbol}`")]
    NoTransition { state: StateId, symbol: String },
    #[error("state {state} out of range (num_states = {num_states})")]
    StateOutOfRange { state: StateId, num_states: usize },
    #[error("epsilon input label on a transition from state {0}")]
    EpsilonInput(StateId),
    #[error("two transitions from state {state} on input `{symbol}`")]
    Nondeterministic { state: StateId, symbol: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Output string and destination of a transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arc {
    pub output: Vec<SymbolId>,
    pub target: StateId,
}

/// A transition record that is not yet known to be deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawTransition {
    pub source: StateId,
    pub input: SymbolId,
    pub output: Vec<SymbolId>,
    pub target: StateId,
}

impl RawTransition {
    pub fn new(source: StateId, input: SymbolId, output: Vec<SymbolId>, target: StateId) -> Self {
        RawTransition {
            source,
            input,
            output,
            target,
        }
    }
}

/// True iff no `(source, input)` key carries two distinct `(output, target)`
/// pairs. Exact duplicates are allowed.
pub fn is_input_deterministic<'a, I>(raw: I) -> bool
where
    I: IntoIterator<Item = &'a RawTransition>,
{
    let mut seen: HashMap<(StateId, SymbolId), (&'a [SymbolId], StateId)> = HashMap::new();
    for t in raw {
        match seen.get(&(t.source, t.input)) {
            Some(&(out, dst)) if out != t.output.as_slice() || dst != t.target => return false,
            Some(_) => {}
            None => {
                seen.insert((t.source, t.input), (&t.output, t.target));
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct Transducer {
    input_table: SymbolTable,
    output_table: SymbolTable,
    num_states: usize,
    initial: StateId,
    transitions: BTreeMap<(StateId, SymbolId), Arc>,
}

impl Transducer {
    /// Builds a transducer, rejecting out-of-range states, ε inputs and
    /// conflicting transitions.
    pub fn new<I>(
        input_table: SymbolTable,
        output_table: SymbolTable,
        num_states: usize,
        initial: StateId,
        transitions: I,
    ) -> Result<Self, FstError>
    where
        I: IntoIterator<Item = RawTransition>,
    {
        let num_states = num_states.max(1);
        let check = |s: StateId| {
            if (s as usize) < num_states {
                Ok(())
            } else {
                Err(FstError::StateOutOfRange {
                    state: s,
                    num_states,
                })
            }
        };
        check(initial)?;
        let mut map = BTreeMap::new();
        for t in transitions {
            check(t.source)?;
            check(t.target)?;
            if t.input == EPSILON {
                return Err(FstError::EpsilonInput(t.source));
            }
            let arc = Arc {
                output: t.output,
                target: t.target,
            };
            if let Some(prev) = map.insert((t.source, t.input), arc.clone()) {
                if prev != arc {
                    return Err(FstError::Nondeterministic {
                        state: t.source,
                        symbol: input_table.symbol(t.input).unwrap_or("<?>").to_owned(),
                    });
                }
            }
        }
        Ok(Transducer {
            input_table,
            output_table,
            num_states,
            initial,
            transitions: map,
        })
    }

    pub fn input_table(&self) -> &SymbolTable {
        &self.input_table
    }

    pub fn output_table(&self) -> &SymbolTable {
        &self.output_table
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn arc(&self, state: StateId, input: SymbolId) -> Option<&Arc> {
        self.transitions.get(&(state, input))
    }

    /// Transitions ordered by `(source, input)`.
    pub fn transitions(&self) -> impl Iterator<Item = RawTransition> + '_ {
        self.transitions
            .iter()
            .map(|(&(source, input), arc)| RawTransition {
                source,
                input,
                output: arc.output.clone(),
                target: arc.target,
            })
    }

    fn outgoing(&self, state: StateId) -> impl Iterator<Item = (SymbolId, &Arc)> {
        self.transitions
            .range((state, 0)..=(state, SymbolId::MAX))
            .map(|(&(_, input), arc)| (input, arc))
    }

    /// Runs the transducer over input symbol ids.
    pub fn apply(&self, input: &[SymbolId]) -> Result<Vec<SymbolId>, FstError> {
        let mut state = self.initial;
        let mut out = Vec::new();
        for &sym in input {
            if sym == EPSILON || sym as usize >= self.input_table.len() {
                return Err(FstError::UnknownSymbol(format!("#{sym}")));
            }
            let arc =
                self.transitions
                    .get(&(state, sym))
                    .ok_or_else(|| FstError::NoTransition {
                        state,
                        symbol: self.input_table.symbol(sym).unwrap_or_default().to_owned(),
                    })?;
            out.extend_from_slice(&arc.output);
            state = arc.target;
        }
        Ok(out)
    }

    /// Runs the transducer over symbol strings.
    pub fn apply_symbols<S: AsRef<str>>(&self, input: &[S]) -> Result<Vec<String>, FstError> {
        let ids = input
            .iter()
            .map(|s| {
                let s = s.as_ref();
                self.input_table
                    .get(s)
                    .filter(|&id| id != EPSILON)
                    .ok_or_else(|| FstError::UnknownSymbol(s.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.output_table.decode(&self.apply(&ids)?))
    }

    /// Convenience wrapper treating each `char` as a symbol.
    pub fn apply_str(&self, input: &str) -> Result<String, FstError> {
        let symbols: Vec<String> = input.chars().map(String::from).collect();
        Ok(self.apply_symbols(&symbols)?.concat())
    }

    /// Keeps only states reachable from the initial state, renumbered in
    /// breadth-first order.
    pub fn prune_inaccessible(&self) -> Transducer {
        let order = self.bfs_order();
        let mut renumber = vec![StateId::MAX; self.num_states];
        for (new, &old) in order.iter().enumerate() {
            renumber[old as usize] = new as StateId;
        }
        let transitions = self
            .transitions
            .iter()
            .filter(|(&(src, _), _)| renumber[src as usize] != StateId::MAX)
            .map(|(&(src, input), arc)| {
                (
                    (renumber[src as usize], input),
                    Arc {
                        output: arc.output.clone(),
                        target: renumber[arc.target as usize],
                    },
                )
            })
            .collect();
        Transducer {
            input_table: self.input_table.clone(),
            output_table: self.output_table.clone(),
            num_states: order.len(),
            initial: 0,
            transitions,
        }
    }

    fn bfs_order(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial as usize] = true;
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for (_, arc) in self.outgoing(q) {
                if !seen[arc.target as usize] {
                    seen[arc.target as usize] = true;
                    queue.push_back(arc.target);
                }
            }
        }
        order
    }

    /// Minimal equivalent transducer, treating each `(input, output)` pair as
    /// an opaque label. Prunes first.
    pub fn minimize(&self) -> Transducer {
        minimize::minimize(&self.prune_inaccessible())
    }

    /// Re-indexes every symbol into the given tables, interning as needed.
    pub fn remap(
        &self,
        input_table: &mut SymbolTable,
        output_table: &mut SymbolTable,
    ) -> Transducer {
        let mut in_map = HashMap::new();
        let mut out_map = HashMap::new();
        let mut map_in = |id: SymbolId, table: &mut SymbolTable| {
            *in_map
                .entry(id)
                .or_insert_with(|| table.intern(self.input_table.symbol(id).unwrap_or_default()))
        };
        let transitions = self
            .transitions
            .iter()
            .map(|(&(src, input), arc)| {
                let output = arc
                    .output
                    .iter()
                    .map(|&o| {
                        *out_map.entry(o).or_insert_with(|| {
                            output_table.intern(self.output_table.symbol(o).unwrap_or_default())
                        })
                    })
                    .collect();
                (
                    (src, map_in(input, input_table)),
                    Arc {
                        output,
                        target: arc.target,
                    },
                )
            })
            .collect();
        Transducer {
            input_table: input_table.clone(),
            output_table: output_table.clone(),
            num_states: self.num_states,
            initial: self.initial,
            transitions,
        }
    }

    fn labeled(&self) -> HashSet<(StateId, &str, Vec<&str>, StateId)> {
        self.transitions
            .iter()
            .map(|(&(src, input), arc)| {
                (
                    src,
                    self.input_table.symbol(input).unwrap_or_default(),
                    arc.output
                        .iter()
                        .map(|&o| self.output_table.symbol(o).unwrap_or_default())
                        .collect(),
                    arc.target,
                )
            })
            .collect()
    }
}

/// Structural equality over symbol strings; the id assignment of the two
/// symbol tables may differ.
impl PartialEq for Transducer {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.initial == other.initial
            && self.transitions.len() == other.transitions.len()
            && self.labeled() == other.labeled()
    }
}

impl Eq for Transducer {}
