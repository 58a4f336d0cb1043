//! Classical transducer induction: onward prefix trees, OSTIA, DD-OSTIA, and
//! the identity baseline.
//!
//! Subsequential transducers need a final output per state. [`Transducer`]
//! has no such slot, so the learned final outputs are compiled into
//! transitions on [`END_MARKER`](crate::END_MARKER) into a shared sink state.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::StringPair;
use crate::fst::{FstError, RawTransition, StateId, SymbolId, SymbolTable, Transducer};
use crate::END_MARKER;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("pairs {first} and {second} share an input but differ in output")]
    Conflict { first: usize, second: usize },
    #[error(transparent)]
    Fst(#[from] FstError),
}

/// A subsequential transducer state under construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TreeState {
    /// `input -> (output, target)`.
    pub edges: BTreeMap<SymbolId, (Vec<SymbolId>, usize)>,
    /// Output emitted when the input ends here; `None` if no training input
    /// ends here.
    pub residual: Option<Vec<SymbolId>>,
}

/// Prefix tree over the training inputs with outputs pushed towards the
/// root. State 0 is the root; state ids follow first insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTree {
    pub states: Vec<TreeState>,
}

fn lcp<'a>(mut acc: &'a [SymbolId], other: &[SymbolId]) -> &'a [SymbolId] {
    let n = acc.iter().zip(other).take_while(|(a, b)| a == b).count();
    acc = &acc[..n];
    acc
}

impl PrefixTree {
    /// Longest common prefix of all outputs leaving `s` (edges and residual).
    pub fn common_prefix(&self, s: usize) -> Vec<SymbolId> {
        let st = &self.states[s];
        let mut outs = st
            .edges
            .values()
            .map(|(o, _)| o.as_slice())
            .chain(st.residual.as_deref());
        let Some(first) = outs.next() else {
            return Vec::new();
        };
        outs.fold(first, lcp).to_vec()
    }

    /// Whether every non-root state has an empty common output prefix.
    pub fn is_onward(&self) -> bool {
        (1..self.states.len()).all(|s| self.common_prefix(s).is_empty())
    }

    /// The output for `input`, if it ends at a state with a residual.
    pub fn apply(&self, input: &[SymbolId]) -> Option<Vec<SymbolId>> {
        let mut s = 0;
        let mut out = Vec::new();
        for a in input {
            let (o, t) = self.states[s].edges.get(a)?;
            out.extend_from_slice(o);
            s = *t;
        }
        out.extend_from_slice(self.states[s].residual.as_ref()?);
        Some(out)
    }
}

/// Builds the prefix tree of `pairs`, stores each output as the residual of
/// its input's state, and hoists common prefixes towards the root.
pub fn build_onward_ptt(pairs: &[StringPair]) -> Result<PrefixTree, BaselineError> {
    let mut states = vec![TreeState::default()];
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (idx, p) in pairs.iter().enumerate() {
        let mut s = 0;
        for &a in &p.input {
            s = match states[s].edges.get(&a) {
                Some(&(_, t)) => t,
                None => {
                    states.push(TreeState::default());
                    let t = states.len() - 1;
                    states[s].edges.insert(a, (Vec::new(), t));
                    t
                }
            };
        }
        match &states[s].residual {
            Some(r) if *r != p.output => {
                return Err(BaselineError::Conflict {
                    first: owner[&s],
                    second: idx,
                })
            }
            Some(_) => {}
            None => {
                states[s].residual = Some(p.output.clone());
                owner.insert(s, idx);
            }
        }
    }
    let mut tree = PrefixTree { states };
    // children have larger ids than parents, so reverse id order is post-order
    let mut parent: Vec<Option<(usize, SymbolId)>> = vec![None; tree.states.len()];
    for (s, st) in tree.states.iter().enumerate() {
        for (&a, &(_, t)) in &st.edges {
            parent[t] = Some((s, a));
        }
    }
    for s in (1..tree.states.len()).rev() {
        let p = tree.common_prefix(s);
        if p.is_empty() {
            continue;
        }
        let st = &mut tree.states[s];
        for (o, _) in st.edges.values_mut() {
            o.drain(..p.len());
        }
        if let Some(r) = &mut st.residual {
            r.drain(..p.len());
        }
        let (ps, a) = parent[s].expect("non-root has a parent");
        tree.states[ps]
            .edges
            .get_mut(&a)
            .expect("edge")
            .0
            .extend_from_slice(&p);
    }
    Ok(tree)
}

/// Options for [`ostia`] and [`dd_ostia`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InductionOptions {
    /// Stop merging after this much wall-clock time.
    pub time_limit: Option<Duration>,
}

impl Default for InductionOptions {
    fn default() -> Self {
        InductionOptions {
            time_limit: Some(Duration::from_secs(600)),
        }
    }
}

/// Counters from one induction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductionLog {
    pub prefix_tree_states: usize,
    pub merges_attempted: usize,
    pub merges_committed: usize,
    pub time_limit_hit: bool,
    pub final_states: usize,
}

#[derive(Debug, Clone)]
pub struct Induced {
    pub fst: Transducer,
    pub log: InductionLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Order {
    /// Fixed shortlex rank of each state's access string in the prefix tree.
    Shortlex,
    /// Breadth-first discovery order over the current automaton.
    Discovery,
}

/// State merging with an undo log so failed merges can be reverted.
struct Merger {
    states: Vec<TreeState>,
    red: Vec<bool>,
    undo: Vec<(usize, TreeState)>,
    saved: Vec<bool>,
}

#[derive(Debug)]
struct Fail;

impl Merger {
    fn state_mut(&mut self, s: usize) -> &mut TreeState {
        if !self.saved[s] {
            self.saved[s] = true;
            self.undo.push((s, self.states[s].clone()));
        }
        &mut self.states[s]
    }

    fn rollback(&mut self) {
        while let Some((s, st)) = self.undo.pop() {
            self.states[s] = st;
            self.saved[s] = false;
        }
    }

    fn commit(&mut self) {
        for (s, _) in self.undo.drain(..) {
            self.saved[s] = false;
        }
    }

    /// Prepends `prefix` to every output leaving non-red state `s`.
    fn push_back(&mut self, s: usize, prefix: &[SymbolId]) -> Result<(), Fail> {
        if prefix.is_empty() {
            return Ok(());
        }
        if self.red[s] {
            return Err(Fail);
        }
        let st = self.state_mut(s);
        for (o, _) in st.edges.values_mut() {
            o.splice(0..0, prefix.iter().copied());
        }
        if let Some(r) = &mut st.residual {
            r.splice(0..0, prefix.iter().copied());
        }
        Ok(())
    }

    /// Redirects the edge `(from, a)` to red state `p` and folds the tree
    /// rooted at `q` into `p`.
    fn merge(&mut self, from: usize, a: SymbolId, p: usize, q: usize) -> Result<(), Fail> {
        self.state_mut(from).edges.get_mut(&a).expect("edge").1 = p;
        self.fold(p, q)
    }

    fn fold(&mut self, p: usize, q: usize) -> Result<(), Fail> {
        let qs = self.states[q].clone();
        if let Some(w) = &qs.residual {
            match &self.states[p].residual {
                Some(v) if v != w => return Err(Fail),
                Some(_) => {}
                None => self.state_mut(p).residual = Some(w.clone()),
            }
        }
        for (&a, (v, qt)) in &qs.edges {
            match self.states[p].edges.get(&a).cloned() {
                None => {
                    self.state_mut(p).edges.insert(a, (v.clone(), *qt));
                }
                Some((u, pt)) => {
                    let w = lcp(&u, v).to_vec();
                    self.push_back(pt, &u[w.len()..])?;
                    self.push_back(*qt, &v[w.len()..])?;
                    self.state_mut(p).edges.insert(a, (w, pt));
                    self.fold(pt, *qt)?;
                }
            }
        }
        Ok(())
    }

    /// Reachable states in breadth-first order with each state's incoming
    /// edge in the BFS tree.
    fn bfs(&self) -> Vec<(usize, Option<(usize, SymbolId)>)> {
        let mut seen = vec![false; self.states.len()];
        let mut out = vec![(0, None)];
        seen[0] = true;
        let mut i = 0;
        while i < out.len() {
            let s = out[i].0;
            for (&a, &(_, t)) in &self.states[s].edges {
                if !seen[t] {
                    seen[t] = true;
                    out.push((t, Some((s, a))));
                }
            }
            i += 1;
        }
        out
    }
}

fn induce(
    pairs: &[StringPair],
    input_table: &SymbolTable,
    output_table: &SymbolTable,
    opts: InductionOptions,
    order: Order,
) -> Result<Induced, BaselineError> {
    let start = Instant::now();
    let tree = build_onward_ptt(pairs)?;
    let n = tree.states.len();
    let mut log = InductionLog {
        prefix_tree_states: n,
        ..InductionLog::default()
    };
    // shortlex rank of prefix-tree states
    let mut rank = vec![0usize; n];
    {
        let mut q = VecDeque::from([0usize]);
        let mut r = 0;
        while let Some(s) = q.pop_front() {
            rank[s] = r;
            r += 1;
            q.extend(tree.states[s].edges.values().map(|&(_, t)| t));
        }
    }
    let mut m = Merger {
        states: tree.states,
        red: vec![false; n],
        undo: Vec::new(),
        saved: vec![false; n],
    };
    m.red[0] = true;

    loop {
        if opts.time_limit.is_some_and(|lim| start.elapsed() > lim) {
            log.time_limit_hit = true;
            break;
        }
        let reach = m.bfs();
        let mut reds: Vec<usize> = reach.iter().map(|r| r.0).filter(|&s| m.red[s]).collect();
        let mut blues: Vec<(usize, (usize, SymbolId))> = reach
            .iter()
            .filter(|(s, from)| !m.red[*s] && from.is_some_and(|(f, _)| m.red[f]))
            .map(|&(s, from)| (s, from.expect("blue has a parent")))
            .collect();
        if order == Order::Shortlex {
            reds.sort_by_key(|&s| rank[s]);
            blues.sort_by_key(|b| rank[b.0]);
        }
        let Some(&(q, (from, a))) = blues.first() else {
            break;
        };
        let mut merged = false;
        for &p in &reds {
            log.merges_attempted += 1;
            match m.merge(from, a, p, q) {
                Ok(()) => {
                    m.commit();
                    log.merges_committed += 1;
                    merged = true;
                    break;
                }
                Err(Fail) => m.rollback(),
            }
        }
        if !merged {
            m.red[q] = true;
        }
    }
    let fst = compile(&m, input_table, output_table)?;
    log.final_states = fst.num_states();
    Ok(Induced { fst, log })
}

/// Turns the reachable part into a [`Transducer`]; residuals become
/// end-marker transitions into a shared sink.
fn compile(
    m: &Merger,
    input_table: &SymbolTable,
    output_table: &SymbolTable,
) -> Result<Transducer, FstError> {
    let mut input_table = input_table.clone();
    let end = input_table.intern(END_MARKER);
    let reach = m.bfs();
    let id: HashMap<usize, StateId> = reach
        .iter()
        .enumerate()
        .map(|(i, r)| (r.0, i as StateId))
        .collect();
    let sink = reach.len() as StateId;
    let mut raw = Vec::new();
    for &(s, _) in &reach {
        let st = &m.states[s];
        for (&a, (o, t)) in &st.edges {
            raw.push(RawTransition::new(id[&s], a, o.clone(), id[t]));
        }
        if let Some(r) = &st.residual {
            raw.push(RawTransition::new(id[&s], end, r.clone(), sink));
        }
    }
    Transducer::new(input_table, output_table.clone(), reach.len() + 1, 0, raw)
        .map(|t| t.prune_inaccessible())
}

/// OSTIA: the next blue state in shortlex order of its prefix-tree access
/// string is merged into the first red state (same order) that admits it,
/// with output pushback and recursive folding; otherwise it turns red.
pub fn ostia(
    pairs: &[StringPair],
    input_table: &SymbolTable,
    output_table: &SymbolTable,
    opts: InductionOptions,
) -> Result<Induced, BaselineError> {
    induce(pairs, input_table, output_table, opts, Order::Shortlex)
}

/// Greedy DD-OSTIA: as [`ostia`], but blue and red states are taken in
/// breadth-first order over the current automaton, and the first
/// non-conflicting merge is committed without scoring.
pub fn dd_ostia(
    pairs: &[StringPair],
    input_table: &SymbolTable,
    output_table: &SymbolTable,
    opts: InductionOptions,
) -> Result<Induced, BaselineError> {
    induce(pairs, input_table, output_table, opts, Order::Discovery)
}

/// The identity baseline.
pub fn no_change<T: Clone>(input: &[T]) -> Vec<T> {
    input.to_vec()
}
