//! Clustered automata and non-determinism resolution by state splitting.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use super::classifier::LinearClassifier;
use super::kmeans::{kmeans, standardize};
use super::{ActivationRecord, ExtractError, ExtractionConfig};
use crate::fst::SymbolId;
use crate::rng::substream;
use crate::rnn::LabelId;

/// Incoming edge of a non-root record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Edge {
    prev: usize,
    input: SymbolId,
    label: LabelId,
    weight: u64,
}

/// A transition key `(source, input, label, target)`.
pub type TransitionKey = (usize, SymbolId, LabelId, usize);

/// States as clusters of activation records, with transition counts
/// aggregated from record-to-record edges.
#[derive(Debug, Clone)]
pub struct ClusteredAutomaton {
    /// State of each record.
    pub assignment: Vec<usize>,
    pub num_states: usize,
    /// State of the `h_0` root record.
    pub initial: usize,
    edges: Vec<Option<Edge>>,
    children: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
    /// Standardized vector of each record, by index into `points`.
    point_of: Vec<usize>,
    points: Vec<Vec<f64>>,
    out: Vec<BTreeMap<(SymbolId, LabelId, usize), u64>>,
}

/// Outcome of [`resolve_transitions`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    /// Input-deterministic transitions reachable from `initial`.
    pub transitions: Vec<TransitionKey>,
    pub initial: usize,
    pub num_states: usize,
    /// Support of each committed transition.
    pub support: Vec<u64>,
    pub splits: usize,
    pub split_failures: usize,
    pub budget_exhausted: bool,
    /// Transition keys out of reachable states that were not committed.
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SplitFailure;

/// Standardizes the records' vectors, runs k-means over the distinct ones,
/// and aggregates the transition multiset. With `pin_root` the root record
/// gets a state of its own.
pub fn cluster(
    records: &[ActivationRecord],
    k: usize,
    seed: u64,
    pin_root: bool,
) -> Result<ClusteredAutomaton, ExtractError> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    let mut point_of = Vec::with_capacity(records.len());
    for r in records {
        let key: Vec<u64> = r.vector.iter().map(|x| x.to_bits()).collect();
        let id = *index.entry(key).or_insert_with(|| {
            distinct.push(r.vector.clone());
            mass.push(0.0);
            distinct.len() - 1
        });
        mass[id] += r.weight as f64;
        point_of.push(id);
    }
    if k == 0 || k > distinct.len() {
        return Err(ExtractError::InvalidK {
            k,
            distinct: distinct.len(),
        });
    }
    let points = standardize(&distinct, &mass);
    let km = kmeans(&points, &mass, k, 100, &mut substream(seed, "cluster"));
    let mut assignment: Vec<usize> = point_of.iter().map(|&p| km.assignment[p]).collect();
    let mut num_states = k;
    if pin_root {
        assignment[0] = k;
        num_states += 1;
    }
    Ok(ClusteredAutomaton::new(
        records, assignment, num_states, point_of, points,
    ))
}

impl ClusteredAutomaton {
    /// An automaton with a given state assignment; record 0 must be the root.
    pub fn with_assignment(
        records: &[ActivationRecord],
        assignment: Vec<usize>,
        num_states: usize,
    ) -> Self {
        assert_eq!(records.len(), assignment.len());
        let vectors: Vec<Vec<f64>> = records.iter().map(|r| r.vector.clone()).collect();
        let weights: Vec<f64> = records.iter().map(|r| r.weight as f64).collect();
        let points = standardize(&vectors, &weights);
        let point_of = (0..records.len()).collect();
        ClusteredAutomaton::new(records, assignment, num_states, point_of, points)
    }

    fn new(
        records: &[ActivationRecord],
        assignment: Vec<usize>,
        num_states: usize,
        point_of: Vec<usize>,
        points: Vec<Vec<f64>>,
    ) -> Self {
        let edges: Vec<Option<Edge>> = records
            .iter()
            .map(|r| {
                Some(Edge {
                    prev: r.prev?,
                    input: r.label?.0,
                    label: r.label?.1,
                    weight: r.weight,
                })
            })
            .collect();
        let mut children = vec![Vec::new(); records.len()];
        for (i, e) in edges.iter().enumerate() {
            if let Some(e) = e {
                children[e.prev].push(i);
            }
        }
        let mut members = vec![Vec::new(); num_states];
        for (i, &s) in assignment.iter().enumerate() {
            members[s].push(i);
        }
        let mut ca = ClusteredAutomaton {
            initial: assignment[0],
            assignment,
            num_states,
            edges,
            children,
            members,
            point_of,
            points,
            out: vec![BTreeMap::new(); num_states],
        };
        for r in 0..records.len() {
            ca.update_edge(r, true);
        }
        ca
    }

    fn update_edge(&mut self, r: usize, add: bool) {
        let Some(e) = self.edges[r] else { return };
        let key = (e.input, e.label, self.assignment[r]);
        let map = &mut self.out[self.assignment[e.prev]];
        if add {
            *map.entry(key).or_default() += e.weight;
        } else {
            let c = map.get_mut(&key).expect("edge was counted");
            *c -= e.weight;
            if *c == 0 {
                map.remove(&key);
            }
        }
    }

    /// All transition keys with their counts.
    pub fn transitions(&self) -> impl Iterator<Item = (TransitionKey, u64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, m)| m.iter().map(move |(&(i, l, d), &c)| ((s, i, l, d), c)))
    }

    pub fn count(&self, key: TransitionKey) -> u64 {
        self.out[key.0]
            .get(&(key.1, key.2, key.3))
            .copied()
            .unwrap_or(0)
    }

    pub fn members(&self, state: usize) -> &[usize] {
        &self.members[state]
    }

    /// Alternatives per input symbol at `state` with support at least
    /// `lambda`, as `(label, target, count)` in label order.
    fn alternatives(
        &self,
        state: usize,
        lambda: Option<u64>,
    ) -> BTreeMap<SymbolId, Vec<(LabelId, usize, u64)>> {
        let mut alts: BTreeMap<SymbolId, Vec<(LabelId, usize, u64)>> = BTreeMap::new();
        for (&(i, l, d), &c) in &self.out[state] {
            if lambda.is_none_or(|lam| c >= lam) {
                alts.entry(i).or_default().push((l, d, c));
            }
        }
        alts
    }

    /// Splits `state` with a classifier trained to separate its records by
    /// the alternative they take on `sigma`. Every record of the state is
    /// reassigned by the classifier. Returns the resulting states and the
    /// states with transitions into them.
    pub(crate) fn split(
        &mut self,
        state: usize,
        sigma: SymbolId,
        alts: &[(LabelId, usize, u64)],
        cfg: &ExtractionConfig,
    ) -> Result<(Vec<usize>, BTreeSet<usize>), SplitFailure> {
        let class_of: HashMap<(LabelId, usize), usize> = alts
            .iter()
            .enumerate()
            .map(|(c, &(l, d, _))| ((l, d), c))
            .collect();
        let members = self.members[state].clone();
        let mut labeled: Vec<(usize, usize, f64)> = Vec::new();
        for &r in &members {
            let mut tally = vec![0u64; alts.len()];
            for &c in &self.children[r] {
                let e = self.edges[c].expect("child has an edge");
                if e.input != sigma {
                    continue;
                }
                if let Some(&cls) = class_of.get(&(e.label, self.assignment[c])) {
                    tally[cls] += e.weight;
                }
            }
            let total: u64 = tally.iter().sum();
            if total > 0 {
                let best = (0..tally.len())
                    .max_by_key(|&c| (tally[c], Reverse(c)))
                    .expect("non-empty");
                labeled.push((r, best, total as f64));
            }
        }
        let mut present: Vec<usize> = labeled.iter().map(|l| l.1).collect();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            return Err(SplitFailure);
        }
        let dense: HashMap<usize, usize> =
            present.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let x: Vec<&[f64]> = labeled
            .iter()
            .map(|l| self.points[self.point_of[l.0]].as_slice())
            .collect();
        let y: Vec<usize> = labeled.iter().map(|l| dense[&l.1]).collect();
        let w: Vec<f64> = labeled.iter().map(|l| l.2).collect();
        let clf = LinearClassifier::fit(cfg.classifier, &x, &y, &w, present.len());

        let pred: Vec<usize> = members
            .iter()
            .map(|&r| clf.predict(&self.points[self.point_of[r]]))
            .collect();
        let labeled_groups: BTreeSet<usize> = labeled
            .iter()
            .map(|l| pred[members.binary_search(&l.0).expect("member")])
            .collect();
        if labeled_groups.len() < 2 {
            return Err(SplitFailure);
        }

        let groups: BTreeSet<usize> = pred.iter().copied().collect();
        let mut new_id: HashMap<usize, usize> = HashMap::new();
        for (i, g) in groups.into_iter().enumerate() {
            let id = if i == 0 {
                state
            } else {
                self.out.push(BTreeMap::new());
                self.members.push(Vec::new());
                self.num_states += 1;
                self.num_states - 1
            };
            new_id.insert(g, id);
        }

        let mut affected: BTreeSet<usize> = BTreeSet::new();
        for &r in &members {
            affected.insert(r);
            affected.extend(self.children[r].iter().copied());
        }
        for &r in &affected {
            self.update_edge(r, false);
        }
        self.members[state].clear();
        for (&r, p) in members.iter().zip(&pred) {
            let s = new_id[p];
            self.assignment[r] = s;
            self.members[s].push(r);
        }
        for &r in &affected {
            self.update_edge(r, true);
        }
        if self.assignment[0] != self.initial {
            self.initial = self.assignment[0];
        }

        let mut new_states: Vec<usize> = new_id.values().copied().collect();
        new_states.sort_unstable();
        let mut upstream = BTreeSet::new();
        for &s in &new_states {
            for &r in &self.members[s] {
                if let Some(e) = self.edges[r] {
                    upstream.insert(self.assignment[e.prev]);
                }
            }
        }
        Ok((new_states, upstream))
    }
}

/// Chooses, per input symbol, the alternative with the largest support;
/// ties go to the smallest (label, target).
fn best(alts: &[(LabelId, usize, u64)]) -> (LabelId, usize, u64) {
    *alts
        .iter()
        .max_by_key(|&&(l, d, c)| (c, Reverse((l, d))))
        .expect("non-empty")
}

/// Breadth-first resolution of non-determinism. Transitions below
/// `lambda_trans` are ignored; a state with several surviving alternatives
/// on one input is split. Without a threshold no splitting happens and the
/// best-supported alternative wins. Splits are capped at `10 k`; whatever
/// conflict remains is settled by support.
pub fn resolve_transitions(ca: &mut ClusteredAutomaton, cfg: &ExtractionConfig) -> Resolution {
    let lambda = cfg.lambda_trans;
    let budget = 10 * cfg.k.max(1);
    let mut splits = 0;
    let mut split_failures = 0;
    let mut budget_exhausted = false;
    let mut unsplittable: HashSet<(usize, SymbolId)> = HashSet::new();
    let mut done = vec![false; ca.num_states];
    let mut queued = vec![false; ca.num_states];
    let mut queue = VecDeque::from([ca.initial]);
    queued[ca.initial] = true;

    while let Some(q) = queue.pop_front() {
        queued[q] = false;
        let alts = ca.alternatives(q, lambda);
        if lambda.is_some() {
            let conflict = alts
                .iter()
                .filter(|(s, v)| v.len() > 1 && !unsplittable.contains(&(q, **s)))
                .max_by_key(|(s, v)| (v.len(), Reverse(**s)))
                .map(|(s, _)| *s);
            if let Some(sigma) = conflict {
                if splits < budget {
                    match ca.split(q, sigma, &alts[&sigma], cfg) {
                        Ok((new_states, upstream)) => {
                            splits += 1;
                            done.resize(ca.num_states, false);
                            queued.resize(ca.num_states, false);
                            unsplittable.retain(|&(s, _)| s != q);
                            for s in new_states.into_iter().chain(upstream) {
                                done[s] = false;
                                if !queued[s] {
                                    queued[s] = true;
                                    queue.push_back(s);
                                }
                            }
                        }
                        Err(SplitFailure) => {
                            split_failures += 1;
                            unsplittable.insert((q, sigma));
                            queued[q] = true;
                            queue.push_back(q);
                        }
                    }
                    continue;
                }
                budget_exhausted = true;
            }
        }
        done[q] = true;
        for v in alts.values() {
            let (_, d, _) = best(v);
            if !done[d] && !queued[d] {
                queued[d] = true;
                queue.push_back(d);
            }
        }
    }

    // final projection over the settled automaton
    let mut transitions = Vec::new();
    let mut support = Vec::new();
    let mut dropped = 0;
    let mut seen = vec![false; ca.num_states];
    let mut bfs = VecDeque::from([ca.initial]);
    seen[ca.initial] = true;
    while let Some(q) = bfs.pop_front() {
        let alts = ca.alternatives(q, lambda);
        let kept: usize = alts.len();
        dropped += ca.out[q].len() - kept;
        for (&sym, v) in &alts {
            let (l, d, c) = best(v);
            transitions.push((q, sym, l, d));
            support.push(c);
            if !seen[d] {
                seen[d] = true;
                bfs.push_back(d);
            }
        }
    }
    Resolution {
        transitions,
        initial: ca.initial,
        num_states: ca.num_states,
        support,
        splits,
        split_failures,
        budget_exhausted,
        dropped,
    }
}
