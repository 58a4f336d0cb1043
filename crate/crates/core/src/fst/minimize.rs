//! Partition refinement over composite `(input, output)` labels.
//!
//! Every state accepts, so two states are equivalent iff they define the same
//! label set and each label leads to equivalent successors. The initial
//! partition groups states by their label set; each round splits blocks by the
//! `(label -> successor block)` map until the block count is stable.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{Arc, StateId, SymbolId, Transducer};

type Label = (SymbolId, Vec<SymbolId>);

pub(super) fn minimize(t: &Transducer) -> Transducer {
    let n = t.num_states;
    let mut label_ids: HashMap<Label, u32> = HashMap::new();
    let mut edges: Vec<Vec<(u32, StateId)>> = vec![Vec::new(); n];
    for (&(src, input), arc) in &t.transitions {
        let next = label_ids.len() as u32;
        let l = *label_ids.entry((input, arc.output.clone())).or_insert(next);
        edges[src as usize].push((l, arc.target));
    }
    for e in &mut edges {
        e.sort_unstable();
    }

    let mut block = assign(n, |s| edges[s].iter().map(|&(l, _)| l).collect::<Vec<_>>());
    let mut count = num_blocks(&block);
    loop {
        let next = assign(n, |s| {
            (
                block[s],
                edges[s]
                    .iter()
                    .map(|&(l, dst)| (l, block[dst as usize]))
                    .collect::<Vec<_>>(),
            )
        });
        let next_count = num_blocks(&next);
        block = next;
        if next_count == count {
            break;
        }
        count = next_count;
    }

    // Canonical numbering: breadth-first from the initial block, in input order.
    let mut representative: Vec<Option<usize>> = vec![None; count];
    for s in 0..n {
        representative[block[s] as usize].get_or_insert(s);
    }
    let mut renumber: Vec<Option<StateId>> = vec![None; count];
    let mut order = Vec::with_capacity(count);
    let start = block[t.initial as usize];
    renumber[start as usize] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(b) = queue.pop_front() {
        order.push(b);
        let rep = representative[b as usize].expect("non-empty block") as StateId;
        for (_, arc) in t.outgoing(rep) {
            let nb = block[arc.target as usize];
            if renumber[nb as usize].is_none() {
                renumber[nb as usize] = Some(order.len() as StateId + queue.len() as StateId);
                queue.push_back(nb);
            }
        }
    }

    let mut transitions = BTreeMap::new();
    for &b in &order {
        let rep = representative[b as usize].expect("non-empty block") as StateId;
        let src = renumber[b as usize].expect("reached");
        for (input, arc) in t.outgoing(rep) {
            transitions.insert(
                (src, input),
                Arc {
                    output: arc.output.clone(),
                    target: renumber[block[arc.target as usize] as usize].expect("reached"),
                },
            );
        }
    }
    Transducer {
        input_table: t.input_table.clone(),
        output_table: t.output_table.clone(),
        num_states: order.len(),
        initial: 0,
        transitions,
    }
}

/// Dense block ids from per-state signatures, numbered by first occurrence.
fn assign<K, F>(n: usize, signature: F) -> Vec<u32>
where
    K: std::hash::Hash + Eq,
    F: Fn(usize) -> K,
{
    let mut ids: HashMap<K, u32> = HashMap::new();
    (0..n)
        .map(|s| {
            let next = ids.len() as u32;
            *ids.entry(signature(s)).or_insert(next)
        })
        .collect()
}

fn num_blocks(block: &[u32]) -> usize {
    block.iter().map(|&b| b as usize + 1).max().unwrap_or(0)
}
