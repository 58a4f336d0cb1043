use nalgebra::DMatrix;
use proptest::prelude::*;

use fst_forge::align::{
    crp_align, med_align, merge_epsilons_greedy, merge_epsilons_right, CrpConfig, StringPair,
    SymbolMatcher,
};
use fst_forge::domain::{gen_ngram_strings, NgramModel};
use fst_forge::fst::{parse_att, Format, RawTransition, StateId, SymbolId};
use fst_forge::rnn::matrix::Matrix;
use fst_forge::rnn::spectral::spectral_norm;
use fst_forge::{SymbolTable, Transducer};

const SIGMA: [&str; 3] = ["a", "b", "c"];

fn tables() -> (SymbolTable, SymbolTable) {
    let mut i = SymbolTable::new();
    let mut o = SymbolTable::new();
    for s in SIGMA {
        i.intern(s);
    }
    for s in ["x", "y"] {
        o.intern(s);
    }
    (i, o)
}

/// Per state and input symbol: maybe a transition `(output, target)`.
fn arb_transducer() -> impl Strategy<Value = Transducer> {
    (1usize..=6).prop_flat_map(|n| {
        let arc =
            proptest::option::weighted(0.7, (proptest::collection::vec(1u32..=2, 0..=2), 0..n));
        proptest::collection::vec(arc, n * SIGMA.len()).prop_map(move |arcs| {
            let raw = arcs.into_iter().enumerate().filter_map(|(k, a)| {
                a.map(|(out, dst)| {
                    RawTransition::new(
                        (k / SIGMA.len()) as StateId,
                        (k % SIGMA.len() + 1) as SymbolId,
                        out,
                        dst as StateId,
                    )
                })
            });
            let (i, o) = tables();
            Transducer::new(i, o, n, 0, raw)
                .unwrap()
                .prune_inaccessible()
        })
    })
}

fn strings(max_len: usize) -> Vec<Vec<&'static str>> {
    let mut all = vec![vec![]];
    let mut frontier: Vec<Vec<&str>> = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| SIGMA.iter().map(move |&x| [s.clone(), vec![x]].concat()))
            .collect();
        all.extend(frontier.iter().cloned());
    }
    all
}

fn arb_pair() -> impl Strategy<Value = StringPair> {
    (
        proptest::collection::vec(1u32..=4, 1..=7),
        proptest::collection::vec(1u32..=4, 0..=7),
    )
        .prop_map(|(i, o)| StringPair::new(i, o))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn att_text_round_trips(t in arb_transducer()) {
        let back = parse_att(&t.serialize(Format::AttText)).unwrap();
        for s in strings(5) {
            prop_assert_eq!(t.apply_symbols(&s).ok(), back.apply_symbols(&s).ok());
        }
    }

    #[test]
    fn minimize_preserves_function_and_never_grows(t in arb_transducer()) {
        let m = t.minimize();
        prop_assert!(m.num_states() <= t.num_states());
        for s in strings(5) {
            prop_assert_eq!(t.apply_symbols(&s).ok(), m.apply_symbols(&s).ok());
        }
    }

    #[test]
    fn merged_alignments_reconstruct_pairs(pairs in proptest::collection::vec(arb_pair(), 1..20), seed in 0u64..100) {
        let (mut i, mut o) = (SymbolTable::new(), SymbolTable::new());
        for s in ["a", "b", "c", "d"] {
            i.intern(s);
            o.intern(s);
        }
        let crp = crp_align(&pairs, &CrpConfig { iterations: 2, seed, ..Default::default() });
        let med = med_align(&pairs, &SymbolMatcher::new(&i, &o), true);
        for aligned in [crp, med] {
            for ((p, a), g) in pairs.iter().zip(&aligned).zip(merge_epsilons_greedy(&aligned)) {
                prop_assert!(a.is_valid_for(p));
                for m in [merge_epsilons_right(a).unwrap(), g.unwrap()] {
                    prop_assert_eq!(&m.input(), &p.input);
                    prop_assert_eq!(&m.output(), &p.output);
                }
            }
        }
    }

    #[test]
    fn ngram_generation_contains_short_training_strings(
        train in proptest::collection::vec(proptest::collection::vec(1u32..=3, 1..=5), 1..6),
        n in 1usize..=3,
    ) {
        let model = NgramModel::new(n, &train);
        let generated = gen_ngram_strings(&model, 4, usize::MAX, 0);
        for s in train.iter().filter(|s| s.len() <= 4) {
            prop_assert!(generated.contains(s));
        }
        prop_assert!(generated.iter().all(|s| model.admits(s)));
    }

    #[test]
    fn spectral_norm_matches_svd(
        (rows, cols, data) in (2usize..12, 2usize..12)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(-1.0f64..1.0, r * c))),
        seed in 0u64..1000,
    ) {
        let m: Vec<Vec<f64>> = data.chunks(cols).map(<[f64]>::to_vec).collect();
        let oracle = DMatrix::from_row_slice(rows, cols, &data).singular_values().max();
        let ours = spectral_norm(&Matrix::from_rows(&m), 500, seed);
        prop_assert!((ours - oracle).abs() <= 1e-3 * oracle.max(1e-9), "{} vs {}", ours, oracle);
    }
}
