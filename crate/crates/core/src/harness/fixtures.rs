//! Small ground-truth string functions with known finite-state solutions.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, RawPair, Task};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Copies strings over `{a, b, c, d}`.
    Identity,
    /// Appends `s` to strings over `{a, c, o, t}` that end in `t`.
    Pluralizer,
    /// Over `{k, t, a, e, A}`: the archiphoneme `A` surfaces as the most
    /// recent full vowel, or as `a` when none precedes it. Three states:
    /// neutral, back and front.
    VowelHarmony,
}

pub const TRAIN: usize = 500;
pub const DEV: usize = 100;
pub const TEST: usize = 200;
pub const MAX_LEN: usize = 7;

impl Fixture {
    pub const ALL: [Fixture; 3] = [
        Fixture::Identity,
        Fixture::Pluralizer,
        Fixture::VowelHarmony,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Identity => "identity",
            Fixture::Pluralizer => "pluralizer",
            Fixture::VowelHarmony => "vowel-harmony",
        }
    }

    pub fn alphabet(self) -> &'static [char] {
        match self {
            Fixture::Identity => &['a', 'b', 'c', 'd'],
            Fixture::Pluralizer => &['a', 'c', 'o', 't'],
            Fixture::VowelHarmony => &['k', 't', 'a', 'e', 'A'],
        }
    }

    pub fn apply(self, input: &str) -> String {
        match self {
            Fixture::Identity => input.to_owned(),
            Fixture::Pluralizer if input.ends_with('t') => format!("{input}s"),
            Fixture::Pluralizer => input.to_owned(),
            Fixture::VowelHarmony => {
                let mut class = 'a';
                input
                    .chars()
                    .map(|c| match c {
                        'a' | 'e' => {
                            class = c;
                            c
                        }
                        'A' => class,
                        other => other,
                    })
                    .collect()
            }
        }
    }

    /// Disjoint train, dev and test splits of distinct random strings of
    /// length `1..=MAX_LEN`.
    pub fn dataset(self, seed: u64) -> Dataset {
        let mut rng = substream(seed, &format!("fixture-{}", self.name()));
        let mut seen = HashSet::new();
        let mut rows: Vec<RawPair> = Vec::with_capacity(TRAIN + DEV + TEST);
        while rows.len() < TRAIN + DEV + TEST {
            let len = rng.gen_range(1..=MAX_LEN);
            let s: String = (0..len)
                .map(|_| *self.alphabet().choose(&mut rng).unwrap())
                .collect();
            if seen.insert(s.clone()) {
                let out = self.apply(&s);
                rows.push((
                    s.chars().map(String::from).collect(),
                    out.chars().map(String::from).collect(),
                ));
            }
        }
        let (train, rest) = rows.split_at(TRAIN);
        let (dev, test) = rest.split_at(DEV);
        Dataset::from_raw(Task::Normalization, self.name(), train, dev, test)
    }
}
