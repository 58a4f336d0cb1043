//! Synthetic input strings that approximate the task domain.
//!
//! Training inputs alone cover few hidden-state trajectories. These
//! generators propose extra inputs that are plausible for the task, which the
//! network then labels for extraction.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use thiserror::Error;

use crate::fst::SymbolId;
use crate::rng::substream;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("example {index}: {message}")]
    Format { index: usize, message: String },
}

/// A padded n-gram token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Tok {
    Bos,
    Sym(SymbolId),
    Eos,
}

/// The set of n-grams observed in boundary-padded training strings. Each
/// string is padded with `n - 1` begin markers and one end marker.
#[derive(Debug, Clone)]
pub struct NgramModel {
    n: usize,
    grams: HashSet<Vec<Tok>>,
    alphabet: Vec<SymbolId>,
    check_end: bool,
}

impl NgramModel {
    pub fn new<S: AsRef<[SymbolId]>>(n: usize, strings: &[S]) -> Self {
        assert!(n >= 1, "n-gram order must be at least 1");
        let mut grams = HashSet::new();
        let mut alphabet = HashSet::new();
        for s in strings {
            let s = s.as_ref();
            alphabet.extend(s.iter().copied());
            let padded = pad(n, s);
            for w in padded.windows(n) {
                grams.insert(w.to_vec());
            }
        }
        let mut alphabet: Vec<SymbolId> = alphabet.into_iter().collect();
        alphabet.sort_unstable();
        NgramModel {
            n,
            grams,
            alphabet,
            check_end: true,
        }
    }

    /// With `false`, generated strings need not end the way a training
    /// string ends.
    pub fn with_end_check(mut self, check_end: bool) -> Self {
        self.check_end = check_end;
        self
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn num_grams(&self) -> usize {
        self.grams.len()
    }

    /// Whether every padded n-gram of `s` was observed.
    pub fn admits(&self, s: &[SymbolId]) -> bool {
        let padded = pad(self.n, s);
        let windows = padded.len() + 1 - self.n;
        padded
            .windows(self.n)
            .enumerate()
            .all(|(i, w)| (!self.check_end && i + 1 == windows) || self.grams.contains(w))
    }

    fn can_extend(&self, ctx: &[Tok], next: Tok) -> bool {
        let mut g = Vec::with_capacity(self.n);
        g.extend_from_slice(ctx);
        g.push(next);
        self.grams.contains(&g)
    }

    fn can_end(&self, ctx: &[Tok]) -> bool {
        !self.check_end || self.can_extend(ctx, Tok::Eos)
    }

    fn shift(&self, ctx: &[Tok], next: Tok) -> Vec<Tok> {
        let mut c = ctx.to_vec();
        c.push(next);
        if c.len() > self.n - 1 {
            c.remove(0);
        }
        c
    }
}

fn pad(n: usize, s: &[SymbolId]) -> Vec<Tok> {
    let mut p = vec![Tok::Bos; n - 1];
    p.extend(s.iter().map(|&x| Tok::Sym(x)));
    p.push(Tok::Eos);
    p
}

/// Counts of admitted completions, memoized by (context, remaining length).
struct Counter<'a> {
    model: &'a NgramModel,
    memo: HashMap<(Vec<Tok>, usize), u64>,
}

impl Counter<'_> {
    /// Admitted strings that extend a prefix ending in `ctx` by at most
    /// `rem` symbols, counting the prefix itself.
    fn count(&mut self, ctx: &[Tok], rem: usize) -> u64 {
        if let Some(&c) = self.memo.get(&(ctx.to_vec(), rem)) {
            return c;
        }
        let mut total = u64::from(self.model.can_end(ctx));
        if rem > 0 {
            for &a in &self.model.alphabet {
                if self.model.can_extend(ctx, Tok::Sym(a)) {
                    let next = self.model.shift(ctx, Tok::Sym(a));
                    total = total.saturating_add(self.count(&next, rem - 1));
                }
            }
        }
        self.memo.insert((ctx.to_vec(), rem), total);
        total
    }

    /// The `rank`-th admitted string in depth-first order.
    fn unrank(&mut self, mut rank: u64, max_len: usize) -> Vec<SymbolId> {
        let mut ctx = vec![Tok::Bos; self.model.n - 1];
        let mut out = Vec::new();
        loop {
            if self.model.can_end(&ctx) {
                if rank == 0 {
                    return out;
                }
                rank -= 1;
            }
            let rem = max_len - out.len();
            let mut advanced = false;
            for &a in &self.model.alphabet {
                if rem == 0 || !self.model.can_extend(&ctx, Tok::Sym(a)) {
                    continue;
                }
                let next = self.model.shift(&ctx, Tok::Sym(a));
                let c = self.count(&next, rem - 1);
                if rank < c {
                    out.push(a);
                    ctx = next;
                    advanced = true;
                    break;
                }
                rank -= c;
            }
            assert!(advanced, "rank out of range");
        }
    }
}

/// All admitted strings of length `1..=max_len`, in depth-first order. When
/// there are more than `cap`, a uniform sample of `cap` of them is returned,
/// still in depth-first order.
pub fn gen_ngram_strings(
    model: &NgramModel,
    max_len: usize,
    cap: usize,
    seed: u64,
) -> Vec<Vec<SymbolId>> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut counter = Counter {
        model,
        memo: HashMap::new(),
    };
    let root = vec![Tok::Bos; model.n - 1];
    let empty_admitted = u64::from(model.can_end(&root));
    let total = counter.count(&root, max_len);
    let ranks: Vec<u64> = if total - empty_admitted <= cap as u64 {
        (empty_admitted..total).collect()
    } else {
        let mut rng = substream(seed, "ngram");
        sample_ranks(empty_admitted, total, cap, &mut rng)
    };
    ranks
        .into_iter()
        .map(|r| counter.unrank(r, max_len))
        .collect()
}

/// `k` distinct values from `lo..hi`, sorted (Floyd's algorithm).
fn sample_ranks<R: Rng>(lo: u64, hi: u64, k: usize, rng: &mut R) -> Vec<u64> {
    let n = hi - lo;
    let mut chosen = HashSet::with_capacity(k);
    for j in n - k as u64..n {
        let t = rng.gen_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut v: Vec<u64> = chosen.into_iter().map(|x| x + lo).collect();
    v.sort_unstable();
    v
}

/// Every combination of one example's tag prefix with another example's
/// lemma, minus the training inputs themselves. Inputs are split at the first
/// non-tag symbol; each must have at least one tag and one lemma symbol.
/// Output is ordered by tag set then lemma (first-occurrence order) and
/// uniformly subsampled to `cap`.
pub fn gen_inflection_swap<F>(
    inputs: &[Vec<SymbolId>],
    is_tag: F,
    cap: usize,
    seed: u64,
) -> Result<Vec<Vec<SymbolId>>, DomainError>
where
    F: Fn(SymbolId) -> bool,
{
    let mut tagsets: Vec<&[SymbolId]> = Vec::new();
    let mut lemmas: Vec<&[SymbolId]> = Vec::new();
    let mut seen_t = HashSet::new();
    let mut seen_l = HashSet::new();
    for (index, s) in inputs.iter().enumerate() {
        let split = s.iter().position(|&x| !is_tag(x)).unwrap_or(s.len());
        let (tags, lemma) = s.split_at(split);
        let err = |message: &str| DomainError::Format {
            index,
            message: message.to_owned(),
        };
        if tags.is_empty() {
            return Err(err("no tag prefix"));
        }
        if lemma.is_empty() {
            return Err(err("no lemma after the tags"));
        }
        if lemma.iter().any(|&x| is_tag(x)) {
            return Err(err("tag symbol inside the lemma"));
        }
        if seen_t.insert(tags) {
            tagsets.push(tags);
        }
        if seen_l.insert(lemma) {
            lemmas.push(lemma);
        }
    }
    let train: HashSet<&[SymbolId]> = inputs.iter().map(Vec::as_slice).collect();
    let mut out: Vec<Vec<SymbolId>> = Vec::new();
    for t in &tagsets {
        for l in &lemmas {
            let s = [*t, *l].concat();
            if !train.contains(s.as_slice()) {
                out.push(s);
            }
        }
    }
    if out.len() > cap {
        let mut rng = substream(seed, "swap");
        let keep = sample_ranks(0, out.len() as u64, cap, &mut rng);
        out = keep
            .into_iter()
            .map(|i| std::mem::take(&mut out[i as usize]))
            .collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(s: &str) -> Vec<SymbolId> {
        s.bytes().map(|b| (b - b'a' + 1) as SymbolId).collect()
    }

    fn dec(v: &[SymbolId]) -> String {
        v.iter().map(|&x| (b'a' + x as u8 - 1) as char).collect()
    }

    /// Every string over `alphabet` of length `1..=max_len` that the model
    /// admits, by brute force.
    fn brute(model: &NgramModel, alphabet: &[SymbolId], max_len: usize) -> HashSet<Vec<SymbolId>> {
        let mut out = HashSet::new();
        let mut frontier: Vec<Vec<SymbolId>> = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for &a in alphabet {
                    let mut t = s.clone();
                    t.push(a);
                    if model.admits(&t) {
                        out.insert(t.clone());
                    }
                    next.push(t);
                }
            }
            frontier = next;
        }
        out
    }

    #[test]
    fn bigram_single_word() {
        let m = NgramModel::new(2, &[enc("ab")]);
        let got: Vec<String> = gen_ngram_strings(&m, 2, 100, 0)
            .iter()
            .map(|s| dec(s))
            .collect();
        assert_eq!(got, vec!["ab"]);
    }

    #[test]
    fn bigram_runs() {
        let m = NgramModel::new(2, &[enc("aa")]);
        let got: Vec<String> = gen_ngram_strings(&m, 3, 100, 0)
            .iter()
            .map(|s| dec(s))
            .collect();
        assert_eq!(got, vec!["a", "aa", "aaa"]);
        let oracle = brute(&m, &[1, 2], 3);
        assert_eq!(got.len(), oracle.len());
    }

    #[test]
    fn empty_training_set() {
        let m = NgramModel::new(2, &Vec::<Vec<SymbolId>>::new());
        assert!(gen_ngram_strings(&m, 6, 100, 0).is_empty());
    }

    #[test]
    fn matches_brute_force_and_contains_training() {
        let train: Vec<Vec<SymbolId>> = ["abc", "bca", "cab", "abba", "cc"]
            .iter()
            .map(|s| enc(s))
            .collect();
        for n in [1, 2, 3] {
            for check_end in [true, false] {
                let m = NgramModel::new(n, &train).with_end_check(check_end);
                let got = gen_ngram_strings(&m, 5, usize::MAX, 0);
                let set: HashSet<Vec<SymbolId>> = got.iter().cloned().collect();
                assert_eq!(set.len(), got.len(), "duplicates");
                assert_eq!(set, brute(&m, &[1, 2, 3], 5), "n={n} end={check_end}");
                for t in &train {
                    assert!(set.contains(t));
                }
            }
        }
    }

    #[test]
    fn cap_samples_a_deterministic_subset() {
        let train: Vec<Vec<SymbolId>> = ["abcd", "dcba", "acbd", "bdac"]
            .iter()
            .map(|s| enc(s))
            .collect();
        let m = NgramModel::new(1, &train);
        let full = gen_ngram_strings(&m, 4, usize::MAX, 0);
        assert_eq!(full.len(), 4 + 16 + 64 + 256);
        let a = gen_ngram_strings(&m, 4, 50, 3);
        let b = gen_ngram_strings(&m, 4, 50, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        let pos: Vec<usize> = a
            .iter()
            .map(|s| full.iter().position(|f| f == s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, gen_ngram_strings(&m, 4, 50, 4));
    }

    const T1: SymbolId = 100;
    const T2: SymbolId = 101;

    #[test]
    fn swap_completes_the_grid() {
        let is_tag = |x: SymbolId| x >= 100;
        let full = vec![
            [vec![T1], enc("ab")].concat(),
            [vec![T1], enc("cd")].concat(),
            [vec![T2], enc("ab")].concat(),
            [vec![T2], enc("cd")].concat(),
        ];
        assert!(gen_inflection_swap(&full, is_tag, 100, 0)
            .unwrap()
            .is_empty());
        let half = vec![full[0].clone(), full[3].clone()];
        let got = gen_inflection_swap(&half, is_tag, 100, 0).unwrap();
        assert_eq!(got, vec![full[1].clone(), full[2].clone()]);
    }

    #[test]
    fn swap_format_errors() {
        let is_tag = |x: SymbolId| x >= 100;
        let no_tag = vec![enc("ab")];
        assert!(matches!(
            gen_inflection_swap(&no_tag, is_tag, 10, 0),
            Err(DomainError::Format { index: 0, .. })
        ));
        let no_lemma = vec![[vec![T1], enc("a")].concat(), vec![T1, T2]];
        assert!(matches!(
            gen_inflection_swap(&no_lemma, is_tag, 10, 0),
            Err(DomainError::Format { index: 1, .. })
        ));
    }

    #[test]
    fn swap_cap() {
        let is_tag = |x: SymbolId| x >= 100;
        let inputs: Vec<Vec<SymbolId>> = (0..10)
            .map(|i| vec![100 + i, 1 + (i % 5), 2 + (i % 3)])
            .collect();
        let got = gen_inflection_swap(&inputs, is_tag, 20, 1).unwrap();
        assert_eq!(got.len(), 20);
        for s in &got {
            assert!(is_tag(s[0]) && !s[1..].iter().any(|&x| is_tag(x)));
            assert!(!inputs.contains(s));
        }
    }
}
