//! Monte Carlo alignment driven by global aligned-pair statistics.
//!
//! Each pair starts from a random monotone alignment. Every iteration
//! resamples each pair's alignment from the distribution proportional to the
//! product of smoothed pair probabilities, with the pair's own contribution
//! removed from the counts, and then recounts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AlignedSequence, Step, StringPair};
use crate::fst::{SymbolId, EPSILON};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrpConfig {
    pub iterations: usize,
    /// Additive smoothing mass per pair type.
    pub alpha: f64,
    pub seed: u64,
    /// Update counts after every word instead of once per sweep.
    pub incremental: bool,
    /// Align equal-length pairs position by position without sampling.
    pub equal_length_positional: bool,
}

impl Default for CrpConfig {
    fn default() -> Self {
        CrpConfig {
            iterations: 10,
            alpha: 0.1,
            seed: 0,
            incremental: false,
            equal_length_positional: true,
        }
    }
}

/// Counts of aligned `(in, out)` pair types over a corpus, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCounts {
    width: usize,
    counts: Vec<u64>,
    total: u64,
}

impl PairCounts {
    fn new(max_in: SymbolId, max_out: SymbolId) -> Self {
        let width = max_out as usize + 1;
        PairCounts {
            width,
            counts: vec![0; (max_in as usize + 1) * width],
            total: 0,
        }
    }

    /// Counts every step of every alignment.
    pub fn from_alignments(alignments: &[AlignedSequence]) -> Self {
        let (mi, mo) = alignments
            .iter()
            .flat_map(|a| a.steps.iter())
            .fold((0, 0), |(mi, mo), &(i, o)| (mi.max(i), mo.max(o)));
        let mut c = PairCounts::new(mi, mo);
        for a in alignments {
            c.add(&a.steps);
        }
        c
    }

    pub fn get(&self, input: SymbolId, output: SymbolId) -> u64 {
        self.counts
            .get(input as usize * self.width + output as usize)
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Observed pair types with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (Step, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| {
                (
                    ((k / self.width) as SymbolId, (k % self.width) as SymbolId),
                    c,
                )
            })
    }

    fn add(&mut self, steps: &[Step]) {
        for &(i, o) in steps {
            self.counts[i as usize * self.width + o as usize] += 1;
        }
        self.total += steps.len() as u64;
    }

    fn remove(&mut self, steps: &[Step]) {
        for &(i, o) in steps {
            self.counts[i as usize * self.width + o as usize] -= 1;
        }
        self.total -= steps.len() as u64;
    }
}

/// Smoothed log-probabilities of pair types under the current counts.
enum LogProbs<'a> {
    Uniform,
    Smoothed {
        counts: &'a PairCounts,
        alpha: f64,
        log_denom: f64,
    },
}

impl<'a> LogProbs<'a> {
    fn from_counts(counts: &'a PairCounts, alpha: f64) -> Self {
        // Pair vocabulary: every combination except (ε, ε).
        let vocab = (counts.counts.len() - 1) as f64;
        LogProbs::Smoothed {
            counts,
            alpha,
            log_denom: (counts.total as f64 + alpha * vocab).ln(),
        }
    }

    #[inline]
    fn get(&self, i: SymbolId, o: SymbolId) -> f64 {
        match self {
            LogProbs::Uniform => 0.0,
            LogProbs::Smoothed {
                counts,
                alpha,
                log_denom,
            } => (counts.get(i, o) as f64 + alpha).ln() - log_denom,
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Draws a monotone alignment of `pair` with probability proportional to the
/// product of its step probabilities.
fn sample_alignment(pair: &StringPair, lp: &LogProbs, rng: &mut ChaCha8Rng) -> Vec<Step> {
    let (x, y) = (&pair.input, &pair.output);
    let (n, m) = (x.len(), y.len());
    let w = m + 1;
    let mut fwd = vec![f64::NEG_INFINITY; (n + 1) * w];
    fwd[0] = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            if i == 0 && j == 0 {
                continue;
            }
            let mut acc = f64::NEG_INFINITY;
            if i > 0 && j > 0 {
                acc = log_add(acc, fwd[(i - 1) * w + j - 1] + lp.get(x[i - 1], y[j - 1]));
            }
            if i > 0 {
                acc = log_add(acc, fwd[(i - 1) * w + j] + lp.get(x[i - 1], EPSILON));
            }
            if j > 0 {
                acc = log_add(acc, fwd[i * w + j - 1] + lp.get(EPSILON, y[j - 1]));
            }
            fwd[i * w + j] = acc;
        }
    }

    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let total = fwd[i * w + j];
        let mut options: [(f64, usize, usize, Step); 3] = [(f64::NEG_INFINITY, 0, 0, (0, 0)); 3];
        if i > 0 && j > 0 {
            options[0] = (
                fwd[(i - 1) * w + j - 1] + lp.get(x[i - 1], y[j - 1]) - total,
                i - 1,
                j - 1,
                (x[i - 1], y[j - 1]),
            );
        }
        if i > 0 {
            options[1] = (
                fwd[(i - 1) * w + j] + lp.get(x[i - 1], EPSILON) - total,
                i - 1,
                j,
                (x[i - 1], EPSILON),
            );
        }
        if j > 0 {
            options[2] = (
                fwd[i * w + j - 1] + lp.get(EPSILON, y[j - 1]) - total,
                i,
                j - 1,
                (EPSILON, y[j - 1]),
            );
        }
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut chosen = None;
        for (k, opt) in options.iter().enumerate() {
            if opt.0 == f64::NEG_INFINITY {
                continue;
            }
            cum += opt.0.exp();
            chosen = Some(k);
            if u < cum {
                break;
            }
        }
        let (_, pi, pj, step) = options[chosen.expect("at least one predecessor")];
        steps.push(step);
        i = pi;
        j = pj;
    }
    steps.reverse();
    steps
}

fn positional(pair: &StringPair) -> Vec<Step> {
    pair.input
        .iter()
        .copied()
        .zip(pair.output.iter().copied())
        .collect()
}

/// Aligns every pair; deterministic for a fixed `config.seed`.
pub fn crp_align(pairs: &[StringPair], config: &CrpConfig) -> Vec<AlignedSequence> {
    let mut rng = substream(config.seed, "align");
    let iterations = config.iterations.max(1);
    let fixed = |p: &StringPair| config.equal_length_positional && p.input.len() == p.output.len();

    let (mi, mo) = pairs.iter().fold((0, 0), |(mi, mo), p| {
        (
            p.input.iter().copied().fold(mi, SymbolId::max),
            p.output.iter().copied().fold(mo, SymbolId::max),
        )
    });
    let mut counts = PairCounts::new(mi, mo);

    let mut current: Vec<Vec<Step>> = pairs
        .iter()
        .map(|p| {
            if fixed(p) {
                positional(p)
            } else {
                sample_alignment(p, &LogProbs::Uniform, &mut rng)
            }
        })
        .collect();
    for a in &current {
        counts.add(a);
    }

    for _ in 0..iterations {
        let mut next = current.clone();
        for (k, pair) in pairs.iter().enumerate() {
            if fixed(pair) {
                continue;
            }
            counts.remove(&current[k]);
            let lp = LogProbs::from_counts(&counts, config.alpha);
            let sampled = sample_alignment(pair, &lp, &mut rng);
            if config.incremental {
                counts.add(&sampled);
                current[k] = sampled.clone();
            } else {
                counts.add(&current[k]);
            }
            next[k] = sampled;
        }
        if !config.incremental {
            counts.remove_all();
            for a in &next {
                counts.add(a);
            }
        }
        current = next;
    }
    current.into_iter().map(AlignedSequence::new).collect()
}

impl PairCounts {
    fn remove_all(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
    }
}
