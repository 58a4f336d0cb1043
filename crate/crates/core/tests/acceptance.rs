//! Acceptance criteria, one PASS/FAIL/SKIP line each. Runs without the
//! libtest harness so the lines always reach the output.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use fst_forge::align::{
    crp_align, med_align, merge_epsilons_greedy, merge_epsilons_right, AlignedSequence, CrpConfig,
    StringPair, SymbolMatcher,
};
use fst_forge::baselines::{ostia, InductionOptions};
use fst_forge::extract::{
    collect_activations, distinct_vectors, extract, extract_from_records, ClassifierKind,
    ExtractionConfig,
};
use fst_forge::fst::{is_input_deterministic, RawTransition, StateId, SymbolId};
use fst_forge::harness::fixtures::Fixture;
use fst_forge::harness::{
    align_dataset, evaluate, load_dataset, run_sweep, synthetic_inputs, MarkedFst, PipelineConfig,
    SweepSpec, Task,
};
use fst_forge::rng::substream;
use fst_forge::rnn::matrix::Matrix;
use fst_forge::rnn::params::{loss_and_grad, Example, LossSpec, ModelParams, NoDropout, Target};
use fst_forge::rnn::spectral::{spectral_norm, PowerIteration};
use fst_forge::rnn::{train, TrainConfig};
use fst_forge::{SymbolTable, Transducer};

const FIXTURE_MIN_TEST: f64 = 0.95;
const FIXTURE_BUDGET: usize = 10;
const FIXTURE_MAX_TIME: Duration = Duration::from_secs(15 * 60);
const PAPER_TOLERANCE: f64 = 0.15;
const OSTIA_MAX_SMALL: f64 = 0.15;
const GRAD_REL_ERR: f64 = 1e-4;
const SPECTRAL_REL_ERR: f64 = 0.01;
const MIN_MAX_LEN: usize = 8;
const EXTRACTION_RUNS: usize = 100;
const ROUNDTRIP_PAIRS: usize = 10_000;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn fixture_sweep(seed: u64) -> SweepSpec {
    SweepSpec {
        budget: FIXTURE_BUDGET,
        seed,
        dims: vec![16, 32],
        learning_rates: vec![2e-3, 1e-2],
        dropouts: vec![0.0, 0.1],
        epochs: vec![300, 600],
        k_cap: Some(100),
        ..Default::default()
    }
}

fn ground_truth_recovery() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for f in Fixture::ALL {
        let ds = f.dataset(0);
        let outcome = match run_sweep(&ds, &PipelineConfig::default(), &fixture_sweep(0)) {
            Ok(o) => o,
            Err(e) => return Verdict::Fail(format!("{}: sweep failed: {e}", f.name())),
        };
        let ost = match ostia(
            &ds.train,
            &ds.input_table,
            &ds.output_table,
            InductionOptions::default(),
        ) {
            Ok(o) => o,
            Err(e) => return Verdict::Fail(format!("{}: OSTIA failed: {e}", f.name())),
        };
        let ost_train = evaluate(
            &MarkedFst::new(&ost.fst, &ds.input_table),
            &ds.train,
            &ds.output_table,
        )
        .accuracy;
        ok &= outcome.test.accuracy >= FIXTURE_MIN_TEST && ost_train == 1.0 && ds.test_reads() == 1;
        parts.push(format!(
            "{} test {:.3} ({} states) ostia-train {:.3}",
            f.name(),
            outcome.test.accuracy,
            outcome.report.states,
            ost_train
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < FIXTURE_MAX_TIME;
    verdict(
        ok,
        format!(
            "{}; {:.0}s (need test >= {FIXTURE_MIN_TEST}, ostia-train = 1, < {}s)",
            parts.join(", "),
            elapsed.as_secs_f64(),
            FIXTURE_MAX_TIME.as_secs()
        ),
    )
}

/// Looks for `tgk` and `dje` split files under `$FST_FORGE_SIGMORPHON` or
/// the workspace `data/` directory.
fn sigmorphon_dir() -> Option<PathBuf> {
    let candidates = std::env::var_os("FST_FORGE_SIGMORPHON")
        .map(PathBuf::from)
        .into_iter()
        .chain([PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")]);
    candidates.into_iter().find(|dir| {
        ["tgk", "dje"]
            .iter()
            .all(|l| dir.join(format!("{l}.trn")).is_file())
    })
}

fn small_dataset_reproduction() -> Verdict {
    let Some(dir) = sigmorphon_dir() else {
        return Verdict::Skip("tgk/dje split files not found (set FST_FORGE_SIGMORPHON)".into());
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (lang, paper) in [("tgk", 0.938), ("dje", 0.750)] {
        let ds = match load_dataset(&dir.join(lang), Task::Inflection) {
            Ok(d) => d,
            Err(e) => return Verdict::Fail(format!("{lang}: {e}")),
        };
        let spec = SweepSpec {
            budget: 25,
            ..Default::default()
        };
        let pipeline = match run_sweep(&ds, &PipelineConfig::default(), &spec) {
            Ok(o) => o.test.accuracy,
            Err(e) => return Verdict::Fail(format!("{lang}: {e}")),
        };
        let ost = match ostia(
            &ds.train,
            &ds.input_table,
            &ds.output_table,
            InductionOptions::default(),
        ) {
            Ok(o) => {
                evaluate(
                    &MarkedFst::new(&o.fst, &ds.input_table),
                    ds.test_split(),
                    &ds.output_table,
                )
                .accuracy
            }
            Err(e) => return Verdict::Fail(format!("{lang}: OSTIA: {e}")),
        };
        ok &= (pipeline - paper).abs() <= PAPER_TOLERANCE && ost <= OSTIA_MAX_SMALL;
        parts.push(format!(
            "{lang} pipeline {pipeline:.3} (paper {paper}) ostia {ost:.3}"
        ));
    }
    verdict(
        ok,
        format!(
            "{} (need within {PAPER_TOLERANCE} of paper, ostia <= {OSTIA_MAX_SMALL})",
            parts.join(", ")
        ),
    )
}

fn gradient_correctness() -> Verdict {
    let d = 8;
    let (n_tok, n_out) = (6, 5);
    let mut worst: f64 = 0.0;
    for seed in [1u64, 2, 3] {
        let mut rng = substream(seed, "acceptance-grad");
        let p = ModelParams::init(n_tok, d, 2 * d, n_out, &mut rng);
        let batch: Vec<Example> = [4usize, 6, 3]
            .iter()
            .map(|&len| Example {
                tokens: (0..len).map(|_| rng.gen_range(0..n_tok)).collect(),
                target: Target::Steps((0..len).map(|_| rng.gen_range(0..n_out)).collect()),
            })
            .collect();
        let refs: Vec<&Example> = batch.iter().collect();
        let spec = LossSpec {
            head_reads_input: true,
            label_smoothing: 0.1,
            lambda_sn: 0.1,
            average_penalty: false,
        };
        let est = [
            PowerIteration::new(d, seed).estimate(&p.w_h, 1),
            PowerIteration::new(d, seed + 100).estimate(&p.w_x, 1),
        ];
        let (_, grad) = loss_and_grad(&p, &refs, spec, &est, &mut NoDropout);
        let h = 1e-5;
        for (k, g) in grad.tensors().iter().enumerate() {
            for i in 0..g.len() {
                let mut plus = p.clone();
                plus.tensors_mut()[k][i] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[k][i] -= h;
                let fd = (loss_and_grad(&plus, &refs, spec, &est, &mut NoDropout).0
                    - loss_and_grad(&minus, &refs, spec, &est, &mut NoDropout).0)
                    / (2.0 * h);
                let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
                worst = worst.max(err);
            }
        }
    }
    verdict(
        worst < GRAD_REL_ERR,
        format!(
            "worst relative error {worst:.2e} over 6 tensors x 3 seeds (need < {GRAD_REL_ERR:.0e})"
        ),
    )
}

fn spectral_estimator() -> Verdict {
    let mut rng = substream(4, "acceptance-spectral");
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let (r, c) = (rng.gen_range(4..=64), rng.gen_range(4..=64));
        let data: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rows: Vec<Vec<f64>> = data.chunks(c).map(<[f64]>::to_vec).collect();
        let ours = spectral_norm(&Matrix::from_rows(&rows), 100, trial);
        let oracle = DMatrix::from_row_slice(r, c, &data).singular_values().max();
        worst = worst.max((ours - oracle).abs() / oracle);
    }
    let id = spectral_norm(&Matrix::identity(16), 100, 0);
    verdict(
        worst < SPECTRAL_REL_ERR && id == 1.0,
        format!("worst relative error {worst:.2e} on 20 matrices (need < {SPECTRAL_REL_ERR}); identity {id}"),
    )
}

fn random_transducer<R: Rng>(rng: &mut R) -> Transducer {
    let mut input = SymbolTable::new();
    let mut output = SymbolTable::new();
    let n_sigma = rng.gen_range(1..=4);
    for s in ["a", "b", "c", "d"].iter().take(n_sigma) {
        input.intern(s);
    }
    output.intern("x");
    output.intern("y");
    let n = rng.gen_range(1..=12);
    let mut raw = Vec::new();
    for s in 0..n {
        for sym in 1..=n_sigma as SymbolId {
            if rng.gen_bool(0.7) {
                let out = (0..rng.gen_range(0..=2))
                    .map(|_| rng.gen_range(1..=2))
                    .collect();
                raw.push(RawTransition::new(
                    s as StateId,
                    sym,
                    out,
                    rng.gen_range(0..n) as StateId,
                ));
            }
        }
    }
    Transducer::new(input, output, n, 0, raw)
        .unwrap()
        .prune_inaccessible()
}

/// Number of classes of the coarsest partition compatible with outputs and
/// targets, by naive iterated refinement.
fn moore_classes(t: &Transducer) -> usize {
    let n = t.num_states();
    let sigma: Vec<SymbolId> = (1..t.input_table().len() as SymbolId).collect();
    let mut class = vec![0usize; n];
    loop {
        let mut sigs: HashMap<Vec<Option<(Vec<SymbolId>, usize)>>, usize> = HashMap::new();
        let mut next = vec![0; n];
        for s in 0..n {
            let sig: Vec<_> = sigma
                .iter()
                .map(|&x| {
                    t.arc(s as StateId, x)
                        .map(|a| (a.output.clone(), class[a.target as usize]))
                })
                .collect();
            let len = sigs.len();
            next[s] = *sigs.entry(sig).or_insert(len);
        }
        let stable = sigs.len() == class.iter().collect::<HashSet<_>>().len();
        class = next;
        if stable {
            return sigs.len();
        }
    }
}

fn all_strings(n_sigma: usize, max_len: usize) -> Vec<Vec<SymbolId>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for x in 1..=n_sigma as SymbolId {
                let mut t: Vec<SymbolId> = s.clone();
                t.push(x);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn minimization_oracle() -> Verdict {
    let mut rng = substream(5, "acceptance-minimize");
    let mut failures = Vec::new();
    for i in 0..50 {
        let t = random_transducer(&mut rng);
        let m = t.minimize();
        let mm = m.minimize();
        let n_sigma = t.input_table().len() - 1;
        let agree = all_strings(n_sigma, MIN_MAX_LEN)
            .iter()
            .all(|s| t.apply(s).ok() == m.apply(s).ok());
        let idempotent = m.serialize(fst_forge::fst::Format::AttText)
            == mm.serialize(fst_forge::fst::Format::AttText);
        let minimal = m.num_states() == moore_classes(&t);
        if !(agree && idempotent && minimal) {
            failures.push(format!(
                "#{i} agree={agree} idempotent={idempotent} minimal={minimal}"
            ));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "50 random transducers, strings up to length {MIN_MAX_LEN}; failures: {failures:?}"
        ),
    )
}

fn determinism_invariants() -> Verdict {
    let mut rng = substream(6, "acceptance-determinism");
    let lambdas = [
        None,
        Some(2),
        Some(3),
        Some(4),
        Some(5),
        Some(10),
        Some(15),
        Some(20),
        Some(25),
        Some(30),
        Some(40),
        Some(50),
    ];
    let mut cases = Vec::new();
    for (i, f) in Fixture::ALL.into_iter().enumerate() {
        let ds = f.dataset(10 + i as u64);
        let base = PipelineConfig::default();
        let merged = align_dataset(&ds, &base).unwrap();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 20,
            seed: i as u64,
            ..Default::default()
        };
        let model = train(&merged, &ds.input_table, &ds.output_table, &cfg).unwrap();
        let synthetic = synthetic_inputs(&ds, &base).unwrap();
        for syn in [&synthetic[..], &[]] {
            let records = collect_activations(&model, &merged, syn).unwrap();
            cases.push((model.clone(), records));
        }
    }
    let mut violations = Vec::new();
    for run in 0..EXTRACTION_RUNS {
        let (model, records) = cases.choose(&mut rng).unwrap();
        let distinct = distinct_vectors(records);
        let cfg = ExtractionConfig {
            k: rng.gen_range(1..=distinct.min(120)),
            classifier: *[ClassifierKind::Svm, ClassifierKind::LogisticRegression]
                .choose(&mut rng)
                .unwrap(),
            lambda_trans: *lambdas.choose(&mut rng).unwrap(),
            seed: run as u64,
            pin_root: rng.gen_bool(0.5),
        };
        let ex = match extract_from_records(model, records, &cfg) {
            Ok(e) => e,
            Err(e) => {
                violations.push(format!("run {run}: {e}"));
                continue;
            }
        };
        let raw: Vec<RawTransition> = ex.fst.transitions().collect();
        let keys: BTreeSet<(usize, SymbolId)> = ex
            .resolution
            .transitions
            .iter()
            .map(|t| (t.0, t.1))
            .collect();
        if !is_input_deterministic(&raw) || keys.len() != ex.resolution.transitions.len() {
            violations.push(format!("run {run}: nondeterministic"));
        }
        if let Some(l) = cfg.lambda_trans {
            if ex.resolution.support.iter().any(|&s| s < l) {
                violations.push(format!("run {run}: support below {l}"));
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!(
            "{EXTRACTION_RUNS} randomized extractions, {} violations {violations:?}",
            violations.len()
        ),
    )
}

fn synthetic_ablation() -> Verdict {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let ds = Fixture::Pluralizer.dataset(100 + seed);
        let mut cfg = PipelineConfig::default();
        cfg.train = TrainConfig {
            dim: 16,
            learning_rate: 1e-2,
            epochs: 150,
            seed,
            ..Default::default()
        };
        cfg.crp.seed = seed;
        cfg.extraction = ExtractionConfig {
            k: 50,
            seed,
            ..Default::default()
        };
        let merged = align_dataset(&ds, &cfg).unwrap();
        let model = train(&merged, &ds.input_table, &ds.output_table, &cfg.train).unwrap();
        let synthetic = synthetic_inputs(&ds, &cfg).unwrap();
        let test = ds.test_split();
        let score = |syn: &[Vec<SymbolId>]| {
            extract(&model, &merged, syn, &cfg.extraction)
                .map(|ex| {
                    evaluate(
                        &MarkedFst::new(&ex.fst, &ds.input_table),
                        test,
                        &ds.output_table,
                    )
                    .accuracy
                })
                .unwrap_or(0.0)
        };
        let (with, without) = (score(&synthetic), score(&[]));
        wins += usize::from(with >= without);
        parts.push(format!("{with:.3}/{without:.3}"));
    }
    verdict(
        wins >= 3,
        format!(
            "with/without synthetic per seed {}; {wins}/5 seeds with >= without (need majority)",
            parts.join(" ")
        ),
    )
}

fn alignment_round_trip() -> Verdict {
    let mut rng = substream(8, "acceptance-align");
    let mut input = SymbolTable::new();
    let mut output = SymbolTable::new();
    for s in ["a", "b", "c", "d", "e"] {
        input.intern(s);
        output.intern(s);
    }
    let pairs: Vec<StringPair> = (0..ROUNDTRIP_PAIRS)
        .map(|_| {
            let n = rng.gen_range(1..=8);
            let m = if rng.gen_bool(0.3) {
                n
            } else {
                rng.gen_range(0..=8)
            };
            StringPair::new(
                (0..n).map(|_| rng.gen_range(1..=5)).collect(),
                (0..m).map(|_| rng.gen_range(1..=5)).collect(),
            )
        })
        .collect();
    let crp = crp_align(
        &pairs,
        &CrpConfig {
            iterations: 3,
            ..Default::default()
        },
    );
    let med = med_align(&pairs, &SymbolMatcher::new(&input, &output), true);
    let mut bad = 0;
    for aligned in [&crp, &med] {
        let greedy = merge_epsilons_greedy(aligned);
        for ((p, a), g) in pairs.iter().zip(aligned).zip(greedy) {
            let right = merge_epsilons_right(a);
            for m in [right, g] {
                match m {
                    Ok(m) if m.input() == p.input && m.output() == p.output => {}
                    _ => bad += 1,
                }
            }
            let positional = AlignedSequence::new(
                p.input
                    .iter()
                    .copied()
                    .zip(p.output.iter().copied())
                    .collect(),
            );
            if p.input.len() == p.output.len() && *a != positional {
                bad += 1;
            }
        }
    }
    verdict(
        bad == 0,
        format!("{ROUNDTRIP_PAIRS} pairs x 2 aligners x 2 merges, {bad} failures"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 ground-truth recovery", ground_truth_recovery),
        ("2 small-dataset reproduction", small_dataset_reproduction),
        ("3 gradient correctness", gradient_correctness),
        ("4 spectral-norm estimator", spectral_estimator),
        ("5 minimization oracle equivalence", minimization_oracle),
        ("6 determinism invariants", determinism_invariants),
        ("7 synthetic-data ablation direction", synthetic_ablation),
        ("8 alignment round-trip", alignment_round_trip),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|o| !name.starts_with(o)) {
            continue;
        }
        let start = Instant::now();
        let (tag, detail) = match check() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!(
            "[{tag}] {name}: {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
