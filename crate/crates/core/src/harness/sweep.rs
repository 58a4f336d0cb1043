use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalReport, MarkedFst};
use super::pipeline::{align_dataset, synthetic_inputs, PipelineConfig, PipelineError};
use super::Dataset;
use crate::extract::{
    collect_activations, distinct_vectors, extract_from_records, ClassifierKind, Extraction,
    ExtractionConfig,
};
use crate::rng::substream;
use crate::rnn::{train, Model, TrainConfig};

/// Search space and budget for a random-search sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub budget: usize,
    pub seed: u64,
    pub dims: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub epochs: Vec<usize>,
    /// When unset, the four largest powers of two below a fifth of the
    /// training set size.
    pub batch_sizes: Option<Vec<usize>>,
    /// Lower end of the cluster-count range, further capped at half the
    /// number of distinct hidden states.
    pub k_min: usize,
    /// Upper bound on k in addition to the number of distinct hidden states.
    pub k_cap: Option<usize>,
    pub lambdas: Vec<Option<u64>>,
    pub classifiers: Vec<ClassifierKind>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            budget: 10,
            seed: 0,
            dims: vec![32, 64],
            learning_rates: vec![1e-3, 2e-3],
            dropouts: vec![0.0, 0.1],
            epochs: vec![600],
            batch_sizes: None,
            k_min: 50,
            k_cap: None,
            lambdas: vec![
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
            ],
            classifiers: vec![ClassifierKind::Svm, ClassifierKind::LogisticRegression],
        }
    }
}

impl SweepSpec {
    /// The full training grid.
    pub fn full() -> Self {
        SweepSpec {
            budget: 100,
            dims: vec![16, 32, 64, 128],
            learning_rates: vec![2e-4, 1e-3, 2e-3, 1e-2],
            dropouts: vec![0.0, 0.1, 0.3],
            epochs: vec![200, 600, 1000],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 {
            return Err("budget must be at least 1".into());
        }
        let empty = [
            ("dims", self.dims.is_empty()),
            ("learning_rates", self.learning_rates.is_empty()),
            ("dropouts", self.dropouts.is_empty()),
            ("epochs", self.epochs.is_empty()),
            ("lambdas", self.lambdas.is_empty()),
            ("classifiers", self.classifiers.is_empty()),
            (
                "batch_sizes",
                self.batch_sizes.as_ref().is_some_and(Vec::is_empty),
            ),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(format!("{name} grid is empty"));
        }
        if self.k_min == 0 || self.k_cap == Some(0) {
            return Err("k bounds must be at least 1".into());
        }
        Ok(())
    }

    fn batch_grid(&self, n_train: usize) -> Vec<usize> {
        if let Some(b) = &self.batch_sizes {
            return b.clone();
        }
        let mut sizes: Vec<usize> = (1..=12)
            .map(|k| 1usize << k)
            .filter(|&b| b * 5 < n_train)
            .collect();
        sizes = sizes.split_off(sizes.len().saturating_sub(4));
        if sizes.is_empty() {
            sizes.push(1);
        }
        sizes
    }

    fn k_range(&self, distinct: usize) -> (usize, usize) {
        let hi = self.k_cap.map_or(distinct, |c| c.min(distinct)).max(1);
        let lo = self.k_min.min(distinct / 2).clamp(1, hi);
        (lo, hi)
    }
}

/// One sampled trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub train: TrainConfig,
    pub extraction: ExtractionConfig,
    pub model_reused: bool,
    pub dev_accuracy: Option<f64>,
    pub states: usize,
    pub transitions: usize,
    pub error: Option<String>,
}

/// The machine-readable summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub system: String,
    pub config: serde_json::Value,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub states: usize,
    pub transitions: usize,
    pub wall_clock_s: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub trials: Vec<TrialSummary>,
    pub winner: usize,
    pub model: Model,
    pub extraction: Extraction,
    pub dev: EvalReport,
    pub test: EvalReport,
    pub report: RunReport,
}

struct Planned {
    train: TrainConfig,
    classifier: ClassifierKind,
    lambda: Option<u64>,
    k_unit: f64,
}

fn plan(spec: &SweepSpec, base: &PipelineConfig, n_train: usize) -> Vec<Planned> {
    let mut rng = substream(spec.seed, "sweep");
    let batches = spec.batch_grid(n_train);
    (0..spec.budget)
        .map(|_| {
            let train = TrainConfig {
                dim: *spec.dims.choose(&mut rng).unwrap(),
                learning_rate: *spec.learning_rates.choose(&mut rng).unwrap(),
                dropout: *spec.dropouts.choose(&mut rng).unwrap(),
                epochs: *spec.epochs.choose(&mut rng).unwrap(),
                batch_size: *batches.choose(&mut rng).unwrap(),
                seed: spec.seed,
                ..base.train.clone()
            };
            Planned {
                train,
                classifier: *spec.classifiers.choose(&mut rng).unwrap(),
                lambda: *spec.lambdas.choose(&mut rng).unwrap(),
                k_unit: rng.gen(),
            }
        })
        .collect()
}

/// Log-uniform in `lo..=hi`.
fn pick_k(lo: usize, hi: usize, u: f64) -> usize {
    let (a, b) = ((lo as f64).ln(), ((hi + 1) as f64).ln());
    ((a + u * (b - a)).exp().floor() as usize).clamp(lo, hi)
}

type Scored = (TrialSummary, Option<(Extraction, EvalReport)>);

/// Random search over training and extraction settings. Trials sharing a
/// training configuration share one trained model. The winner is the trial
/// with the best dev accuracy, then the fewest states, then the fewest
/// transitions, then the earliest index; only it is evaluated on test.
pub fn run_sweep(
    ds: &Dataset,
    base: &PipelineConfig,
    spec: &SweepSpec,
) -> Result<SweepOutcome, PipelineError> {
    let start = Instant::now();
    spec.validate().map_err(PipelineError::Sweep)?;
    let merged = align_dataset(ds, base)?;
    let synthetic = synthetic_inputs(ds, base)?;
    let planned = plan(spec, base, ds.train.len());

    let mut groups: Vec<(TrainConfig, Vec<usize>)> = Vec::new();
    for (i, p) in planned.iter().enumerate() {
        match groups.iter_mut().find(|(c, _)| *c == p.train) {
            Some((_, members)) => members.push(i),
            None => groups.push((p.train.clone(), vec![i])),
        }
    }

    let mut trials: Vec<Option<TrialSummary>> = vec![None; planned.len()];
    let mut best: Option<(usize, Model, Extraction, EvalReport)> = None;
    for (cfg, members) in &groups {
        log::info!(
            "training model for trials {members:?}: dim {} lr {} dropout {} epochs {} batch {}",
            cfg.dim,
            cfg.learning_rate,
            cfg.dropout,
            cfg.epochs,
            cfg.batch_size
        );
        let prepared = train(&merged, &ds.input_table, &ds.output_table, cfg)
            .map_err(PipelineError::from)
            .and_then(|m| {
                let records = collect_activations(&m, &merged, &synthetic)?;
                Ok((m, records))
            });
        let (model, records) = match prepared {
            Ok(x) => x,
            Err(e) => {
                log::warn!("training failed: {e}");
                for &i in members {
                    trials[i] = Some(summary(
                        i,
                        &planned[i],
                        ExtractionConfig::default(),
                        false,
                        Err(e.to_string()),
                    ));
                }
                continue;
            }
        };
        let (lo, hi) = spec.k_range(distinct_vectors(&records));
        let scored: Vec<Scored> = members
            .par_iter()
            .enumerate()
            .map(|(j, &i)| {
                let p = &planned[i];
                let ecfg = ExtractionConfig {
                    k: pick_k(lo, hi, p.k_unit),
                    classifier: p.classifier,
                    lambda_trans: p.lambda,
                    seed: spec.seed.wrapping_add(i as u64),
                    ..base.extraction.clone()
                };
                match extract_from_records(&model, &records, &ecfg) {
                    Ok(ex) => {
                        let dev = evaluate(
                            &MarkedFst::new(&ex.fst, &ds.input_table),
                            &ds.dev,
                            &ds.output_table,
                        );
                        let s = summary(i, p, ecfg, j > 0, Ok(&dev));
                        (s, Some((ex, dev)))
                    }
                    Err(e) => {
                        log::warn!("trial {i} failed: {e}");
                        (summary(i, p, ecfg, j > 0, Err(e.to_string())), None)
                    }
                }
            })
            .collect();
        for (s, result) in scored {
            let i = s.index;
            log::info!(
                "trial {i}: k {} dev {:?} states {}",
                s.extraction.k,
                s.dev_accuracy,
                s.states
            );
            if let Some((ex, dev)) = result {
                let better = best
                    .as_ref()
                    .is_none_or(|(bi, _, _, bd)| rank(&dev, i) < rank(bd, *bi));
                if better {
                    best = Some((i, model.clone(), ex, dev));
                }
            }
            trials[i] = Some(s);
        }
    }
    let trials: Vec<TrialSummary> = trials
        .into_iter()
        .map(|t| t.expect("every trial is scored"))
        .collect();
    let (winner, model, extraction, dev) = best.ok_or_else(|| {
        let why = trials
            .iter()
            .filter_map(|t| t.error.clone())
            .next()
            .unwrap_or_default();
        PipelineError::Sweep(format!("every trial failed; first error: {why}"))
    })?;

    let test = evaluate(
        &MarkedFst::new(&extraction.fst, &ds.input_table),
        ds.test_split(),
        &ds.output_table,
    );
    let t = &trials[winner];
    let mut flags = Vec::new();
    if extraction.report.budget_exhausted {
        flags.push("split_budget_exhausted".to_owned());
    }
    if ds.dev.is_empty() {
        flags.push("empty_dev_split".to_owned());
    }
    let config = serde_json::json!({
        "pipeline": PipelineConfig { train: t.train.clone(), extraction: t.extraction.clone(), ..base.clone() },
        "sweep": spec,
        "winner": winner,
    });
    let report = RunReport {
        dataset: ds.name.clone(),
        system: "rnn-extracted".to_owned(),
        config,
        dev_accuracy: Some(dev.accuracy),
        test_accuracy: test.accuracy,
        states: extraction.fst.num_states(),
        transitions: extraction.fst.num_transitions(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        flags,
    };
    Ok(SweepOutcome {
        trials,
        winner,
        model,
        extraction,
        dev,
        test,
        report,
    })
}

fn rank(r: &EvalReport, index: usize) -> (std::cmp::Reverse<u64>, usize, usize, usize) {
    (
        std::cmp::Reverse(r.accuracy.to_bits()),
        r.states,
        r.transitions,
        index,
    )
}

fn summary(
    index: usize,
    p: &Planned,
    extraction: ExtractionConfig,
    model_reused: bool,
    result: Result<&EvalReport, String>,
) -> TrialSummary {
    let (dev_accuracy, states, transitions, error) = match result {
        Ok(r) => (Some(r.accuracy), r.states, r.transitions, None),
        Err(e) => (None, 0, 0, Some(e)),
    };
    TrialSummary {
        index,
        train: p.train.clone(),
        extraction,
        model_reused,
        dev_accuracy,
        states,
        transitions,
        error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_grid_takes_four_largest_powers_below_a_fifth() {
        let s = SweepSpec::default();
        assert_eq!(s.batch_grid(500), vec![8, 16, 32, 64]);
        assert_eq!(s.batch_grid(53), vec![2, 4, 8]);
        assert_eq!(s.batch_grid(3), vec![1]);
    }

    #[test]
    fn k_is_log_uniform_within_bounds() {
        let s = SweepSpec {
            k_cap: Some(100),
            ..Default::default()
        };
        assert_eq!(s.k_range(1000), (50, 100));
        assert_eq!(s.k_range(30), (15, 30));
        assert_eq!(s.k_range(1), (1, 1));
        assert_eq!(pick_k(50, 100, 0.0), 50);
        assert_eq!(pick_k(50, 100, 0.999_999), 100);
        let mid = pick_k(10, 1000, 0.5);
        assert!((90..=110).contains(&mid), "{mid}");
    }

    #[test]
    fn plan_is_seeded() {
        let spec = SweepSpec::default();
        let base = PipelineConfig::default();
        let a: Vec<_> = plan(&spec, &base, 500)
            .into_iter()
            .map(|p| (p.train, p.lambda, p.k_unit.to_bits()))
            .collect();
        let b: Vec<_> = plan(&spec, &base, 500)
            .into_iter()
            .map(|p| (p.train, p.lambda, p.k_unit.to_bits()))
            .collect();
        assert_eq!(a, b);
        let other = SweepSpec { seed: 1, ..spec };
        let c: Vec<_> = plan(&other, &base, 500)
            .into_iter()
            .map(|p| p.k_unit.to_bits())
            .collect();
        assert_ne!(a.iter().map(|x| x.2).collect::<Vec<_>>(), c);
    }

    #[test]
    fn ranking_prefers_accuracy_then_size_then_index() {
        let r = |accuracy: f64, states: usize| EvalReport {
            accuracy,
            correct: 0,
            wrong_output: 0,
            no_path: 0,
            total: 0,
            states,
            transitions: states,
            wall_clock_s: 0.0,
        };
        assert!(rank(&r(0.9, 50), 3) < rank(&r(0.8, 2), 0));
        assert!(rank(&r(0.9, 2), 3) < rank(&r(0.9, 5), 0));
        assert!(rank(&r(0.9, 2), 0) < rank(&r(0.9, 2), 1));
    }
}
