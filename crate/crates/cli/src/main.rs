use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fst_forge::align::{AlignMethod, MergeStrategy};
use fst_forge::baselines::{dd_ostia, ostia, InductionOptions};
use fst_forge::extract::{extract, ClassifierKind};
use fst_forge::fst::{parse_att, Format};
use fst_forge::harness::{
    align_dataset, align_raw, evaluate, load_dataset_with, run_sweep, synthetic_inputs, Dataset,
    EvalReport, LoadOptions, MarkedFst, NoChange, PipelineConfig, RunReport, SweepSpec, Task,
};
use fst_forge::rnn::{self, Model, Objective};
use fst_forge::Transducer;

#[derive(Parser)]
#[command(
    name = "fst-forge",
    version,
    about = "Learn finite-state transducers from string pairs"
)]
struct Cli {
    /// TOML file whose settings override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align training pairs and print one alignment per line.
    Align {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipe: PipelineArgs,
        /// Print merged steps instead of single-symbol alignments.
        #[arg(long)]
        merged: bool,
    },
    /// Train an RNN and write a JSON checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipe: PipelineArgs,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Extract a transducer from a trained checkpoint.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipe: PipelineArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "model.fst")]
        out: PathBuf,
    },
    /// Learn a transducer with OSTIA.
    Ostia {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        induction: InductionArgs,
    },
    /// Learn a transducer with greedy DD-OSTIA.
    Ddostia {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        induction: InductionArgs,
    },
    /// Score the copy-the-input baseline.
    Nochange {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a transducer on a dataset split.
    Eval {
        fst: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Split::Dev)]
        split: Split,
    },
    /// Random-search training and extraction settings on dev, then score the
    /// winner on test.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipe: PipelineArgs,
        #[arg(long, default_value_t = 10)]
        budget: usize,
        /// Use the full training grid instead of the reduced one.
        #[arg(long)]
        full_grid: bool,
        #[arg(long)]
        k_cap: Option<usize>,
        /// Output directory for report.json, best.fst and model.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Convert a transducer file to another format.
    Export {
        fst: PathBuf,
        #[arg(long, default_value = "dot")]
        format: Format,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Split-file prefix (`PATH.trn/.dev/.tst`) or a directory.
    data: PathBuf,
    #[arg(long)]
    task: Task,
    /// Sort inflection tags within each input instead of keeping file order.
    #[arg(long)]
    sort_tags: bool,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum)]
    align: Option<AlignArg>,
    #[arg(long, value_enum)]
    merge: Option<MergeArg>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long, value_enum)]
    synthetic: Option<Toggle>,
    #[arg(long)]
    k: Option<usize>,
    /// Minimum transition support, or `none` to disable splitting.
    #[arg(long, value_parser = parse_lambda)]
    lambda_trans: Option<LambdaArg>,
    #[arg(long)]
    classifier: Option<ClassifierKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct InductionArgs {
    /// Seconds before merging stops.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    #[arg(long, default_value = "model.fst")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    Crp,
    Med,
}

#[derive(Clone, Copy, ValueEnum)]
enum MergeArg {
    Right,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Transduction,
    Lm,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Dev,
    Test,
}

#[derive(Clone, Copy)]
struct LambdaArg(Option<u64>);

fn parse_lambda(s: &str) -> Result<LambdaArg, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(LambdaArg(None));
    }
    s.parse()
        .map(|v| LambdaArg(Some(v)))
        .map_err(|e| format!("{e}"))
}

/// Settings read from `--config`: top-level keys are pipeline settings and
/// an optional `[sweep]` table holds sweep settings.
#[derive(Serialize, Deserialize)]
struct Settings {
    pipeline: PipelineConfig,
    sweep: SweepSpec,
}

/// Failure classes, mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Align { data, pipe, merged } => {
            let ds = load(&data)?;
            let s = settings(&pipe, SweepSpec::default(), config)?;
            if merged {
                for seq in align_dataset(&ds, &s.pipeline)? {
                    let steps: Vec<String> = seq
                        .steps
                        .iter()
                        .map(|st| {
                            let i = ds.input_table.symbol(st.input).unwrap_or("?");
                            let o = ds.decode_output(&st.output).concat();
                            format!("{i}:{}", if o.is_empty() { "_".to_owned() } else { o })
                        })
                        .collect();
                    println!("{}", steps.join(" "));
                }
            } else {
                for a in align_raw(&ds, &s.pipeline) {
                    println!("{}", a.render(&ds.input_table, &ds.output_table));
                }
            }
        }
        Command::Train { data, pipe, out } => {
            let ds = load(&data)?;
            let s = settings(&pipe, SweepSpec::default(), config)?;
            let merged = align_dataset(&ds, &s.pipeline)?;
            let model = rnn::train(
                &merged,
                &ds.input_table,
                &ds.output_table,
                &s.pipeline.train,
            )?;
            write(&out, &model.to_json())?;
            let acc = match model.objective {
                Objective::Transduction => Some(model.step_accuracy(&merged)?),
                _ => None,
            };
            print_json(&json!({ "model": out, "train_step_accuracy": acc }))?;
        }
        Command::Extract {
            data,
            pipe,
            model,
            out,
        } => {
            let ds = load(&data)?;
            let s = settings(&pipe, SweepSpec::default(), config)?;
            let text = fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let model = Model::from_json(&text)?;
            let merged = align_dataset(&ds, &s.pipeline)?;
            let synthetic = synthetic_inputs(&ds, &s.pipeline)?;
            let mut ex = extract(&model, &merged, &synthetic, &s.pipeline.extraction)?;
            let dev = evaluate(
                &MarkedFst::new(&ex.fst, &ds.input_table),
                &ds.dev,
                &ds.output_table,
            );
            ex.report.dev_accuracy = Some(dev.accuracy);
            write(&out, &ex.fst.serialize(Format::AttText))?;
            print_json(&ex.report)?;
        }
        Command::Ostia { data, induction } => induce(&data, &induction, "ostia")?,
        Command::Ddostia { data, induction } => induce(&data, &induction, "ddostia")?,
        Command::Nochange { data } => {
            let ds = load(&data)?;
            let system = NoChange::new(&ds.input_table, |s| ds.is_tag(s));
            let dev = evaluate(&system, &ds.dev, &ds.output_table);
            let test = evaluate(&system, ds.test_split(), &ds.output_table);
            print_json(&report(&ds, "nochange", json!({}), &dev, &test, Vec::new()))?;
        }
        Command::Eval { fst, data, split } => {
            let ds = load(&data)?;
            let t = read_fst(&fst)?;
            let pairs = match split {
                Split::Dev => &ds.dev[..],
                Split::Test => ds.test_split(),
            };
            print_json(&evaluate(
                &MarkedFst::new(&t, &ds.input_table),
                pairs,
                &ds.output_table,
            ))?;
        }
        Command::Sweep {
            data,
            pipe,
            budget,
            full_grid,
            k_cap,
            out,
        } => {
            let ds = load(&data)?;
            let mut spec = if full_grid {
                SweepSpec::full()
            } else {
                SweepSpec::default()
            };
            spec.budget = budget;
            spec.k_cap = k_cap;
            if let Some(seed) = pipe.seed {
                spec.seed = seed;
            }
            let s = settings(&pipe, spec, config)?;
            s.sweep.validate().map_err(|m| usage(anyhow::anyhow!(m)))?;
            let outcome = run_sweep(&ds, &s.pipeline, &s.sweep)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write(
                &out.join("best.fst"),
                &outcome.extraction.fst.serialize(Format::AttText),
            )?;
            write(&out.join("model.json"), &outcome.model.to_json())?;
            write(
                &out.join("trials.json"),
                &serde_json::to_string_pretty(&outcome.trials)?,
            )?;
            let text = serde_json::to_string_pretty(&outcome.report)?;
            write(&out.join("report.json"), &text)?;
            println!("{text}");
        }
        Command::Export { fst, format, out } => {
            let t = read_fst(&fst)?;
            let text = t.serialize(format);
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn induce(data: &DataArgs, args: &InductionArgs, system: &str) -> Result<(), Failure> {
    if !(args.time_limit >= 0.0 && args.time_limit.is_finite()) {
        return Err(usage(anyhow::anyhow!(
            "--time-limit must be a non-negative number of seconds"
        )));
    }
    let ds = load(data)?;
    let opts = InductionOptions {
        time_limit: Some(Duration::from_secs_f64(args.time_limit)),
    };
    let learn = if system == "ostia" { ostia } else { dd_ostia };
    let induced = learn(&ds.train, &ds.input_table, &ds.output_table, opts)?;
    let system_under_test = MarkedFst::new(&induced.fst, &ds.input_table);
    let dev = evaluate(&system_under_test, &ds.dev, &ds.output_table);
    let test = evaluate(&system_under_test, ds.test_split(), &ds.output_table);
    write(&args.out, &induced.fst.serialize(Format::AttText))?;
    let mut flags = Vec::new();
    if induced.log.time_limit_hit {
        flags.push("time_limit_hit".to_owned());
    }
    let config = json!({ "time_limit_s": args.time_limit, "log": induced.log });
    print_json(&report(&ds, system, config, &dev, &test, flags))
}

fn report(
    ds: &Dataset,
    system: &str,
    config: Value,
    dev: &EvalReport,
    test: &EvalReport,
    flags: Vec<String>,
) -> RunReport {
    RunReport {
        dataset: ds.name.clone(),
        system: system.to_owned(),
        config,
        dev_accuracy: Some(dev.accuracy),
        test_accuracy: test.accuracy,
        states: test.states,
        transitions: test.transitions,
        wall_clock_s: dev.wall_clock_s + test.wall_clock_s,
        flags,
    }
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let opts = LoadOptions {
        sort_tags: args.sort_tags,
    };
    Ok(load_dataset_with(&args.data, args.task, opts)?)
}

fn read_fst(path: &Path) -> Result<Transducer, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_att(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    Ok(fs::write(path, text).with_context(|| format!("writing {}", path.display()))?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Flags applied over defaults, then the config file applied over flags.
fn settings(
    args: &PipelineArgs,
    sweep: SweepSpec,
    config: Option<&Path>,
) -> Result<Settings, Failure> {
    let mut p = PipelineConfig::default();
    if let Some(a) = args.align {
        p.align = match a {
            AlignArg::Crp => AlignMethod::Crp,
            AlignArg::Med => AlignMethod::Med,
        };
    }
    if let Some(m) = args.merge {
        p.merge = Some(match m {
            MergeArg::Right => MergeStrategy::Right,
            MergeArg::Greedy => MergeStrategy::Greedy,
        });
    }
    if let Some(o) = args.objective {
        p.train.objective = match o {
            ObjectiveArg::Transduction => Objective::Transduction,
            ObjectiveArg::Lm => Objective::LanguageModel,
            ObjectiveArg::Binary => Objective::BinaryClassification,
        };
    }
    if let Some(t) = args.synthetic {
        p.synthetic = matches!(t, Toggle::On);
    }
    if let Some(k) = args.k {
        p.extraction.k = k;
    }
    if let Some(LambdaArg(l)) = args.lambda_trans {
        p.extraction.lambda_trans = l;
    }
    if let Some(c) = args.classifier {
        p.extraction.classifier = c;
    }
    if let Some(seed) = args.seed {
        p.train.seed = seed;
        p.crp.seed = seed;
        p.extraction.seed = seed;
    }
    if let Some(d) = args.dim {
        p.train.dim = d;
    }
    if let Some(e) = args.epochs {
        p.train.epochs = e;
    }
    let mut s = Settings { pipeline: p, sweep };
    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        s = apply_config(s, &text)
            .with_context(|| format!("in {}", path.display()))
            .map_err(usage)?;
    }
    s.pipeline.train.validate().map_err(usage)?;
    s.pipeline.extraction.validate().map_err(usage)?;
    Ok(s)
}

fn apply_config(s: Settings, text: &str) -> anyhow::Result<Settings> {
    let file: toml::Table = toml::from_str(text)?;
    let mut current = serde_json::to_value(&s)?;
    for (key, value) in file {
        let value = serde_json::to_value(value)?;
        let target = if key == "sweep" {
            &mut current["sweep"]
        } else {
            &mut current["pipeline"][key.as_str()]
        };
        merge(target, value);
    }
    Ok(serde_json::from_value(current)?)
}

fn merge(target: &mut Value, value: Value) {
    match (target, value) {
        (Value::Object(t), Value::Object(v)) => {
            for (k, v) in v {
                merge(t.entry(k).or_insert(Value::Null), v);
            }
        }
        (t, v) => *t = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> Settings {
        Settings {
            pipeline: PipelineConfig::default(),
            sweep: SweepSpec::default(),
        }
    }

    #[test]
    fn config_overrides_nested_fields_only() {
        let s = apply_config(
            defaults(),
            "synthetic = false\n[train]\ndim = 16\n[sweep]\nbudget = 3\n",
        )
        .unwrap();
        assert!(!s.pipeline.synthetic);
        assert_eq!(s.pipeline.train.dim, 16);
        assert_eq!(
            s.pipeline.train.epochs,
            PipelineConfig::default().train.epochs
        );
        assert_eq!(s.sweep.budget, 3);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(apply_config(defaults(), "[train]\ndimension = 16\n").is_err());
        assert!(apply_config(defaults(), "bogus = 1\n").is_err());
    }

    #[test]
    fn lambda_accepts_none() {
        assert_eq!(parse_lambda("none").unwrap().0, None);
        assert_eq!(parse_lambda("5").unwrap().0, Some(5));
        assert!(parse_lambda("x").is_err());
    }
}
