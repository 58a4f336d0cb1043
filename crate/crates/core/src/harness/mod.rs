//! Datasets, evaluation, the end-to-end pipeline, and hyperparameter sweeps.

mod eval;
pub mod fixtures;
mod pipeline;
mod sweep;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::StringPair;
use crate::fst::{SymbolId, SymbolTable};
use crate::END_MARKER;

pub use eval::{evaluate, EvalReport, MarkedFst, NoChange, Transduce};
pub use pipeline::{
    align_dataset, align_raw, synthetic_inputs, train_and_extract, PipelineConfig, PipelineError,
    PipelineOutput,
};
pub use sweep::{run_sweep, RunReport, SweepOutcome, SweepSpec, TrialSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Inflection,
    G2p,
    Normalization,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inflection" => Ok(Task::Inflection),
            "g2p" => Ok(Task::G2p),
            "normalization" => Ok(Task::Normalization),
            other => Err(format!(
                "unknown task `{other}` (expected inflection, g2p or normalization)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no split files found for {}", .0.display())]
    Missing(PathBuf),
}

/// One row as symbol strings.
pub type RawPair = (Vec<String>, Vec<String>);

/// Train, dev and test pairs over shared symbol tables. The input table
/// always contains the end marker.
///
/// The test split is only reachable through [`Dataset::test_split`], which
/// counts its callers.
#[derive(Debug)]
pub struct Dataset {
    pub task: Task,
    pub name: String,
    pub input_table: SymbolTable,
    pub output_table: SymbolTable,
    /// Input ids that are inflection tags.
    pub tags: BTreeSet<SymbolId>,
    pub train: Vec<StringPair>,
    pub dev: Vec<StringPair>,
    test: Vec<StringPair>,
    test_reads: AtomicUsize,
}

impl Dataset {
    /// Encodes raw splits. Input symbols of the form `[...]` are tags.
    pub fn from_raw(
        task: Task,
        name: &str,
        train: &[RawPair],
        dev: &[RawPair],
        test: &[RawPair],
    ) -> Self {
        let mut input_table = SymbolTable::new();
        input_table.intern(END_MARKER);
        let mut output_table = SymbolTable::new();
        let mut tags = BTreeSet::new();
        let mut encode = |rows: &[RawPair]| -> Vec<StringPair> {
            rows.iter()
                .map(|(i, o)| {
                    let input = i
                        .iter()
                        .map(|s| {
                            let id = input_table.intern(s);
                            if s.starts_with('[') && s.ends_with(']') && s.len() > 2 {
                                tags.insert(id);
                            }
                            id
                        })
                        .collect();
                    let output = o.iter().map(|s| output_table.intern(s)).collect();
                    StringPair::new(input, output)
                })
                .collect()
        };
        let train = encode(train);
        let dev = encode(dev);
        let test = encode(test);
        Dataset {
            task,
            name: name.to_owned(),
            input_table,
            output_table,
            tags,
            train,
            dev,
            test,
            test_reads: AtomicUsize::new(0),
        }
    }

    pub fn end_marker(&self) -> SymbolId {
        self.input_table
            .get(END_MARKER)
            .expect("end marker is interned")
    }

    pub fn is_tag(&self, s: SymbolId) -> bool {
        self.tags.contains(&s)
    }

    /// The held-out test pairs. Every call is counted.
    pub fn test_split(&self) -> &[StringPair] {
        self.test_reads.fetch_add(1, Ordering::SeqCst);
        &self.test
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::SeqCst)
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }

    pub fn decode_input(&self, ids: &[SymbolId]) -> Vec<String> {
        self.input_table.decode(ids)
    }

    pub fn decode_output(&self, ids: &[SymbolId]) -> Vec<String> {
        self.output_table.decode(ids)
    }
}

/// Splits one row into input and output symbols for `task`.
pub fn parse_row(task: Task, line: &str) -> Result<RawPair, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let chars = |s: &str| s.chars().map(String::from).collect::<Vec<_>>();
    match task {
        Task::Inflection => {
            let [lemma, form, tags] = fields[..] else {
                return Err(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                ));
            };
            if tags.is_empty() {
                return Err("empty tag field".into());
            }
            let mut input: Vec<String> = tags.split(';').map(|t| format!("[{t}]")).collect();
            input.extend(chars(lemma));
            Ok((input, chars(form)))
        }
        Task::G2p | Task::Normalization => {
            let [input, output] = fields[..] else {
                return Err(format!(
                    "expected 2 tab-separated fields, found {}",
                    fields.len()
                ));
            };
            let out = if task == Task::G2p {
                output.split_whitespace().map(String::from).collect()
            } else {
                chars(output)
            };
            Ok((chars(input), out))
        }
    }
}

fn sort_tag_prefix(row: &mut RawPair) {
    let k = row
        .0
        .iter()
        .position(|s| !(s.starts_with('[') && s.ends_with(']')))
        .unwrap_or(row.0.len());
    row.0[..k].sort();
}

fn read_split(path: &Path, task: Task) -> Result<Vec<RawPair>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_row(task, l.trim_end_matches('\r')).map_err(|message| DataError::Format {
                path: path.to_owned(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

/// Finds the three split files for `path`: `path.{trn,dev,tst}`, or inside a
/// directory either `train/dev/test.tsv` or a single `*.trn`, `*.dev`,
/// `*.tst` family.
fn split_paths(path: &Path) -> Option<[PathBuf; 3]> {
    let with_ext = |base: &Path| -> Option<[PathBuf; 3]> {
        let files = ["trn", "dev", "tst"].map(|e| {
            let mut p = base.as_os_str().to_owned();
            p.push(".");
            p.push(e);
            PathBuf::from(p)
        });
        files.iter().all(|f| f.is_file()).then_some(files)
    };
    if let Some(f) = with_ext(path) {
        return Some(f);
    }
    if path.is_dir() {
        let tsv = ["train.tsv", "dev.tsv", "test.tsv"].map(|n| path.join(n));
        if tsv.iter().all(|f| f.is_file()) {
            return Some(tsv);
        }
        let mut stems: Vec<PathBuf> = fs::read_dir(path)
            .ok()?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "trn"))
            .map(|p| p.with_extension(""))
            .collect();
        stems.sort();
        return stems.iter().find_map(|s| with_ext(s));
    }
    None
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Sort each inflection tag prefix instead of keeping file order.
    pub sort_tags: bool,
}

/// Reads a dataset from split files; see [`parse_row`] for the row formats.
pub fn load_dataset(path: &Path, task: Task) -> Result<Dataset, DataError> {
    load_dataset_with(path, task, LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, task: Task, opts: LoadOptions) -> Result<Dataset, DataError> {
    let files = split_paths(path).ok_or_else(|| DataError::Missing(path.to_owned()))?;
    let [train, dev, test] =
        [&files[0], &files[1], &files[2]].map(|f| -> Result<Vec<RawPair>, DataError> {
            let mut rows = read_split(f, task)?;
            if opts.sort_tags {
                rows.iter_mut().for_each(sort_tag_prefix);
            }
            Ok(rows)
        });
    let name = files[0]
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| s != "train")
        .unwrap_or_else(|| {
            path.file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
    Ok(Dataset::from_raw(task, &name, &train?, &dev?, &test?))
}
