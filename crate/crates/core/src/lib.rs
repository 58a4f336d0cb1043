//! Finite-state transducer induction from paired strings.
//!
//! The pipeline aligns input/output pairs ([`align`]), trains an Elman
//! network on the aligned transduction objective ([`rnn`]), collects hidden
//! states over training and synthetic inputs ([`domain`]), and clusters them
//! into an input-deterministic transducer ([`extract`]). Classical baselines
//! live in [`baselines`]; dataset handling, evaluation and sweeps in
//! [`harness`].

pub mod align;
pub mod baselines;
pub mod domain;
pub mod extract;
pub mod fst;
pub mod harness;
pub mod rng;
pub mod rnn;

pub use fst::{SymbolId, SymbolTable, Transducer, EPSILON};

/// Reserved input symbol appended to every input string. It carries any
/// output that can only be emitted once the whole input has been read.
pub const END_MARKER: &str = "⋉";
