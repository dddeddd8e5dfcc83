//! Core of an answer-supervised SQL generator.
//!
//! Everything here is pure computation over in-memory values: schemas and
//! databases, the partitioned token vocabulary, the restricted SQL dialect and
//! its executor, the decoding grammar mask, a copy-mechanism encoder-decoder
//! with hand-written backpropagation, the point-wise reward, the REINFORCE /
//! supervised training loops, template-based dataset generation and the
//! evaluation metrics. File formats, checkpoints on disk and the command line
//! live in the `sqlgen` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datagen;
pub mod exec;
pub mod grammar;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod query;
pub mod reward;
pub mod schema;
pub mod text;
pub mod train;
pub mod vocab;

pub use exec::{execute, execute_single_condition, ResultSet};
pub use grammar::{Choice, GrammarMachine, GrammarState, Mask, MaskConfig, Phase, Role};
pub use query::{infer_join_predicates, parse_tokens, SqlQuery, SqlToken};
pub use schema::{AttrRef, Column, ColumnKind, Database, ForeignKey, Schema, TableDef};
pub use vocab::{TokenSeq, ValueLexicon, Vocabulary};

/// Deterministic generator used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
