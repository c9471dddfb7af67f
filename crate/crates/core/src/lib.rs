//! Learns syscall dependency relations from labeled traces with a bigram
//! model, folds them into a choice table, and generates syscall sequences
//! forward or by bidirectional random walk. A simulated kernel with planted
//! dependencies, branches and crashes closes the loop for desk-scale
//! fuzzing campaigns.

pub mod bigram;
pub mod campaign;
pub mod choice_table;
pub mod cli;
pub mod fixtures;
pub mod generator;
pub mod matrix;
pub mod matrix_file;
pub mod simkernel;
pub mod trace;

pub use bigram::{combine_rpms, counts_to_rpm, learn_counts, CombineWeights, CountMatrix, Rpm};
pub use choice_table::{AugmentedChoiceTable, ChoiceTable, EntropyReport, UpdatePolicy};
pub use generator::{gen_random_walk, gen_unidirectional, GenConfig};
pub use matrix::SquareMatrix;
pub use simkernel::{ExecutionOutcome, SimKernel, SimKernelSpec};
pub use trace::{Corpus, Label, SyscallId, Trace, TraceFormat, Vocabulary};
