//! Code instruction evolution and code-generation evaluation.
//!
//! The crate is split along the pipeline:
//!
//! - [`corpus`]: instruction records, corpus files, round merging, training-example rendering.
//! - [`evolve`]: evolution prompts, the validity filter, evolution rounds and the stopping rule.
//! - [`backend`]: generation backends (remote HTTP endpoints and a deterministic mock).
//! - [`bench`]: HumanEval, HumanEval+, MBPP and DS-1000 loaders, evaluation prompts, code extraction.
//! - [`sandbox`]: subprocess execution of candidate programs under resource limits.
//! - [`metrics`]: the unbiased pass@k estimator, aggregation and reports.
//! - [`cli`]: the operator commands wiring the stages together.

pub mod backend;
pub mod bench;
pub mod cli;
pub mod corpus;
pub mod evolve;
pub mod metrics;
pub mod sandbox;

mod hashing;
