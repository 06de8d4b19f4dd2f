//! Harness for studying and automating the repair of compiler middle-end bugs.
//!
//! The crate is organized around three concerns:
//!
//! * building a benchmark of real optimizer bugs from an issue/commit corpus
//!   ([`bench_model`], [`bench_builder`], [`diffscope`]),
//! * driving repair agents against those bugs through a budgeted tool loop
//!   ([`toolchain`], [`agent_tools`], [`agent_core`]),
//! * scoring the results ([`evalkit`]).
//!
//! Everything that talks to external binaries goes through [`toolchain`], which
//! supports both live subprocess execution and deterministic record/replay from
//! a transcript store. The [`demo`] module materializes a small self-contained
//! world (source snapshots, issue records, transcripts) that the test suite and
//! the `midfix` CLI use end to end.

pub mod agent_core;
pub mod agent_tools;
pub mod bench_builder;
pub mod bench_model;
pub mod demo;
pub mod diffscope;
pub mod evalkit;
pub mod toolchain;
