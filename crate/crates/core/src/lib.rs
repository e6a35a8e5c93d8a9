//! Corpus-divergence analytics for online communities.
//!
//! `divlens` finds the in-group vocabulary of a community by comparing its
//! word frequencies against a platform-wide baseline sample, then measures
//! how the activity and in-group language of the community's users shift
//! across a ban event. The crate is organised as a set of small stages:
//!
//! - [`ingest`]: comment archives, base-36 IDs, baseline ID sampling, time windows
//! - [`corpus`]: tokenizer and mergeable frequency tables
//! - [`divergence`]: per-word Jensen-Shannon contributions and the top-k vocabulary
//! - [`sage`]: L1-regularised log-deviation keyword baseline
//! - [`cohort`]: user ranking, top/random cohorts, bot and omission filters
//! - [`shift`]: normalized activity and vocabulary shifts
//! - [`stats`]: signed-rank, rank-sum and Benjamini-Hochberg correction
//! - [`deobfuscate`]: matching obscured community names to candidates
//! - [`synth`]: synthetic communities with planted vocabulary
//! - [`report`] and [`pipeline`]: summaries, overlap tables and the file-based driver

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
pub mod config;
pub mod corpus;
pub mod deobfuscate;
pub mod divergence;
mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod sage;
pub mod shift;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub(crate) use error::csv_writer;
