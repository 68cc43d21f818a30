//! Scale-space representation of text documents.
//!
//! A document is embedded into a family of progressively smoothed signals
//! over a spatial axis (token or sentence position) and a semantic axis
//! (vocabulary index). On top of that representation the crate provides
//! scale-invariant similarity kernels and relevance models, hierarchical
//! keyword extraction, hierarchical text segmentation and passage retrieval.
//!
//! Modules follow the data flow:
//!
//! - [`textio`]: tokenization, vocabularies and every on-disk format
//! - [`signals`]: the textual signals built from tokenized documents
//! - [`kernels`]: spatial smoothing kernels and separable 2D smoothing
//! - [`semgraph`]: the semantic word graph and semantic smoothing
//! - [`scalespace`]: scale ladders, stacks, extrema tracking, interest points
//! - [`invariance`]: single-scale kernels, margins and learned scale weights
//! - [`tasks`]: keywording, segmentation, passage retrieval and evaluation
//! - [`cli`]: the command-line front end

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod invariance;
pub mod kernels;
pub mod scalespace;
pub mod semgraph;
pub mod signals;
pub mod tasks;
pub mod textio;

pub use error::{Error, Result};
