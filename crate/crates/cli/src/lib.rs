//! Command-line companion to `cdarec-core`: file formats, checkpoints,
//! pretrained embedding loading, reports, and the gradient check suite.
//! Everything that needs the filesystem or process exit codes lives here.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod embeddings;
pub mod errors;
pub mod formats;
pub mod gradsuite;
pub mod matrixfile;
pub mod report;
