//! Concurrent dialogue-act recognition: models, corpus handling, metrics,
//! and the numeric core they run on.
//!
//! Everything here is pure computation over `f64` and is usable without the
//! standard library (`default-features = false`); only `alloc` is required.
//! File formats, the command-line tool, and anything that touches the
//! filesystem live in the companion `cdarec` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod markov;
pub mod math;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
