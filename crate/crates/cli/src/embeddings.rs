//! Pretrained embedding loader: whitespace-separated text, one token and
//! its vector per line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use cdarec_core::corpus::{Vocabulary, PAD_INDEX};
use cdarec_core::layers::EmbeddingTable;
use cdarec_core::rng::SeededRng;
use cdarec_core::tensor::Tensor;

use crate::errors::{CliError, CliResult};

/// Builds the embedding table for `vocab` from a vector file.
///
/// In-vocab tokens found in the file get the file vectors (the last
/// occurrence wins); in-vocab tokens absent from the file get uniform
/// (-0.25, 0.25) draws in index order; the padding row stays zero. Every
/// line must carry exactly `dim` values, used or not.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut SeededRng,
    trainable: bool,
) -> CliResult<EmbeddingTable> {
    if dim == 0 {
        return Err(CliError::usage("embedding dimension must be positive"));
    }
    let rows = vocab.size();
    let mut data = vec![0.0f64; rows * dim];
    let mut found = vec![false; rows];
    found[PAD_INDEX] = true;

    let file = File::open(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| {
            CliError::data(format!("{} line {lineno}: {e}", path.display()))
        })?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else {
            continue; // blank line
        };
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(CliError::data(format!(
                "{} line {lineno}: expected {dim} values, found {}",
                path.display(),
                values.len()
            )));
        }
        if !vocab.contains(token) {
            continue;
        }
        let idx = vocab.lookup(token);
        for (d, v) in values.iter().enumerate() {
            data[idx * dim + d] = v.parse::<f64>().map_err(|_| {
                CliError::data(format!(
                    "{} line {lineno}: {v:?} is not a number",
                    path.display()
                ))
            })?;
        }
        found[idx] = true;
    }

    for idx in 0..rows {
        if !found[idx] {
            for d in 0..dim {
                data[idx * dim + d] = rng.uniform(-0.25, 0.25);
            }
        }
    }

    let weights = Tensor::new(vec![rows, dim], data).map_err(CliError::from)?;
    Ok(EmbeddingTable::new(weights, trainable)?)
}
