//! Machine-readable transition matrix file: one header naming the state
//! order, then the probability rows as decimal text. Values print in
//! shortest round-trip form, so a save/load cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cdarec_core::corpus::TAXONOMY;
use cdarec_core::markov::{TransitionMatrix, STATES};

use crate::errors::{CliError, CliResult};
use crate::formats::atomic_write;

fn state_names() -> Vec<&'static str> {
    TAXONOMY.iter().copied().chain(["INIT", "TERM"]).collect()
}

pub fn save_matrix(path: &Path, matrix: &TransitionMatrix) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# rows: 12 DA codes then INIT; columns: 12 DA codes then TERM"
    );
    let _ = writeln!(out, "states {}", state_names().join(" "));
    for row in 0..STATES {
        let cells: Vec<String> = (0..STATES)
            .map(|col| matrix.prob(row, col).to_string())
            .collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    atomic_write(path, out.as_bytes())
}

pub fn load_matrix(path: &Path) -> CliResult<TransitionMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut saw_states = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("states ") {
            let got: Vec<&str> = rest.split_whitespace().collect();
            if got != state_names() {
                return Err(CliError::data(format!(
                    "{} line {}: unexpected state order",
                    path.display(),
                    i + 1
                )));
            }
            saw_states = true;
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                CliError::data(format!("{} line {}: bad number", path.display(), i + 1))
            })?;
        if row.len() != STATES {
            return Err(CliError::data(format!(
                "{} line {}: expected {STATES} probabilities, found {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    if !saw_states {
        return Err(CliError::data(format!(
            "{}: missing states header",
            path.display()
        )));
    }
    if rows.len() != STATES {
        return Err(CliError::data(format!(
            "{}: expected {STATES} rows, found {}",
            path.display(),
            rows.len()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(TransitionMatrix::from_probs(&flat)?)
}
