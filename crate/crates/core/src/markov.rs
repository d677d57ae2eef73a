//! First-order Markov chain over dialogue acts, with synthetic start and
//! end states, plus the text rendering of its transition table.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, LABEL_COUNT, TAXONOMY};
use crate::error::{Error, Result};

/// States per axis: the 12 labels plus one synthetic state. Rows carry
/// INIT in the extra slot (dialogue start), columns carry TERM (dialogue
/// end); label indices occupy 0..12 on both axes.
pub const STATES: usize = LABEL_COUNT + 1;

/// Row index of the synthetic start state.
pub const ROW_INIT: usize = LABEL_COUNT;

/// Column index of the synthetic end state.
pub const COL_TERM: usize = LABEL_COUNT;

/// Tolerance for row-stochasticity checks.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Transition counts and row-normalized probabilities. Rows with zero
/// total count keep an all-zero probability row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    counts: Vec<u64>,
    probs: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from raw counts, normalizing each non-empty row.
    pub fn from_counts(counts: Vec<u64>) -> Result<TransitionMatrix> {
        if counts.len() != STATES * STATES {
            return Err(Error::shape(format!(
                "transition counts must be {STATES}x{STATES}"
            )));
        }
        let mut probs = alloc::vec![0.0; STATES * STATES];
        for r in 0..STATES {
            let row = &counts[r * STATES..(r + 1) * STATES];
            let total: u64 = row.iter().sum();
            if total > 0 {
                for (c, &k) in row.iter().enumerate() {
                    probs[r * STATES + c] = k as f64 / total as f64;
                }
            }
        }
        Ok(TransitionMatrix { counts, probs })
    }

    /// Builds a planted chain from probabilities. Every row must be
    /// either all zero (an unreachable state) or sum to 1 within
    /// [`ROW_SUM_TOL`]; counts stay zero.
    pub fn from_probs(probs: &[f64]) -> Result<TransitionMatrix> {
        if probs.len() != STATES * STATES {
            return Err(Error::shape(format!(
                "transition probabilities must be {STATES}x{STATES}"
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid(format!(
                    "transition probability {p} at flat index {i}"
                )));
            }
        }
        for r in 0..STATES {
            let sum: f64 = probs[r * STATES..(r + 1) * STATES].iter().sum();
            if sum != 0.0 && crate::math::abs(sum - 1.0) > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "row {} sums to {sum}, expected 0 or 1",
                    row_label(r)
                )));
            }
        }
        Ok(TransitionMatrix {
            counts: alloc::vec![0; STATES * STATES],
            probs: probs.to_vec(),
        })
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * STATES + col]
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.probs[row * STATES + col]
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.counts[row * STATES..(row + 1) * STATES].iter().sum()
    }

    /// Row-major probabilities, `STATES` x `STATES`.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Largest absolute difference between the two probability matrices.
    pub fn linf_distance(&self, other: &TransitionMatrix) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| crate::math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

/// Row heading: label code or INIT.
pub fn row_label(row: usize) -> &'static str {
    if row == ROW_INIT {
        "INIT"
    } else {
        TAXONOMY[row]
    }
}

/// Column heading: label code or TERM.
pub fn col_label(col: usize) -> &'static str {
    if col == COL_TERM {
        "TERM"
    } else {
        TAXONOMY[col]
    }
}

/// Counts label transitions across a corpus.
///
/// For a dialogue with label sets Y_1..Y_s this adds one INIT->l count per
/// l in Y_1, one l->l' count per pair in Y_t x Y_{t+1} for each adjacent
/// t, and one l->TERM count per l in Y_s. Probabilities are the row
/// normalizations.
pub fn transition_matrix(corpus: &Corpus) -> Result<TransitionMatrix> {
    let mut counts = alloc::vec![0u64; STATES * STATES];
    for d in &corpus.dialogues {
        for u in &d.utterances {
            if u.labels.is_empty() {
                return Err(Error::data(format!(
                    "dialogue {:?} has an unlabeled utterance",
                    d.id
                )));
            }
        }
        let first = d.utterances[0].labels;
        for l in first.indices() {
            counts[ROW_INIT * STATES + l] += 1;
        }
        for pair in d.utterances.windows(2) {
            for from in pair[0].labels.indices() {
                for to in pair[1].labels.indices() {
                    counts[from * STATES + to] += 1;
                }
            }
        }
        let last = d.utterances[d.utterances.len() - 1].labels;
        for l in last.indices() {
            counts[l * STATES + COL_TERM] += 1;
        }
    }
    TransitionMatrix::from_counts(counts)
}

/// Renders the transition table: label rows first and INIT last, label
/// columns first and TERM last. Cells are percentages at the given number
/// of decimals; zero-count cells stay blank and each row's maxima carry a
/// trailing `*` (ties all marked).
pub fn render_transition_table(matrix: &TransitionMatrix, decimals: usize) -> String {
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(STATES + 1);
    let mut header: Vec<String> = Vec::with_capacity(STATES + 1);
    header.push(String::from("from\\to"));
    header.extend((0..STATES).map(|c| String::from(col_label(c))));
    cells.push(header);
    // Rows in taxonomy order, INIT after them.
    let row_order = (0..LABEL_COUNT).chain([ROW_INIT]);
    for r in row_order {
        let mut row = Vec::with_capacity(STATES + 1);
        row.push(String::from(row_label(r)));
        let max = (0..STATES)
            .map(|c| matrix.prob(r, c))
            .fold(0.0, f64::max);
        for c in 0..STATES {
            let p = matrix.prob(r, c);
            if p == 0.0 {
                row.push(String::new());
            } else {
                let mark = if p == max { "*" } else { "" };
                row.push(format!("{:.*}%{}", decimals, 100.0 * p, mark));
            }
        }
        cells.push(row);
    }
    let mut widths = alloc::vec![0usize; STATES + 1];
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            // Left-align the heading column, right-align numbers.
            if i == 0 {
                out.push_str(cell);
                for _ in cell.len()..widths[i] {
                    out.push(' ');
                }
            } else {
                for _ in cell.len()..widths[i] {
                    out.push(' ');
                }
                out.push_str(cell);
            }
        }
        out.push('\n');
    }
    out
}
