//! The gradient verification suite the `gradcheck` command and the
//! acceptance tests run: finite differences against the backward pass for
//! every tape operation and for the end-to-end loss of every model
//! variant.

use cdarec_core::corpus::{Dialogue, LabelSet, Utterance};
use cdarec_core::gradcheck::{grad_check, GradReport};
use cdarec_core::layers::Mode;
use cdarec_core::model::{dialogue_loss, init_params, CellKind, ModelConfig, Variant};
use cdarec_core::params::{Evaluated, ParameterStore};
use cdarec_core::rng::{uniform_init, SeededRng};
use cdarec_core::tape::Tape;
use cdarec_core::Result as CoreResult;

use crate::errors::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub max_error: f64,
    pub coords: usize,
    pub passed: bool,
}

impl CheckLine {
    fn from_report(name: String, report: &GradReport) -> CheckLine {
        CheckLine {
            name,
            max_error: report.max_error,
            coords: report.coords_checked,
            passed: report.passed,
        }
    }
}

fn store_of(entries: &[(&str, Vec<usize>)], rng: &mut SeededRng) -> ParameterStore {
    let mut store = ParameterStore::new();
    for (name, shape) in entries {
        let t = uniform_init(shape, -1.0, 1.0, rng).expect("init");
        store.push(*name, t).expect("unique names");
    }
    store
}

type Builder = fn(&ParameterStore) -> CoreResult<Evaluated>;

fn leaf_pair(store: &ParameterStore) -> (Tape, cdarec_core::params::StoreLeaves) {
    let mut tape = Tape::new();
    let leaves = store.leaves(&mut tape);
    (tape, leaves)
}

fn check_op(
    lines: &mut Vec<CheckLine>,
    label: &str,
    seed: u64,
    entries: &[(&str, Vec<usize>)],
    build: Builder,
    eps: f64,
    tol: f64,
) -> CliResult<()> {
    let mut rng = SeededRng::new(seed);
    let mut store = store_of(entries, &mut rng);
    let report = grad_check(build, &mut store, eps, tol)?;
    lines.push(CheckLine::from_report(
        format!("op {label} (seed {seed})"),
        &report,
    ));
    Ok(())
}

fn op_checks(lines: &mut Vec<CheckLine>, seed: u64, eps: f64, tol: f64) -> CliResult<()> {
    check_op(lines, "matvec", seed, &[("w", vec![3, 4]), ("x", vec![4])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let y = tape.matvec(leaves.var(0), leaves.var(1))?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "add-sub-mul", seed, &[("a", vec![5]), ("b", vec![5])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let sum = tape.add(leaves.var(0), leaves.var(1))?;
        let diff = tape.sub(leaves.var(0), leaves.var(1))?;
        let prod = tape.mul(sum, diff)?;
        let loss = tape.sum(prod)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "tanh", seed, &[("x", vec![6])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let y = tape.tanh(leaves.var(0))?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "sigmoid", seed, &[("x", vec![6])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let y = tape.sigmoid(leaves.var(0))?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "slice-concat", seed, &[("x", vec![5]), ("y", vec![5])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let head = tape.slice(leaves.var(0), 0, 2)?;
        let tail = tape.slice(leaves.var(0), 2, 5)?;
        let joined = tape.concat(&[head, tail])?;
        let prod = tape.mul(joined, leaves.var(1))?;
        let loss = tape.sum(prod)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "reshape", seed, &[("w", vec![3, 4])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let flat = tape.reshape(leaves.var(0), vec![12])?;
        let y = tape.tanh(flat)?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "embed", seed, &[("table", vec![4, 3])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let rows = tape.embed(leaves.var(0), &[2, 0, 2, 1])?;
        let flat = tape.reshape(rows, vec![12])?;
        let y = tape.tanh(flat)?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "conv1d", seed, &[("emb", vec![5, 3]), ("w", vec![2, 6]), ("b", vec![2])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let maps = tape.conv1d(leaves.var(0), leaves.var(1), leaves.var(2), 2)?;
        let squashed = tape.tanh(maps)?;
        let flat = tape.reshape(squashed, vec![8])?;
        let loss = tape.sum(flat)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "kmax-pool", seed, &[("x", vec![3, 7])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let pooled = tape.kmax_pool(leaves.var(0), 2)?;
        let flat = tape.reshape(pooled, vec![6])?;
        let y = tape.tanh(flat)?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "dropout-mask", seed, &[("x", vec![6])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let mask = vec![2.0, 0.0, 2.0, 2.0, 0.0, 2.0];
        let dropped = tape.dropout(leaves.var(0), mask)?;
        let y = tape.tanh(dropped)?;
        let loss = tape.sum(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "bce", seed, &[("logits", vec![4])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let probs = tape.sigmoid(leaves.var(0))?;
        let loss = tape.bce(probs, &[1.0, 0.0, 0.0, 1.0])?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    check_op(lines, "mean", seed, &[("x", vec![5])], |s| {
        let (mut tape, leaves) = leaf_pair(s);
        let y = tape.tanh(leaves.var(0))?;
        let loss = tape.mean(y)?;
        Evaluated::new(tape, loss, leaves)
    }, eps, tol)?;

    Ok(())
}

/// Fixed 3-utterance dialogue over a tiny vocabulary.
fn e2e_dialogue() -> Dialogue {
    let utterance = |tokens: Vec<usize>, codes: &[&str]| {
        let mut u = Utterance::new("u", "synthetic", LabelSet::from_codes(codes).unwrap());
        u.tokens = tokens;
        u
    };
    Dialogue {
        id: "gradcheck".to_string(),
        utterances: vec![
            utterance(vec![2, 3, 4, 0], &["OQ"]),
            utterance(vec![5, 6, 2, 3], &["PA", "FD"]),
            utterance(vec![7, 4, 0, 0], &["PF"]),
        ],
    }
}

fn e2e_config(variant: Variant, cell: CellKind, seed: u64) -> ModelConfig {
    let mut config = ModelConfig::defaults(variant, cell, seed);
    config.filter_widths = if variant.recurrent() { vec![2, 3] } else { vec![2] };
    config.filters_per_width = 3;
    config.embed_dim = 5;
    config.rnn_hidden = 4;
    config.rnn_layers = 2;
    config.pool_p = 2;
    config.context_window = 3;
    // Gradients are checked on the dropout-free eval path.
    config.cnn_dropout = 0.0;
    config.rnn_dropout = 0.0;
    config
}

fn e2e_checks(lines: &mut Vec<CheckLine>, seed: u64, eps: f64, tol: f64) -> CliResult<()> {
    const VOCAB_SIZE: usize = 8;
    let combos: &[(Variant, Option<CellKind>)] = &[
        (Variant::CrnnV1, Some(CellKind::Lstm)),
        (Variant::CrnnV1, Some(CellKind::Gru)),
        (Variant::CrnnV2, Some(CellKind::Lstm)),
        (Variant::CrnnV2, Some(CellKind::Gru)),
        (Variant::CrnnV3, Some(CellKind::Lstm)),
        (Variant::CrnnV3, Some(CellKind::Gru)),
        (Variant::CnnKim, None),
        (Variant::CnnCr, None),
    ];
    let dialogue = e2e_dialogue();
    for &(variant, cell) in combos {
        let cell_kind = cell.unwrap_or(CellKind::Lstm);
        let config = e2e_config(variant, cell_kind, seed);
        let mut store = init_params(&config, VOCAB_SIZE, None)?;
        let report = grad_check(
            |s| dialogue_loss(&config, s, &dialogue, &mut Mode::Eval),
            &mut store,
            eps,
            tol,
        )?;
        let label = match cell {
            Some(c) => format!("end-to-end {} {} (seed {seed})", variant.name(), c.name()),
            None => format!("end-to-end {} (seed {seed})", variant.name()),
        };
        lines.push(CheckLine::from_report(label, &report));
    }
    Ok(())
}

/// Runs the whole suite for each seed. Lines report every check; the call
/// itself only errors on setup problems, not on failed checks.
pub fn run(eps: f64, tol: f64, seeds: &[u64]) -> CliResult<Vec<CheckLine>> {
    if seeds.is_empty() {
        return Err(CliError::usage("gradcheck needs at least one seed"));
    }
    let mut lines = Vec::new();
    for &seed in seeds {
        op_checks(&mut lines, seed, eps, tol)?;
        e2e_checks(&mut lines, seed, eps, tol)?;
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_at_default_tolerances() {
        let lines = run(1e-4, 1e-4, &[11]).unwrap();
        assert_eq!(lines.len(), 12 + 8);
        for l in &lines {
            assert!(l.passed, "{} failed with max error {}", l.name, l.max_error);
            assert!(l.coords > 0);
        }
    }

    #[test]
    fn impossible_tolerance_reports_failures() {
        let lines = run(1e-4, 1e-300, &[11]).unwrap();
        assert!(lines.iter().any(|l| !l.passed));
    }
}
