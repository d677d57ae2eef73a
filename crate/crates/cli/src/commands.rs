//! Subcommand implementations. Each prints its human-readable output to
//! stdout and returns errors for `main` to map onto exit codes.

use std::fs;

use cdarec_core::corpus::{
    default_keywords, gen_synthetic, index_corpus, split_corpus, Corpus, SyntheticSpec, Vocabulary,
};
use cdarec_core::markov::{self, render_transition_table, transition_matrix, TransitionMatrix};
use cdarec_core::metrics::{paired_t_test, per_utterance_hamming};
use cdarec_core::model::{init_params, ModelConfig};
use cdarec_core::rng::{SeededRng, Stream};
use cdarec_core::train::{
    evaluate_model, predict_corpus, train, AdamSettings, TrainSettings,
};

use crate::args::{
    AnalyzeArgs, EvaluateArgs, GenArgs, GradcheckArgs, ModelOverrides, PredictArgs, SplitArg,
    TrainArgs,
};
use crate::checkpoint::{self, Checkpoint};
use crate::embeddings::load_embeddings;
use crate::errors::{CliError, CliResult};
use crate::formats::{atomic_write, load_corpus, save_native};
use crate::gradsuite;
use crate::matrixfile;
use crate::report;

fn apply_overrides(config: &mut ModelConfig, ov: &ModelOverrides) {
    if let Some(v) = ov.filters {
        config.filters_per_width = v;
    }
    if let Some(v) = &ov.widths {
        config.filter_widths = v.clone();
    }
    if let Some(v) = ov.hidden {
        config.rnn_hidden = v;
    }
    if let Some(v) = ov.layers {
        config.rnn_layers = v;
    }
    if let Some(v) = ov.embed_dim {
        config.embed_dim = v;
    }
    if let Some(v) = ov.pool_p {
        config.pool_p = v;
    }
    if let Some(v) = ov.cnn_dropout {
        config.cnn_dropout = v;
    }
    if let Some(v) = ov.rnn_dropout {
        config.rnn_dropout = v;
    }
    if let Some(v) = ov.window {
        config.context_window = v;
    }
}

/// Utterances are padded to the widest filter so every convolution fits.
fn pad_width(config: &ModelConfig) -> usize {
    config.filter_widths.iter().copied().max().unwrap_or(1)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus, args.format)?;
    let (mut train_part, mut val_part, mut test_part) = split_corpus(&corpus, args.seed)?;
    let vocab = Vocabulary::build(&train_part.dialogues, args.min_count)?;

    let mut config = ModelConfig::defaults(args.variant.to_core(), args.cell.to_core(), args.seed);
    apply_overrides(&mut config, &args.overrides);
    config.validate()?;

    let pad = pad_width(&config);
    index_corpus(&mut train_part, &vocab, pad)?;
    index_corpus(&mut val_part, &vocab, pad)?;
    index_corpus(&mut test_part, &vocab, pad)?;

    let pretrained = match &args.embeddings {
        Some(path) => {
            let mut rng = SeededRng::stream(args.seed, Stream::Embed);
            let table =
                load_embeddings(path, &vocab, config.embed_dim, &mut rng, !args.freeze_embeddings)?;
            Some(table)
        }
        None => None,
    };
    let store = init_params(&config, vocab.size(), pretrained)?;

    let settings = TrainSettings {
        epochs: args.epochs,
        patience: args.patience,
        threshold: args.threshold,
        adam: AdamSettings::default(),
    };
    println!(
        "training {} ({}) on {} dialogues, validating on {}, holding out {}",
        config.variant.name(),
        config.cell.name(),
        train_part.dialogues.len(),
        val_part.dialogues.len(),
        test_part.dialogues.len(),
    );
    let (store, train_report) = train(&config, store, &train_part, &val_part, &settings)?;

    fs::create_dir_all(&args.out)?;
    let ckpt_dir = args.out.join("checkpoint");
    checkpoint::save(&ckpt_dir, &config, &vocab, &store)?;
    atomic_write(
        &args.out.join("training_log.txt"),
        report::training_log(&train_report).as_bytes(),
    )?;

    let test_metrics = evaluate_model(&config, &store, &test_part, args.threshold)?;
    atomic_write(
        &args.out.join("metrics.json"),
        report::metrics_json(&test_metrics, None).as_bytes(),
    )?;

    let best = &train_report.epochs[train_report.best_epoch];
    println!(
        "best epoch {}/{}: validation micro-F1 {:.4}, Hamming {:.4}",
        train_report.best_epoch + 1,
        train_report.epochs.len(),
        best.val_micro_f1,
        best.val_hamming,
    );
    if let Some(secs) = train_report.wall_seconds {
        println!("trained in {secs:.1}s");
    }
    println!();
    println!("test split:");
    print!("{}", report::render_metrics(&test_metrics));
    println!("checkpoint written to {}", ckpt_dir.display());
    Ok(())
}

/// Restores a checkpoint and scores `raw` with it. The tokens are indexed
/// here because each checkpoint carries its own vocabulary.
fn score_with(
    ckpt: &Checkpoint,
    raw: &Corpus,
    threshold: f64,
) -> CliResult<(cdarec_core::metrics::MetricsReport, Vec<f64>)> {
    let mut indexed = raw.clone();
    index_corpus(&mut indexed, &ckpt.vocab, pad_width(&ckpt.config))?;
    let preds = predict_corpus(&ckpt.config, &ckpt.store, &indexed, threshold)?;
    let per_utt = per_utterance_hamming(&indexed, &preds)?;
    let metrics = cdarec_core::metrics::evaluate_predictions(&indexed, &preds)?;
    Ok((metrics, per_utt))
}

fn pick_split(corpus: Corpus, which: Option<SplitArg>, seed: u64) -> CliResult<Corpus> {
    let Some(which) = which else {
        return Ok(corpus);
    };
    let (train_part, val_part, test_part) = split_corpus(&corpus, seed)?;
    Ok(match which {
        SplitArg::Train => train_part,
        SplitArg::Validation => val_part,
        SplitArg::Test => test_part,
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let corpus = load_corpus(&args.corpus, args.format)?;
    if !corpus.fully_labeled() {
        return Err(CliError::data("evaluation needs labels on every utterance"));
    }
    // The split is re-derived from the checkpoint's own seed, so "test"
    // here matches what its training run held out.
    let raw = pick_split(corpus, args.split, ckpt.config.seed)?;

    let (metrics, ours) = score_with(&ckpt, &raw, args.threshold)?;
    print!("{}", report::render_metrics(&metrics));

    let mut t_result = None;
    if let Some(other_dir) = &args.compare {
        let other = checkpoint::load(other_dir)?;
        let (other_metrics, theirs) = score_with(&other, &raw, args.threshold)?;
        println!();
        println!("comparison checkpoint ({}):", other_dir.display());
        print!("{}", report::render_metrics(&other_metrics));
        let t = paired_t_test(&ours, &theirs)?;
        println!();
        println!("{}", report::render_t_test(&t));
        t_result = Some(t);
    }

    if let Some(out) = &args.out {
        atomic_write(out, report::metrics_json(&metrics, t_result.as_ref()).as_bytes())?;
    }
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let mut corpus = load_corpus(&args.corpus, args.format)?;
    index_corpus(&mut corpus, &ckpt.vocab, pad_width(&ckpt.config))?;
    let preds = predict_corpus(&ckpt.config, &ckpt.store, &corpus, args.threshold)?;

    let mut lines = String::new();
    for (d, row) in corpus.dialogues.iter().zip(&preds) {
        for (t, labels) in row.iter().enumerate() {
            let codes: Vec<&str> = labels.codes();
            lines.push_str(&format!("{}\t{}\t{}\n", d.id, t, codes.join(",")));
        }
    }
    print!("{lines}");
    if let Some(out) = &args.out {
        atomic_write(out, lines.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus, args.format)?;
    let matrix = transition_matrix(&corpus)?;
    println!(
        "{} dialogues, {} utterances",
        corpus.dialogues.len(),
        corpus.utterance_count()
    );
    print!("{}", render_transition_table(&matrix, args.decimals));
    if let Some(path) = &args.matrix_out {
        matrixfile::save_matrix(path, &matrix)?;
        println!("matrix written to {}", path.display());
    }
    Ok(())
}

/// Built-in planted chain for synthetic corpora, as transition counts out
/// of 100 per row. Every act is reachable from the initial state, so an
/// estimate from enough sampled dialogues converges to the whole table.
fn default_chain() -> TransitionMatrix {
    use cdarec_core::corpus::TAXONOMY;
    let s = markov::STATES;
    let mut counts = vec![0u64; s * s];
    let idx = |code: &str| TAXONOMY.iter().position(|&c| c == code).unwrap();
    let mut set = |row: usize, col: usize, n: u64| counts[row * s + col] = n;
    let rows: &[(&str, &[(&str, u64)])] = &[
        ("OQ", &[("RQ", 5), ("PA", 55), ("IR", 15), ("FD", 10), ("CQ", 5)]),
        ("RQ", &[("PA", 60), ("FD", 20)]),
        ("CQ", &[("FD", 50), ("PA", 30)]),
        ("FD", &[("PA", 45), ("CQ", 15), ("FQ", 10)]),
        ("FQ", &[("PA", 50), ("FD", 25)]),
        ("IR", &[("PA", 40), ("FD", 35)]),
        ("PA", &[("PF", 25), ("NF", 15), ("FQ", 15), ("JK", 5), ("O", 5)]),
        ("PF", &[("GG", 30), ("PA", 15)]),
        ("NF", &[("FD", 45), ("PA", 35)]),
        ("GG", &[("OQ", 40)]),
        ("JK", &[("PA", 40), ("GG", 20)]),
        ("O", &[("PA", 50)]),
    ];
    for (from, outs) in rows {
        let row = idx(from);
        let mut used = 0;
        for (to, n) in *outs {
            set(row, idx(to), *n);
            used += n;
        }
        set(row, markov::COL_TERM, 100 - used);
    }
    for (to, n) in [("OQ", 84u64), ("GG", 10), ("FD", 3), ("O", 3)] {
        set(markov::ROW_INIT, idx(to), n);
    }
    TransitionMatrix::from_counts(counts).expect("built-in chain rows sum to 100")
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let chain = match &args.matrix {
        Some(path) => matrixfile::load_matrix(path)?,
        None => default_chain(),
    };
    let keywords = default_keywords();
    let spec = SyntheticSpec {
        dialogues: args.dialogues,
        min_len: args.min_len,
        max_len: args.max_len,
        chain: &chain,
        keywords: &keywords,
        noise_rate: args.noise,
        seed: args.seed,
    };
    let corpus = gen_synthetic(&spec)?;
    save_native(&args.out, &corpus)?;
    println!(
        "wrote {} dialogues ({} utterances) to {}",
        corpus.dialogues.len(),
        corpus.utterance_count(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let lines = gradsuite::run(args.eps, args.tol, &[args.seed])?;
    let mut failures = 0;
    for line in &lines {
        let tag = if line.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} {} max_error {:.3e} ({} coords)",
            line.name, line.max_error, line.coords
        );
        if !line.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::numeric(format!(
            "{failures} of {} gradient checks failed",
            lines.len()
        )));
    }
    println!("all {} gradient checks passed", lines.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_reaches_every_act() {
        let chain = default_chain();
        let s = markov::STATES;
        for col in 0..s - 1 {
            let inbound: u64 = (0..s).map(|row| chain.count(row, col)).sum();
            assert!(inbound > 0, "no transitions into {}", markov::col_label(col));
        }
        for row in 0..s {
            assert_eq!(chain.row_total(row), 100, "row {}", markov::row_label(row));
        }
    }
}
