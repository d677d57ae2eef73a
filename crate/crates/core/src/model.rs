//! The five dialogue classifiers: three convolutional-recurrent variants
//! and two convolution-only baselines.
//!
//! All variants share the same per-utterance front end (embed, convolve,
//! pool) and the same dense-sigmoid head; they differ in what the head
//! sees. The recurrent variants run the utterance vectors through a
//! bidirectional stack; the baselines stay context-free (`CnnKim`) or use
//! a fixed neighbor window (`CnnCr`).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Dialogue, LabelSet, LABEL_COUNT};
use crate::error::{Error, Result};
use crate::layers::{
    bi_rnn, conv_features, dense_sigmoid, dropout, highway_join, BiLayer, CellVars, ConvGroup,
    EmbeddingTable, GruVars, LstmVars, Mode,
};
use crate::params::{Evaluated, ParameterStore, StoreLeaves};
use crate::rng::{uniform_init, SeededRng, Stream};
use crate::tape::{Tape, Var};

/// Model architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Conv front end, bidirectional recurrence, head sees the recurrent
    /// state only. Max-over-time pooling.
    CrnnV1,
    /// V1 plus a skip: the head sees recurrent state and utterance vector.
    CrnnV2,
    /// V2 with chunked max pooling (p chunks per feature map).
    CrnnV3,
    /// Context-free per-utterance classifier: three parallel filter
    /// groups of one shared width, max-over-time, dense head.
    CnnKim,
    /// CnnKim features for a window of neighboring utterances, zero
    /// vectors past the dialogue boundaries.
    CnnCr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::CrnnV1,
        Variant::CrnnV2,
        Variant::CrnnV3,
        Variant::CnnKim,
        Variant::CnnCr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::CrnnV1 => "crnn-v1",
            Variant::CrnnV2 => "crnn-v2",
            Variant::CrnnV3 => "crnn-v3",
            Variant::CnnKim => "cnn-kim",
            Variant::CnnCr => "cnn-cr",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }

    pub fn recurrent(self) -> bool {
        matches!(self, Variant::CrnnV1 | Variant::CrnnV2 | Variant::CrnnV3)
    }
}

/// Recurrent cell selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> Result<CellKind> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            _ => Err(Error::invalid(format!("unknown cell kind {s:?}"))),
        }
    }
}

/// Hyperparameters for every variant. Unused knobs are ignored (for
/// example `rnn_hidden` by the baselines), but all values are validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub cell: CellKind,
    /// Convolution widths for the recurrent variants; the baselines use
    /// three groups of the first width.
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub cnn_dropout: f64,
    pub rnn_hidden: usize,
    pub rnn_layers: usize,
    pub rnn_dropout: f64,
    /// Pooling chunks per feature map, used by `CrnnV3` only.
    pub pool_p: usize,
    pub label_count: usize,
    pub embed_dim: usize,
    /// Utterance window for `CnnCr`; must be odd.
    pub context_window: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size defaults: 100 filters per width at widths 3/4/5, dropout
    /// 0.4 and 0.15, hidden size 900, two layers, two pooling chunks,
    /// 300-dimensional embeddings, window 3.
    pub fn defaults(variant: Variant, cell: CellKind, seed: u64) -> ModelConfig {
        ModelConfig {
            variant,
            cell,
            filter_widths: alloc::vec![3, 4, 5],
            filters_per_width: 100,
            cnn_dropout: 0.4,
            rnn_hidden: 900,
            rnn_layers: 2,
            rnn_dropout: 0.15,
            pool_p: 2,
            label_count: LABEL_COUNT,
            embed_dim: 300,
            context_window: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(Error::invalid("filter widths must be non-empty and positive"));
        }
        if self.filters_per_width == 0 || self.embed_dim == 0 || self.label_count == 0 {
            return Err(Error::invalid("filters, embedding dim, and label count must be positive"));
        }
        if self.pool_p == 0 {
            return Err(Error::invalid("pool chunk count must be positive"));
        }
        if !(0.0..1.0).contains(&self.cnn_dropout) || !(0.0..1.0).contains(&self.rnn_dropout) {
            return Err(Error::invalid("dropout rates must lie in [0, 1)"));
        }
        if self.variant.recurrent() {
            if self.rnn_hidden == 0 || self.rnn_layers == 0 {
                return Err(Error::invalid("recurrent variants need hidden size and layers >= 1"));
            }
            // Widths double as parameter names for the recurrent variants.
            for (i, w) in self.filter_widths.iter().enumerate() {
                if self.filter_widths[i + 1..].contains(w) {
                    return Err(Error::invalid(format!("duplicate filter width {w}")));
                }
            }
        }
        if self.variant == Variant::CnnCr && self.context_window % 2 == 0 {
            return Err(Error::invalid(format!(
                "context window {} must be odd",
                self.context_window
            )));
        }
        Ok(())
    }

    /// Chunks each feature map pools to: `pool_p` for `CrnnV3`, one
    /// (plain max-over-time) for everything else.
    pub fn pool_chunks(&self) -> usize {
        if self.variant == Variant::CrnnV3 {
            self.pool_p
        } else {
            1
        }
    }

    /// Number of parallel filter groups. The baselines follow the
    /// three-group reading of the Kim-style classifier.
    pub fn conv_groups(&self) -> usize {
        if self.variant.recurrent() {
            self.filter_widths.len()
        } else {
            3
        }
    }

    /// Dimension of one utterance vector after pooling and concatenation.
    pub fn conv_dim(&self) -> usize {
        self.conv_groups() * self.filters_per_width * self.pool_chunks()
    }

    /// Dimension of the vector entering the dense head.
    pub fn head_input_dim(&self) -> usize {
        match self.variant {
            Variant::CrnnV1 => 2 * self.rnn_hidden,
            Variant::CrnnV2 | Variant::CrnnV3 => 2 * self.rnn_hidden + self.conv_dim(),
            Variant::CnnKim => self.conv_dim(),
            Variant::CnnCr => self.context_window * self.conv_dim(),
        }
    }

    /// Widest filter actually used; utterances must be padded to at least
    /// this many tokens.
    pub fn max_filter_width(&self) -> usize {
        if self.variant.recurrent() {
            *self.filter_widths.iter().max().expect("validated non-empty")
        } else {
            self.filter_widths[0]
        }
    }

    fn conv_group_names(&self) -> Vec<(String, usize)> {
        if self.variant.recurrent() {
            self.filter_widths
                .iter()
                .map(|&w| (format!("conv.w{w}"), w))
                .collect()
        } else {
            (0..self.conv_groups())
                .map(|i| (format!("conv.g{i}"), self.filter_widths[0]))
                .collect()
        }
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut SeededRng) -> Result<crate::tensor::Tensor> {
    let limit = crate::math::sqrt(6.0 / (rows + cols) as f64);
    uniform_init(&[rows, cols], -limit, limit, rng)
}

/// Creates the full parameter store for a configuration.
///
/// Order (checkpoints depend on it): embedding, then conv groups in
/// declaration order (weight, bias), then for the recurrent variants each
/// layer's forward then backward cell parameters, then the head. Weights
/// are Glorot-uniform draws, biases start at zero, and the embedding table
/// comes from `pretrained` or fresh uniform rows.
pub fn init_params(
    config: &ModelConfig,
    vocab_size: usize,
    pretrained: Option<EmbeddingTable>,
) -> Result<ParameterStore> {
    config.validate()?;
    let mut rng = SeededRng::stream(config.seed, Stream::Init);
    let table = match pretrained {
        Some(t) => {
            if t.vocab_size() != vocab_size || t.dim() != config.embed_dim {
                return Err(Error::shape(format!(
                    "embedding table is {}x{}, config wants {}x{}",
                    t.vocab_size(),
                    t.dim(),
                    vocab_size,
                    config.embed_dim
                )));
            }
            t
        }
        None => EmbeddingTable::random(vocab_size, config.embed_dim, &mut rng)?,
    };
    let mut store = ParameterStore::new();
    let frozen = table.frozen_rows();
    store.push_with_frozen_rows("embedding", table.into_weights(), frozen)?;

    let f = config.filters_per_width;
    for (name, width) in config.conv_group_names() {
        store.push(
            format!("{name}.weight"),
            glorot(f, width * config.embed_dim, &mut rng)?,
        )?;
        store.push(format!("{name}.bias"), crate::tensor::Tensor::zeros(alloc::vec![f]))?;
    }

    if config.variant.recurrent() {
        let h = config.rnn_hidden;
        for layer in 0..config.rnn_layers {
            let input = if layer == 0 { config.conv_dim() } else { 2 * h };
            for dir in ["fw", "bw"] {
                let prefix = format!("rnn.l{layer}.{dir}");
                match config.cell {
                    CellKind::Lstm => {
                        store.push(format!("{prefix}.w_x"), glorot(4 * h, input, &mut rng)?)?;
                        store.push(format!("{prefix}.w_h"), glorot(4 * h, h, &mut rng)?)?;
                        store.push(
                            format!("{prefix}.b"),
                            crate::tensor::Tensor::zeros(alloc::vec![4 * h]),
                        )?;
                    }
                    CellKind::Gru => {
                        store.push(format!("{prefix}.w_x"), glorot(3 * h, input, &mut rng)?)?;
                        store.push(format!("{prefix}.u_z"), glorot(h, h, &mut rng)?)?;
                        store.push(format!("{prefix}.u_r"), glorot(h, h, &mut rng)?)?;
                        store.push(format!("{prefix}.u_c"), glorot(h, h, &mut rng)?)?;
                        store.push(
                            format!("{prefix}.b"),
                            crate::tensor::Tensor::zeros(alloc::vec![3 * h]),
                        )?;
                    }
                }
            }
        }
    }

    store.push(
        "head.weight",
        glorot(config.label_count, config.head_input_dim(), &mut rng)?,
    )?;
    store.push(
        "head.bias",
        crate::tensor::Tensor::zeros(alloc::vec![config.label_count]),
    )?;
    Ok(store)
}

/// Per-utterance label probabilities for one dialogue: `utterances()`
/// rows of `labels()` entries, each strictly inside (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    rows: Vec<Vec<f64>>,
}

impl PredictionMatrix {
    fn new(rows: Vec<Vec<f64>>) -> PredictionMatrix {
        PredictionMatrix { rows }
    }

    /// Builds a matrix from raw probability rows: rectangular, nonempty,
    /// entries within [0, 1]. Loss code clamps the endpoints.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<PredictionMatrix> {
        let width = match rows.first() {
            Some(first) if !first.is_empty() => first.len(),
            _ => return Err(Error::invalid("prediction matrix needs a nonempty first row")),
        };
        for row in &rows {
            if row.len() != width {
                return Err(Error::shape(format!(
                    "ragged prediction rows: {} vs {width}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid("probabilities must lie in [0, 1]"));
            }
        }
        Ok(PredictionMatrix { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn utterances(&self) -> usize {
        self.rows.len()
    }

    pub fn labels(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Exact bit equality, for determinism and round-trip checks.
    pub fn bits_eq(&self, other: &PredictionMatrix) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// A built forward pass: the tape, the per-utterance probability nodes,
/// and the parameter leaves (for gradient lookups).
pub struct Forward {
    pub tape: Tape,
    pub prob_vars: Vec<Var>,
    pub leaves: StoreLeaves,
}

impl Forward {
    pub fn probabilities(&self) -> PredictionMatrix {
        PredictionMatrix::new(
            self.prob_vars
                .iter()
                .map(|&v| self.tape.value(v).data().to_vec())
                .collect(),
        )
    }
}

fn conv_group_vars(
    config: &ModelConfig,
    store: &ParameterStore,
    leaves: &StoreLeaves,
) -> Result<Vec<ConvGroup>> {
    config
        .conv_group_names()
        .into_iter()
        .map(|(name, width)| {
            Ok(ConvGroup {
                width,
                weight: leaves.named(store, &format!("{name}.weight"))?,
                bias: leaves.named(store, &format!("{name}.bias"))?,
            })
        })
        .collect()
}

fn rnn_layer_vars(
    config: &ModelConfig,
    store: &ParameterStore,
    leaves: &StoreLeaves,
) -> Result<Vec<BiLayer>> {
    let h = config.rnn_hidden;
    (0..config.rnn_layers)
        .map(|layer| {
            let cell = |dir: &str| -> Result<CellVars> {
                let prefix = format!("rnn.l{layer}.{dir}");
                Ok(match config.cell {
                    CellKind::Lstm => CellVars::Lstm(LstmVars {
                        w_x: leaves.named(store, &format!("{prefix}.w_x"))?,
                        w_h: leaves.named(store, &format!("{prefix}.w_h"))?,
                        b: leaves.named(store, &format!("{prefix}.b"))?,
                        hidden: h,
                    }),
                    CellKind::Gru => CellVars::Gru(GruVars {
                        w_x: leaves.named(store, &format!("{prefix}.w_x"))?,
                        u_z: leaves.named(store, &format!("{prefix}.u_z"))?,
                        u_r: leaves.named(store, &format!("{prefix}.u_r"))?,
                        u_c: leaves.named(store, &format!("{prefix}.u_c"))?,
                        b: leaves.named(store, &format!("{prefix}.b"))?,
                        hidden: h,
                    }),
                })
            };
            Ok(BiLayer {
                fw: cell("fw")?,
                bw: cell("bw")?,
            })
        })
        .collect()
}

/// Runs one dialogue through the configured variant.
///
/// `utterances` holds each utterance's token indices, already padded to at
/// least the widest filter. In training mode the convolutional dropout
/// hits each utterance vector once (the recurrent input and the skip path
/// share the dropped vector) and the recurrent dropout sits between
/// stacked layers.
pub fn forward(
    config: &ModelConfig,
    store: &ParameterStore,
    utterances: &[&[usize]],
    mode: &mut Mode,
) -> Result<Forward> {
    config.validate()?;
    if utterances.is_empty() {
        return Err(Error::data("dialogue has no utterances"));
    }
    let need = config.max_filter_width();
    if let Some(short) = utterances.iter().find(|u| u.len() < need) {
        return Err(Error::data(format!(
            "utterance of {} tokens reached the model; pad to at least {need}",
            short.len()
        )));
    }

    let mut tape = Tape::new();
    let leaves = store.leaves(&mut tape);
    let table = leaves.named(store, "embedding")?;
    let groups = conv_group_vars(config, store, &leaves)?;

    let mut vectors = Vec::with_capacity(utterances.len());
    for toks in utterances {
        let embedded = tape.embed(table, toks)?;
        let v = conv_features(&mut tape, embedded, &groups, config.pool_chunks())?;
        vectors.push(dropout(&mut tape, v, config.cnn_dropout, mode)?);
    }

    let head_w = leaves.named(store, "head.weight")?;
    let head_b = leaves.named(store, "head.bias")?;
    let mut prob_vars = Vec::with_capacity(utterances.len());
    match config.variant {
        Variant::CrnnV1 | Variant::CrnnV2 | Variant::CrnnV3 => {
            let layers = rnn_layer_vars(config, store, &leaves)?;
            let states = bi_rnn(&mut tape, &layers, &vectors, config.rnn_dropout, mode)?;
            for (t, &state) in states.iter().enumerate() {
                let head_in = if config.variant == Variant::CrnnV1 {
                    state
                } else {
                    highway_join(&mut tape, state, vectors[t])?
                };
                prob_vars.push(dense_sigmoid(&mut tape, head_w, head_b, head_in)?);
            }
        }
        Variant::CnnKim => {
            for &v in &vectors {
                prob_vars.push(dense_sigmoid(&mut tape, head_w, head_b, v)?);
            }
        }
        Variant::CnnCr => {
            let reach = (config.context_window - 1) / 2;
            let boundary = tape.zeros_leaf(alloc::vec![config.conv_dim()]);
            for t in 0..vectors.len() {
                let window: Vec<Var> = (0..config.context_window)
                    .map(|o| {
                        (t + o)
                            .checked_sub(reach)
                            .and_then(|i| vectors.get(i).copied())
                            .unwrap_or(boundary)
                    })
                    .collect();
                let head_in = tape.concat(&window)?;
                prob_vars.push(dense_sigmoid(&mut tape, head_w, head_b, head_in)?);
            }
        }
    }
    Ok(Forward {
        tape,
        prob_vars,
        leaves,
    })
}

/// Token views for [`forward`] from an indexed dialogue.
pub fn token_views(dialogue: &Dialogue) -> Vec<&[usize]> {
    dialogue
        .utterances
        .iter()
        .map(|u| u.tokens.as_slice())
        .collect()
}

/// Forward pass plus the mean binary cross-entropy of the whole dialogue
/// against its reference label sets, packaged for gradient work.
pub fn dialogue_loss(
    config: &ModelConfig,
    store: &ParameterStore,
    dialogue: &Dialogue,
    mode: &mut Mode,
) -> Result<Evaluated> {
    let views = token_views(dialogue);
    let mut fwd = forward(config, store, &views, mode)?;
    let all_probs = fwd.tape.concat(&fwd.prob_vars)?;
    let mut refs = Vec::with_capacity(dialogue.utterances.len() * config.label_count);
    for u in &dialogue.utterances {
        let t = u.labels.targets();
        if t.len() != config.label_count {
            return Err(Error::shape(format!(
                "label vector of {} entries, config wants {}",
                t.len(),
                config.label_count
            )));
        }
        refs.extend(t);
    }
    let loss = fwd.tape.bce(all_probs, &refs)?;
    Evaluated::new(fwd.tape, loss, fwd.leaves)
}

/// Thresholds probabilities into label sets.
///
/// A label is on when its probability is at least `threshold`. An empty
/// row falls back to the single best label (lowest index on ties), so
/// every utterance gets at least one.
pub fn predict_labels(probs: &PredictionMatrix, threshold: f64) -> Result<Vec<LabelSet>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    probs
        .rows()
        .iter()
        .map(|row| {
            if row.len() > LABEL_COUNT {
                return Err(Error::shape(format!(
                    "{} probabilities for at most {LABEL_COUNT} labels",
                    row.len()
                )));
            }
            let mut set = LabelSet::empty();
            for (j, &p) in row.iter().enumerate() {
                if p >= threshold {
                    set.insert(j)?;
                }
            }
            if set.is_empty() {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                set.insert(best)?;
            }
            Ok(set)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::gradcheck::{grad_check, DEFAULT_EPS, DEFAULT_TOL};
    use alloc::string::ToString;
    use alloc::vec;

    fn tiny_config(variant: Variant, cell: CellKind) -> ModelConfig {
        ModelConfig {
            variant,
            cell,
            filter_widths: vec![2, 3],
            filters_per_width: 2,
            cnn_dropout: 0.4,
            rnn_hidden: 3,
            rnn_layers: 2,
            rnn_dropout: 0.15,
            pool_p: 2,
            label_count: LABEL_COUNT,
            embed_dim: 4,
            context_window: 3,
            seed: 7,
        }
    }

    const VOCAB: usize = 9;

    fn tiny_dialogue() -> Dialogue {
        let utt = |toks: &[usize], code: &str| {
            let mut u = Utterance::new(
                "user",
                "",
                LabelSet::from_codes(&[code]).unwrap(),
            );
            u.tokens = toks.to_vec();
            u
        };
        Dialogue {
            id: "d".to_string(),
            utterances: vec![
                utt(&[2, 3, 4, 0], "OQ"),
                utt(&[5, 6, 2, 3, 4], "PA"),
                utt(&[7, 8, 0], "PF"),
            ],
        }
    }

    #[test]
    fn forward_shapes_and_ranges() {
        let d = tiny_dialogue();
        let views = token_views(&d);
        for variant in Variant::ALL {
            let cfg = tiny_config(variant, CellKind::Lstm);
            let store = init_params(&cfg, VOCAB, None).unwrap();
            let fwd = forward(&cfg, &store, &views, &mut Mode::Eval).unwrap();
            let probs = fwd.probabilities();
            assert_eq!(probs.utterances(), 3, "{}", variant.name());
            assert_eq!(probs.labels(), LABEL_COUNT, "{}", variant.name());
            for row in probs.rows() {
                for &p in row {
                    assert!(p > 0.0 && p < 1.0, "{} produced {p}", variant.name());
                }
            }
        }
    }

    #[test]
    fn head_dimension_accounting() {
        let v1 = tiny_config(Variant::CrnnV1, CellKind::Lstm);
        let v2 = tiny_config(Variant::CrnnV2, CellKind::Lstm);
        let v3 = tiny_config(Variant::CrnnV3, CellKind::Lstm);
        let kim = tiny_config(Variant::CnnKim, CellKind::Lstm);
        let cr = tiny_config(Variant::CnnCr, CellKind::Lstm);
        // The skip adds exactly one utterance vector to the head input.
        assert_eq!(v2.head_input_dim(), v1.head_input_dim() + v2.conv_dim());
        // Two chunks double the utterance vector relative to plain max.
        assert_eq!(v3.conv_dim(), 2 * v2.conv_dim());
        assert_eq!(kim.conv_dim(), 3 * kim.filters_per_width);
        assert_eq!(cr.head_input_dim(), 3 * kim.head_input_dim());
    }

    #[test]
    fn v3_with_one_chunk_equals_v2() {
        let mut v2 = tiny_config(Variant::CrnnV2, CellKind::Gru);
        v2.pool_p = 1;
        let mut v3 = v2.clone();
        v3.variant = Variant::CrnnV3;
        assert_eq!(v2.head_input_dim(), v3.head_input_dim());
        let store = init_params(&v2, VOCAB, None).unwrap();
        let d = tiny_dialogue();
        let views = token_views(&d);
        let a = forward(&v2, &store, &views, &mut Mode::Eval).unwrap().probabilities();
        let b = forward(&v3, &store, &views, &mut Mode::Eval).unwrap().probabilities();
        assert!(a.bits_eq(&b), "one-chunk pooling must reduce to max-over-time");
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let cfg = tiny_config(Variant::CrnnV3, CellKind::Lstm);
        let store = init_params(&cfg, VOCAB, None).unwrap();
        let d = tiny_dialogue();
        let views = token_views(&d);
        let a = forward(&cfg, &store, &views, &mut Mode::Eval).unwrap().probabilities();
        let b = forward(&cfg, &store, &views, &mut Mode::Eval).unwrap().probabilities();
        assert!(a.bits_eq(&b));
    }

    #[test]
    fn train_mode_draws_are_seeded() {
        let cfg = tiny_config(Variant::CrnnV3, CellKind::Lstm);
        let store = init_params(&cfg, VOCAB, None).unwrap();
        let d = tiny_dialogue();
        let views = token_views(&d);
        let run = |seed: u64| {
            let mut rng = SeededRng::stream(seed, Stream::Train);
            forward(&cfg, &store, &views, &mut Mode::Train(&mut rng))
                .unwrap()
                .probabilities()
        };
        assert!(run(3).bits_eq(&run(3)));
        assert!(!run(3).bits_eq(&run(4)));
    }

    #[test]
    fn cnn_kim_is_context_free() {
        let cfg = tiny_config(Variant::CnnKim, CellKind::Lstm);
        let store = init_params(&cfg, VOCAB, None).unwrap();
        let d = tiny_dialogue();
        let base = forward(&cfg, &store, &token_views(&d), &mut Mode::Eval)
            .unwrap()
            .probabilities();
        let mut edited = d.clone();
        edited.utterances[0].tokens = vec![8, 8, 8, 8];
        let probs = forward(&cfg, &store, &token_views(&edited), &mut Mode::Eval)
            .unwrap()
            .probabilities();
        assert_ne!(probs.rows()[0], base.rows()[0], "own row must move");
        for t in 1..3 {
            assert_eq!(probs.rows()[t], base.rows()[t], "row {t} saw a foreign edit");
        }
    }

    #[test]
    fn cnn_cr_sees_only_the_window() {
        let cfg = tiny_config(Variant::CnnCr, CellKind::Lstm);
        let store = init_params(&cfg, VOCAB, None).unwrap();
        let mut d = tiny_dialogue();
        // Stretch to five utterances so t=3,4 sit outside u_0's window.
        let mut extra = d.utterances[1].clone();
        extra.tokens = vec![4, 4, 2];
        d.utterances.push(extra.clone());
        d.utterances.push(extra);
        let base = forward(&cfg, &store, &token_views(&d), &mut Mode::Eval)
            .unwrap()
            .probabilities();
        let mut edited = d.clone();
        edited.utterances[0].tokens = vec![8, 8, 8, 8];
        let probs = forward(&cfg, &store, &token_views(&edited), &mut Mode::Eval)
            .unwrap()
            .probabilities();
        for t in 0..2 {
            assert_ne!(probs.rows()[t], base.rows()[t], "row {t} is inside the window");
        }
        for t in 2..5 {
            assert_eq!(probs.rows()[t], base.rows()[t], "row {t} is outside the window");
        }
    }

    #[test]
    fn cnn_cr_handles_single_utterance() {
        let cfg = tiny_config(Variant::CnnCr, CellKind::Lstm);
        let store = init_params(&cfg, VOCAB, None).unwrap();
        let mut d = tiny_dialogue();
        d.utterances.truncate(1);
        let probs = forward(&cfg, &store, &token_views(&d), &mut Mode::Eval)
            .unwrap()
            .probabilities();
        assert_eq!(probs.utterances(), 1);
    }

    #[test]
    fn end_to_end_gradients_for_every_variant() {
        let d = tiny_dialogue();
        for variant in Variant::ALL {
            for cell in [CellKind::Lstm, CellKind::Gru] {
                if !variant.recurrent() && cell == CellKind::Gru {
                    continue; // baselines have no cell parameters
                }
                let cfg = tiny_config(variant, cell);
                let mut store = init_params(&cfg, VOCAB, None).unwrap();
                let report = grad_check(
                    |s| dialogue_loss(&cfg, s, &d, &mut Mode::Eval),
                    &mut store,
                    DEFAULT_EPS,
                    DEFAULT_TOL,
                )
                .unwrap();
                assert!(
                    report.passed,
                    "{}/{}: worst {:?}",
                    variant.name(),
                    cell.name(),
                    report.worst
                );
            }
        }
    }

    #[test]
    fn recurrent_head_sees_first_utterance() {
        // Gradient of the last row's probabilities with respect to the
        // embedding rows used only by the first utterance must be nonzero
        // for the recurrent variant and exactly zero for the windowed
        // baseline (utterance 1 and the last row are 4 apart).
        let mut d = tiny_dialogue();
        let mut extra = d.utterances[2].clone();
        extra.tokens = vec![5, 6, 7];
        d.utterances.push(extra.clone());
        d.utterances.push(extra);
        // Token 3 appears only in utterance 0 after this edit.
        d.utterances[1].tokens = vec![5, 6, 2, 2, 4];
        let grad_for = |variant: Variant| -> crate::tensor::Tensor {
            let cfg = tiny_config(variant, CellKind::Lstm);
            let store = init_params(&cfg, VOCAB, None).unwrap();
            let mut fwd = forward(&cfg, &store, &token_views(&d), &mut Mode::Eval).unwrap();
            let last = *fwd.prob_vars.last().unwrap();
            let target = fwd.tape.sum(last).unwrap();
            let grads = fwd.tape.backward(target).unwrap();
            grads
                .get(fwd.leaves.named(&store, "embedding").unwrap())
                .unwrap()
                .clone()
        };
        let dim = 4;
        let row = |t: &crate::tensor::Tensor, r: usize| t.data()[r * dim..(r + 1) * dim].to_vec();

        let crnn = grad_for(Variant::CrnnV3);
        assert!(
            row(&crnn, 3).iter().any(|&g| g != 0.0),
            "recurrent variant must propagate to the first utterance"
        );
        let cr = grad_for(Variant::CnnCr);
        assert!(
            row(&cr, 3).iter().all(|&g| g == 0.0),
            "windowed baseline must not see utterance 0 from the last row"
        );
        assert!(
            row(&cr, 7).iter().any(|&g| g != 0.0),
            "learning signal inside the window is expected"
        );
    }

    #[test]
    fn init_params_is_deterministic_and_ordered() {
        let cfg = tiny_config(Variant::CrnnV3, CellKind::Gru);
        let a = init_params(&cfg, VOCAB, None).unwrap();
        let b = init_params(&cfg, VOCAB, None).unwrap();
        let names: Vec<&str> = a.iter().map(|p| p.name()).collect();
        assert_eq!(
            names,
            vec![
                "embedding",
                "conv.w2.weight",
                "conv.w2.bias",
                "conv.w3.weight",
                "conv.w3.bias",
                "rnn.l0.fw.w_x",
                "rnn.l0.fw.u_z",
                "rnn.l0.fw.u_r",
                "rnn.l0.fw.u_c",
                "rnn.l0.fw.b",
                "rnn.l0.bw.w_x",
                "rnn.l0.bw.u_z",
                "rnn.l0.bw.u_r",
                "rnn.l0.bw.u_c",
                "rnn.l0.bw.b",
                "rnn.l1.fw.w_x",
                "rnn.l1.fw.u_z",
                "rnn.l1.fw.u_r",
                "rnn.l1.fw.u_c",
                "rnn.l1.fw.b",
                "rnn.l1.bw.w_x",
                "rnn.l1.bw.u_z",
                "rnn.l1.bw.u_r",
                "rnn.l1.bw.u_c",
                "rnn.l1.bw.b",
                "head.weight",
                "head.bias",
            ]
        );
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert!(pa.tensor().bits_eq(pb.tensor()), "param {} differs", pa.name());
        }
        // Embedding: padding row zero and frozen.
        let emb = a.get("embedding").unwrap();
        assert!(emb.data()[..cfg.embed_dim].iter().all(|&x| x == 0.0));
        assert_eq!(a.param(0).frozen_rows(), 1);
    }

    #[test]
    fn init_params_accepts_matching_pretrained_table_only() {
        let cfg = tiny_config(Variant::CnnKim, CellKind::Lstm);
        let mut rng = SeededRng::new(5);
        let good = EmbeddingTable::random(VOCAB, cfg.embed_dim, &mut rng).unwrap();
        let table_bits = good.weights().clone();
        let store = init_params(&cfg, VOCAB, Some(good)).unwrap();
        assert!(store.get("embedding").unwrap().bits_eq(&table_bits));
        let wrong_dim = EmbeddingTable::random(VOCAB, 5, &mut rng).unwrap();
        assert!(init_params(&cfg, VOCAB, Some(wrong_dim)).is_err());
        let wrong_vocab = EmbeddingTable::random(VOCAB + 1, cfg.embed_dim, &mut rng).unwrap();
        assert!(init_params(&cfg, VOCAB, Some(wrong_vocab)).is_err());
    }

    #[test]
    fn config_validation_catches_bad_settings() {
        let mut cfg = tiny_config(Variant::CnnCr, CellKind::Lstm);
        cfg.context_window = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(Variant::CrnnV1, CellKind::Lstm);
        cfg.filter_widths = vec![3, 3];
        assert!(cfg.validate().is_err());
        // Baselines may repeat widths; only the first is used.
        let mut cfg = tiny_config(Variant::CnnKim, CellKind::Lstm);
        cfg.filter_widths = vec![3, 3];
        assert!(cfg.validate().is_ok());
        let mut cfg = tiny_config(Variant::CrnnV3, CellKind::Lstm);
        cfg.pool_p = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(Variant::CrnnV2, CellKind::Lstm);
        cfg.cnn_dropout = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_utterance_is_reported() {
        let cfg = tiny_config(Variant::CrnnV1, CellKind::Lstm);
        let store = init_params(&cfg, VOCAB, None).unwrap();
        let mut d = tiny_dialogue();
        d.utterances[1].tokens = vec![2, 3]; // below the widest filter (3)
        let err = forward(&cfg, &store, &token_views(&d), &mut Mode::Eval);
        assert!(err.is_err());
    }

    #[test]
    fn defaults_carry_the_full_size_settings() {
        let cfg = ModelConfig::defaults(Variant::CrnnV3, CellKind::Lstm, 1);
        assert_eq!(cfg.filters_per_width, 100);
        assert_eq!(cfg.cnn_dropout, 0.4);
        assert_eq!(cfg.rnn_hidden, 900);
        assert_eq!(cfg.rnn_layers, 2);
        assert_eq!(cfg.rnn_dropout, 0.15);
        assert_eq!(cfg.pool_p, 2);
        assert_eq!(cfg.filter_widths, vec![3, 4, 5]);
        assert_eq!(cfg.embed_dim, 300);
        assert_eq!(cfg.context_window, 3);
        assert_eq!(cfg.label_count, 12);
        cfg.validate().unwrap();
    }

    #[test]
    fn predict_labels_thresholds_with_fallback() {
        let mut row1 = vec![0.1; 12];
        row1[0] = 0.7;
        row1[2] = 0.6;
        let mut row2 = vec![0.1; 12];
        row2[4] = 0.4;
        let row3 = vec![0.5; 12];
        let probs = PredictionMatrix::new(vec![row1, row2, row3]);
        let sets = predict_labels(&probs, 0.5).unwrap();
        assert_eq!(sets[0], LabelSet::from_indices(&[0, 2]).unwrap());
        assert_eq!(sets[1], LabelSet::single(4).unwrap(), "fallback to argmax");
        assert_eq!(sets[2].len(), 12, "boundary is inclusive");
    }

    #[test]
    fn predict_labels_breaks_ties_low() {
        let probs = PredictionMatrix::new(vec![vec![0.3; 12]]);
        let sets = predict_labels(&probs, 0.5).unwrap();
        assert_eq!(sets[0], LabelSet::single(0).unwrap());
    }

    #[test]
    fn predict_labels_validates_threshold() {
        let probs = PredictionMatrix::new(vec![vec![0.5; 12]]);
        assert!(predict_labels(&probs, 0.0).is_err());
        assert!(predict_labels(&probs, 1.0).is_err());
    }

    #[test]
    fn variant_and_cell_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        for c in [CellKind::Lstm, CellKind::Gru] {
            assert_eq!(CellKind::parse(c.name()).unwrap(), c);
        }
        assert!(Variant::parse("resnet").is_err());
        assert!(CellKind::parse("rnn").is_err());
    }
}
