//! Dialogue corpus types: label taxonomy, tokenization, vocabulary,
//! deterministic splitting, and a synthetic-dialogue generator.
//!
//! File parsing lives in the companion `cdarec` crate; this module only
//! defines the in-memory representation and the pure operations on it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::markov::{TransitionMatrix, COL_TERM, ROW_INIT, STATES};
use crate::rng::{SeededRng, Stream};

/// Dialogue-act codes in canonical order. The position of a code here is
/// its label index everywhere: output-head columns, label bitsets, and
/// transition-table axes all use this order.
pub const TAXONOMY: [&str; 12] = [
    "OQ", "RQ", "CQ", "FD", "FQ", "IR", "PA", "PF", "NF", "GG", "JK", "O",
];

/// Number of dialogue-act labels.
pub const LABEL_COUNT: usize = TAXONOMY.len();

/// Reserved vocabulary index for the padding token.
pub const PAD_INDEX: usize = 0;

/// Reserved vocabulary index for out-of-vocabulary tokens.
pub const OOV_INDEX: usize = 1;

/// Index of a code in [`TAXONOMY`], if it is one.
pub fn label_index(code: &str) -> Option<usize> {
    TAXONOMY.iter().position(|&c| c == code)
}

/// A set of dialogue-act labels, stored as a 12-bit set over taxonomy
/// indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelSet(u16);

impl LabelSet {
    pub const fn empty() -> LabelSet {
        LabelSet(0)
    }

    pub fn single(index: usize) -> Result<LabelSet> {
        let mut s = LabelSet::empty();
        s.insert(index)?;
        Ok(s)
    }

    pub fn from_indices(indices: &[usize]) -> Result<LabelSet> {
        let mut s = LabelSet::empty();
        for &i in indices {
            s.insert(i)?;
        }
        Ok(s)
    }

    pub fn from_codes<S: AsRef<str>>(codes: &[S]) -> Result<LabelSet> {
        let mut s = LabelSet::empty();
        for c in codes {
            let i = label_index(c.as_ref())
                .ok_or_else(|| Error::data(format!("unknown label code {:?}", c.as_ref())))?;
            s.insert(i)?;
        }
        Ok(s)
    }

    /// Raw bitset; bit i is taxonomy index i.
    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Result<LabelSet> {
        if bits >= 1 << LABEL_COUNT {
            return Err(Error::invalid(format!("label bits {bits:#x} out of range")));
        }
        Ok(LabelSet(bits))
    }

    pub fn insert(&mut self, index: usize) -> Result<()> {
        if index >= LABEL_COUNT {
            return Err(Error::invalid(format!("label index {index} out of range")));
        }
        self.0 |= 1 << index;
        Ok(())
    }

    pub fn contains(self, index: usize) -> bool {
        index < LABEL_COUNT && self.0 & (1 << index) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    /// Label indices in ascending order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..LABEL_COUNT).filter(move |i| bits & (1 << i) != 0)
    }

    /// Codes in taxonomy order.
    pub fn codes(self) -> Vec<&'static str> {
        self.indices().map(|i| TAXONOMY[i]).collect()
    }

    /// 0/1 reference vector over all 12 labels, for loss computation.
    pub fn targets(self) -> Vec<f64> {
        (0..LABEL_COUNT)
            .map(|i| if self.contains(i) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// One utterance. `tokens` is empty until the corpus is indexed against a
/// vocabulary; after indexing it is non-empty (padding guarantees that).
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    pub tokens: Vec<usize>,
    pub labels: LabelSet,
}

impl Utterance {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>, labels: LabelSet) -> Utterance {
        Utterance {
            speaker: speaker.into(),
            text: text.into(),
            tokens: Vec::new(),
            labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

/// A set of dialogues. Label indices throughout refer to [`TAXONOMY`];
/// `provenance` is a free-form note about where the data came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub provenance: Option<String>,
}

impl Corpus {
    /// Builds a corpus, checking the structural invariants: unique
    /// dialogue ids and no empty dialogues.
    pub fn new(dialogues: Vec<Dialogue>, provenance: Option<String>) -> Result<Corpus> {
        let mut seen = BTreeMap::new();
        for d in &dialogues {
            if d.utterances.is_empty() {
                return Err(Error::data(format!("dialogue {:?} has no utterances", d.id)));
            }
            if seen.insert(d.id.clone(), ()).is_some() {
                return Err(Error::data(format!("duplicate dialogue id {:?}", d.id)));
            }
        }
        Ok(Corpus {
            dialogues,
            provenance,
        })
    }

    pub fn utterance_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.utterances.len()).sum()
    }

    /// True when every utterance carries at least one label.
    pub fn fully_labeled(&self) -> bool {
        self.dialogues
            .iter()
            .flat_map(|d| &d.utterances)
            .all(|u| !u.labels.is_empty())
    }
}

/// Characters split off a token's edges as single-character tokens.
const EDGE_PUNCT: [char; 12] = ['.', ',', '!', '?', ';', ':', '(', ')', '[', ']', '"', '\''];

/// Lowercases, splits on whitespace, then splits any leading or trailing
/// punctuation from [`EDGE_PUNCT`] off each word as separate one-character
/// tokens. Interior punctuation stays put, so "win+shift+cursor" and
/// "ca n't" survive intact.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for word in lower.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let is_edge = |c: &char| EDGE_PUNCT.contains(c);
        match chars.iter().position(|c| !is_edge(c)) {
            None => out.extend(chars.iter().map(|c| c.to_string())),
            Some(start) => {
                let end = chars.iter().rposition(|c| !is_edge(c)).expect("start exists");
                out.extend(chars[..start].iter().map(|c| c.to_string()));
                out.push(chars[start..=end].iter().collect());
                out.extend(chars[end + 1..].iter().map(|c| c.to_string()));
            }
        }
    }
    out
}

/// Token-to-index map with reserved padding and out-of-vocabulary slots.
/// Built from the training split only; unknown tokens map to [`OOV_INDEX`].
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from training dialogues. Tokens appearing at
    /// least `min_count` times get indices from 2 upward, in order of
    /// first appearance.
    pub fn build(training: &[Dialogue], min_count: usize) -> Result<Vocabulary> {
        if training.is_empty() {
            return Err(Error::data("cannot build vocabulary from an empty training set"));
        }
        if min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        for d in training {
            for u in &d.utterances {
                for tok in tokenize(&u.text) {
                    match counts.get_mut(&tok) {
                        Some(c) => *c += 1,
                        None => {
                            counts.insert(tok.clone(), 1);
                            order.push(tok);
                        }
                    }
                }
            }
        }
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        for tok in order {
            if counts[&tok] >= min_count {
                vocab.index.insert(tok.clone(), 2 + vocab.tokens.len());
                vocab.tokens.push(tok);
            }
        }
        Ok(vocab)
    }

    /// Rebuilds from an index-ordered token list, as stored in checkpoints.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary> {
        let mut index = BTreeMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), 2 + i).is_some() {
                return Err(Error::data(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Total size including the two reserved slots.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    /// Non-reserved tokens in index order (index 2 first).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Fills every utterance's token indices: tokenize, map through the
/// vocabulary, then right-pad with the padding token to at least `pad_to`
/// (callers pass the widest convolution filter).
pub fn index_corpus(corpus: &mut Corpus, vocab: &Vocabulary, pad_to: usize) -> Result<()> {
    if pad_to == 0 {
        return Err(Error::invalid("pad_to must be at least 1"));
    }
    for d in &mut corpus.dialogues {
        for u in &mut d.utterances {
            let mut toks: Vec<usize> = tokenize(&u.text).iter().map(|t| vocab.lookup(t)).collect();
            while toks.len() < pad_to {
                toks.push(PAD_INDEX);
            }
            u.tokens = toks;
        }
    }
    Ok(())
}

/// Deterministic 8:1:1 split: seeded shuffle of the dialogues, then cuts
/// at floor(0.8 N) and floor(0.9 N). The remainder lands in the test
/// split, so every dialogue appears in exactly one part.
pub fn split_corpus(corpus: &Corpus, seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    let n = corpus.dialogues.len();
    if n < 3 {
        return Err(Error::data(format!("need at least 3 dialogues to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::stream(seed, Stream::Split).shuffle(&mut order);
    let cut_train = n * 8 / 10;
    let cut_val = n * 9 / 10;
    let pick = |range: core::ops::Range<usize>| Corpus {
        dialogues: order[range]
            .iter()
            .map(|&i| corpus.dialogues[i].clone())
            .collect(),
        provenance: corpus.provenance.clone(),
    };
    Ok((pick(0..cut_train), pick(cut_train..cut_val), pick(cut_val..n)))
}

/// Filler tokens the synthetic generator mixes into utterance text.
const NOISE_WORDS: [&str; 16] = [
    "the", "a", "it", "is", "on", "with", "please", "see", "this", "that", "then", "now", "just",
    "still", "again", "maybe",
];

/// A serviceable keyword map for synthetic corpora: two distinctive words
/// per label, in taxonomy order.
pub fn default_keywords() -> Vec<Vec<String>> {
    [
        ["how", "question"],
        ["repeat", "asked"],
        ["clarify", "which"],
        ["details", "version"],
        ["followup", "also"],
        ["info", "report"],
        ["try", "answer"],
        ["thanks", "works"],
        ["nope", "broken"],
        ["hello", "greetings"],
        ["haha", "joke"],
        ["misc", "other"],
    ]
    .iter()
    .map(|pair| pair.iter().map(|s| s.to_string()).collect())
    .collect()
}

/// Settings for [`gen_synthetic`].
pub struct SyntheticSpec<'a> {
    pub dialogues: usize,
    /// Inclusive bounds on utterances per dialogue. The terminal state is
    /// unavailable below `min_len` and generation stops at `max_len`.
    pub min_len: usize,
    pub max_len: usize,
    /// Planted chain. Rows must be all-zero or sum to 1; the walk errors
    /// if it reaches a state with no usable outgoing mass.
    pub chain: &'a TransitionMatrix,
    /// Per-label keyword lists in taxonomy order, each non-empty.
    pub keywords: &'a [Vec<String>],
    /// After the keywords, each further position is a noise word with this
    /// probability, so utterance length has a geometric tail.
    pub noise_rate: f64,
    pub seed: u64,
}

/// Samples dialogues whose single-label sequences follow the planted
/// chain and whose text contains each label's keywords plus noise. The
/// same spec always yields the same corpus.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    if spec.min_len == 0 || spec.max_len < spec.min_len {
        return Err(Error::invalid(format!(
            "bad length range [{}, {}]",
            spec.min_len, spec.max_len
        )));
    }
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return Err(Error::invalid(format!(
            "noise rate {} outside [0, 1)",
            spec.noise_rate
        )));
    }
    if spec.keywords.len() != LABEL_COUNT {
        return Err(Error::invalid(format!(
            "keyword map must cover all {LABEL_COUNT} labels"
        )));
    }
    if let Some(i) = spec.keywords.iter().position(|k| k.is_empty()) {
        return Err(Error::invalid(format!("label {} has no keywords", TAXONOMY[i])));
    }
    let mut rng = SeededRng::stream(spec.seed, Stream::Synthetic);
    let mut dialogues = Vec::with_capacity(spec.dialogues);
    for di in 0..spec.dialogues {
        let mut states: Vec<usize> = Vec::new();
        let mut row = ROW_INIT;
        while states.len() < spec.max_len {
            let mut weights: Vec<f64> = (0..STATES).map(|c| spec.chain.prob(row, c)).collect();
            if states.len() < spec.min_len {
                weights[COL_TERM] = 0.0;
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                return Err(Error::data(format!(
                    "planted chain offers no transition out of {} at length {}",
                    if row == ROW_INIT { "INIT" } else { TAXONOMY[row] },
                    states.len()
                )));
            }
            let next = rng.categorical(&weights)?;
            if next == COL_TERM {
                break;
            }
            states.push(next);
            row = next;
        }
        let utterances = states
            .iter()
            .enumerate()
            .map(|(t, &label)| {
                let mut words: Vec<&str> =
                    spec.keywords[label].iter().map(String::as_str).collect();
                while rng.unit_f64() < spec.noise_rate {
                    words.push(NOISE_WORDS[rng.below(NOISE_WORDS.len())]);
                }
                Utterance::new(
                    if t % 2 == 0 { "user" } else { "agent" },
                    words.join(" "),
                    LabelSet::single(label).expect("state index is a label index"),
                )
            })
            .collect();
        dialogues.push(Dialogue {
            id: format!("synth-{di:04}"),
            utterances,
        });
    }
    Corpus::new(dialogues, Some("synthetic".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn utt(text: &str, codes: &[&str]) -> Utterance {
        Utterance::new("user", text, LabelSet::from_codes(codes).unwrap())
    }

    fn dialogue(id: &str, texts: &[&str]) -> Dialogue {
        Dialogue {
            id: id.to_string(),
            utterances: texts.iter().map(|t| utt(t, &["PA"])).collect(),
        }
    }

    #[test]
    fn taxonomy_is_unique_and_sized() {
        assert_eq!(TAXONOMY.len(), 12);
        for (i, a) in TAXONOMY.iter().enumerate() {
            assert_eq!(label_index(a), Some(i));
            for b in &TAXONOMY[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn tokenize_splits_edge_punctuation() {
        assert_eq!(
            tokenize("Thank you. It works great."),
            vec!["thank", "you", ".", "it", "works", "great", "."]
        );
    }

    #[test]
    fn tokenize_keeps_interior_punctuation() {
        assert_eq!(tokenize("Win+Shift+Cursor"), vec!["win+shift+cursor"]);
        assert_eq!(tokenize("ca n't"), vec!["ca", "n't"]);
    }

    #[test]
    fn tokenize_empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n ").is_empty());
    }

    #[test]
    fn tokenize_handles_all_punct_and_nesting() {
        assert_eq!(tokenize("..."), vec![".", ".", "."]);
        assert_eq!(tokenize("(great!)"), vec!["(", "great", "!", ")"]);
        assert_eq!(tokenize("\"quoted\""), vec!["\"", "quoted", "\""]);
        assert_eq!(tokenize("e.g."), vec!["e.g", "."]);
    }

    #[test]
    fn label_set_round_trips() {
        let s = LabelSet::from_codes(&["GG", "PA"]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains(label_index("GG").unwrap()));
        assert!(!s.contains(label_index("OQ").unwrap()));
        assert_eq!(s.codes(), vec!["PA", "GG"]); // taxonomy order
        assert_eq!(LabelSet::from_bits(s.bits()).unwrap(), s);
        assert!(LabelSet::from_bits(1 << 12).is_err());
        assert!(LabelSet::from_codes(&["??"]).is_err());
    }

    #[test]
    fn label_set_targets_match_membership() {
        let s = LabelSet::from_codes(&["OQ", "O"]).unwrap();
        let t = s.targets();
        assert_eq!(t.len(), 12);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[11], 1.0);
        assert_eq!(t[1..11].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn corpus_rejects_duplicate_ids_and_empty_dialogues() {
        let d = dialogue("a", &["hi"]);
        assert!(Corpus::new(vec![d.clone(), d.clone()], None).is_err());
        let empty = Dialogue {
            id: "b".to_string(),
            utterances: vec![],
        };
        assert!(Corpus::new(vec![empty], None).is_err());
        assert!(Corpus::new(vec![d], None).is_ok());
    }

    #[test]
    fn vocab_orders_by_first_appearance() {
        let train = [dialogue("d", &["a b a"])];
        let v = Vocabulary::build(&train, 1).unwrap();
        assert_eq!(v.lookup("a"), 2);
        assert_eq!(v.lookup("b"), 3);
        assert_eq!(v.lookup("zzz"), OOV_INDEX);
        assert_eq!(v.size(), 4);
    }

    #[test]
    fn vocab_min_count_filters() {
        let train = [dialogue("d", &["a b a"])];
        let v = Vocabulary::build(&train, 2).unwrap();
        assert_eq!(v.lookup("a"), 2);
        assert_eq!(v.lookup("b"), OOV_INDEX);
        assert_eq!(v.size(), 3);
    }

    #[test]
    fn vocab_rebuild_is_identical() {
        let train = [
            dialogue("d1", &["hello there .", "it works !"]),
            dialogue("d2", &["hello again"]),
        ];
        let a = Vocabulary::build(&train, 1).unwrap();
        let b = Vocabulary::build(&train, 1).unwrap();
        assert_eq!(a, b);
        let c = Vocabulary::from_tokens(a.tokens().to_vec()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn vocab_rejects_bad_inputs() {
        assert!(Vocabulary::build(&[], 1).is_err());
        assert!(Vocabulary::build(&[dialogue("d", &["x"])], 0).is_err());
        assert!(Vocabulary::from_tokens(vec!["a".to_string(), "a".to_string()]).is_err())
    }

    #[test]
    fn index_corpus_pads_short_utterances() {
        let mut corpus = Corpus::new(vec![dialogue("d", &["a b a", "a", ""])], None).unwrap();
        let vocab = Vocabulary::build(&corpus.dialogues, 1).unwrap();
        index_corpus(&mut corpus, &vocab, 5).unwrap();
        let us = &corpus.dialogues[0].utterances;
        assert_eq!(us[0].tokens, vec![2, 3, 2, PAD_INDEX, PAD_INDEX]);
        assert_eq!(us[1].tokens, vec![2, PAD_INDEX, PAD_INDEX, PAD_INDEX, PAD_INDEX]);
        assert_eq!(us[2].tokens, vec![PAD_INDEX; 5]);
        assert!(index_corpus(&mut corpus, &vocab, 0).is_err());
    }

    #[test]
    fn index_corpus_leaves_long_utterances_alone() {
        let mut corpus = Corpus::new(vec![dialogue("d", &["a b c d e f"])], None).unwrap();
        let vocab = Vocabulary::build(&corpus.dialogues, 1).unwrap();
        index_corpus(&mut corpus, &vocab, 3).unwrap();
        assert_eq!(corpus.dialogues[0].utterances[0].tokens.len(), 6);
    }

    fn numbered_corpus(n: usize) -> Corpus {
        let dialogues = (0..n)
            .map(|i| dialogue(&format!("d{i}"), &["hello"]))
            .collect();
        Corpus::new(dialogues, None).unwrap()
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let (tr, va, te) = split_corpus(&numbered_corpus(10), 7).unwrap();
        assert_eq!((tr.dialogues.len(), va.dialogues.len(), te.dialogues.len()), (8, 1, 1));
        let (tr, va, te) = split_corpus(&numbered_corpus(7), 7).unwrap();
        assert_eq!((tr.dialogues.len(), va.dialogues.len(), te.dialogues.len()), (5, 1, 1));
        assert!(split_corpus(&numbered_corpus(2), 7).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_deterministic() {
        let corpus = numbered_corpus(23);
        let (tr, va, te) = split_corpus(&corpus, 99).unwrap();
        let mut ids: Vec<&str> = tr
            .dialogues
            .iter()
            .chain(&va.dialogues)
            .chain(&te.dialogues)
            .map(|d| d.id.as_str())
            .collect();
        assert_eq!(ids.len(), 23);
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 23, "splits overlap or drop dialogues");

        let (tr2, _, _) = split_corpus(&corpus, 99).unwrap();
        assert_eq!(tr, tr2);
        let (tr3, _, _) = split_corpus(&corpus, 100).unwrap();
        assert_ne!(tr, tr3, "different seed should reshuffle 23 dialogues");
    }

    fn degenerate_chain() -> TransitionMatrix {
        // INIT -> OQ -> PA -> TERM with certainty.
        let mut probs = vec![0.0; STATES * STATES];
        let oq = label_index("OQ").unwrap();
        let pa = label_index("PA").unwrap();
        probs[ROW_INIT * STATES + oq] = 1.0;
        probs[oq * STATES + pa] = 1.0;
        probs[pa * STATES + COL_TERM] = 1.0;
        TransitionMatrix::from_probs(&probs).unwrap()
    }

    #[test]
    fn gen_synthetic_degenerate_chain() {
        let keywords = default_keywords();
        let chain = degenerate_chain();
        let corpus = gen_synthetic(&SyntheticSpec {
            dialogues: 5,
            min_len: 1,
            max_len: 10,
            chain: &chain,
            keywords: &keywords,
            noise_rate: 0.3,
            seed: 42,
        })
        .unwrap();
        assert_eq!(corpus.dialogues.len(), 5);
        for d in &corpus.dialogues {
            assert_eq!(d.utterances.len(), 2);
            assert_eq!(d.utterances[0].labels.codes(), vec!["OQ"]);
            assert_eq!(d.utterances[1].labels.codes(), vec!["PA"]);
            assert!(d.utterances[0].text.contains("how"));
            assert!(d.utterances[1].text.contains("try"));
        }
    }

    #[test]
    fn gen_synthetic_is_seed_deterministic() {
        let keywords = default_keywords();
        let chain = degenerate_chain();
        let spec = |seed| SyntheticSpec {
            dialogues: 8,
            min_len: 1,
            max_len: 10,
            chain: &chain,
            keywords: &keywords,
            noise_rate: 0.5,
            seed,
        };
        assert_eq!(gen_synthetic(&spec(1)).unwrap(), gen_synthetic(&spec(1)).unwrap());
        assert_ne!(gen_synthetic(&spec(1)).unwrap(), gen_synthetic(&spec(2)).unwrap());
    }

    #[test]
    fn gen_synthetic_respects_length_bounds() {
        // A chain that always wants to stop still has to reach min_len,
        // and one that never stops is cut at max_len.
        let keywords = default_keywords();
        let oq = label_index("OQ").unwrap();
        let mut probs = vec![0.0; STATES * STATES];
        probs[ROW_INIT * STATES + oq] = 1.0;
        probs[oq * STATES + oq] = 0.5;
        probs[oq * STATES + COL_TERM] = 0.5;
        let chain = TransitionMatrix::from_probs(&probs).unwrap();
        let corpus = gen_synthetic(&SyntheticSpec {
            dialogues: 40,
            min_len: 3,
            max_len: 5,
            chain: &chain,
            keywords: &keywords,
            noise_rate: 0.0,
            seed: 11,
        })
        .unwrap();
        for d in &corpus.dialogues {
            assert!((3..=5).contains(&d.utterances.len()), "len {}", d.utterances.len());
        }
        // Both bounds are actually exercised at these odds.
        assert!(corpus.dialogues.iter().any(|d| d.utterances.len() == 3));
        assert!(corpus.dialogues.iter().any(|d| d.utterances.len() == 5));
    }

    #[test]
    fn gen_synthetic_rejects_stuck_chain() {
        // PA has terminal mass only, so a min length above 2 is impossible.
        let keywords = default_keywords();
        let chain = degenerate_chain();
        let err = gen_synthetic(&SyntheticSpec {
            dialogues: 1,
            min_len: 3,
            max_len: 5,
            chain: &chain,
            keywords: &keywords,
            noise_rate: 0.0,
            seed: 1,
        });
        assert!(err.is_err());
    }

    #[test]
    fn gen_synthetic_validates_settings() {
        let keywords = default_keywords();
        let chain = degenerate_chain();
        let base = |dialogues| SyntheticSpec {
            dialogues,
            min_len: 1,
            max_len: 4,
            chain: &chain,
            keywords: &keywords,
            noise_rate: 0.2,
            seed: 3,
        };
        assert!(gen_synthetic(&SyntheticSpec { min_len: 0, ..base(1) }).is_err());
        assert!(gen_synthetic(&SyntheticSpec { max_len: 0, ..base(1) }).is_err());
        assert!(gen_synthetic(&SyntheticSpec { noise_rate: 1.0, ..base(1) }).is_err());
        let short = vec![vec!["x".to_string()]; 3];
        assert!(gen_synthetic(&SyntheticSpec { keywords: &short, ..base(1) }).is_err());
        let mut holey = default_keywords();
        holey[4].clear();
        assert!(gen_synthetic(&SyntheticSpec { keywords: &holey, ..base(1) }).is_err());
    }
}
