//! Corpus files: the native JSON schema and the MSDialog adapter.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cdarec_core::corpus::{label_index, Corpus, Dialogue, LabelSet, Utterance, TAXONOMY};

use crate::errors::{CliError, CliResult};

/// Writes `bytes` to `path` through a temporary file in the same
/// directory, so readers never observe a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| CliError::data(format!("persisting {}: {}", path.display(), e.error)))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Native,
    Msdialog,
}

#[derive(Serialize, Deserialize)]
struct NativeCorpus {
    taxonomy: Vec<String>,
    dialogues: Vec<NativeDialogue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct NativeDialogue {
    id: String,
    utterances: Vec<NativeUtterance>,
}

#[derive(Serialize, Deserialize)]
struct NativeUtterance {
    speaker: String,
    text: String,
    labels: Vec<String>,
}

/// Reads a native corpus file. The taxonomy list must contain exactly the
/// twelve known codes (any order); labels may be empty, which marks an
/// utterance as unlabeled prediction input.
pub fn load_native(path: &Path) -> CliResult<Corpus> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    let raw: NativeCorpus = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))?;

    let want: BTreeSet<&str> = TAXONOMY.iter().copied().collect();
    let got: BTreeSet<&str> = raw.taxonomy.iter().map(String::as_str).collect();
    if raw.taxonomy.len() != TAXONOMY.len() || want != got {
        return Err(CliError::data(format!(
            "{}: taxonomy must list exactly the 12 codes {:?}",
            path.display(),
            TAXONOMY
        )));
    }

    let mut dialogues = Vec::with_capacity(raw.dialogues.len());
    for d in raw.dialogues {
        let mut utterances = Vec::with_capacity(d.utterances.len());
        for u in d.utterances {
            let labels = LabelSet::from_codes(&u.labels).map_err(|e| {
                CliError::data(format!("{}: dialogue {:?}: {e}", path.display(), d.id))
            })?;
            utterances.push(Utterance::new(u.speaker, u.text, labels));
        }
        dialogues.push(Dialogue {
            id: d.id,
            utterances,
        });
    }
    Ok(Corpus::new(dialogues, raw.provenance)?)
}

/// Writes a corpus in the native schema (atomically). Labels serialize in
/// taxonomy order; token indices are not persisted.
pub fn save_native(path: &Path, corpus: &Corpus) -> CliResult<()> {
    let raw = NativeCorpus {
        taxonomy: TAXONOMY.iter().map(|s| s.to_string()).collect(),
        dialogues: corpus
            .dialogues
            .iter()
            .map(|d| NativeDialogue {
                id: d.id.clone(),
                utterances: d
                    .utterances
                    .iter()
                    .map(|u| NativeUtterance {
                        speaker: u.speaker.clone(),
                        text: u.text.clone(),
                        labels: u.labels.codes().iter().map(|s| s.to_string()).collect(),
                    })
                    .collect(),
            })
            .collect(),
        provenance: corpus.provenance.clone(),
    };
    let mut text = serde_json::to_string_pretty(&raw)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

#[derive(Deserialize)]
struct MsUtterance {
    #[serde(default)]
    utterance: String,
    #[serde(default)]
    tags: String,
    #[serde(default)]
    actor_type: String,
}

#[derive(Deserialize)]
struct MsConversation {
    utterances: Vec<MsUtterance>,
}

/// Numeric conversation ids sort by value, everything else
/// lexicographically after them.
fn id_sort_key(id: &str) -> (u8, u64, String) {
    match id.parse::<u64>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, id.to_string()),
    }
}

/// Adapts the MSDialog shape: a top-level object keyed by conversation
/// id, each with utterances carrying text, a space-separated tag string,
/// and an actor type. Returns the corpus plus the distinct tags that were
/// dropped for being outside the taxonomy.
pub fn load_msdialog(path: &Path) -> CliResult<(Corpus, Vec<String>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    let raw: std::collections::BTreeMap<String, MsConversation> = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))?;

    let mut ids: Vec<&String> = raw.keys().collect();
    ids.sort_by_key(|id| id_sort_key(id));

    let mut unknown: BTreeSet<String> = BTreeSet::new();
    let mut dialogues = Vec::with_capacity(ids.len());
    for id in ids {
        let conv = &raw[id];
        let mut utterances = Vec::with_capacity(conv.utterances.len());
        for u in &conv.utterances {
            let mut labels = LabelSet::empty();
            for tag in u.tags.split_whitespace() {
                match label_index(tag) {
                    Some(i) => labels.insert(i)?,
                    None => {
                        unknown.insert(tag.to_string());
                    }
                }
            }
            utterances.push(Utterance::new(
                u.actor_type.clone(),
                u.utterance.clone(),
                labels,
            ));
        }
        dialogues.push(Dialogue {
            id: id.clone(),
            utterances,
        });
    }
    let corpus = Corpus::new(dialogues, Some("msdialog".to_string()))?;
    Ok((corpus, unknown.into_iter().collect()))
}

/// Loads a corpus in either format, logging dropped MSDialog tags to
/// standard error.
pub fn load_corpus(path: &Path, format: Format) -> CliResult<Corpus> {
    match format {
        Format::Native => load_native(path),
        Format::Msdialog => {
            let (corpus, unknown) = load_msdialog(path)?;
            for tag in &unknown {
                eprintln!("warning: dropped tag {tag:?} outside the taxonomy");
            }
            Ok(corpus)
        }
    }
}
