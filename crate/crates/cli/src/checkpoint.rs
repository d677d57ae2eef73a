//! Checkpoint directories: a text manifest (model settings, parameter
//! inventory, vocabulary) plus one flat binary file of little-endian
//! 64-bit floats holding every parameter in manifest order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cdarec_core::corpus::Vocabulary;
use cdarec_core::model::{CellKind, ModelConfig, Variant};
use cdarec_core::params::ParameterStore;
use cdarec_core::tensor::Tensor;

use crate::errors::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const PARAMS_NAME: &str = "params.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParameterStore,
}

fn join_usizes(vals: &[usize]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn manifest_text(config: &ModelConfig, vocab: &Vocabulary, store: &ParameterStore) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format {FORMAT_VERSION}");
    let _ = writeln!(out, "variant {}", config.variant.name());
    let _ = writeln!(out, "cell {}", config.cell.name());
    let _ = writeln!(out, "filter_widths {}", join_usizes(&config.filter_widths));
    let _ = writeln!(out, "filters_per_width {}", config.filters_per_width);
    let _ = writeln!(out, "cnn_dropout {}", config.cnn_dropout);
    let _ = writeln!(out, "rnn_hidden {}", config.rnn_hidden);
    let _ = writeln!(out, "rnn_layers {}", config.rnn_layers);
    let _ = writeln!(out, "rnn_dropout {}", config.rnn_dropout);
    let _ = writeln!(out, "pool_p {}", config.pool_p);
    let _ = writeln!(out, "label_count {}", config.label_count);
    let _ = writeln!(out, "embed_dim {}", config.embed_dim);
    let _ = writeln!(out, "context_window {}", config.context_window);
    let _ = writeln!(out, "seed {}", config.seed);
    for p in store.iter() {
        let shape = p
            .tensor()
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        let _ = writeln!(out, "param {} {} frozen={}", p.name(), shape, p.frozen_rows());
    }
    for tok in vocab.tokens() {
        let _ = writeln!(out, "vocab {tok}");
    }
    out
}

/// Writes the checkpoint directory atomically: everything lands in a
/// temporary sibling directory which is renamed into place, replacing any
/// previous checkpoint at `dir`.
pub fn save(
    dir: &Path,
    config: &ModelConfig,
    vocab: &Vocabulary,
    store: &ParameterStore,
) -> CliResult<()> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".checkpoint-")
        .tempdir_in(parent)?;

    fs::write(
        staging.path().join(MANIFEST_NAME),
        manifest_text(config, vocab, store),
    )?;
    let mut bytes = Vec::with_capacity(store.scalar_count() * 8);
    for p in store.iter() {
        for &v in p.tensor().data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(staging.path().join(PARAMS_NAME), bytes)?;

    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    let staged = staging.keep();
    fs::rename(&staged, dir).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        CliError::data(format!("renaming checkpoint into {}: {e}", dir.display()))
    })?;
    Ok(())
}

struct ManifestData {
    config: ModelConfig,
    params: Vec<(String, Vec<usize>, usize)>,
    vocab_tokens: Vec<String>,
}

fn parse_manifest(path: &Path, text: &str) -> CliResult<ManifestData> {
    let bad = |line: usize, msg: &str| {
        CliError::data(format!("{} line {}: {msg}", path.display(), line + 1))
    };
    let mut fields: std::collections::BTreeMap<&str, &str> = std::collections::BTreeMap::new();
    let mut params = Vec::new();
    let mut vocab_tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once(' ')
            .ok_or_else(|| bad(i, "expected 'key value'"))?;
        match key {
            "param" => {
                let mut it = rest.split(' ');
                let name = it.next().ok_or_else(|| bad(i, "param needs a name"))?;
                let shape_s = it.next().ok_or_else(|| bad(i, "param needs a shape"))?;
                let frozen_s = it.next().ok_or_else(|| bad(i, "param needs frozen="))?;
                let shape: Vec<usize> = shape_s
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(i, "bad shape"))?;
                let frozen = frozen_s
                    .strip_prefix("frozen=")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| bad(i, "bad frozen= field"))?;
                params.push((name.to_string(), shape, frozen));
            }
            "vocab" => vocab_tokens.push(rest.to_string()),
            _ => {
                if fields.insert(key, rest).is_some() {
                    return Err(bad(i, "duplicate key"));
                }
            }
        }
    }

    let get = |key: &str| {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| CliError::data(format!("{}: missing key {key:?}", path.display())))
    };
    let version: u32 = get("format")?
        .parse()
        .map_err(|_| CliError::data("bad format version"))?;
    if version != FORMAT_VERSION {
        return Err(CliError::data(format!(
            "unsupported checkpoint format {version} (expected {FORMAT_VERSION})"
        )));
    }
    let parse_usize = |key: &str| -> CliResult<usize> {
        get(key)?
            .parse()
            .map_err(|_| CliError::data(format!("bad value for {key:?}")))
    };
    let parse_f64 = |key: &str| -> CliResult<f64> {
        get(key)?
            .parse()
            .map_err(|_| CliError::data(format!("bad value for {key:?}")))
    };
    let variant = Variant::parse(get("variant")?)
        .map_err(|_| CliError::data("unknown variant in manifest"))?;
    let cell = CellKind::parse(get("cell")?)
        .map_err(|_| CliError::data("unknown cell in manifest"))?;
    let filter_widths: Vec<usize> = get("filter_widths")?
        .split(',')
        .map(|d| d.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::data("bad filter_widths"))?;
    let config = ModelConfig {
        variant,
        cell,
        filter_widths,
        filters_per_width: parse_usize("filters_per_width")?,
        cnn_dropout: parse_f64("cnn_dropout")?,
        rnn_hidden: parse_usize("rnn_hidden")?,
        rnn_layers: parse_usize("rnn_layers")?,
        rnn_dropout: parse_f64("rnn_dropout")?,
        pool_p: parse_usize("pool_p")?,
        label_count: parse_usize("label_count")?,
        embed_dim: parse_usize("embed_dim")?,
        context_window: parse_usize("context_window")?,
        seed: get("seed")?
            .parse()
            .map_err(|_| CliError::data("bad seed"))?,
    };
    Ok(ManifestData {
        config,
        params,
        vocab_tokens,
    })
}

/// Loads a checkpoint directory back into memory. The parameter file
/// length must match the manifest inventory exactly.
pub fn load(dir: &Path) -> CliResult<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", manifest_path.display())))?;
    let manifest = parse_manifest(&manifest_path, &text)?;
    manifest.config.validate()?;
    let vocab = Vocabulary::from_tokens(manifest.vocab_tokens)?;

    let params_path = dir.join(PARAMS_NAME);
    let bytes = fs::read(&params_path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", params_path.display())))?;
    let want: usize = manifest
        .params
        .iter()
        .map(|(_, shape, _)| shape.iter().product::<usize>())
        .sum();
    if bytes.len() != want * 8 {
        return Err(CliError::data(format!(
            "{}: {} bytes, manifest expects {}",
            params_path.display(),
            bytes.len(),
            want * 8
        )));
    }

    let mut store = ParameterStore::new();
    let mut offset = 0usize;
    for (name, shape, frozen) in manifest.params {
        let len: usize = shape.iter().product();
        let data: Vec<f64> = bytes[offset * 8..(offset + len) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += len;
        let tensor = Tensor::new(shape, data)
            .map_err(|e| CliError::data(format!("parameter {name:?}: {e}")))?;
        store.push_with_frozen_rows(name, tensor, frozen)?;
    }
    Ok(Checkpoint {
        config: manifest.config,
        vocab,
        store,
    })
}
