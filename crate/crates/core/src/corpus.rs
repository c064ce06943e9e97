//! Plain-text ingestion for the toy language model.
//!
//! Files are tokenized in order and concatenated; each file boundary becomes
//! a change point.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tokens::TokenSequence;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {reason}")]
    FileUnreadable { path: PathBuf, reason: String },
    #[error("{0} contains no tokens")]
    EmptyFile(PathBuf),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("file index {index} out of range for {n_files} files")]
    IndexOutOfRange { index: usize, n_files: usize },
    #[error("corpus cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    Char,
    Word,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextCorpusSpec {
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub mode: TokenMode,
    #[serde(default = "default_vocab_cap")]
    pub vocab_cap: usize,
    #[serde(default)]
    pub lowercase: bool,
}

fn default_vocab_cap() -> usize {
    256
}

pub const MIN_VOCAB_CAP: usize = 32;
pub const UNK: &str = "<unk>";

impl TextCorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.files.is_empty() {
            return Err(CorpusError::InvalidSpec("at least one file is required".into()));
        }
        if self.vocab_cap < MIN_VOCAB_CAP {
            return Err(CorpusError::InvalidSpec(format!("vocab_cap {} < {MIN_VOCAB_CAP}", self.vocab_cap)));
        }
        Ok(())
    }

    /// Resolves relative file paths against `base`.
    pub fn rebased(&self, base: &Path) -> Self {
        Self { files: self.files.iter().map(|f| if f.is_absolute() { f.clone() } else { base.join(f) }).collect(), ..self.clone() }
    }
}

/// Splits text into words (letters, digits, inner apostrophes) and single
/// punctuation marks; whitespace is dropped.
pub fn word_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let inner_apostrophe = c == '\''
            && start.is_some()
            && chars.get(k + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

fn split_tokens(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Char => text.chars().map(String::from).collect(),
        TokenMode::Word => word_tokens(text).into_iter().map(String::from).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub id: usize,
    pub count: u64,
}

/// Dense token ids ordered by frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub mode: TokenMode,
    pub lowercase: bool,
    /// Id of the unknown token; always `Some(0)` in word mode.
    pub unk_id: Option<usize>,
    pub entries: Vec<VocabEntry>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary of at most `cap` ids from raw token counts.
    ///
    /// Word mode always reserves id 0 for the unknown token. Char mode adds it
    /// only when the character set does not fit.
    pub fn from_counts(counts: &HashMap<String, u64>, cap: usize, mode: TokenMode, lowercase: bool) -> Self {
        let mut sorted: Vec<(&String, u64)> = counts.iter().map(|(t, &c)| (t, c)).collect();
        sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let need_unk = mode == TokenMode::Word || sorted.len() > cap;
        let keep = if need_unk { cap - 1 } else { cap }.min(sorted.len());
        let mut entries = Vec::with_capacity(keep + 1);
        if need_unk {
            let dropped: u64 = sorted[keep..].iter().map(|(_, c)| c).sum();
            entries.push(VocabEntry { token: UNK.to_string(), id: 0, count: dropped });
        }
        for (t, c) in &sorted[..keep] {
            entries.push(VocabEntry { token: (*t).clone(), id: entries.len(), count: *c });
        }
        let mut v = Self { mode, lowercase, unk_id: need_unk.then_some(0), entries, index: HashMap::new() };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.entries.iter().map(|e| (e.token.clone(), e.id)).collect();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(|e| e.token.as_str())
    }

    /// Id for `token`, falling back to the unknown id.
    pub fn encode_token(&self, token: &str) -> Option<usize> {
        self.id(token).or(self.unk_id)
    }

    /// Joins tokens back into text; words are separated by single spaces.
    pub fn decode(&self, ids: &[usize]) -> String {
        let sep = if self.mode == TokenMode::Word { " " } else { "" };
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect::<Vec<_>>().join(sep)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        let mut v: Self = serde_json::from_str(s)?;
        if v.entries.iter().enumerate().any(|(i, e)| e.id != i) {
            return Err(CorpusError::InvalidSpec("vocabulary ids must be dense and ordered".into()));
        }
        v.reindex();
        Ok(v)
    }

    /// SHA-256 of the compact JSON form; ties a corpus cache to its vocabulary.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(serde_json::to_vec(self).expect("vocabulary serializes")).into()
    }
}

/// A tokenized text corpus with file boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct TextCorpus {
    pub sequence: TokenSequence,
    pub vocab: Vocabulary,
    /// Token index where each file after the first begins.
    pub change_points: Vec<usize>,
}

impl TextCorpus {
    /// Share of tokens mapped to the unknown id.
    pub fn unk_rate(&self) -> f64 {
        match self.vocab.unk_id {
            Some(u) if !self.sequence.is_empty() => {
                self.sequence.tokens().iter().filter(|&&t| t == u).count() as f64 / self.sequence.len() as f64
            }
            _ => 0.0,
        }
    }

    /// Token range of file `index`.
    pub fn file_span(&self, index: usize) -> Result<(usize, usize), CorpusError> {
        file_span(self.sequence.len(), &self.change_points, index)
    }
}

fn file_span(len: usize, change_points: &[usize], index: usize) -> Result<(usize, usize), CorpusError> {
    let n_files = change_points.len() + 1;
    if index >= n_files {
        return Err(CorpusError::IndexOutOfRange { index, n_files });
    }
    let start = if index == 0 { 0 } else { change_points[index - 1] };
    let end = change_points.get(index).copied().unwrap_or(len);
    Ok((start, end))
}

fn read_text(path: &Path, lowercase: bool) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::FileUnreadable { path: path.into(), reason: e.to_string() })?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CorpusError::FileUnreadable { path: path.into(), reason: format!("not UTF-8: {e}") })?;
    Ok(if lowercase { text.to_lowercase() } else { text })
}

/// Reads, tokenizes and concatenates the spec's files in order.
pub fn build_corpus(spec: &TextCorpusSpec) -> Result<TextCorpus, CorpusError> {
    spec.validate()?;
    let mut per_file = Vec::with_capacity(spec.files.len());
    for path in &spec.files {
        let toks = split_tokens(&read_text(path, spec.lowercase)?, spec.mode);
        if toks.is_empty() {
            return Err(CorpusError::EmptyFile(path.clone()));
        }
        per_file.push(toks);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in per_file.iter().flatten() {
        *counts.entry(t.clone()).or_default() += 1;
    }
    let vocab = Vocabulary::from_counts(&counts, spec.vocab_cap, spec.mode, spec.lowercase);
    let mut ids = Vec::with_capacity(per_file.iter().map(Vec::len).sum());
    let mut change_points = Vec::with_capacity(per_file.len() - 1);
    for (k, toks) in per_file.iter().enumerate() {
        if k > 0 {
            change_points.push(ids.len());
        }
        ids.extend(toks.iter().map(|t| vocab.encode_token(t).expect("unknown id exists when tokens are dropped")));
    }
    let sequence = TokenSequence::new(ids, vocab.len()).expect("ids come from the vocabulary");
    Ok(TextCorpus { sequence, vocab, change_points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: TokenSequence,
    /// Change points of the training sequence after removing held-out files.
    pub train_change_points: Vec<usize>,
    pub validation: TokenSequence,
    pub warning: Option<String>,
}

/// Moves the files listed in `holdout` into a validation sequence.
pub fn train_val_split(seq: &TokenSequence, change_points: &[usize], holdout: &[usize]) -> Result<Split, CorpusError> {
    let n_files = change_points.len() + 1;
    if let Some(&index) = holdout.iter().find(|&&i| i >= n_files) {
        return Err(CorpusError::IndexOutOfRange { index, n_files });
    }
    let toks = seq.tokens();
    let mut train = Vec::new();
    let mut train_cps = Vec::new();
    let mut val = Vec::new();
    for k in 0..n_files {
        let (s, e) = file_span(seq.len(), change_points, k)?;
        if holdout.contains(&k) {
            val.extend_from_slice(&toks[s..e]);
        } else {
            if !train.is_empty() {
                train_cps.push(train.len());
            }
            train.extend_from_slice(&toks[s..e]);
        }
    }
    let warning = holdout.is_empty().then(|| "no held-out files: validation sequence is empty".to_string());
    let v = seq.vocab_size();
    Ok(Split {
        train: TokenSequence::new(train, v).expect("subset of a valid sequence"),
        train_change_points: train_cps,
        validation: TokenSequence::new(val, v).expect("subset of a valid sequence"),
        warning,
    })
}

pub const CACHE_MAGIC: &[u8; 4] = b"DLCP";
pub const CACHE_VERSION: u32 = 1;

/// Writes the corpus ids in the DLCP layout (all integers little-endian):
/// magic `DLCP`, u32 version, 32-byte vocabulary hash, u32 vocabulary size,
/// u64 change-point count, u64 change points, u64 token count, u32 token ids.
pub fn write_cache<W: Write>(corpus: &TextCorpus, mut w: W) -> Result<(), CorpusError> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&corpus.vocab.hash())?;
    w.write_all(&(corpus.vocab.len() as u32).to_le_bytes())?;
    w.write_all(&(corpus.change_points.len() as u64).to_le_bytes())?;
    for &c in &corpus.change_points {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    w.write_all(&(corpus.sequence.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(corpus.sequence.len() * 4);
    for &t in corpus.sequence.tokens() {
        buf.extend_from_slice(&(t as u32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a DLCP cache, rejecting it if it was built with a different vocabulary.
pub fn read_cache<R: Read>(mut r: R, vocab: Vocabulary) -> Result<TextCorpus, CorpusError> {
    let bad = |m: &str| CorpusError::Cache(m.to_string());
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], CorpusError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(CorpusError::Cache(format!("unsupported version {version}")));
    }
    if take(32)? != vocab.hash() {
        return Err(bad("vocabulary hash mismatch"));
    }
    let vsize = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if vsize != vocab.len() {
        return Err(bad("vocabulary size mismatch"));
    }
    let n_cp = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut change_points = Vec::with_capacity(n_cp.min(1 << 20));
    for _ in 0..n_cp {
        change_points.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let raw = take(n.checked_mul(4).ok_or_else(|| bad("token count overflow"))?)?;
    let ids: Vec<usize> = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
    let sequence = TokenSequence::new(ids, vsize).map_err(|e| CorpusError::Cache(e.to_string()))?;
    Ok(TextCorpus { sequence, vocab, change_points })
}
