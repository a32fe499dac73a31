//! word2vec table loading and vocabulary embedding.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::Vocabulary;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("entry `{word}` has {found} components, header declares {expected}")]
    Dimension {
        word: String,
        expected: usize,
        found: usize,
    },
    #[error("no vocabulary lemma has an embedding")]
    AllOov,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

impl FromStr for EmbeddingFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(EmbeddingFormat::Text),
            "binary" => Ok(EmbeddingFormat::Binary),
            other => Err(format!("unknown embedding format `{other}` (text|binary)")),
        }
    }
}

/// An immutable word → vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    /// Number of repeated words skipped while loading.
    pub duplicates: usize,
}

impl EmbeddingTable {
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        }
    }

    /// Adds `word`; returns `false` (and counts a duplicate) if it already exists.
    pub fn push(&mut self, word: String, vector: &[f64]) -> bool {
        assert_eq!(
            vector.len(),
            self.dim,
            "vector length must equal the table dimension"
        );
        if self.index.contains_key(&word) {
            self.duplicates += 1;
            return false;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            w.write_all(word.as_bytes())?;
            w.write_all(b" ")?;
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Format {
        offset,
        message: message.into(),
    }
}

fn parse_header(line: &str, offset: u64) -> Result<(usize, usize), EmbeddingError> {
    let mut parts = line.split_whitespace();
    let mut next = |what: &str| -> Result<usize, EmbeddingError> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| format_err(offset, format!("header is missing {what}")))
    };
    let count = next("the vocabulary size")?;
    let dim = next("the dimension")?;
    if dim == 0 {
        return Err(format_err(offset, "dimension must be positive"));
    }
    Ok((count, dim))
}

fn checked_finite(word: &str, vector: &[f64], offset: u64) -> Result<(), EmbeddingError> {
    if vector.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(format_err(
            offset,
            format!("non-finite component for `{word}`"),
        ))
    }
}

/// Reads the word2vec text format: a `<count> <dim>` header, then one
/// `word v1 .. vd` line per entry.
pub fn read_text<R: Read>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut reader = BufReader::new(reader);
    let mut line = String::new();
    let mut offset = 0u64;
    if reader.read_line(&mut line)? == 0 {
        return Err(format_err(0, "missing header"));
    }
    let (count, dim) = parse_header(&line, 0)?;
    offset += line.len() as u64;
    let mut table = EmbeddingTable::with_dim(dim);
    let mut entries = 0;
    let mut vector = Vec::with_capacity(dim);
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        let line_offset = offset;
        offset += read as u64;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        if entries == count {
            return Err(format_err(
                line_offset,
                format!("more than the {count} declared entries"),
            ));
        }
        vector.clear();
        for p in parts {
            let v: f64 = p
                .parse()
                .map_err(|_| format_err(line_offset, format!("bad number `{p}` for `{word}`")))?;
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(EmbeddingError::Dimension {
                word: word.to_string(),
                expected: dim,
                found: vector.len(),
            });
        }
        checked_finite(word, &vector, line_offset)?;
        table.push(word.to_string(), &vector);
        entries += 1;
    }
    if entries != count {
        return Err(format_err(
            offset,
            format!("header declares {count} entries, found {entries}"),
        ));
    }
    Ok(table)
}

/// Reads the word2vec binary format: the text header, then per entry the
/// word terminated by a space followed by `dim` little-endian `f32` values.
pub fn read_binary<R: Read>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut reader = BufReader::new(reader);
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    let header_text =
        std::str::from_utf8(&header).map_err(|_| format_err(0, "header is not UTF-8"))?;
    let (count, dim) = parse_header(header_text, 0)?;
    let mut offset = header.len() as u64;
    let mut table = EmbeddingTable::with_dim(dim);
    let mut raw = vec![0u8; dim * 4];
    let mut vector = vec![0f64; dim];
    let mut word = Vec::new();
    for entry in 0..count {
        word.clear();
        let read = reader.read_until(b' ', &mut word)? as u64;
        if word.last() != Some(&b' ') {
            return Err(format_err(
                offset,
                format!("header declares {count} entries, found {entry}"),
            ));
        }
        let entry_offset = offset;
        offset += read;
        word.pop();
        let text = std::str::from_utf8(&word)
            .map_err(|_| format_err(entry_offset, "word is not UTF-8"))?
            .trim_start_matches(['\n', '\r'])
            .to_string();
        if text.is_empty() {
            return Err(format_err(entry_offset, "empty word"));
        }
        reader
            .read_exact(&mut raw)
            .map_err(|_| EmbeddingError::Dimension {
                word: text.clone(),
                expected: dim,
                found: 0,
            })?;
        offset += raw.len() as u64;
        for (v, bytes) in vector.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f64::from(f32::from_le_bytes(bytes.try_into().expect("4 bytes")));
        }
        checked_finite(&text, &vector, entry_offset)?;
        table.push(text, &vector);
    }
    // Anything but trailing whitespace means the header undercounts.
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !rest.iter().all(u8::is_ascii_whitespace) {
        return Err(format_err(
            offset,
            format!("data beyond the {count} declared entries"),
        ));
    }
    Ok(table)
}

/// Loads a word2vec table. Duplicate words keep their first vector.
pub fn load_embeddings(
    path: &Path,
    format: EmbeddingFormat,
) -> Result<EmbeddingTable, EmbeddingError> {
    let file = File::open(path)?;
    let table = match format {
        EmbeddingFormat::Text => read_text(file)?,
        EmbeddingFormat::Binary => read_binary(file)?,
    };
    if table.duplicates > 0 {
        warn!(
            "{}: skipped {} duplicate words",
            path.display(),
            table.duplicates
        );
    }
    Ok(table)
}

/// Vocabulary lemmas with vectors, row-aligned with `lemmas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedVocab {
    pub dim: usize,
    pub lemmas: Vec<String>,
    /// Row-major `lemmas.len() × dim` matrix.
    pub matrix: Vec<f64>,
    /// Lemmas without a usable vector, sorted.
    pub oov: Vec<String>,
    pub normalized: bool,
}

impl EmbeddedVocab {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks_exact(self.dim)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn hit_ratio(&self) -> f64 {
        let total = self.lemmas.len() + self.oov.len();
        if total == 0 {
            0.0
        } else {
            self.lemmas.len() as f64 / total as f64
        }
    }
}

/// Looks up every vocabulary lemma in `table`.
///
/// Rows follow vocabulary order. With `normalize`, rows are scaled to unit
/// Euclidean length and zero vectors are treated as out-of-vocabulary.
pub fn embed_vocabulary(
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    normalize: bool,
) -> Result<EmbeddedVocab, EmbeddingError> {
    if vocab.lemmas.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    let mut lemmas = Vec::new();
    let mut matrix = Vec::new();
    let mut oov = Vec::new();
    for lemma in &vocab.lemmas {
        let Some(v) = table.get(lemma) else {
            oov.push(lemma.clone());
            continue;
        };
        if normalize {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                oov.push(lemma.clone());
                continue;
            }
            matrix.extend(v.iter().map(|x| x / norm));
        } else {
            matrix.extend_from_slice(v);
        }
        lemmas.push(lemma.clone());
    }
    if lemmas.is_empty() {
        return Err(EmbeddingError::AllOov);
    }
    oov.sort();
    Ok(EmbeddedVocab {
        dim: table.dim(),
        lemmas,
        matrix,
        oov,
        normalized: normalize,
    })
}
