//! Readers and writers for the plain-text embedding formats.
//!
//! * `glove-text`: one word per line, followed by its vector components,
//!   separated by spaces.
//! * `word2vec-text`: the same records, preceded by a `n d` header line.
//!
//! Values are written as the shortest decimal that parses back to the same
//! `f64`, so a write/parse cycle is lossless.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::embedding::EmbeddingMatrix;
use crate::error::{JiveError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextFormat {
    GloveText,
    Word2vecText,
    /// Sniff a word2vec header (two integer tokens on the first line).
    Auto,
}

impl fmt::Display for TextFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextFormat::GloveText => "glove-text",
            TextFormat::Word2vecText => "word2vec-text",
            TextFormat::Auto => "auto",
        })
    }
}

impl FromStr for TextFormat {
    type Err = JiveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glove" | "glove-text" => Ok(TextFormat::GloveText),
            "word2vec" | "word2vec-text" => Ok(TextFormat::Word2vecText),
            "auto" => Ok(TextFormat::Auto),
            other => Err(JiveError::arg(format!(
                "unknown embedding format {other:?} (expected glove-text, word2vec-text or auto)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    /// Records read, including duplicates.
    pub records: usize,
    /// Records skipped because their word was already seen.
    pub duplicates: usize,
}

fn looks_like_header(line: &str) -> bool {
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    tokens.len() == 2 && tokens.iter().all(|t| t.parse::<u64>().is_ok())
}

fn format_err(line: usize, message: impl Into<String>) -> JiveError {
    JiveError::Format {
        line,
        message: message.into(),
    }
}

/// Reads an embedding from a buffered text stream.
pub fn read_text<R: BufRead>(
    reader: R,
    format: TextFormat,
    name: &str,
) -> Result<(EmbeddingMatrix, ReadStats)> {
    let mut lines = reader.lines().enumerate().peekable();

    let mut declared: Option<(usize, usize)> = None;
    let first = match lines.peek() {
        Some((_, Ok(line))) => Some(line.clone()),
        Some((_, Err(_))) => None,
        None => return Err(format_err(1, "empty embedding file")),
    };
    let has_header = match format {
        TextFormat::Word2vecText => true,
        TextFormat::GloveText => false,
        TextFormat::Auto => first.as_deref().is_some_and(looks_like_header),
    };
    if has_header {
        let (_, header) = lines.next().expect("peeked");
        let header = header.map_err(|e| format_err(1, e.to_string()))?;
        let mut tokens = header.split_ascii_whitespace();
        let mut next_int = || -> Result<usize> {
            tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| {
                format_err(1, format!("expected \"<n> <d>\" header, got {header:?}"))
            })
        };
        declared = Some((next_int()?, next_int()?));
    }

    let mut dim = declared.map(|(_, d)| d);
    let mut vocab = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut stats = ReadStats::default();

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| format_err(lineno, e.to_string()))?;
        let mut tokens = line.split_ascii_whitespace();
        let Some(word) = tokens.next() else {
            continue;
        };
        let start = values.len();
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| format_err(lineno, format!("cannot parse {tok:?} as a number")))?;
            if !v.is_finite() {
                return Err(format_err(lineno, format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        let got = values.len() - start;
        match dim {
            None if got == 0 => {
                return Err(format_err(lineno, "record has no vector components"));
            }
            None => dim = Some(got),
            Some(d) if d != got => {
                return Err(format_err(
                    lineno,
                    format!("expected {d} values, got {got}"),
                ));
            }
            Some(_) => {}
        }
        stats.records += 1;
        if seen.insert(word.to_string()) {
            vocab.push(word.to_string());
        } else {
            values.truncate(start);
            stats.duplicates += 1;
        }
    }

    let Some(dim) = dim.filter(|_| !vocab.is_empty()) else {
        return Err(format_err(1, "empty embedding file"));
    };
    if stats.duplicates > 0 {
        log::warn!(
            "{name}: {} duplicate words skipped (first occurrence kept)",
            stats.duplicates
        );
    }
    if let Some((n, _)) = declared {
        if n != stats.records {
            log::warn!(
                "{name}: header declares {n} words, file has {}",
                stats.records
            );
        }
    }
    let data = DMatrix::from_vec(dim, vocab.len(), values);
    Ok((EmbeddingMatrix::new(name, vocab, data)?, stats))
}

/// Parses an embedding file. The matrix is named after the file stem.
pub fn parse_embedding(path: impl AsRef<Path>, format: TextFormat) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| JiveError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (matrix, _) = read_text(BufReader::new(file), format, &name).map_err(|e| match e {
        JiveError::Format { line, message } => JiveError::Format {
            line,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    })?;
    Ok(matrix)
}

/// Writes an embedding as text. Fails if a word cannot be represented in a
/// whitespace-separated format.
pub fn write_text<W: Write>(
    embedding: &EmbeddingMatrix,
    mut writer: W,
    format: TextFormat,
) -> Result<(), WriteError> {
    if let Some(word) = embedding
        .vocab()
        .iter()
        .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
    {
        return Err(WriteError::Word(word.clone()));
    }
    if format == TextFormat::Word2vecText {
        writeln!(writer, "{} {}", embedding.len(), embedding.dim())?;
    }
    let mut buf = ryu::Buffer::new();
    for (word, column) in embedding.vocab().iter().zip(embedding.data().column_iter()) {
        writer.write_all(word.as_bytes())?;
        for &v in column.iter() {
            writer.write_all(b" ")?;
            writer.write_all(buf.format_finite(v).as_bytes())?;
        }
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error("word contains whitespace: {0:?}")]
    Word(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_embedding(
    embedding: &EmbeddingMatrix,
    path: impl AsRef<Path>,
    format: TextFormat,
) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        TextFormat::Auto => TextFormat::GloveText,
        f => f,
    };
    let file = File::create(path).map_err(|e| JiveError::io(path, e))?;
    write_text(embedding, BufWriter::new(file), format).map_err(|e| match e {
        WriteError::Word(_) => JiveError::Invalid(e.to_string()),
        WriteError::Io(source) => JiveError::io(path, source),
    })
}
