//! The dense word-embedding matrix shared by every stage of the pipeline.
//!
//! Matrices are stored feature-major: `p` rows (embedding dimensions) by `n`
//! columns (words), so that every block of a joint decomposition shares the
//! same column axis.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;

use crate::error::{JiveError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    name: String,
    vocab: Vec<String>,
    data: DMatrix<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix after checking that the vocabulary is unique, matches
    /// the column count, and that all entries are finite.
    pub fn new(name: impl Into<String>, vocab: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(JiveError::Invalid(format!(
                "embedding must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if vocab.len() != data.ncols() {
            return Err(JiveError::Invalid(format!(
                "vocabulary has {} words but matrix has {} columns",
                vocab.len(),
                data.ncols()
            )));
        }
        let mut seen = HashSet::with_capacity(vocab.len());
        for word in &vocab {
            if !seen.insert(word.as_str()) {
                return Err(JiveError::Invalid(format!("duplicate word {word:?}")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % data.nrows(), pos / data.nrows());
            return Err(JiveError::Invalid(format!(
                "non-finite value at dimension {row} of word {:?}",
                vocab[col]
            )));
        }
        Ok(EmbeddingMatrix {
            name: name.into(),
            vocab,
            data,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_parts(self) -> (String, Vec<String>, DMatrix<f64>) {
        (self.name, self.vocab, self.data)
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Vocabulary size.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn word_index(&self) -> HashMap<&str, usize> {
        self.vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect()
    }

    /// Restricts to the given columns, in the given order.
    pub(crate) fn select_columns(&self, columns: &[usize]) -> EmbeddingMatrix {
        let vocab = columns.iter().map(|&c| self.vocab[c].clone()).collect();
        let data = self.data.select_columns(columns);
        EmbeddingMatrix {
            name: self.name.clone(),
            vocab,
            data,
        }
    }

    /// Centers every feature (row) across the vocabulary and rescales the
    /// whole block to unit Frobenius norm.
    pub fn preprocess(&self) -> Result<EmbeddingMatrix> {
        let n = self.len();
        if n < 2 {
            return Err(JiveError::Invalid(format!(
                "preprocessing {:?} needs at least 2 words, got {n}",
                self.name
            )));
        }
        let scale_before = self.data.norm();
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            let mean = row.sum() / n as f64;
            row.add_scalar_mut(-mean);
        }
        let norm = data.norm();
        // A constant row centers to round-off, not exactly zero.
        if norm == 0.0 || norm <= 1e-12 * scale_before {
            return Err(JiveError::Degenerate(format!(
                "zero variance in {:?}",
                self.name
            )));
        }
        data /= norm;
        Ok(EmbeddingMatrix {
            name: self.name.clone(),
            vocab: self.vocab.clone(),
            data,
        })
    }
}

/// Outcome of restricting several embeddings to their common vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct AlignmentReport {
    pub shared_vocab: Vec<String>,
    pub dropped_per_source: Vec<usize>,
    pub n_shared: usize,
}

/// Restricts every input to the intersection of all vocabularies, with
/// columns in lexicographic (byte) order of the words.
pub fn align_vocabularies(
    inputs: &[EmbeddingMatrix],
) -> Result<(Vec<EmbeddingMatrix>, AlignmentReport)> {
    if inputs.len() < 2 {
        return Err(JiveError::arg(format!(
            "alignment needs at least 2 embeddings, got {}",
            inputs.len()
        )));
    }
    let indexes: Vec<HashMap<&str, usize>> = inputs.iter().map(|e| e.word_index()).collect();

    let mut shared: Vec<&str> = inputs[0]
        .vocab()
        .iter()
        .map(String::as_str)
        .filter(|w| indexes[1..].iter().all(|idx| idx.contains_key(w)))
        .collect();
    if shared.is_empty() {
        return Err(JiveError::Invalid("no shared vocabulary".into()));
    }
    shared.sort_unstable();

    let aligned: Vec<EmbeddingMatrix> = inputs
        .iter()
        .zip(&indexes)
        .map(|(input, idx)| {
            let cols: Vec<usize> = shared.iter().map(|w| idx[w]).collect();
            input.select_columns(&cols)
        })
        .collect();

    let report = AlignmentReport {
        shared_vocab: shared.iter().map(|w| w.to_string()).collect(),
        dropped_per_source: inputs.iter().map(|e| e.len() - shared.len()).collect(),
        n_shared: shared.len(),
    };
    Ok((aligned, report))
}
