//! Composed embeddings: vertical stacks of joint and individual score
//! matrices over the shared vocabulary.
//!
//! Scores carry the singular-value scale (`diag(s) Vt`), so a composed
//! embedding keeps the energy of each component. The joint scores appear at
//! most once, however many blocks there are.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{JiveError, Result};
use crate::jive::JiveResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Joint,
    Individual(usize),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Joint => f.write_str("joint"),
            Component::Individual(i) => write!(f, "ind{i}"),
        }
    }
}

impl FromStr for Component {
    type Err = JiveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Component::Joint),
            _ => s
                .strip_prefix("ind")
                .and_then(|i| i.parse().ok())
                .map(Component::Individual)
                .ok_or_else(|| JiveError::arg(format!("unknown component {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionSpec {
    parts: Vec<Component>,
    name: String,
}

impl CompositionSpec {
    pub fn new(parts: Vec<Component>) -> Result<Self> {
        if parts.is_empty() {
            return Err(JiveError::arg("composition has no parts"));
        }
        for (i, p) in parts.iter().enumerate() {
            if parts[..i].contains(p) {
                return Err(JiveError::arg(format!("component {p} listed twice")));
            }
        }
        let name = parts
            .iter()
            .map(Component::to_string)
            .collect::<Vec<_>>()
            .join("+");
        Ok(CompositionSpec { parts, name })
    }

    /// Parses `joint`, `ind0`, `joint+ind1`, … for a model with `n_blocks`
    /// blocks. Unknown names list the valid ones in the error.
    pub fn parse(name: &str, n_blocks: usize) -> Result<Self> {
        let invalid = || {
            let valid: Vec<String> = Self::all(n_blocks).iter().map(|s| s.name.clone()).collect();
            JiveError::arg(format!(
                "unknown composition {name:?}; valid names: {}",
                valid.join(", ")
            ))
        };
        let parts = name
            .split('+')
            .map(|t| t.trim().parse::<Component>())
            .collect::<Result<Vec<_>>>()
            .map_err(|_| invalid())?;
        if parts
            .iter()
            .any(|p| matches!(p, Component::Individual(i) if *i >= n_blocks))
        {
            return Err(invalid());
        }
        Self::new(parts).map_err(|_| invalid())
    }

    /// Every non-empty subset of `{joint, ind0, …}`, smallest first. For two
    /// blocks these are the seven variants joint, ind0, ind1, joint+ind0,
    /// joint+ind1, ind0+ind1 and joint+ind0+ind1.
    pub fn all(n_blocks: usize) -> Vec<Self> {
        let components: Vec<Component> = std::iter::once(Component::Joint)
            .chain((0..n_blocks).map(Component::Individual))
            .collect();
        let mut subsets: Vec<Vec<Component>> = (1u64..1 << components.len())
            .map(|mask| {
                components
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, c)| *c)
                    .collect()
            })
            .collect();
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        subsets
            .into_iter()
            .map(|parts| Self::new(parts).expect("distinct parts"))
            .collect()
    }

    pub fn parts(&self) -> &[Component] {
        &self.parts
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for CompositionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// The score matrices a composition is built from: joint scores (`r×n`) and
/// per-block individual scores (`r_i×n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFactors {
    pub vocab: Vec<String>,
    pub joint: DMatrix<f64>,
    pub individual: Vec<DMatrix<f64>>,
}

impl ScoreFactors {
    pub fn from_result(result: &JiveResult, vocab: &[String]) -> Result<Self> {
        let joint = result.joint_scores();
        if joint.ncols() != vocab.len() {
            return Err(JiveError::arg(format!(
                "vocabulary has {} words, the fit has {} columns",
                vocab.len(),
                joint.ncols()
            )));
        }
        Ok(ScoreFactors {
            vocab: vocab.to_vec(),
            joint,
            individual: (0..result.n_blocks())
                .map(|i| result.individual_scores(i))
                .collect(),
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.individual.len()
    }

    fn component(&self, c: Component) -> Result<&DMatrix<f64>> {
        match c {
            Component::Joint => Ok(&self.joint),
            Component::Individual(i) => self.individual.get(i).ok_or_else(|| {
                JiveError::arg(format!(
                    "{c} refers to a missing block ({} blocks)",
                    self.n_blocks()
                ))
            }),
        }
    }

    pub fn compose(&self, spec: &CompositionSpec) -> Result<EmbeddingMatrix> {
        let parts = spec
            .parts()
            .iter()
            .map(|&c| self.component(c))
            .collect::<Result<Vec<_>>>()?;
        let rows: usize = parts.iter().map(|m| m.nrows()).sum();
        if rows == 0 {
            return Err(JiveError::Invalid(format!(
                "empty composition: {spec} has rank 0"
            )));
        }
        let mut data = DMatrix::zeros(rows, self.vocab.len());
        let mut offset = 0;
        for m in parts {
            data.rows_mut(offset, m.nrows()).copy_from(m);
            offset += m.nrows();
        }
        EmbeddingMatrix::new(spec.name(), self.vocab.clone(), data)
    }
}

/// Stacks the selected score matrices of a fitted result, in the order given
/// by `spec`, over `vocab`.
pub fn compose(
    result: &JiveResult,
    spec: &CompositionSpec,
    vocab: &[String],
) -> Result<EmbeddingMatrix> {
    ScoreFactors::from_result(result, vocab)?.compose(spec)
}
