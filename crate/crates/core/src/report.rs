//! Variance-explained reports.
//!
//! Structured output (JSON) keeps full precision. The TSV table and the
//! [`Display`](std::fmt::Display) form round percentages to one decimal.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{JiveError, Result};
use crate::jive::JiveResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVariance {
    pub block: String,
    pub joint_pct: f64,
    pub indiv_pct: f64,
    pub resid_pct: f64,
    pub indiv_rank: usize,
}

impl BlockVariance {
    pub fn total_pct(&self) -> f64 {
        self.joint_pct + self.indiv_pct + self.resid_pct
    }
}

impl fmt::Display for BlockVariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: joint {:.1}, individual {:.1}, residual {:.1}",
            self.block, self.joint_pct, self.indiv_pct, self.resid_pct
        )
    }
}

/// Settings and outcome of the run that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub version: String,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub enforce_orthogonality: bool,
    pub seed: Option<u64>,
    /// Joint-rank threshold `τ`, when the rank was selected automatically.
    pub threshold: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub joint_rank: usize,
    pub blocks: Vec<BlockVariance>,
    pub run: RunEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = JiveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            other => Err(JiveError::arg(format!(
                "unknown report format {other:?} (expected tsv or json)"
            ))),
        }
    }
}

pub const TSV_HEADER: &str = "block\tjoint_pct\tindiv_pct\tresid_pct\tjoint_rank\tindiv_rank";

/// Percent of each block's energy in its joint, individual and residual
/// parts. `blocks` are the matrices the result was fitted on.
pub fn make_variance_report(result: &JiveResult, blocks: &[EmbeddingMatrix]) -> VarianceReport {
    let data: Vec<_> = blocks.iter().map(|b| b.data().clone()).collect();
    let shares = result.variance_explained(&data);
    let ranks = result.individual_ranks();
    let cfg = &result.config;
    VarianceReport {
        joint_rank: result.joint_rank(),
        blocks: blocks
            .iter()
            .zip(shares)
            .zip(ranks)
            .map(|((b, share), indiv_rank)| BlockVariance {
                block: b.name().to_string(),
                joint_pct: 100.0 * share.joint,
                indiv_pct: 100.0 * share.individual,
                resid_pct: 100.0 * share.residual,
                indiv_rank,
            })
            .collect(),
        run: RunEcho {
            version: env!("CARGO_PKG_VERSION").to_string(),
            joint_rank: cfg.joint_rank,
            individual_ranks: cfg.individual_ranks.clone(),
            epsilon: cfg.epsilon,
            max_iter: cfg.max_iter,
            enforce_orthogonality: cfg.enforce_orthogonality,
            seed: None,
            threshold: None,
            iterations: result.iterations,
            converged: result.converged,
            final_residual: result.final_residual(),
        },
    }
}

impl VarianceReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = Some(seed);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.run.threshold = Some(threshold);
        self
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for b in &self.blocks {
            out.push_str(&format!(
                "{}\t{:.1}\t{:.1}\t{:.1}\t{}\t{}\n",
                b.block, b.joint_pct, b.indiv_pct, b.resid_pct, self.joint_rank, b.indiv_rank
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

impl fmt::Display for VarianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(f, "{b}")?;
        }
        Ok(())
    }
}

pub fn write_report(
    report: &VarianceReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Tsv => report.to_tsv(),
        ReportFormat::Json => report.to_json()?,
    };
    fs::write(path, text).map_err(|e| JiveError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jive::{jive_fit, JiveConfig};
    use crate::synthetic::PlantedModel;

    fn report(noise: f64) -> VarianceReport {
        let s = PlantedModel::new(vec![20, 30], 200, 3, vec![2, 2])
            .noise(noise)
            .sample(4);
        let blocks = s.embeddings().unwrap();
        let result = jive_fit(&blocks, &JiveConfig::new(3, vec![2, 2])).unwrap();
        make_variance_report(&result, &blocks).with_seed(7)
    }

    #[test]
    fn pure_joint_is_all_joint() {
        let s = PlantedModel::new(vec![5, 6], 40, 2, vec![0, 0]).sample(1);
        let blocks = s.embeddings().unwrap();
        let result = jive_fit(&blocks, &JiveConfig::new(2, vec![0, 0])).unwrap();
        let r = make_variance_report(&result, &blocks);
        for b in &r.blocks {
            assert_eq!(
                format!("{:.1} {:.1} {:.1}", b.joint_pct, b.indiv_pct, b.resid_pct),
                "100.0 0.0 0.0"
            );
        }
    }

    #[test]
    fn planted_noise_lands_in_residual() {
        let r = report(0.01);
        for b in &r.blocks {
            assert!(b.resid_pct > 0.0 && b.resid_pct < 5.0, "{b}");
            assert!((b.total_pct() - 100.0).abs() <= 0.1);
            assert!([b.joint_pct, b.indiv_pct, b.resid_pct]
                .iter()
                .all(|v| (0.0..=100.0).contains(v)));
        }
    }

    #[test]
    fn display_row_shape() {
        let b = BlockVariance {
            block: "word2vec-Twitter".into(),
            joint_pct: 78.0,
            indiv_pct: 22.0,
            resid_pct: 0.0,
            indiv_rank: 1,
        };
        assert!(b
            .to_string()
            .starts_with("word2vec-Twitter: joint 78.0, individual 22.0"));
    }

    #[test]
    fn tsv_schema_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(0.05);
        let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
        write_report(&r, &a, ReportFormat::Tsv).unwrap();
        write_report(&r, &b, ReportFormat::Tsv).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TSV_HEADER));
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn json_parses_back_losslessly() {
        let r = report(0.05).with_threshold(1.75);
        let text = r.to_json().unwrap();
        let generic: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(generic["run"]["seed"], 7);
        let back: VarianceReport = serde_json::from_value(generic).unwrap();
        for (x, y) in back.blocks.iter().zip(&r.blocks) {
            assert!((x.joint_pct - y.joint_pct).abs() <= 1e-15 * y.joint_pct.abs().max(1.0));
        }
        assert_eq!(back, r);
    }
}
