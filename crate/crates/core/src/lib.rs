pub mod embedding;
pub mod error;
pub mod linalg;
pub mod text;

pub use embedding::{align_vocabularies, AlignmentReport, EmbeddingMatrix};
pub use error::{JiveError, Result};
pub use text::{parse_embedding, write_embedding, TextFormat};
pub mod compose;
pub mod jive;
pub mod rank;
pub mod report;
pub mod synthetic;

pub mod cli;
pub mod eval;
#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
mod oracle;
