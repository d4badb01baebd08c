//! Parse two small embeddings from text, align their vocabularies and
//! preprocess them.
//!
//!     cargo run --example load_and_align

use jive_embeddings::align_vocabularies;
use jive_embeddings::text::{read_text, TextFormat};

const GLOVE: &str = "\
cat 0.1 0.4 -0.2
dog 0.3 0.1 0.0
fish -0.5 0.2 0.9
cat 9 9 9
";

const WORD2VEC: &str = "\
4 2
dog 1.0 0.5
cat 0.2 -0.1
bird 0.7 0.7
fish -0.3 0.4
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (glove, stats) = read_text(GLOVE.as_bytes(), TextFormat::Auto, "glove")?;
    println!(
        "glove: {} words x {} dims ({} duplicate skipped)",
        glove.len(),
        glove.dim(),
        stats.duplicates
    );
    let (w2v, _) = read_text(WORD2VEC.as_bytes(), TextFormat::Auto, "w2v")?;
    println!("w2v:   {} words x {} dims", w2v.len(), w2v.dim());

    let (aligned, report) = align_vocabularies(&[glove, w2v])?;
    println!(
        "shared vocabulary: {:?}, dropped per source {:?}",
        report.shared_vocab, report.dropped_per_source
    );

    for e in &aligned {
        let p = e.preprocess()?;
        let row_means: Vec<f64> = p.data().row_iter().map(|r| r.mean()).collect();
        println!(
            "{}: Frobenius norm {:.3}, largest row mean {:.1e}",
            p.name(),
            p.data().norm(),
            row_means.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        );
    }
    Ok(())
}
