//! Build the composed embeddings of a fitted two-block model and write one
//! of them in GloVe text format.
//!
//!     cargo run --release --example compose_embeddings

use jive_embeddings::compose::{compose, CompositionSpec};
use jive_embeddings::jive::{fit_matrices, JiveConfig};
use jive_embeddings::synthetic::{synthetic_vocab, PlantedModel};
use jive_embeddings::text::{write_text, TextFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 300;
    let sample = PlantedModel::new(vec![10, 16], n, 3, vec![2, 4])
        .noise(0.05)
        .sample(5);
    let res = fit_matrices(&sample.blocks, &JiveConfig::new(3, vec![2, 4]))?;
    let vocab = synthetic_vocab(n);

    for spec in CompositionSpec::all(2) {
        let e = compose(&res, &spec, &vocab)?;
        println!(
            "{:<16} {} dims, energy {:.1}",
            spec.name(),
            e.dim(),
            e.data().norm_squared()
        );
    }

    let joint = compose(&res, &CompositionSpec::parse("joint", 2)?, &vocab)?;
    let mut out = Vec::new();
    write_text(&joint, &mut out, TextFormat::GloveText)?;
    let text = String::from_utf8(out)?;
    println!("first lines of the joint embedding:");
    for line in text.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
