//! A low-dimensional embedding whose row space sits inside a larger one:
//! with the joint rank equal to the small dimension, the joint part carries
//! essentially all of the small block.
//!
//!     cargo run --release --example nested_dimensions

use jive_embeddings::jive::{fit_matrices, JiveConfig};
use jive_embeddings::synthetic::nested_pair;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pair = nested_pair(20, 60, 20, 1500, 0.05, 11);
    let blocks = vec![pair.low, pair.high];
    let res = fit_matrices(&blocks, &JiveConfig::new(20, vec![0, 20]))?;
    let shares = res.variance_explained(&blocks);
    println!(
        "low block:  joint {:.3}%, residual {:.3}%",
        100.0 * shares[0].joint,
        100.0 * shares[0].residual
    );
    println!(
        "high block: joint {:.3}%, individual {:.3}%, residual {:.3}%",
        100.0 * shares[1].joint,
        100.0 * shares[1].individual,
        100.0 * shares[1].residual
    );
    Ok(())
}
