//! Fit the decomposition to planted two-block data and compare the estimate
//! with the truth.
//!
//!     cargo run --release --example planted_recovery

use jive_embeddings::jive::{fit_matrices, JiveConfig};
use jive_embeddings::linalg::max_principal_sine;
use jive_embeddings::synthetic::PlantedModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for noise in [0.0, 0.01, 0.3] {
        let sample = PlantedModel::new(vec![20, 30], 200, 3, vec![2, 2])
            .noise(noise)
            .sample(7);
        let res = fit_matrices(&sample.blocks, &JiveConfig::new(3, vec![2, 2]))?;
        let sine = max_principal_sine(res.joint_basis(), &sample.joint_basis);
        println!(
            "noise sd {noise}: {} iterations, R = {:.3e}, largest principal sine {sine:.2e}",
            res.iterations,
            res.final_residual()
        );
        for (i, (got, want)) in res
            .variance_explained(&sample.blocks)
            .iter()
            .zip(sample.planted_split())
            .enumerate()
        {
            println!(
                "  block {i}: joint {:.2}% (planted {:.2}%), individual {:.2}% (planted {:.2}%)",
                100.0 * got.joint,
                100.0 * want.0,
                100.0 * got.individual,
                100.0 * want.1
            );
        }
    }
    Ok(())
}
