//! Truncated SVD of a wide matrix through the Gram trick, and the
//! Eckart-Young tail identity.
//!
//!     cargo run --release --example truncated_svd

use jive_embeddings::linalg::{
    low_rank_approx, row_orthonormality_error, singular_values, truncated_svd,
};
use jive_embeddings::synthetic::gaussian_matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // rank-5 signal plus a little noise, 30 x 5000
    let m = gaussian_matrix(&mut rng, 30, 5) * gaussian_matrix(&mut rng, 5, 5000)
        + gaussian_matrix(&mut rng, 30, 5000) * 0.1;

    let s = singular_values(&m);
    println!("leading singular values: {:.2?}", &s.as_slice()[..8]);

    let k = 5;
    let svd = truncated_svd(&m, k)?;
    println!(
        "rank {k}: right vectors orthonormal to {:.1e}",
        row_orthonormality_error(&svd.vt)
    );

    let err = (&m - low_rank_approx(&m, k)?).norm_squared();
    let tail: f64 = s.iter().skip(k).map(|v| v * v).sum();
    println!("|M - M_k|^2 = {err:.4}, sum of trailing s^2 = {tail:.4}");
    Ok(())
}
