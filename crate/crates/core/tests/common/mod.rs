#![allow(dead_code)]

pub mod oracle;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    jive_embeddings::synthetic::gaussian_matrix(&mut rng(seed), rows, cols)
}
