//! Sentence classification with bag-of-embeddings features: a clean
//! embedding against a noise-corrupted copy.
//!
//!     cargo run --release --example eval_harness

use jive_embeddings::eval::{train_and_evaluate, TrainConfig};
use jive_embeddings::synthetic::{planted_label_suite, separable_suite, with_added_noise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TrainConfig::default();

    let sep = separable_suite(0);
    let r = train_and_evaluate(&sep.train, &sep.test, &sep.embedding, &cfg)?;
    println!(
        "separable corpus: accuracy {:.3} on {} sentences",
        r.accuracy, r.n_test
    );

    let suite = planted_label_suite(1, 400, 400, 0.05);
    let noisy = with_added_noise(&suite.embedding, 1);
    for e in [&suite.embedding, &noisy] {
        let r = train_and_evaluate(&suite.train, &suite.test, e, &cfg)?;
        println!("{}", r.to_json_line()?);
    }
    Ok(())
}
