//! Automatic rank selection: signal ranks by energy, joint rank from the
//! principal-angle spectrum of the signal spaces, individual ranks from what
//! the joint space leaves over.
//!
//!     cargo run --release --example joint_rank

use jive_embeddings::rank::{
    estimate_signal_rank, joint_basis_estimate, select_individual_ranks, select_joint_rank,
    IndividualRankPolicy, JointRankOptions, SignalRankPolicy,
};
use jive_embeddings::synthetic::PlantedModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sample = PlantedModel::new(vec![15, 25], 1000, 4, vec![3, 5])
        .noise(0.3)
        .sample(3);
    let blocks = &sample.blocks;

    let signal: Vec<usize> = blocks
        .iter()
        .map(|x| estimate_signal_rank(x, SignalRankPolicy::default()))
        .collect::<Result<_, _>>()?;
    println!("signal ranks (95% energy): {signal:?}");

    let decision = select_joint_rank(blocks, &signal, &JointRankOptions::new(42))?;
    println!(
        "squared singular values of the stacked bases: {:.3?}",
        decision.spectrum
    );
    println!(
        "threshold {:.3} (null {:.3}, perturbation bound {:?}) -> joint rank {}",
        decision.threshold, decision.null_threshold, decision.wedin_threshold, decision.joint_rank
    );

    let basis = joint_basis_estimate(blocks, &signal, decision.joint_rank)?;
    let individual = select_individual_ranks(blocks, &basis, &IndividualRankPolicy::Energy(0.95))?;
    println!("individual ranks: {individual:?} (planted 4 joint, [3, 5] individual)");
    Ok(())
}
