//! The whole path on files: write two embeddings, read them back, align,
//! preprocess, choose ranks, fit, report and compose.
//!
//!     cargo run --release --example full_pipeline

use jive_embeddings::compose::{compose, CompositionSpec};
use jive_embeddings::jive::{jive_fit, JiveConfig};
use jive_embeddings::rank::{
    estimate_signal_rank, joint_basis_estimate, select_individual_ranks, select_joint_rank,
    IndividualRankPolicy, JointRankOptions, SignalRankPolicy,
};
use jive_embeddings::report::{make_variance_report, write_report, ReportFormat};
use jive_embeddings::synthetic::PlantedModel;
use jive_embeddings::text::TextFormat;
use jive_embeddings::{align_vocabularies, parse_embedding, write_embedding};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let sample = PlantedModel::new(vec![12, 24], 800, 4, vec![3, 6])
        .noise(0.2)
        .sample(21);
    for (i, e) in sample.embeddings()?.iter().enumerate() {
        let format = if i == 0 {
            TextFormat::GloveText
        } else {
            TextFormat::Word2vecText
        };
        write_embedding(
            &e.clone().with_name(format!("emb{i}")),
            dir.path().join(format!("emb{i}.txt")),
            format,
        )?;
    }

    let inputs = (0..2)
        .map(|i| parse_embedding(dir.path().join(format!("emb{i}.txt")), TextFormat::Auto))
        .collect::<Result<Vec<_>, _>>()?;
    let (aligned, _) = align_vocabularies(&inputs)?;
    let blocks = aligned
        .iter()
        .map(|e| e.preprocess())
        .collect::<Result<Vec<_>, _>>()?;
    let data: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.data().clone()).collect();

    let signal = data
        .iter()
        .map(|x| estimate_signal_rank(x, SignalRankPolicy::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let decision = select_joint_rank(&data, &signal, &JointRankOptions::new(0))?;
    let basis = joint_basis_estimate(&data, &signal, decision.joint_rank)?;
    let individual = select_individual_ranks(&data, &basis, &IndividualRankPolicy::Energy(0.95))?;
    println!(
        "signal {signal:?}, joint {}, individual {individual:?}",
        decision.joint_rank
    );

    let res = jive_fit(&blocks, &JiveConfig::new(decision.joint_rank, individual))?;
    let report = make_variance_report(&res, &blocks).with_seed(0);
    print!("{report}");
    let tsv = dir.path().join("report.tsv");
    write_report(&report, &tsv, ReportFormat::Tsv)?;
    print!("{}", std::fs::read_to_string(&tsv)?);

    let vocab = blocks[0].vocab();
    let e = compose(&res, &CompositionSpec::parse("joint+ind1", 2)?, vocab)?;
    println!("joint+ind1: {} words x {} dims", e.len(), e.dim());
    Ok(())
}
