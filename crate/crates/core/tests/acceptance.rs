//! Acceptance criteria 1–9. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured values, then asserts. The tests share a lock so
//! that timings and the peak-memory reading are not disturbed by each other.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::gaussian;
use jive_embeddings::eval::{train_and_evaluate, TrainConfig};
use jive_embeddings::jive::{fit_matrices, jive_fit, JiveConfig};
use jive_embeddings::linalg::max_principal_sine;
use jive_embeddings::rank::{select_joint_rank, JointRankOptions};
use jive_embeddings::synthetic::{
    nested_pair, planted_label_suite, separable_suite, synthetic_vocab, with_added_noise,
    PlantedModel,
};
use jive_embeddings::text::{read_text, write_text, TextFormat};
use jive_embeddings::{write_embedding, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} {detail}");
    eprintln!("criterion {n}: {verdict} {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn energy(blocks: &[nalgebra::DMatrix<f64>]) -> f64 {
    blocks.iter().map(|x| x.norm_squared()).sum()
}

#[test]
fn criterion_1_noiseless_planted_recovery() {
    let _guard = lock();
    let started = Instant::now();
    let sample = PlantedModel::new(vec![20, 30], 200, 3, vec![2, 2]).sample(1);
    let res = fit_matrices(&sample.blocks, &JiveConfig::new(3, vec![2, 2])).unwrap();
    let elapsed = started.elapsed();
    let rel = res.final_residual() / energy(&sample.blocks);
    let mut worst: f64 = 0.0;
    for (got, (j, i, e)) in res
        .variance_explained(&sample.blocks)
        .iter()
        .zip(sample.planted_split())
    {
        worst = worst
            .max((100.0 * got.joint - 100.0 * j).abs())
            .max((100.0 * got.individual - 100.0 * i).abs())
            .max((100.0 * got.residual - 100.0 * e).abs());
    }
    report(
        1,
        rel <= 1e-16 && worst <= 1e-6 && elapsed < Duration::from_secs(5),
        format!("R/|X|^2 = {rel:.3e}, worst split error {worst:.3e} pct, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_2_noisy_planted_recovery() {
    let _guard = lock();
    let started = Instant::now();
    let model = PlantedModel::new(vec![20, 30], 200, 3, vec![2, 2]).noise_fraction(0.05);
    let mut sines = Vec::new();
    let mut noise_share = 0.0;
    for seed in 0..10 {
        let sample = model.sample(seed);
        let res = fit_matrices(&sample.blocks, &JiveConfig::new(3, vec![2, 2])).unwrap();
        sines.push(max_principal_sine(res.joint_basis(), &sample.joint_basis));
        noise_share += energy(&sample.noise) / energy(&sample.blocks) / 10.0;
    }
    let elapsed = started.elapsed();
    let mean = sines.iter().sum::<f64>() / sines.len() as f64;
    report(
        2,
        mean <= 0.05 && elapsed < Duration::from_secs(30),
        format!(
            "mean max sine {mean:.4} over 10 seeds (noise share {:.2}%, per seed {:.3?}), {elapsed:.2?}",
            100.0 * noise_share,
            sines
        ),
    );
}

/// Criterion 3 instances: random shapes and legal ranks on Gaussian blocks.
fn random_instances() -> Vec<(Vec<nalgebra::DMatrix<f64>>, JiveConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..100u64)
        .map(|k| {
            let dims = vec![rng.random_range(3..=40), rng.random_range(3..=40)];
            let n = rng.random_range(50..=500);
            let r = rng.random_range(0..=dims[0].min(dims[1]));
            let mut ranks: Vec<usize> = dims.iter().map(|&p| rng.random_range(0..=p - r)).collect();
            if r == 0 && ranks.iter().all(|&x| x == 0) {
                ranks[0] = 1;
            }
            let blocks = dims
                .iter()
                .enumerate()
                .map(|(i, &p)| gaussian(1000 * k + i as u64, p, n))
                .collect();
            (blocks, JiveConfig::new(r, ranks))
        })
        .collect()
}

#[test]
fn criterion_3_monotone_convergence() {
    let _guard = lock();
    let (mut worst_rise, mut worst_defect): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    let mut failures = 0;
    for (blocks, cfg) in random_instances() {
        let res = fit_matrices(&blocks, &cfg).unwrap();
        let rise = res
            .residual_history
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let defect = res.orthogonality_defect(&blocks);
        worst_rise = worst_rise.max(rise);
        worst_defect = worst_defect.max(defect);
        if rise > 1e-12 || defect > 1e-8 {
            failures += 1;
        }
    }
    report(
        3,
        failures == 0,
        format!("{failures}/100 violations, largest step increase {worst_rise:.3e}, largest defect {worst_defect:.3e}"),
    );
}

#[test]
fn criterion_4_rank_selection_nulls_and_signals() {
    let _guard = lock();
    let started = Instant::now();
    let mut identical = 0;
    let mut independent = 0;
    for seed in 0..100u64 {
        let x = gaussian(seed, 20, 500);
        let opts = JointRankOptions::new(seed);
        if select_joint_rank(&[x.clone(), x], &[5, 5], &opts)
            .unwrap()
            .joint_rank
            == 5
        {
            identical += 1;
        }
        let blocks = [
            gaussian(seed ^ 0xa5a5, 20, 2000),
            gaussian(seed ^ 0x5a5a, 20, 2000),
        ];
        if select_joint_rank(&blocks, &[5, 5], &opts)
            .unwrap()
            .joint_rank
            == 0
        {
            independent += 1;
        }
    }
    let elapsed = started.elapsed();
    report(
        4,
        identical == 100 && independent >= 95 && elapsed < Duration::from_secs(60),
        format!("identical blocks r=5 in {identical}/100, independent blocks r=0 in {independent}/100, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_5_pythagorean_split() {
    let _guard = lock();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (blocks, cfg) in random_instances() {
        let res = fit_matrices(&blocks, &cfg).unwrap();
        for share in res.variance_explained(&blocks) {
            let total = 100.0 * share.total();
            lo = lo.min(total);
            hi = hi.max(total);
        }
    }
    report(
        5,
        lo >= 99.9 && hi <= 100.1,
        format!("joint+individual+residual within [{lo:.6}, {hi:.6}] pct"),
    );
}

fn decompose(inputs: &[&Path], out: &Path) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jive"));
    cmd.arg("decompose");
    for i in inputs {
        cmd.arg("--input").arg(i);
    }
    cmd.args(["--seed", "7", "--compositions", "all", "--out-dir"])
        .arg(out);
    cmd.output().unwrap()
}

#[test]
fn criterion_6_round_trip_and_reproducible_cli() {
    let _guard = lock();
    let e = EmbeddingMatrix::new("r", synthetic_vocab(1000), gaussian(6, 50, 1000) * 3.7).unwrap();
    let mut buf = Vec::new();
    write_text(&e, &mut buf, TextFormat::GloveText).unwrap();
    let (back, _) = read_text(buf.as_slice(), TextFormat::GloveText, "r").unwrap();
    let err = (back.data() - e.data()).amax();

    let dir = tempfile::TempDir::new().unwrap();
    let sample = PlantedModel::new(vec![8, 12], 300, 2, vec![2, 3])
        .noise(0.1)
        .sample(6);
    let mut paths = Vec::new();
    for (i, e) in sample.embeddings().unwrap().iter().enumerate() {
        let path = dir.path().join(format!("in{i}.txt"));
        write_embedding(e, &path, TextFormat::GloveText).unwrap();
        paths.push(path);
    }
    let inputs: Vec<&Path> = paths.iter().map(|p| p.as_path()).collect();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ok = decompose(&inputs, &a).status.success() && decompose(&inputs, &b).status.success();
    let manifest = |d: &Path| fs::read(d.join("manifest.json")).unwrap_or_default();
    let mut identical = ok && !manifest(&a).is_empty() && manifest(&a) == manifest(&b);
    let mut files = 0;
    if identical {
        let m: serde_json::Value = serde_json::from_slice(&manifest(&a)).unwrap();
        for name in m["outputs"].as_object().unwrap().keys() {
            files += 1;
            identical &= fs::read(a.join(name)).unwrap() == fs::read(b.join(name)).unwrap();
        }
    }
    report(
        6,
        err <= 1e-9 && identical,
        format!("round-trip max error {err:.3e}; rerun byte-identical: {identical} ({files} files + manifest)"),
    );
}

#[test]
fn criterion_7_nested_dimensions() {
    let _guard = lock();
    let pair = nested_pair(50, 100, 50, 2000, 0.01, 7);
    let blocks = vec![pair.low.clone(), pair.high.clone()];
    let res = fit_matrices(&blocks, &JiveConfig::new(50, vec![0, 50])).unwrap();
    let low = 100.0 * res.variance_explained(&blocks)[0].joint;
    report(
        7,
        low >= 99.9,
        format!("joint share of the 50-dim block {low:.4} pct"),
    );
}

#[test]
fn criterion_8_eval_harness() {
    let _guard = lock();
    let started = Instant::now();
    let suite = separable_suite(8);
    let cfg = TrainConfig::default();
    let separable = train_and_evaluate(&suite.train, &suite.test, &suite.embedding, &cfg)
        .unwrap()
        .accuracy;
    let mut ordered = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let s = planted_label_suite(seed, 400, 400, 0.05);
        let noisy = with_added_noise(&s.embedding, seed);
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let clean = train_and_evaluate(&s.train, &s.test, &s.embedding, &cfg)
            .unwrap()
            .accuracy;
        let dirty = train_and_evaluate(&s.train, &s.test, &noisy, &cfg)
            .unwrap()
            .accuracy;
        if clean > dirty {
            ordered += 1;
        }
        pairs.push((clean, dirty));
    }
    let elapsed = started.elapsed();
    report(
        8,
        separable == 1.0 && ordered >= 9 && elapsed < Duration::from_secs(60),
        format!("separable accuracy {separable}; clean > noisy in {ordered}/10 {pairs:.3?}, {elapsed:.2?}"),
    );
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[test]
fn criterion_9_full_vocabulary_scale() {
    let _guard = lock();
    let sample = PlantedModel::new(vec![50, 200], 20_000, 50, vec![0, 100])
        .noise(0.5)
        .sample(9);
    let blocks = sample.embeddings().unwrap();
    drop(sample);
    let started = Instant::now();
    let res = jive_fit(&blocks, &JiveConfig::new(50, vec![0, 100])).unwrap();
    let elapsed = started.elapsed();
    // VmHWM is the peak of the whole test process, so this is an upper bound
    let peak = peak_rss_kib();
    let peak_gib = peak.map(|k| k as f64 / (1024.0 * 1024.0));
    report(
        9,
        elapsed < Duration::from_secs(300) && peak_gib.is_some_and(|g| g < 4.0),
        format!(
            "p=(50,200), n=20000, r=50: {} iterations (converged: {}) in {elapsed:.2?}, peak RSS {} GiB",
            res.iterations,
            res.converged,
            peak_gib.map_or("unknown".to_string(), |g| format!("{g:.2}"))
        ),
    );
}
