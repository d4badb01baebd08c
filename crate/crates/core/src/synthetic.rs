//! Synthetic embedding blocks with known structure.
//!
//! Generated row spaces are orthogonal to the all-ones vector, so centering
//! the rows of a noiseless block leaves it unchanged. Orthonormal bases come
//! from nalgebra's Householder QR, not from the SVD code under test.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::EmbeddingMatrix;
use crate::error::Result;
use crate::eval::{LabeledCorpus, Split};

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `k` random orthonormal rows in `R^n`, orthogonal to the rows of `against`
/// (which must be orthonormal themselves).
pub fn random_orthonormal_rows<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    n: usize,
    against: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(0, n);
    }
    let mut g = gaussian_matrix(rng, n, k);
    if let Some(a) = against.filter(|a| a.nrows() > 0) {
        for _ in 0..2 {
            let coords = a * &g;
            g -= a.transpose() * coords;
        }
    }
    g.qr().q().transpose()
}

fn ones_row(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(1, n, 1.0 / (n as f64).sqrt())
}

/// `X_i = B_i J* + D_i H_i* + σ E_i` with Gaussian loadings, orthonormal
/// score rows scaled by `√n` (so entries are of order one), `H_i*` orthogonal
/// to `J*`, and i.i.d. standard normal noise `E_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub dims: Vec<usize>,
    pub n: usize,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub noise_sd: f64,
}

#[derive(Debug, Clone)]
pub struct PlantedSample {
    pub blocks: Vec<DMatrix<f64>>,
    /// Orthonormal basis of the planted joint row space (`r×n`).
    pub joint_basis: DMatrix<f64>,
    /// Orthonormal bases of the planted individual row spaces.
    pub individual_bases: Vec<DMatrix<f64>>,
    pub joint_signal: Vec<DMatrix<f64>>,
    pub individual_signal: Vec<DMatrix<f64>>,
    pub noise: Vec<DMatrix<f64>>,
}

impl PlantedModel {
    pub fn new(
        dims: Vec<usize>,
        n: usize,
        joint_rank: usize,
        individual_ranks: Vec<usize>,
    ) -> Self {
        assert_eq!(dims.len(), individual_ranks.len());
        PlantedModel {
            dims,
            n,
            joint_rank,
            individual_ranks,
            noise_sd: 0.0,
        }
    }

    pub fn noise(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    /// Sets the noise level so that noise carries `fraction` of the expected
    /// total energy of the blocks.
    pub fn noise_fraction(mut self, fraction: f64) -> Self {
        assert!((0.0..1.0).contains(&fraction));
        let rows: usize = self.dims.iter().sum();
        let signal_per_entry: f64 = self
            .dims
            .iter()
            .zip(&self.individual_ranks)
            .map(|(&p, &ri)| (p * (self.joint_rank + ri)) as f64)
            .sum::<f64>()
            / rows as f64;
        self.noise_sd = (fraction / (1.0 - fraction) * signal_per_entry).sqrt();
        self
    }

    pub fn sample(&self, seed: u64) -> PlantedSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let scale = (n as f64).sqrt();
        let ones = ones_row(n);
        let joint_basis = random_orthonormal_rows(&mut rng, self.joint_rank, n, Some(&ones));
        let mut excluded = ones.clone();
        if self.joint_rank > 0 {
            excluded = stack_rows(&excluded, &joint_basis);
        }

        let mut out = PlantedSample {
            blocks: Vec::new(),
            joint_basis: joint_basis.clone(),
            individual_bases: Vec::new(),
            joint_signal: Vec::new(),
            individual_signal: Vec::new(),
            noise: Vec::new(),
        };
        for (&p, &ri) in self.dims.iter().zip(&self.individual_ranks) {
            let h = random_orthonormal_rows(&mut rng, ri, n, Some(&excluded));
            let joint = gaussian_matrix(&mut rng, p, self.joint_rank) * &joint_basis * scale;
            let indiv = gaussian_matrix(&mut rng, p, ri) * &h * scale;
            let noise = gaussian_matrix(&mut rng, p, n) * self.noise_sd;
            out.blocks.push(&joint + &indiv + &noise);
            out.joint_signal.push(joint);
            out.individual_signal.push(indiv);
            out.individual_bases.push(h);
            out.noise.push(noise);
        }
        out
    }
}

impl PlantedSample {
    /// Energy fractions `(joint, individual, noise)` of each block.
    pub fn planted_split(&self) -> Vec<(f64, f64, f64)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let total = x.norm_squared();
                (
                    self.joint_signal[i].norm_squared() / total,
                    self.individual_signal[i].norm_squared() / total,
                    self.noise[i].norm_squared() / total,
                )
            })
            .collect()
    }

    /// The blocks as embeddings over the vocabulary `w0, w1, …`.
    pub fn embeddings(&self) -> Result<Vec<EmbeddingMatrix>> {
        let vocab = synthetic_vocab(self.blocks[0].ncols());
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| EmbeddingMatrix::new(format!("block{i}"), vocab.clone(), b.clone()))
            .collect()
    }
}

pub(crate) fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// `w0 … w{n-1}`, zero-padded so that lexicographic order matches index order.
pub fn synthetic_vocab(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("w{i:0width$}")).collect()
}

/// A low-dimensional embedding and a higher-dimensional one trained "on the
/// same data": the high block spans the low block's row space plus `extra`
/// further directions.
#[derive(Debug, Clone)]
pub struct NestedPair {
    pub low: DMatrix<f64>,
    pub high: DMatrix<f64>,
    /// Orthonormal basis of the low block's row space.
    pub shared_basis: DMatrix<f64>,
}

pub fn nested_pair(
    p_low: usize,
    p_high: usize,
    extra: usize,
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> NestedPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (n as f64).sqrt();
    let basis = random_orthonormal_rows(&mut rng, p_low + extra, n, Some(&ones_row(n)));
    let shared = basis.rows(0, p_low).into_owned();
    let low = gaussian_matrix(&mut rng, p_low, p_low) * &shared * scale
        + gaussian_matrix(&mut rng, p_low, n) * noise_sd;
    let high = gaussian_matrix(&mut rng, p_high, p_low + extra) * &basis * scale
        + gaussian_matrix(&mut rng, p_high, n) * noise_sd;
    NestedPair {
        low,
        high,
        shared_basis: shared,
    }
}

/// An embedding with a labeled train/test corpus over its vocabulary.
#[derive(Debug, Clone)]
pub struct LabelSuite {
    pub embedding: EmbeddingMatrix,
    pub train: LabeledCorpus,
    pub test: LabeledCorpus,
}

fn sentence<R: Rng + ?Sized>(rng: &mut R, vocab: &[String], words: &[usize]) -> String {
    let mut out = String::new();
    for (k, &w) in words.iter().enumerate() {
        if k > 0 {
            out.push_str(if rng.random_bool(0.2) { ", " } else { " " });
        }
        if k == 0 {
            out.push_str(&vocab[w].to_uppercase());
        } else {
            out.push_str(&vocab[w]);
        }
    }
    out.push_str(" oov-token!");
    out
}

/// Two word clusters far apart in embedding space; every sentence draws its
/// words from the cluster of its class, so the classes are linearly
/// separable in bag-of-embeddings space.
pub fn separable_suite(seed: u64) -> LabelSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, n_words) = (8, 200);
    let vocab = synthetic_vocab(n_words);
    let centers = gaussian_matrix(&mut rng, p, 2) * 3.0;
    let mut data = gaussian_matrix(&mut rng, p, n_words) * 0.5;
    for (j, mut col) in data.column_iter_mut().enumerate() {
        col += centers.column(j * 2 / n_words);
    }
    let embedding = EmbeddingMatrix::new("separable", vocab.clone(), data).expect("valid");
    let mut split = |count: usize, which: Split| {
        let records = (0..count)
            .map(|k| {
                let class = k % 2;
                let len = rng.random_range(3..8);
                let words: Vec<usize> = (0..len)
                    .map(|_| class * n_words / 2 + rng.random_range(0..n_words / 2))
                    .collect();
                (class, sentence(&mut rng, &vocab, &words))
            })
            .collect();
        LabeledCorpus::new(records, which).expect("both classes present")
    };
    let train = split(200, Split::Train);
    let test = split(200, Split::Test);
    LabelSuite {
        embedding,
        train,
        test,
    }
}

/// Gaussian word vectors; a sentence of eight random words is labeled by
/// the sign of a hidden linear function of its mean vector, then flipped
/// with probability `flip`.
pub fn planted_label_suite(seed: u64, n_train: usize, n_test: usize, flip: f64) -> LabelSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, n_words) = (10, 500);
    let vocab = synthetic_vocab(n_words);
    let data = gaussian_matrix(&mut rng, p, n_words);
    let hidden = gaussian_matrix(&mut rng, 1, p);
    let mut split = |count: usize, which: Split| {
        let records = (0..count)
            .map(|k| {
                let words: Vec<usize> = (0..8).map(|_| rng.random_range(0..n_words)).collect();
                let mean = words
                    .iter()
                    .fold(nalgebra::DVector::zeros(p), |acc, &w| acc + data.column(w))
                    / 8.0;
                let mut class = usize::from((&hidden * mean)[0] > 0.0);
                if rng.random_bool(flip) {
                    class = 1 - class;
                }
                // the first two records pin both classes
                if k < 2 {
                    class = k;
                }
                (class, sentence(&mut rng, &vocab, &words))
            })
            .collect();
        LabeledCorpus::new(records, which).expect("both classes present")
    };
    let train = split(n_train, Split::Train);
    let test = split(n_test, Split::Test);
    let embedding = EmbeddingMatrix::new("planted", vocab, data).expect("valid");
    LabelSuite {
        embedding,
        train,
        test,
    }
}

/// `embedding` corrupted by additive Gaussian noise with the same total
/// energy as the original vectors. The noise uses its own stream, so it is
/// independent of anything generated from the same seed.
pub fn with_added_noise(embedding: &EmbeddingMatrix, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let data = embedding.data();
    let mut noise = gaussian_matrix(&mut rng, data.nrows(), data.ncols());
    noise *= data.norm() / noise.norm();
    EmbeddingMatrix::new(
        format!("{}+noise", embedding.name()),
        embedding.vocab().to_vec(),
        data + noise,
    )
    .expect("valid")
}
