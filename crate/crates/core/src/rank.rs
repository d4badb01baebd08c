//! Rank selection.
//!
//! The joint rank is read off the principal angles between the blocks'
//! signal row spaces. Stacking the orthonormal bases `V_1 … V_K` of those
//! spaces, every squared singular value `σ²` of `[V_1 … V_K]` lies in
//! `[0, K]`, and a direction shared by all blocks reaches `K`. A direction
//! counts as joint when its `σ²` clears a threshold `τ` built from two
//! resampled bounds:
//!
//! * a perturbation (Wedin) floor: for each block, the sine of the angle by
//!   which noise with the block's residual spectrum can tilt its signal
//!   subspace, giving `τ_wedin = K − Σ sin²θ_i`;
//! * a random-subspace null: the upper `quantile` of the largest `σ²` when
//!   the bases are independent uniformly random subspaces.
//!
//! `τ = max(τ_wedin, τ_null)`, or `τ_null` alone in [`ThresholdMode::NullOnly`].
//!
//! Random orthonormal bases are never materialized. The Gram matrix of
//! stacked Gaussian matrices is Wishart, sampled with the Bartlett
//! decomposition, and normalizing its diagonal blocks yields the
//! cross-products `V_iᵀ V_j` of the corresponding random bases. Each draw
//! costs `O((Σ t_i)³)` regardless of vocabulary size.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{JiveError, Result};
use crate::jive::EXACT_FIT_TOL;
use crate::linalg::{self, gram_rows, project_off_unchecked, sym_eigen_desc};

/// Slack when comparing `σ²` against `τ`: identical subspaces give `σ² = K`
/// only up to rounding.
pub const SPECTRUM_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRankPolicy {
    Explicit(usize),
    /// Smallest rank whose leading singular values carry this fraction of
    /// the block's energy.
    Energy(f64),
}

impl Default for SignalRankPolicy {
    fn default() -> Self {
        SignalRankPolicy::Energy(0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndividualRankPolicy {
    Explicit(Vec<usize>),
    Energy(f64),
}

impl Default for IndividualRankPolicy {
    fn default() -> Self {
        IndividualRankPolicy::Energy(0.95)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    #[default]
    WedinAndNull,
    NullOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRankOptions {
    pub resamples: usize,
    pub quantile: f64,
    pub seed: u64,
    pub mode: ThresholdMode,
}

impl JointRankOptions {
    pub fn new(seed: u64) -> Self {
        JointRankOptions {
            resamples: 100,
            quantile: 0.95,
            seed,
            mode: ThresholdMode::default(),
        }
    }

    pub fn resamples(mut self, resamples: usize) -> Self {
        self.resamples = resamples;
        self
    }

    pub fn quantile(mut self, quantile: f64) -> Self {
        self.quantile = quantile;
        self
    }

    pub fn mode(mut self, mode: ThresholdMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub joint_rank: usize,
    pub signal_ranks: Vec<usize>,
    /// Filled in once the joint space is known; empty until then.
    pub individual_ranks: Vec<usize>,
    pub threshold: f64,
    pub null_threshold: f64,
    pub wedin_threshold: Option<f64>,
    /// Resampled per-block bound on the sine of the signal-subspace tilt.
    pub wedin_sines: Vec<f64>,
    /// Squared singular values of the stacked signal bases, descending.
    pub spectrum: Vec<f64>,
    pub options: JointRankOptions,
    /// The threshold recipe is a reconstruction of the angle-based
    /// approach, not a published parameterization.
    pub threshold_recipe: String,
}

fn block_energy_rank(squared: &[f64], total: f64, fraction: f64) -> usize {
    if total <= 0.0 {
        return 0;
    }
    let target = fraction * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (k, &v) in squared.iter().enumerate() {
        acc += v;
        if acc >= target {
            return k + 1;
        }
    }
    squared.len()
}

/// Signal rank `t` of one (preprocessed) block.
pub fn estimate_signal_rank(x: &DMatrix<f64>, policy: SignalRankPolicy) -> Result<usize> {
    let max = x.nrows().min(x.ncols());
    match policy {
        SignalRankPolicy::Explicit(k) if k > max => Err(JiveError::arg(format!(
            "signal rank {k} exceeds min(p, n) = {max}"
        ))),
        SignalRankPolicy::Explicit(k) => Ok(k),
        SignalRankPolicy::Energy(f) if !(f > 0.0 && f <= 1.0) => Err(JiveError::arg(format!(
            "energy fraction must be in (0, 1], got {f}"
        ))),
        SignalRankPolicy::Energy(f) => {
            let squared: Vec<f64> = linalg::singular_values(x).iter().map(|s| s * s).collect();
            Ok(block_energy_rank(&squared, x.norm_squared(), f))
        }
    }
}

/// Wishart(`df`, `I_dim`) via the Bartlett decomposition `L Lᵀ`.
fn wishart_identity<R: Rng + ?Sized>(rng: &mut R, dim: usize, df: usize) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new((df - i) as f64).expect("positive degrees of freedom");
        l[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            l[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let lt = l.transpose();
    l * lt
}

fn inverse_sqrt_spd(m: DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen_desc(m);
    let mut scaled = vectors.clone();
    for (mut col, &v) in scaled.column_iter_mut().zip(values.iter()) {
        col /= v.sqrt();
    }
    scaled * vectors.transpose()
}

/// Gram matrix of the stacked bases `[V_1 … V_K]` of independent uniformly
/// random subspaces of `R^ambient` with the given dimensions.
pub fn random_bases_gram<R: Rng + ?Sized>(
    rng: &mut R,
    dims: &[usize],
    ambient: usize,
) -> DMatrix<f64> {
    let total: usize = dims.iter().sum();
    assert!(
        total <= ambient,
        "bases of total dimension {total} do not fit in R^{ambient}"
    );
    let w = wishart_identity(rng, total, ambient);
    let mut normalizer = DMatrix::zeros(total, total);
    let mut offset = 0;
    for &d in dims {
        let block = w.view((offset, offset), (d, d)).into_owned();
        normalizer
            .view_mut((offset, offset), (d, d))
            .copy_from(&inverse_sqrt_spd(block));
        offset += d;
    }
    let mut g = &normalizer * w * &normalizer;
    g.fill_upper_triangle_with_lower_triangle();
    g
}

fn draw_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Smallest sample `x` such that at most a `1 − q` fraction of fresh draws is
/// expected to exceed it: the `⌈q(N+1)⌉`-th order statistic.
fn upper_quantile(mut samples: Vec<f64>, q: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let k = ((q * (n + 1) as f64).ceil() as usize).clamp(1, n);
    samples[k - 1]
}

fn largest_eigenvalue(g: DMatrix<f64>) -> f64 {
    sym_eigen_desc(g).0[0]
}

/// Resampled bound on the sine of the angle between a block's estimated and
/// true rank-`t` row spaces.
fn wedin_sine(
    singular: &DVector<f64>,
    t: usize,
    p: usize,
    n: usize,
    opts: &JointRankOptions,
    block: usize,
) -> f64 {
    if t == 0 {
        return 1.0;
    }
    let sigma_t = singular[t - 1];
    let m = p.min(n) - t;
    let residual: Vec<f64> = singular.iter().skip(t).take(m).copied().collect();
    if m == 0 || residual.iter().all(|&s| s == 0.0) {
        return 0.0;
    }
    if sigma_t <= 0.0 {
        return 1.0;
    }
    let spread = DMatrix::from_diagonal(&DVector::from_vec(residual));
    // ‖diag(s) Cᵀ‖₂ for the m×t cross block C of two random bases
    let tilt = |rng: &mut ChaCha8Rng, ambient: usize| {
        let g = random_bases_gram(rng, &[m, t], ambient);
        let cross = g.view((0, m), (m, t)).into_owned();
        let scaled = &spread * cross;
        largest_eigenvalue(scaled.tr_mul(&scaled)).max(0.0).sqrt()
    };
    let samples: Vec<f64> = (0..opts.resamples)
        .into_par_iter()
        .map(|draw| {
            let mut rng = draw_rng(opts.seed, (1 << 40) | ((block as u64) << 24) | draw as u64);
            let right = tilt(&mut rng, n);
            let left = tilt(&mut rng, p);
            (right.max(left) / sigma_t).min(1.0)
        })
        .collect();
    upper_quantile(samples, opts.quantile)
}

/// Number of spectrum entries above `threshold` (up to [`SPECTRUM_SLACK`]).
pub fn count_above(spectrum: &[f64], threshold: f64) -> usize {
    spectrum
        .iter()
        .filter(|&&s| s > threshold - SPECTRUM_SLACK)
        .count()
}

/// Chooses the joint rank from the principal angles between the blocks'
/// rank-`t_i` signal row spaces.
pub fn select_joint_rank(
    blocks: &[DMatrix<f64>],
    signal_ranks: &[usize],
    opts: &JointRankOptions,
) -> Result<RankDecision> {
    if blocks.len() < 2 {
        return Err(JiveError::arg("rank selection needs at least 2 blocks"));
    }
    if signal_ranks.len() != blocks.len() {
        return Err(JiveError::arg(format!(
            "{} signal ranks given for {} blocks",
            signal_ranks.len(),
            blocks.len()
        )));
    }
    if opts.resamples < 10 {
        return Err(JiveError::arg(format!(
            "at least 10 resamples required, got {}",
            opts.resamples
        )));
    }
    if !(opts.quantile > 0.0 && opts.quantile < 1.0) {
        return Err(JiveError::arg(format!(
            "quantile must be in (0, 1), got {}",
            opts.quantile
        )));
    }
    let n = blocks[0].ncols();
    if blocks.iter().any(|b| b.ncols() != n) {
        return Err(JiveError::arg("blocks do not share a column axis"));
    }
    let total: usize = signal_ranks.iter().sum();
    if total > n {
        return Err(JiveError::arg(format!(
            "signal ranks sum to {total}, more than the {n} columns"
        )));
    }
    for (i, (b, &t)) in blocks.iter().zip(signal_ranks).enumerate() {
        if t > b.nrows().min(n) {
            return Err(JiveError::arg(format!(
                "signal rank {t} of block {i} exceeds min(p, n) = {}",
                b.nrows().min(n)
            )));
        }
    }
    let k = blocks.len() as f64;

    let mut bases = Vec::with_capacity(blocks.len());
    let mut singular = Vec::with_capacity(blocks.len());
    for (b, &t) in blocks.iter().zip(signal_ranks) {
        bases.push(linalg::row_basis(b, t)?);
        singular.push(linalg::singular_values(b));
    }

    let spectrum: Vec<f64> = if total == 0 {
        Vec::new()
    } else {
        let mut stacked = DMatrix::zeros(total, n);
        let mut offset = 0;
        for v in &bases {
            stacked.rows_mut(offset, v.nrows()).copy_from(v);
            offset += v.nrows();
        }
        sym_eigen_desc(gram_rows(&stacked))
            .0
            .iter()
            .map(|&v| v.max(0.0))
            .collect()
    };

    let null_threshold = if total == 0 || signal_ranks.contains(&0) {
        k
    } else {
        let samples: Vec<f64> = (0..opts.resamples)
            .into_par_iter()
            .map(|draw| {
                let mut rng = draw_rng(opts.seed, draw as u64);
                largest_eigenvalue(random_bases_gram(&mut rng, signal_ranks, n))
            })
            .collect();
        upper_quantile(samples, opts.quantile)
    };

    let (wedin_threshold, wedin_sines) = match opts.mode {
        ThresholdMode::NullOnly => (None, Vec::new()),
        ThresholdMode::WedinAndNull => {
            let sines: Vec<f64> = blocks
                .iter()
                .zip(signal_ranks)
                .zip(&singular)
                .enumerate()
                .map(|(i, ((b, &t), s))| wedin_sine(s, t, b.nrows(), n, opts, i))
                .collect();
            let floor = k - sines.iter().map(|s| s * s).sum::<f64>();
            (Some(floor), sines)
        }
    };
    let threshold = wedin_threshold.map_or(null_threshold, |w| w.max(null_threshold));
    let max_joint = signal_ranks.iter().copied().min().unwrap_or(0);
    let joint_rank = count_above(&spectrum, threshold).min(max_joint);

    Ok(RankDecision {
        joint_rank,
        signal_ranks: signal_ranks.to_vec(),
        individual_ranks: Vec::new(),
        threshold,
        null_threshold,
        wedin_threshold,
        wedin_sines,
        spectrum,
        options: opts.clone(),
        threshold_recipe: match opts.mode {
            ThresholdMode::WedinAndNull => {
                "max(K - sum_i sin^2(wedin_i), null quantile); reconstructed angle-based rule"
            }
            ThresholdMode::NullOnly => "null quantile of random-subspace spectrum",
        }
        .to_string(),
    })
}

/// Individual ranks given the joint row space (`joint_basis`, orthonormal
/// rows). The energy policy picks, per block, the smallest rank capturing the
/// requested fraction of what is left after projecting out the joint space.
pub fn select_individual_ranks(
    blocks: &[DMatrix<f64>],
    joint_basis: &DMatrix<f64>,
    policy: &IndividualRankPolicy,
) -> Result<Vec<usize>> {
    match policy {
        IndividualRankPolicy::Explicit(ranks) => {
            if ranks.len() != blocks.len() {
                return Err(JiveError::arg(format!(
                    "{} individual ranks given for {} blocks",
                    ranks.len(),
                    blocks.len()
                )));
            }
            Ok(ranks.clone())
        }
        IndividualRankPolicy::Energy(f) if !(*f > 0.0 && *f <= 1.0) => Err(JiveError::arg(
            format!("energy fraction must be in (0, 1], got {f}"),
        )),
        IndividualRankPolicy::Energy(f) => blocks
            .iter()
            .map(|x| {
                if x.ncols() != joint_basis.ncols() {
                    return Err(JiveError::arg("joint basis does not match the blocks"));
                }
                let rest = project_off_unchecked(x, joint_basis);
                let energy = rest.norm_squared();
                if energy <= EXACT_FIT_TOL * x.norm_squared() {
                    return Ok(0);
                }
                let squared: Vec<f64> = linalg::singular_values(&rest)
                    .iter()
                    .map(|s| s * s)
                    .collect();
                Ok(block_energy_rank(&squared, energy, *f))
            })
            .collect(),
    }
}

/// Estimate of the joint row space: the top-`r` right singular vectors of
/// the stacked rank-`t_i` signal row bases, i.e. the directions closest to
/// all blocks' signal spaces at once.
pub fn joint_basis_estimate(
    blocks: &[DMatrix<f64>],
    signal_ranks: &[usize],
    r: usize,
) -> Result<DMatrix<f64>> {
    if signal_ranks.len() != blocks.len() {
        return Err(JiveError::arg(format!(
            "{} signal ranks given for {} blocks",
            signal_ranks.len(),
            blocks.len()
        )));
    }
    let n = blocks[0].ncols();
    if r == 0 {
        return Ok(DMatrix::zeros(0, n));
    }
    let total: usize = signal_ranks.iter().sum();
    if r > total {
        return Err(JiveError::arg(format!(
            "joint rank {r} exceeds the total signal rank {total}"
        )));
    }
    let mut stacked = DMatrix::zeros(total, n);
    let mut offset = 0;
    for (b, &t) in blocks.iter().zip(signal_ranks) {
        stacked
            .rows_mut(offset, t)
            .copy_from(&linalg::row_basis(b, t)?);
        offset += t;
    }
    linalg::row_basis(&stacked, r)
}
