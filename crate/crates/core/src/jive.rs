//! Joint and individual decomposition of several blocks that share a column
//! (word) axis:
//!
//! ```text
//! X_i = J_i + A_i + E_i,   J_i = B_i J,   A_i = D_i H_i,   J_i A_iᵀ = 0
//! ```
//!
//! The fit alternates two exact subproblems on the stacked matrix
//! `X = [X_1; …; X_K]`:
//!
//! 1. the joint row space is the top-`r` right singular subspace of `X − A`;
//! 2. each `A_i` is the best rank-`r_i` approximation of `X_i` with the joint
//!    row space projected out.
//!
//! With orthogonality enforced, the joint block `J_i` is the projection of
//! `X_i` onto the joint row space. That makes the three parts of every block
//! mutually orthogonal, so their energies add up to `‖X_i‖²`, and makes the
//! residual non-increasing from one iteration to the next.
//!
//! With orthogonality off, `J` is the rank-`r` approximation of `X − A` and
//! `A_i` the rank-`r_i` approximation of `X_i − J_i` (plain alternating
//! least squares, no identifiability constraint).

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{JiveError, Result};
use crate::linalg::{self, project_off_unchecked, truncated_svd_or_empty, TruncatedSvd};

/// Residuals at or below this fraction of `‖X‖²` count as an exact fit.
pub const EXACT_FIT_TOL: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JiveConfig {
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    /// Stop once the relative decrease of the residual falls below this.
    pub epsilon: f64,
    pub max_iter: usize,
    pub enforce_orthogonality: bool,
}

impl JiveConfig {
    pub fn new(joint_rank: usize, individual_ranks: Vec<usize>) -> Self {
        JiveConfig {
            joint_rank,
            individual_ranks,
            epsilon: 1e-6,
            max_iter: 500,
            enforce_orthogonality: true,
        }
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn enforce_orthogonality(mut self, on: bool) -> Self {
        self.enforce_orthogonality = on;
        self
    }

    /// Checks the configuration against block shapes `(p_i, n)`.
    pub fn validate(&self, dims: &[usize], n: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(JiveError::arg(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iter == 0 {
            return Err(JiveError::arg("max_iter must be at least 1"));
        }
        if self.individual_ranks.len() != dims.len() {
            return Err(JiveError::arg(format!(
                "{} individual ranks given for {} blocks",
                self.individual_ranks.len(),
                dims.len()
            )));
        }
        if self.joint_rank == 0 && self.individual_ranks.iter().all(|&r| r == 0) {
            return Err(JiveError::arg("empty model: all ranks are zero"));
        }
        let max_joint = dims.iter().map(|&p| p.min(n)).min().unwrap_or(0);
        if self.joint_rank > max_joint {
            return Err(JiveError::arg(format!(
                "joint rank {} exceeds the smallest block rank bound {max_joint}",
                self.joint_rank
            )));
        }
        for (i, (&r, &p)) in self.individual_ranks.iter().zip(dims).enumerate() {
            if r > p.min(n) {
                return Err(JiveError::arg(format!(
                    "individual rank {r} of block {i} exceeds min(p, n) = {}",
                    p.min(n)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `(R⁽ᵗ⁻¹⁾ − R⁽ᵗ⁾) / R⁽ᵗ⁻¹⁾` for `t = 1, 2, …`.
    pub rel_changes: Vec<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
    pub final_residual: f64,
}

/// Fitted decomposition.
///
/// The joint part is stored as one stacked factorization
/// `[J_1; …; J_K] = U diag(s) Vt`: `Vt` (`r×n`, orthonormal rows) spans the
/// shared row space, `diag(s) Vt` are the joint scores `J`, and the rows of
/// `U` belonging to block `i` are its loadings `B_i`. Individual parts are
/// per-block factorizations `A_i = D_i diag(s_i) V_iᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JiveResult {
    pub config: JiveConfig,
    pub block_dims: Vec<usize>,
    pub joint: TruncatedSvd,
    pub individual: Vec<TruncatedSvd>,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: FitDiagnostics,
}

fn block_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len() + 1);
    offsets.push(0);
    for &p in dims {
        offsets.push(offsets.last().unwrap() + p);
    }
    offsets
}

fn stack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut x = DMatrix::zeros(rows, n);
    let mut offset = 0;
    for b in blocks {
        x.rows_mut(offset, b.nrows()).copy_from(b);
        offset += b.nrows();
    }
    x
}

impl JiveResult {
    pub fn n_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn joint_rank(&self) -> usize {
        self.joint.rank()
    }

    pub fn individual_ranks(&self) -> Vec<usize> {
        self.individual.iter().map(TruncatedSvd::rank).collect()
    }

    pub fn final_residual(&self) -> f64 {
        *self
            .residual_history
            .last()
            .expect("history is never empty")
    }

    /// Orthonormal basis (rows) of the joint row space.
    pub fn joint_basis(&self) -> &DMatrix<f64> {
        &self.joint.vt
    }

    /// Joint scores `J` (`r×n`), carrying the singular-value scale.
    pub fn joint_scores(&self) -> DMatrix<f64> {
        self.joint.scores()
    }

    /// `B_i`, the rows of the stacked joint loadings that belong to block `i`.
    pub fn joint_loadings(&self, block: usize) -> DMatrix<f64> {
        let offsets = block_offsets(&self.block_dims);
        self.joint
            .u
            .rows(offsets[block], self.block_dims[block])
            .into_owned()
    }

    /// `J_i = B_i J`.
    pub fn joint_block(&self, block: usize) -> DMatrix<f64> {
        self.joint_loadings(block) * self.joint_scores()
    }

    pub fn individual_loadings(&self, block: usize) -> &DMatrix<f64> {
        &self.individual[block].u
    }

    /// Individual scores `H_i` (`r_i×n`), carrying the singular-value scale.
    pub fn individual_scores(&self, block: usize) -> DMatrix<f64> {
        self.individual[block].scores()
    }

    /// `A_i = D_i H_i`.
    pub fn individual_block(&self, block: usize) -> DMatrix<f64> {
        self.individual[block].reconstruct()
    }

    /// `E_i = X_i − J_i − A_i`.
    pub fn residual_block(&self, block: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - self.joint_block(block) - self.individual_block(block)
    }

    /// Energy shares of every block (see [`VarianceShare`]).
    pub fn variance_explained(&self, blocks: &[DMatrix<f64>]) -> Vec<VarianceShare> {
        blocks
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let total = x.norm_squared();
                let loadings = self.joint_loadings(i);
                let joint: f64 = loadings
                    .column_iter()
                    .zip(self.joint.s.iter())
                    .map(|(col, s)| col.norm_squared() * s * s)
                    .sum();
                let individual = self.individual[i].s.norm_squared();
                let residual = self.residual_block(i, x).norm_squared();
                VarianceShare {
                    joint: joint / total,
                    individual: individual / total,
                    residual: residual / total,
                }
            })
            .collect()
    }

    /// Largest `|J_i A_iᵀ|` entry relative to `‖X_i‖_F`, over all blocks.
    pub fn orthogonality_defect(&self, blocks: &[DMatrix<f64>]) -> f64 {
        blocks
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cross = self.joint_block(i) * self.individual_block(i).transpose();
                cross.amax() / x.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Fraction of a block's energy `‖X_i‖²` carried by each part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceShare {
    pub joint: f64,
    pub individual: f64,
    pub residual: f64,
}

impl VarianceShare {
    pub fn total(&self) -> f64 {
        self.joint + self.individual + self.residual
    }
}

impl FitDiagnostics {
    /// One `iter=<t> R=<val> rel_change=<val>` line per iterate.
    pub fn log_lines(&self, history: &[f64]) -> Vec<String> {
        let mut buf = ryu::Buffer::new();
        history
            .iter()
            .enumerate()
            .map(|(t, r)| {
                let r = buf.format(*r).to_string();
                let change = match t {
                    0 => "nan".to_string(),
                    _ => buf.format(self.rel_changes[t - 1]).to_string(),
                };
                format!("iter={t} R={r} rel_change={change}")
            })
            .collect()
    }
}

struct State {
    joint: TruncatedSvd,
    individual: Vec<TruncatedSvd>,
    residual: f64,
}

struct Problem<'a> {
    blocks: &'a [DMatrix<f64>],
    x: DMatrix<f64>,
    offsets: Vec<usize>,
    cfg: &'a JiveConfig,
}

impl Problem<'_> {
    fn stacked_individual(&self, individual: &[TruncatedSvd]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.x.nrows(), self.x.ncols());
        for (i, f) in individual.iter().enumerate() {
            if f.rank() > 0 {
                a.rows_mut(self.offsets[i], self.blocks[i].nrows())
                    .copy_from(&f.reconstruct());
            }
        }
        a
    }

    /// Stacked joint part with row space `basis`: `X Vtᵀ Vt`, refactored so
    /// that its loadings are orthonormal.
    fn joint_from_basis(&self, basis: &DMatrix<f64>) -> Result<TruncatedSvd> {
        let r = basis.nrows();
        if r == 0 {
            return Ok(TruncatedSvd::empty(self.x.nrows(), self.x.ncols()));
        }
        let coords = &self.x * basis.transpose();
        let small = linalg::truncated_svd(&coords, r)?;
        Ok(TruncatedSvd {
            u: small.u,
            s: small.s,
            vt: small.vt * basis,
        })
    }

    fn individual_update(&self, joint: &TruncatedSvd) -> Result<Vec<TruncatedSvd>> {
        let ranks = &self.cfg.individual_ranks;
        (0..self.blocks.len())
            .into_par_iter()
            .map(|i| {
                let x = &self.blocks[i];
                let target = if self.cfg.enforce_orthogonality {
                    project_off_unchecked(x, &joint.vt)
                } else {
                    let j_i = joint.u.rows(self.offsets[i], x.nrows()) * joint.scores();
                    x - j_i
                };
                truncated_svd_or_empty(&target, ranks[i])
            })
            .collect()
    }

    fn residual(&self, joint: &TruncatedSvd, individual: &[TruncatedSvd]) -> f64 {
        let mut e = &self.x - self.stacked_individual(individual);
        if joint.rank() > 0 {
            e.gemm(-1.0, &joint.u, &joint.scores(), 1.0);
        }
        e.norm_squared()
    }

    fn state(&self, joint: TruncatedSvd, iteration: usize) -> Result<State> {
        let individual = self
            .individual_update(&joint)
            .map_err(|e| at(iteration, e))?;
        let residual = self.residual(&joint, &individual);
        if !residual.is_finite() {
            return Err(JiveError::Numeric {
                iteration,
                message: "residual is not finite".into(),
            });
        }
        Ok(State {
            joint,
            individual,
            residual,
        })
    }

    fn initial(&self) -> Result<State> {
        let svd = truncated_svd_or_empty(&self.x, self.cfg.joint_rank).map_err(|e| at(0, e))?;
        let joint = if self.cfg.enforce_orthogonality {
            // the rank-r approximation of X already equals X Vtᵀ Vt
            self.joint_from_basis(&svd.vt).map_err(|e| at(0, e))?
        } else {
            svd
        };
        self.state(joint, 0)
    }

    fn step(&self, prev: &State, iteration: usize) -> Result<State> {
        let target = &self.x - self.stacked_individual(&prev.individual);
        let svd =
            truncated_svd_or_empty(&target, self.cfg.joint_rank).map_err(|e| at(iteration, e))?;
        let joint = if self.cfg.enforce_orthogonality {
            self.joint_from_basis(&svd.vt)
                .map_err(|e| at(iteration, e))?
        } else {
            svd
        };
        self.state(joint, iteration)
    }
}

fn at(iteration: usize, err: JiveError) -> JiveError {
    match err {
        JiveError::Numeric { message, .. } => JiveError::Numeric { iteration, message },
        other => other,
    }
}

fn check_blocks(blocks: &[DMatrix<f64>]) -> Result<usize> {
    if blocks.len() < 2 {
        return Err(JiveError::arg(format!(
            "need at least 2 blocks, got {}",
            blocks.len()
        )));
    }
    let n = blocks[0].ncols();
    if let Some((i, b)) = blocks.iter().enumerate().find(|(_, b)| b.ncols() != n) {
        return Err(JiveError::arg(format!(
            "block {i} has {} columns, block 0 has {n}",
            b.ncols()
        )));
    }
    if blocks.iter().any(|b| b.nrows() == 0 || n == 0) {
        return Err(JiveError::arg("blocks must be non-empty"));
    }
    Ok(n)
}

fn dims(blocks: &[DMatrix<f64>]) -> Vec<usize> {
    blocks.iter().map(|b| b.nrows()).collect()
}

fn problem<'a>(blocks: &'a [DMatrix<f64>], cfg: &'a JiveConfig) -> Result<Problem<'a>> {
    let n = check_blocks(blocks)?;
    let dims = dims(blocks);
    cfg.validate(&dims, n)?;
    if let Some(i) = blocks.iter().position(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(JiveError::Numeric {
            iteration: 0,
            message: format!("block {i} contains non-finite entries"),
        });
    }
    Ok(Problem {
        blocks,
        x: stack(blocks),
        offsets: block_offsets(&dims),
        cfg,
    })
}

fn finish(
    problem: &Problem<'_>,
    state: State,
    history: Vec<f64>,
    rel_changes: Vec<f64>,
    converged: bool,
    started: Instant,
) -> JiveResult {
    JiveResult {
        config: problem.cfg.clone(),
        block_dims: dims(problem.blocks),
        joint: state.joint,
        individual: state.individual,
        iterations: rel_changes.len(),
        diagnostics: FitDiagnostics {
            rel_changes,
            wall_time: started.elapsed(),
            final_residual: state.residual,
        },
        residual_history: history,
        converged,
    }
}

/// Row space of the stacked blocks as `X = C Qᵀ`, with `Q` (`n×m`) from a
/// Householder QR of `Xᵀ`. Every iterate of the fit lies in this row space,
/// so the fit runs on the `m` columns of `C` and the row bases are mapped
/// back with `Q`: `O(m³)` instead of `O(m²n)` per iteration. Right
/// multiplication by orthonormal columns leaves norms and SVDs unchanged.
struct Compressed {
    q: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
}

fn compress(blocks: &[DMatrix<f64>]) -> Option<Compressed> {
    let x = stack(blocks);
    let (m, n) = x.shape();
    if n <= m {
        return None;
    }
    let qr = x.transpose().qr();
    let c = qr.r().transpose();
    let offsets = block_offsets(&dims(blocks));
    let blocks = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| c.rows(offsets[i], b.nrows()).into_owned())
        .collect();
    Some(Compressed { q: qr.q(), blocks })
}

impl JiveResult {
    fn lift(mut self, q: &DMatrix<f64>, started: Instant) -> Self {
        let qt = q.transpose();
        self.joint.vt = &self.joint.vt * &qt;
        for f in &mut self.individual {
            f.vt = &f.vt * &qt;
        }
        self.diagnostics.wall_time = started.elapsed();
        self
    }
}

fn run_compressed(
    blocks: &[DMatrix<f64>],
    cfg: &JiveConfig,
    run: fn(&Problem<'_>, Instant) -> Result<JiveResult>,
) -> Result<JiveResult> {
    let started = Instant::now();
    // validates shapes, ranks and finiteness on the original blocks
    let full = problem(blocks, cfg)?;
    match compress(blocks) {
        None => run(&full, started),
        Some(c) => {
            drop(full);
            let small = problem(&c.blocks, cfg)?;
            Ok(run(&small, started)?.lift(&c.q, started))
        }
    }
}

fn run_init(problem: &Problem<'_>, started: Instant) -> Result<JiveResult> {
    let state = problem.initial()?;
    let history = vec![state.residual];
    Ok(finish(problem, state, history, Vec::new(), false, started))
}

fn run_fit(problem: &Problem<'_>, started: Instant) -> Result<JiveResult> {
    let cfg = problem.cfg;
    let exact = EXACT_FIT_TOL * problem.x.norm_squared();

    let mut state = problem.initial()?;
    let mut history = vec![state.residual];
    let mut rel_changes = Vec::new();
    let mut converged = state.residual <= exact;

    while !converged && rel_changes.len() < cfg.max_iter {
        let iteration = rel_changes.len() + 1;
        let next = problem.step(&state, iteration)?;
        let change = (state.residual - next.residual) / state.residual;
        log::debug!(
            "iter={iteration} R={:e} rel_change={change:e}",
            next.residual
        );
        history.push(next.residual);
        rel_changes.push(change);
        state = next;
        converged = state.residual <= exact || change < cfg.epsilon;
    }
    Ok(finish(
        problem,
        state,
        history,
        rel_changes,
        converged,
        started,
    ))
}

/// Initial decomposition: `J⁽⁰⁾` from the rank-`r` SVD of the stacked
/// blocks, then each `A_i⁽⁰⁾` from the rank-`r_i` SVD of what is left.
pub fn init_matrices(blocks: &[DMatrix<f64>], cfg: &JiveConfig) -> Result<JiveResult> {
    run_compressed(blocks, cfg, run_init)
}

/// Full alternating fit on raw matrices (`p_i×n`, shared `n`).
pub fn fit_matrices(blocks: &[DMatrix<f64>], cfg: &JiveConfig) -> Result<JiveResult> {
    run_compressed(blocks, cfg, run_fit)
}

fn aligned_data(blocks: &[EmbeddingMatrix]) -> Result<Vec<DMatrix<f64>>> {
    if let Some(first) = blocks.first() {
        if let Some(b) = blocks.iter().find(|b| b.vocab() != first.vocab()) {
            return Err(JiveError::arg(format!(
                "{:?} and {:?} do not share a vocabulary; align them first",
                first.name(),
                b.name()
            )));
        }
    }
    Ok(blocks.iter().map(|b| b.data().clone()).collect())
}

/// [`init_matrices`] on aligned embeddings.
pub fn jive_init(blocks: &[EmbeddingMatrix], cfg: &JiveConfig) -> Result<JiveResult> {
    init_matrices(&aligned_data(blocks)?, cfg)
}

/// [`fit_matrices`] on aligned (and normally preprocessed) embeddings.
pub fn jive_fit(blocks: &[EmbeddingMatrix], cfg: &JiveConfig) -> Result<JiveResult> {
    fit_matrices(&aligned_data(blocks)?, cfg)
}

/// Per-block energy fractions of a fitted result.
pub fn variance_explained(result: &JiveResult, blocks: &[EmbeddingMatrix]) -> Vec<VarianceShare> {
    let data: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.data().clone()).collect();
    result.variance_explained(&data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_orthonormal_rows, PlantedModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, p: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn config_validation() {
        let dims = [4, 6];
        assert!(JiveConfig::new(2, vec![1, 1]).validate(&dims, 30).is_ok());
        assert!(JiveConfig::new(5, vec![1, 1]).validate(&dims, 30).is_err());
        assert!(JiveConfig::new(1, vec![5, 1]).validate(&dims, 30).is_err());
        assert!(JiveConfig::new(1, vec![1]).validate(&dims, 30).is_err());
        assert!(JiveConfig::new(1, vec![1, 1])
            .epsilon(0.0)
            .validate(&dims, 30)
            .is_err());
        assert!(JiveConfig::new(1, vec![1, 1])
            .max_iter(0)
            .validate(&dims, 30)
            .is_err());
        let err = JiveConfig::new(0, vec![0, 0])
            .validate(&dims, 30)
            .unwrap_err();
        assert!(err.to_string().contains("empty model"));
    }

    #[test]
    fn init_identical_blocks_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(&mut rng, 6, 3) * gaussian(&mut rng, 3, 40);
        let blocks = [x.clone(), x.clone()];
        let res = init_matrices(&blocks, &JiveConfig::new(3, vec![0, 0])).unwrap();
        for i in 0..2 {
            assert!((res.joint_block(i) - &x).amax() < 1e-10);
        }
        assert!(res.residual_history[0] <= 1e-20);
    }

    #[test]
    fn init_with_zero_joint_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x1 = gaussian(&mut rng, 4, 2) * gaussian(&mut rng, 2, 30);
        let x2 = gaussian(&mut rng, 5, 3) * gaussian(&mut rng, 3, 30);
        let res =
            init_matrices(&[x1.clone(), x2.clone()], &JiveConfig::new(0, vec![2, 3])).unwrap();
        assert_eq!(res.joint_rank(), 0);
        assert!(res.joint_block(0).amax() == 0.0);
        assert!((res.individual_block(0) - &x1).amax() < 1e-10);
        assert!((res.individual_block(1) - &x2).amax() < 1e-10);
    }

    /// Two-step initialization written out with the Jacobi SVD oracle.
    fn reference_init_residual(blocks: &[DMatrix<f64>], r: usize, ranks: &[usize]) -> f64 {
        fn best(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
            (
                crate::oracle::best_rank(m, k),
                crate::oracle::top_right(m, k),
            )
        }
        let x = stack(blocks);
        let (j, basis) = best(&x, r);
        let mut total = 0.0;
        let mut offset = 0;
        for (b, &k) in blocks.iter().zip(ranks) {
            let j_i = j.rows(offset, b.nrows()).into_owned();
            let left = b - &j_i;
            let projected = &left - &left * basis.transpose() * &basis;
            let (a, _) = best(&projected, k);
            total += (b - j_i - a).norm_squared();
            offset += b.nrows();
        }
        total
    }

    #[test]
    fn init_matches_reference_two_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks = [gaussian(&mut rng, 4, 30), gaussian(&mut rng, 6, 30)];
        let res = init_matrices(&blocks, &JiveConfig::new(2, vec![2, 2])).unwrap();
        let expected = reference_init_residual(&blocks, 2, &[2, 2]);
        assert!((res.residual_history[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn pure_joint_rotated_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x1 = gaussian(&mut rng, 5, 3) * gaussian(&mut rng, 3, 60);
        let q = linalg::truncated_svd(&gaussian(&mut rng, 5, 5), 5)
            .unwrap()
            .u;
        let x2 = &q * &x1;
        let blocks = [x1, x2];
        let res = fit_matrices(&blocks, &JiveConfig::new(3, vec![0, 0])).unwrap();
        assert!(res.final_residual() <= 1e-18);
        for share in res.variance_explained(&blocks) {
            assert!(share.joint >= 1.0 - 1e-10);
        }
    }

    #[test]
    fn pure_individual_orthogonal_row_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_orthonormal_rows(&mut rng, 5, 80, None);
        let x1 = gaussian(&mut rng, 6, 2) * rows.rows(0, 2);
        let x2 = gaussian(&mut rng, 7, 3) * rows.rows(2, 3);
        let blocks = [x1.clone(), x2.clone()];
        let res = fit_matrices(&blocks, &JiveConfig::new(0, vec![2, 3])).unwrap();
        assert!((res.individual_block(0) - x1).amax() < 1e-10);
        assert!((res.individual_block(1) - x2).amax() < 1e-10);
    }

    #[test]
    fn planted_low_noise_recovers_joint_space() {
        let model = PlantedModel::new(vec![20, 30], 200, 3, vec![2, 2]).noise(0.01);
        let sample = model.sample(7);
        let res = fit_matrices(&sample.blocks, &JiveConfig::new(3, vec![2, 2])).unwrap();
        assert!(res.converged);
        let sine = linalg::max_principal_sine(res.joint_basis(), &sample.joint_basis);
        assert!(sine <= 0.05, "sine {sine}");
        let shares = res.variance_explained(&sample.blocks);
        for s in &shares {
            assert!((s.total() - 1.0).abs() < 1e-3);
        }
        assert!(res.orthogonality_defect(&sample.blocks) <= 1e-8);
    }

    #[test]
    fn history_is_monotone_and_logged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let blocks = [gaussian(&mut rng, 7, 50), gaussian(&mut rng, 9, 50)];
        for orth in [true, false] {
            let cfg = JiveConfig::new(2, vec![2, 3]).enforce_orthogonality(orth);
            let res = fit_matrices(&blocks, &cfg).unwrap();
            for w in res.residual_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let lines = res.diagnostics.log_lines(&res.residual_history);
            assert_eq!(lines.len(), res.iterations + 1);
            assert!(lines[0].starts_with("iter=0 R="));
            assert!(lines[1].contains(" rel_change="));
        }
    }

    #[test]
    fn literal_mode_runs_without_constraint() {
        let model = PlantedModel::new(vec![8, 10], 60, 2, vec![1, 1]).noise(0.05);
        let s = model.sample(2);
        let cfg = JiveConfig::new(2, vec![1, 1]).enforce_orthogonality(false);
        let res = fit_matrices(&s.blocks, &cfg).unwrap();
        assert!(res.final_residual() <= res.residual_history[0] + 1e-12);
    }

    #[test]
    fn rejects_misaligned_and_nonfinite() {
        let a = DMatrix::<f64>::zeros(2, 5);
        let b = DMatrix::<f64>::zeros(2, 6);
        assert!(fit_matrices(&[a.clone(), b], &JiveConfig::new(1, vec![0, 0])).is_err());
        assert!(fit_matrices(&[a.clone()], &JiveConfig::new(1, vec![0])).is_err());
        let mut c = DMatrix::<f64>::identity(2, 5);
        c[(0, 3)] = f64::NAN;
        let err = fit_matrices(&[a, c], &JiveConfig::new(1, vec![0, 0])).unwrap_err();
        assert!(matches!(err, JiveError::Numeric { iteration: 0, .. }));
    }

    #[test]
    fn embedding_wrappers_require_alignment() {
        let e1 = EmbeddingMatrix::new(
            "a",
            vec!["x".into(), "y".into(), "z".into()],
            DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 1.0]),
        )
        .unwrap();
        let e2 = EmbeddingMatrix::new(
            "b",
            vec!["x".into(), "z".into(), "y".into()],
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, -1.0]),
        )
        .unwrap();
        assert!(jive_fit(&[e1.clone(), e2], &JiveConfig::new(1, vec![0, 0])).is_err());
        let res = jive_fit(&[e1.clone(), e1.clone()], &JiveConfig::new(1, vec![0, 0])).unwrap();
        let shares = variance_explained(&res, &[e1.clone(), e1]);
        assert!((shares[0].joint - 1.0).abs() < 1e-12);
    }
}
