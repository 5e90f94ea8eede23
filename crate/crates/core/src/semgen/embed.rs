//! Realizing up to `p+1` nonlinear environments as one linear system with random `B`.
//!
//! Environment `i` solves `v = f(v + Ã_i) + η_i`. With `ε = e_1`, `A_i = e_{i+1}` and
//! `C = [ε, ε+A_1, …, ε+A_p]`, stacking the solutions as `D = [v_0, …, v_p]` and taking
//! `B = I − C·D⁻¹` gives `(I − B)⁻¹C = D`: the linear system driven by the columns of
//! `C` reproduces every nonlinear solution exactly.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SemError;
use crate::moments::{EnvLabel, EnvironmentSample};
use crate::par::{self, Exec};

const DAMPING: f64 = 0.5;
const MAX_ITER: usize = 500;
const FP_TOL: f64 = 1e-10;
/// `|det D|` relative to the product of column norms.
const SINGULAR_TOL: f64 = 1e-12;
const MAX_REDRAWS: usize = 100;

/// One draw of the construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearEmbedding {
    #[serde(with = "crate::io::row_major")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::io::row_major")]
    pub d: DMatrix<f64>,
    #[serde(with = "crate::io::row_major")]
    pub b: DMatrix<f64>,
    /// `max_i ‖(I − B)⁻¹c_i − d_i‖∞ / (1 + ‖d_i‖∞)`.
    pub reconstruction_error: f64,
    /// Draws of this observation rejected for a singular `D`.
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingSet {
    pub draws: Vec<NonlinearEmbedding>,
    pub singular_rejected: usize,
    pub max_reconstruction_error: f64,
}

impl EmbeddingSet {
    /// Environment `i` as a sample: row `u` is column `i` of the `u`-th `D`.
    pub fn environment_sample(&self, i: usize) -> Result<EnvironmentSample, SemError> {
        let n = self.draws.len();
        let dim = self.draws.first().map_or(1, |d| d.d.nrows());
        let env = if i == 0 { EnvLabel::Observational } else { EnvLabel::Shifted(i) };
        if i >= dim {
            return Err(SemError::UnknownEnvironment(env));
        }
        let x = DMatrix::from_fn(n, dim - 1, |u, c| self.draws[u].d[(c + 1, i)]);
        let y = DVector::from_fn(n, |u, _| self.draws[u].d[(0, i)]);
        Ok(EnvironmentSample::new(x, y, env)?)
    }
}

/// `C = [e_1, e_1 + e_2, …, e_1 + e_{p+1}]`.
pub fn embedding_c(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |r, c| if r == 0 || (c > 0 && r == c) { 1.0 } else { 0.0 })
}

/// Damped iteration for `v = f(v + shift) + eta`.
fn solve_fixed_point<F>(f: &F, shift: &DVector<f64>, eta: &DVector<f64>, env: usize) -> Result<DVector<f64>, SemError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut v = eta.clone();
    let mut step = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let target = f(&(&v + shift)) + eta;
        let next = &v * (1.0 - DAMPING) + target * DAMPING;
        step = (&next - &v).amax();
        v = next;
        if !step.is_finite() {
            break;
        }
        if step <= FP_TOL * (1.0 + v.amax()) {
            // one undamped step lands on the map's own value
            return Ok(f(&(&v + shift)) + eta);
        }
    }
    Err(SemError::FixedPointDivergence { env, step })
}

fn relatively_singular(d: &DMatrix<f64>) -> bool {
    let scale: f64 = d.column_iter().map(|c| c.norm()).product();
    let det = d.determinant();
    !(scale > 0.0) || !det.is_finite() || det.abs() <= SINGULAR_TOL * scale
}

fn embed_one<F, N>(
    f: &F,
    shifts: &[DVector<f64>],
    noise: &N,
    seed: u64,
    u: usize,
) -> Result<NonlinearEmbedding, SemError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    N: Fn(usize, &mut ChaCha8Rng) -> DVector<f64>,
{
    let dim = shifts.len();
    let c = embedding_c(dim);
    for attempt in 0..MAX_REDRAWS {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&(u as u64).to_le_bytes());
        key[16..24].copy_from_slice(&(attempt as u64).to_le_bytes());
        key[24..].copy_from_slice(b"embed-nl");
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut d = DMatrix::zeros(dim, dim);
        for (i, shift) in shifts.iter().enumerate() {
            let eta = noise(i, &mut rng);
            d.set_column(i, &solve_fixed_point(f, shift, &eta, i)?);
        }
        if relatively_singular(&d) {
            continue;
        }
        let Some(d_inv) = d.clone().try_inverse() else { continue };
        let b = DMatrix::identity(dim, dim) - &c * d_inv;
        let ib = DMatrix::identity(dim, dim) - &b;
        let Some(rebuilt) = ib.lu().solve(&c) else { continue };
        let reconstruction_error = (0..dim)
            .map(|i| (rebuilt.column(i) - d.column(i)).amax() / (1.0 + d.column(i).amax()))
            .fold(0.0, f64::max);
        return Ok(NonlinearEmbedding { c: c.clone(), d, b, reconstruction_error, redraws: attempt });
    }
    Err(SemError::SingularD { rejected: MAX_REDRAWS })
}

/// `n` independent draws of the embedding.
///
/// `f` maps `R^{p+1}` to itself; `shifts` holds `Ã_1, …` (at most `p`, padded with zero
/// shifts); `noise(i, rng)` draws `η` for environment `i`, with `i = 0` observational.
pub fn embed_nonlinear<F, N>(
    f: F,
    shifts: &[DVector<f64>],
    noise: N,
    dim: usize,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<EmbeddingSet, SemError>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync + Send,
    N: Fn(usize, &mut ChaCha8Rng) -> DVector<f64> + Sync + Send,
{
    let invalid = |key: &str, message: String| SemError::InvalidSpec { key: key.into(), message };
    if dim < 2 {
        return Err(invalid("dim", "need at least one covariate".into()));
    }
    if shifts.len() > dim - 1 {
        return Err(invalid("shifts", format!("{} shifted environments exceed p = {}", shifts.len(), dim - 1)));
    }
    if let Some(bad) = shifts.iter().position(|s| s.len() != dim) {
        return Err(invalid("shifts", format!("shift {bad} has length {} (expected {dim})", shifts[bad].len())));
    }
    if n == 0 {
        return Err(invalid("n", "at least one draw is required".into()));
    }
    let mut all = Vec::with_capacity(dim);
    all.push(DVector::zeros(dim));
    all.extend(shifts.iter().cloned());
    all.resize(dim, DVector::zeros(dim));

    let draws = par::map_range(exec, n, |u| embed_one(&f, &all, &noise, seed, u)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let singular_rejected = draws.iter().map(|d| d.redraws).sum();
    let max_reconstruction_error = draws.iter().map(|d| d.reconstruction_error).fold(0.0, f64::max);
    Ok(EmbeddingSet { draws, singular_rejected, max_reconstruction_error })
}
