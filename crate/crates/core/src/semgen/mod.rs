//! Multi-environment data from a linear SEM with a random transfer matrix.
//!
//! Every environment solves `(Y, X) = (I − B)⁻¹(ε + A)` with `B` drawn from a finite
//! mixture `{B_l, π_l}`, noise `ε` with covariance `Σ_ε` and a shift `A` with covariance
//! `Σ_{A_i}` (zero for the observational environment). `B`, `ε` and `A` are drawn
//! independently and shifts have mean zero, so
//!
//! ```text
//! E[(Y, X)(Y, X)ᵀ] = Σ_l π_l T_l (Σ_ε + Σ_A) T_lᵀ,   T_l = (I − B_l)⁻¹
//! ```
//!
//! is available in closed form through [`population_moments`].

mod embed;

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{EnvLabel, EnvironmentMoments, EnvironmentSample, MomentsError, SampleCount};
use crate::par::{self, Exec};

pub use embed::{embed_nonlinear, EmbeddingSet, NonlinearEmbedding};

/// Largest accepted condition number of `I − B_l`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SemError {
    #[error("spec key `{key}`: {message}")]
    InvalidSpec { key: String, message: String },
    #[error("cannot parse spec: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot read spec {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("environment {0} does not exist in this spec")]
    UnknownEnvironment(EnvLabel),
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error("D is numerically singular in {rejected} consecutive draws")]
    SingularD { rejected: usize },
    #[error("fixed-point iteration did not converge for environment {env} (last step {step:.3e})")]
    FixedPointDivergence { env: usize, step: f64 },
}

fn invalid(key: &str, message: impl Into<String>) -> SemError {
    SemError::InvalidSpec { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Gaussian,
    /// Independent symmetric uniforms with unit variance, then correlated.
    Uniform,
}

/// On-disk form of a spec; matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    p: usize,
    k: usize,
    seed: u64,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<f64>>>,
    probs: Vec<f64>,
    noise_cov: Vec<Vec<f64>>,
    shift_covs: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift_means: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    distribution: Distribution,
}

/// Validated SEM description.
#[derive(Debug, Clone, PartialEq)]
pub struct SemSpec {
    pub p: usize,
    pub k: usize,
    pub seed: u64,
    pub b: Vec<DMatrix<f64>>,
    pub probs: Vec<f64>,
    pub noise_cov: DMatrix<f64>,
    pub shift_covs: Vec<DMatrix<f64>>,
    pub distribution: Distribution,
    /// `(I − B_l)⁻¹`.
    transfer: Vec<DMatrix<f64>>,
    noise_factor: DMatrix<f64>,
    shift_factors: Vec<DMatrix<f64>>,
    conditions: Vec<f64>,
}

fn matrix(key: &str, rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>, SemError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(invalid(key, format!("expected a {dim}x{dim} matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(key, "non-finite entry"));
    }
    Ok(DMatrix::from_row_iterator(dim, dim, rows.iter().flatten().copied()))
}

/// Symmetric square root factor `L` with `L·Lᵀ = S` for a PSD `S`.
fn psd_factor(key: &str, s: &DMatrix<f64>) -> Result<DMatrix<f64>, SemError> {
    let asym = (s - s.transpose()).amax();
    if asym > 1e-12 * (1.0 + s.amax()) {
        return Err(invalid(key, format!("matrix is not symmetric (asymmetry {asym:.3e})")));
    }
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let floor = -1e-10 * (1.0 + eig.eigenvalues.amax());
    if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v < floor) {
        return Err(invalid(key, format!("matrix is not positive semi-definite (eigenvalue {bad:.3e})")));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

impl SemSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SemError> {
        let raw: RawSpec = toml::from_str(text)?;
        SemSpec::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self, SemError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SemError::Read { path: path.display().to_string(), source })?;
        SemSpec::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        let raw = RawSpec {
            p: self.p,
            k: self.k,
            seed: self.seed,
            b: self.b.iter().map(rows).collect(),
            probs: self.probs.clone(),
            noise_cov: rows(&self.noise_cov),
            shift_covs: self.shift_covs.iter().map(rows).collect(),
            shift_means: None,
            distribution: self.distribution,
        };
        toml::to_string(&raw).expect("spec serializes")
    }

    /// Builds and validates a spec from matrices.
    pub fn new(
        b: Vec<DMatrix<f64>>,
        probs: Vec<f64>,
        noise_cov: DMatrix<f64>,
        shift_covs: Vec<DMatrix<f64>>,
        seed: u64,
    ) -> Result<Self, SemError> {
        let dim = noise_cov.nrows();
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        SemSpec::from_raw(RawSpec {
            p: dim.saturating_sub(1),
            k: shift_covs.len(),
            seed,
            b: b.iter().map(rows).collect(),
            probs,
            noise_cov: rows(&noise_cov),
            shift_covs: shift_covs.iter().map(rows).collect(),
            shift_means: None,
            distribution: Distribution::Gaussian,
        })
    }

    pub fn with_distribution(mut self, d: Distribution) -> Self {
        self.distribution = d;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn from_raw(raw: RawSpec) -> Result<Self, SemError> {
        if raw.p < 1 {
            return Err(invalid("p", "must be at least 1"));
        }
        if raw.k < 1 {
            return Err(invalid("k", "must be at least 1"));
        }
        let dim = raw.p + 1;
        if raw.b.is_empty() {
            return Err(invalid("B", "at least one realization is required"));
        }
        if raw.probs.len() != raw.b.len() {
            return Err(invalid("probs", format!("{} probabilities for {} B realizations", raw.probs.len(), raw.b.len())));
        }
        if raw.probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(invalid("probs", "probabilities must be finite and non-negative"));
        }
        let total: f64 = raw.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("probs", format!("probabilities sum to {total}, expected 1")));
        }
        let b: Vec<DMatrix<f64>> =
            raw.b.iter().enumerate().map(|(l, m)| matrix(&format!("B[{l}]"), m, dim)).collect::<Result<_, _>>()?;
        let mut transfer = Vec::with_capacity(b.len());
        let mut conditions = Vec::with_capacity(b.len());
        for (l, bl) in b.iter().enumerate() {
            let ib = DMatrix::identity(dim, dim) - bl;
            let sv = ib.clone().singular_values();
            let cond = sv.max() / sv.min();
            if !(cond <= MAX_CONDITION) {
                return Err(invalid(&format!("B[{l}]"), format!("I - B is ill-conditioned (condition number {cond:.3e})")));
            }
            conditions.push(cond);
            transfer.push(ib.try_inverse().ok_or_else(|| invalid(&format!("B[{l}]"), "I - B is singular"))?);
        }
        let noise_cov = matrix("noise_cov", &raw.noise_cov, dim)?;
        let noise_factor = psd_factor("noise_cov", &noise_cov)?;
        if raw.shift_covs.len() != raw.k {
            return Err(invalid("shift_covs", format!("{} matrices for k = {}", raw.shift_covs.len(), raw.k)));
        }
        let shift_covs: Vec<DMatrix<f64>> = raw
            .shift_covs
            .iter()
            .enumerate()
            .map(|(i, m)| matrix(&format!("shift_covs[{i}]"), m, dim))
            .collect::<Result<_, _>>()?;
        let shift_factors = shift_covs
            .iter()
            .enumerate()
            .map(|(i, m)| psd_factor(&format!("shift_covs[{i}]"), m))
            .collect::<Result<_, _>>()?;
        if let Some(means) = &raw.shift_means {
            if means.iter().flatten().any(|&v| v != 0.0) {
                return Err(invalid(
                    "shift_means",
                    "shifts must have zero mean: a nonzero mean breaks the orthogonality E[ε·Aᵀ | B] = 0 whenever there is noise",
                ));
            }
        }
        Ok(SemSpec {
            p: raw.p,
            k: raw.k,
            seed: raw.seed,
            b,
            probs: raw.probs,
            noise_cov,
            shift_covs,
            distribution: raw.distribution,
            transfer,
            noise_factor,
            shift_factors,
            conditions,
        })
    }

    /// Condition numbers of `I − B_l`.
    pub fn conditions(&self) -> &[f64] {
        &self.conditions
    }

    pub fn transfer(&self, l: usize) -> &DMatrix<f64> {
        &self.transfer[l]
    }

    fn shift_factor(&self, env: EnvLabel) -> Result<Option<&DMatrix<f64>>, SemError> {
        match env {
            EnvLabel::Observational => Ok(None),
            EnvLabel::Shifted(i) if (1..=self.k).contains(&i) => Ok(Some(&self.shift_factors[i - 1])),
            EnvLabel::Shifted(_) => Err(SemError::UnknownEnvironment(env)),
        }
    }

    pub fn environments(&self) -> Vec<EnvLabel> {
        std::iter::once(EnvLabel::Observational).chain((1..=self.k).map(EnvLabel::Shifted)).collect()
    }
}

/// Latent draws behind a sample, row `u` belonging to observation `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub b_index: Vec<usize>,
    pub noise: DMatrix<f64>,
    pub shift: DMatrix<f64>,
}

fn env_code(env: EnvLabel) -> u64 {
    match env {
        EnvLabel::Observational => 0,
        EnvLabel::Shifted(i) => i as u64,
    }
}

/// Independent stream for observation `u` of `env`.
fn observation_rng(seed: u64, env: EnvLabel, u: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&env_code(env).to_le_bytes());
    key[16..24].copy_from_slice(&(u as u64).to_le_bytes());
    key[24..].copy_from_slice(b"semgen01");
    ChaCha8Rng::from_seed(key)
}

fn standard_draws(rng: &mut ChaCha8Rng, dim: usize, dist: Distribution) -> DVector<f64> {
    let half_width = 3f64.sqrt();
    DVector::from_fn(dim, |_, _| match dist {
        Distribution::Gaussian => rng.sample::<f64, _>(StandardNormal),
        Distribution::Uniform => rng.random_range(-half_width..half_width),
    })
}

fn pick(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    if probs.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

struct Draw {
    l: usize,
    eps: DVector<f64>,
    shift: DVector<f64>,
    v: DVector<f64>,
}

fn draw(spec: &SemSpec, env: EnvLabel, shift: Option<&DMatrix<f64>>, u: usize) -> Draw {
    let dim = spec.p + 1;
    let mut rng = observation_rng(spec.seed, env, u);
    let l = pick(&mut rng, &spec.probs);
    let eps = &spec.noise_factor * standard_draws(&mut rng, dim, spec.distribution);
    let shift = match shift {
        Some(f) => f * standard_draws(&mut rng, dim, spec.distribution),
        None => DVector::zeros(dim),
    };
    let v = &spec.transfer[l] * (&eps + &shift);
    Draw { l, eps, shift, v }
}

fn collect(spec: &SemSpec, env: EnvLabel, n: usize, exec: Exec) -> Result<Vec<Draw>, SemError> {
    if n == 0 {
        return Err(MomentsError::EmptySample.into());
    }
    let shift = spec.shift_factor(env)?;
    Ok(par::map_range(exec, n, |u| draw(spec, env, shift, u)))
}

fn to_sample(spec: &SemSpec, env: EnvLabel, draws: &[Draw]) -> Result<EnvironmentSample, SemError> {
    let n = draws.len();
    let p = spec.p;
    let x = DMatrix::from_fn(n, p, |u, c| draws[u].v[c + 1]);
    let y = DVector::from_fn(n, |u, _| draws[u].v[0]);
    Ok(EnvironmentSample::new(x, y, env)?)
}

/// `n` i.i.d. observations of one environment; identical for any thread count.
pub fn sample_environment(spec: &SemSpec, env: EnvLabel, n: usize) -> Result<EnvironmentSample, SemError> {
    sample_environment_with(spec, env, n, Exec::default())
}

pub fn sample_environment_with(spec: &SemSpec, env: EnvLabel, n: usize, exec: Exec) -> Result<EnvironmentSample, SemError> {
    let draws = collect(spec, env, n, exec)?;
    to_sample(spec, env, &draws)
}

/// Like [`sample_environment`], also returning `B` indices, noise and shifts.
pub fn sample_environment_with_latents(
    spec: &SemSpec,
    env: EnvLabel,
    n: usize,
) -> Result<(EnvironmentSample, Latents), SemError> {
    let draws = collect(spec, env, n, Exec::default())?;
    let dim = spec.p + 1;
    let latents = Latents {
        b_index: draws.iter().map(|d| d.l).collect(),
        noise: DMatrix::from_fn(draws.len(), dim, |u, c| draws[u].eps[c]),
        shift: DMatrix::from_fn(draws.len(), dim, |u, c| draws[u].shift[c]),
    };
    Ok((to_sample(spec, env, &draws)?, latents))
}

/// Full `(p+1)×(p+1)` second-moment matrix of `(Y, X)` in `env`.
pub fn population_second_moment(spec: &SemSpec, env: EnvLabel) -> Result<DMatrix<f64>, SemError> {
    let cov = match env {
        EnvLabel::Observational => spec.noise_cov.clone(),
        EnvLabel::Shifted(i) if (1..=spec.k).contains(&i) => &spec.noise_cov + &spec.shift_covs[i - 1],
        EnvLabel::Shifted(_) => return Err(SemError::UnknownEnvironment(env)),
    };
    let dim = spec.p + 1;
    let mut s = DMatrix::zeros(dim, dim);
    for (t, &pi) in spec.transfer.iter().zip(&spec.probs) {
        s += (t * &cov * t.transpose()) * pi;
    }
    Ok((&s + s.transpose()) * 0.5)
}

/// Exact moments: `G = S[X, X]`, `Z = S[X, Y]`, `g_Y = S[Y, Y]`.
pub fn population_moments(spec: &SemSpec, env: EnvLabel) -> Result<EnvironmentMoments, SemError> {
    let s = population_second_moment(spec, env)?;
    let p = spec.p;
    let g = s.view((1, 1), (p, p)).into_owned();
    let z = s.view((1, 0), (p, 1)).column(0).into_owned();
    Ok(EnvironmentMoments::new(g, z, s[(0, 0)], SampleCount::POPULATION)?)
}

/// Observational and all shifted samples.
pub fn sample_all(spec: &SemSpec, n: usize, exec: Exec) -> Result<(EnvironmentSample, Vec<EnvironmentSample>), SemError> {
    let obs = sample_environment_with(spec, EnvLabel::Observational, n, exec)?;
    let shifted = (1..=spec.k)
        .map(|i| sample_environment_with(spec, EnvLabel::Shifted(i), n, exec))
        .collect::<Result<_, _>>()?;
    Ok((obs, shifted))
}

/// Population moments of the observational and all shifted environments.
pub fn population_all(spec: &SemSpec) -> Result<(EnvironmentMoments, Vec<EnvironmentMoments>), SemError> {
    let obs = population_moments(spec, EnvLabel::Observational)?;
    let shifted = (1..=spec.k).map(|i| population_moments(spec, EnvLabel::Shifted(i))).collect::<Result<_, _>>()?;
    Ok((obs, shifted))
}
