//! Second-moment summaries of environment samples.
//!
//! Everything downstream of the data consumes [`EnvironmentMoments`] only, so
//! population moments (from a known SEM) and plug-in moments (from samples) share
//! the same estimation path.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentsError {
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("sample has no rows")]
    EmptySample,
    #[error("X has {x_rows} rows but Y has {y_len} entries")]
    RowMismatch { x_rows: usize, y_len: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("G is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("G is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("g_Y must be non-negative, got {0}")]
    NegativeTargetMoment(f64),
    #[error("gamma must be finite and non-negative, got {0}")]
    InvalidGamma(f64),
}

/// Which environment a sample or moment set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvLabel {
    Observational,
    /// Shifted environment `A_i`, 1-based.
    Shifted(usize),
}

impl fmt::Display for EnvLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvLabel::Observational => write!(f, "O"),
            EnvLabel::Shifted(i) => write!(f, "A{i}"),
        }
    }
}

/// Sample size behind a moment set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleCount {
    Finite(usize),
    Population(Population),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Population {
    #[serde(rename = "POPULATION")]
    Marker,
}

impl SampleCount {
    pub const POPULATION: SampleCount = SampleCount::Population(Population::Marker);
}

/// `n` observations of `(X, Y)`; row `u` of `x` pairs with `y[u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub env: EnvLabel,
}

impl EnvironmentSample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, env: EnvLabel) -> Result<Self, MomentsError> {
        if x.nrows() != y.len() {
            return Err(MomentsError::RowMismatch { x_rows: x.nrows(), y_len: y.len() });
        }
        Ok(EnvironmentSample { x, y, env })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// `G = E[XᵀX]`, `Z = E[XᵀY]`, `g_Y = E[Y²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMoments {
    #[serde(rename = "G", with = "crate::io::row_major")]
    pub g: DMatrix<f64>,
    #[serde(rename = "Z", with = "crate::io::vector")]
    pub z: DVector<f64>,
    pub g_y: f64,
    pub n: SampleCount,
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_REL_TOL: f64 = 1e-10;

impl EnvironmentMoments {
    /// Validates and normalizes: symmetrizes `G`, clips eigenvalues in
    /// `[-1e-10·tr(G)/p, 0)` to zero, rejects anything more negative.
    pub fn new(g: DMatrix<f64>, z: DVector<f64>, g_y: f64, n: SampleCount) -> Result<Self, MomentsError> {
        let p = z.len();
        if g.shape() != (p, p) || p == 0 {
            return Err(MomentsError::Dimension(format!("G is {:?}, Z has length {p}", g.shape())));
        }
        if g.iter().chain(z.iter()).any(|v| !v.is_finite()) || !g_y.is_finite() {
            return Err(MomentsError::NonFiniteInput("moments"));
        }
        let scale = g.amax().max(1.0);
        let asym = (&g - g.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(MomentsError::NotSymmetric(asym));
        }
        if g_y < 0.0 {
            return Err(MomentsError::NegativeTargetMoment(g_y));
        }
        let g = clip_psd((&g + g.transpose()) * 0.5)?;
        Ok(EnvironmentMoments { g, z, g_y, n })
    }

    pub fn p(&self) -> usize {
        self.z.len()
    }

    /// Every entry multiplied by `s`.
    pub fn scaled(&self, s: f64) -> EnvironmentMoments {
        EnvironmentMoments { g: &self.g * s, z: &self.z * s, g_y: self.g_y * s, n: self.n }
    }
}

fn clip_psd(g: DMatrix<f64>) -> Result<DMatrix<f64>, MomentsError> {
    let p = g.nrows();
    let eig = SymmetricEigen::new(g.clone());
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(g);
    }
    let tol = PSD_REL_TOL * g.trace().abs() / p as f64;
    if min < -tol {
        return Err(MomentsError::NotPsd(min));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// Plug-in moments with the `1/n` normalization.
pub fn estimate_moments(s: &EnvironmentSample) -> Result<EnvironmentMoments, MomentsError> {
    let n = s.n();
    if n == 0 {
        return Err(MomentsError::EmptySample);
    }
    if s.x.iter().any(|v| !v.is_finite()) {
        return Err(MomentsError::NonFiniteInput("X"));
    }
    if s.y.iter().any(|v| !v.is_finite()) {
        return Err(MomentsError::NonFiniteInput("Y"));
    }
    let inv = 1.0 / n as f64;
    let g = s.x.tr_mul(&s.x) * inv;
    let z = s.x.tr_mul(&s.y) * inv;
    let g_y = s.y.norm_squared() * inv;
    EnvironmentMoments::new((&g + g.transpose()) * 0.5, z, g_y, SampleCount::Finite(n))
}

/// `G_+ + γG_Δ = (1+γ)G_i + (1−γ)G_O` and the matching vector.
pub fn combine_plusdelta(
    env_i: &EnvironmentMoments,
    env_o: &EnvironmentMoments,
    gamma: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), MomentsError> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(MomentsError::InvalidGamma(gamma));
    }
    if env_i.p() != env_o.p() {
        return Err(MomentsError::Dimension(format!("{} vs {}", env_i.p(), env_o.p())));
    }
    let gc = &env_i.g * (1.0 + gamma) + &env_o.g * (1.0 - gamma);
    let zc = &env_i.z * (1.0 + gamma) + &env_o.z * (1.0 - gamma);
    Ok((gc, zc))
}
