//! Quadratic risks, the penalized per-environment risks `h_i`, and the worst-risk envelope.
//!
//! A [`QuadraticRisk`] `(G, z, c)` stands for `R(β) = βᵀGβ − 2βᵀz + c`. For shifted
//! environments `R_1, …, R_k`, observational risk `R_O` and shift strength `γ ≥ 0`,
//! with `τ = (γ − 1)/2`:
//!
//! ```text
//! h_i(β) = (1 + τ)·R_i(β) − τ·R_O(β)
//! f(β)   = max_i h_i(β)
//! ```
//!
//! `f` equals the worst risk over all shifts at most `γ` times as strong as a
//! unit-norm combination of the observed shifts, and coincides with
//! `½R_+^{w*}(β) + ((1+2τ)/2)R_Δ^{w*}(β)` where `w*` puts all its weight on the
//! environments of maximal risk. Note that `R_+ + γR_Δ = 2f`; the factor does not
//! move any minimizer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::EnvironmentMoments;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("gamma must be finite and non-negative, got {0}")]
    InvalidGamma(f64),
    #[error("at least one shifted environment is required")]
    NoEnvironments,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRisk {
    #[serde(with = "crate::io::row_major")]
    pub g: DMatrix<f64>,
    #[serde(with = "crate::io::vector")]
    pub z: DVector<f64>,
    pub c: f64,
}

impl QuadraticRisk {
    pub fn new(g: DMatrix<f64>, z: DVector<f64>, c: f64) -> Result<Self, RiskError> {
        if g.shape() != (z.len(), z.len()) {
            return Err(RiskError::Dimension(format!("G is {:?}, z has length {}", g.shape(), z.len())));
        }
        Ok(QuadraticRisk { g, z, c })
    }

    /// Risk of the environment that generated the moments; equals the mean squared residual.
    pub fn from_moments(m: &EnvironmentMoments) -> Self {
        QuadraticRisk { g: m.g.clone(), z: m.z.clone(), c: m.g_y }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn eval(&self, beta: &DVector<f64>) -> f64 {
        beta.dot(&(&self.g * beta)) - 2.0 * beta.dot(&self.z) + self.c
    }

    pub fn eval_slice(&self, beta: &[f64]) -> f64 {
        let p = self.dim();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for a in 0..p {
            let mut row = 0.0;
            for b in 0..p {
                row += self.g[(a, b)] * beta[b];
            }
            quad += beta[a] * row;
            lin += beta[a] * self.z[a];
        }
        quad - 2.0 * lin + self.c
    }

    /// `∇R(β) = 2(Gβ − z)`.
    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.g * beta - &self.z) * 2.0
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &QuadraticRisk, b: f64) -> QuadraticRisk {
        QuadraticRisk { g: &self.g * a + &other.g * b, z: &self.z * a + &other.z * b, c: self.c * a + other.c * b }
    }

    pub fn scaled(&self, s: f64) -> QuadraticRisk {
        QuadraticRisk { g: &self.g * s, z: &self.z * s, c: self.c * s }
    }

    /// Smallest eigenvalue of the symmetric part of `G`.
    pub fn min_curvature(&self) -> f64 {
        let sym = (&self.g + self.g.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// Value of the envelope at a point together with the environments attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstRisk {
    pub value: f64,
    /// 0-based indices of the shifted environments within the tie band of the maximum.
    pub argmax: Vec<usize>,
}

/// Tie band used to decide which environments attain a maximum.
pub fn tie_tol(max: f64) -> f64 {
    1e-9 * (1.0 + max.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstRiskObjective {
    risks: Vec<QuadraticRisk>,
    risk_o: QuadraticRisk,
    gamma: f64,
    penalized: Vec<QuadraticRisk>,
}

impl WorstRiskObjective {
    pub fn new(risks: Vec<QuadraticRisk>, risk_o: QuadraticRisk, gamma: f64) -> Result<Self, RiskError> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(RiskError::InvalidGamma(gamma));
        }
        if risks.is_empty() {
            return Err(RiskError::NoEnvironments);
        }
        let p = risk_o.dim();
        if let Some(bad) = risks.iter().find(|r| r.dim() != p) {
            return Err(RiskError::Dimension(format!("shifted risk has dimension {}, observational {p}", bad.dim())));
        }
        let tau = (gamma - 1.0) / 2.0;
        let penalized = risks.iter().map(|r| r.combine(1.0 + tau, &risk_o, -tau)).collect();
        Ok(WorstRiskObjective { risks, risk_o, gamma, penalized })
    }

    pub fn from_moments(
        observational: &EnvironmentMoments,
        shifted: &[EnvironmentMoments],
        gamma: f64,
    ) -> Result<Self, RiskError> {
        WorstRiskObjective::new(
            shifted.iter().map(QuadraticRisk::from_moments).collect(),
            QuadraticRisk::from_moments(observational),
            gamma,
        )
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, RiskError> {
        WorstRiskObjective::new(self.risks.clone(), self.risk_o.clone(), gamma)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `τ = (γ − 1)/2`.
    pub fn tau(&self) -> f64 {
        (self.gamma - 1.0) / 2.0
    }

    pub fn k(&self) -> usize {
        self.risks.len()
    }

    pub fn p(&self) -> usize {
        self.risk_o.dim()
    }

    pub fn risks(&self) -> &[QuadraticRisk] {
        &self.risks
    }

    pub fn risk_o(&self) -> &QuadraticRisk {
        &self.risk_o
    }

    /// `h_i` as a quadratic, 0-based `i`.
    pub fn penalized(&self, i: usize) -> &QuadraticRisk {
        &self.penalized[i]
    }

    pub fn penalized_all(&self) -> &[QuadraticRisk] {
        &self.penalized
    }

    pub fn env_risks(&self, beta: &DVector<f64>) -> Vec<f64> {
        self.risks.iter().map(|r| r.eval(beta)).collect()
    }

    /// `f(β)` only, on a raw slice; used by the grid oracle.
    pub fn value_slice(&self, beta: &[f64]) -> f64 {
        self.penalized.iter().map(|h| h.eval_slice(beta)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        self.penalized.iter().map(|h| h.eval(beta)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_i h_i(β)` and the environments within [`tie_tol`] of it.
    pub fn worst_risk(&self, beta: &DVector<f64>) -> WorstRisk {
        self.worst_risk_within(beta, tie_tol)
    }

    /// Same as [`worst_risk`](Self::worst_risk) with a caller-supplied tie band.
    pub fn worst_risk_within(&self, beta: &DVector<f64>, band: impl Fn(f64) -> f64) -> WorstRisk {
        let values: Vec<f64> = self.penalized.iter().map(|h| h.eval(beta)).collect();
        let value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = band(value);
        let argmax = values.iter().enumerate().filter(|(_, v)| value - **v <= tol).map(|(i, _)| i).collect();
        WorstRisk { value, argmax }
    }

    /// Unit-norm weights with zero mass on non-maximal `R_i(β)` and equal squared
    /// weights over tied maxima.
    pub fn optimal_weights(&self, beta: &DVector<f64>) -> DVector<f64> {
        weights_for(&self.env_risks(beta))
    }

    /// `½R_+^{w*}(β) + ((1+2τ)/2)·R_Δ^{w*}(β)`.
    pub fn decomposition_value(&self, beta: &DVector<f64>) -> f64 {
        let risks = self.env_risks(beta);
        let w = weights_for(&risks);
        let r_o = self.risk_o.eval(beta);
        let mixed: f64 = risks.iter().zip(w.iter()).map(|(r, wi)| wi * wi * r).sum();
        let plus = mixed + r_o;
        let delta = mixed - r_o;
        0.5 * plus + 0.5 * (1.0 + 2.0 * self.tau()) * delta
    }

    /// `(1+τ)Σ w_i² R_i(β) − τR_O(β)` for an arbitrary direction `w` (not normalized here).
    pub fn directional_value(&self, beta: &DVector<f64>, w: &[f64]) -> f64 {
        let tau = self.tau();
        let mixed: f64 = self.risks.iter().zip(w).map(|(r, wi)| wi * wi * r.eval(beta)).sum();
        (1.0 + tau) * mixed - tau * self.risk_o.eval(beta)
    }

    /// Every quadratic multiplied by `s`.
    pub fn scaled(&self, s: f64) -> WorstRiskObjective {
        WorstRiskObjective::new(self.risks.iter().map(|r| r.scaled(s)).collect(), self.risk_o.scaled(s), self.gamma)
            .expect("scaling keeps a valid objective")
    }
}

fn weights_for(risks: &[f64]) -> DVector<f64> {
    let max = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tol(max);
    let tied: Vec<bool> = risks.iter().map(|r| max - r <= tol).collect();
    let count = tied.iter().filter(|t| **t).count() as f64;
    let w = 1.0 / count.sqrt();
    DVector::from_iterator(risks.len(), tied.iter().map(|&t| if t { w } else { 0.0 }))
}
