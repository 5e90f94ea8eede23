#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use shiftrisk::moments::{EnvironmentMoments, SampleCount};
use shiftrisk::risk::QuadraticRisk;
use shiftrisk::semgen::{Distribution, SemSpec};
use shiftrisk::WorstRiskObjective;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

/// `L·Lᵀ / cols + ridge·I`, exactly symmetric.
pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize, ridge: f64) -> DMatrix<f64> {
    let l = gaussian_matrix(rng, dim, rank.max(1));
    let s = &l * l.transpose() / rank.max(1) as f64 + DMatrix::identity(dim, dim) * ridge;
    (&s + s.transpose()) * 0.5
}

/// Moments read off a `(p+1)×(p+1)` second-moment matrix of `(Y, X)`.
pub fn moments_from_joint(s: &DMatrix<f64>) -> EnvironmentMoments {
    let p = s.nrows() - 1;
    EnvironmentMoments::new(
        s.view((1, 1), (p, p)).into_owned(),
        s.view((1, 0), (p, 1)).column(0).into_owned(),
        s[(0, 0)],
        SampleCount::POPULATION,
    )
    .unwrap()
}

/// Observational joint moments plus `k` PSD shift contributions, so every penalized
/// Hessian `G_O + (1+τ)T_i` is positive definite for `γ ≥ 0`.
pub fn shifted_instance(rng: &mut ChaCha8Rng, p: usize, k: usize) -> (EnvironmentMoments, Vec<EnvironmentMoments>) {
    let s_o = random_psd(rng, p + 1, p + 3, 0.2);
    let shifted = (0..k)
        .map(|_| {
            let rank = rng.random_range(1..=p + 1);
            let t = random_psd(rng, p + 1, rank, 0.0) * rng.random_range(0.2..2.0);
            moments_from_joint(&(&s_o + t))
        })
        .collect();
    (moments_from_joint(&s_o), shifted)
}

/// Arbitrary quadratics, not necessarily convex after penalization.
pub fn random_objective(rng: &mut ChaCha8Rng, p: usize, k: usize, gamma: f64) -> WorstRiskObjective {
    let quad = |rng: &mut ChaCha8Rng| {
        let g = random_psd(rng, p, p, 0.05);
        let z = DVector::from_fn(p, |_, _| normal(rng));
        QuadraticRisk::new(g, z, rng.random_range(0.0..4.0)).unwrap()
    };
    let risks = (0..k).map(|_| quad(rng)).collect();
    WorstRiskObjective::new(risks, quad(rng), gamma).unwrap()
}

/// Random finite-mixture SEM with small feedback.
pub fn random_spec(rng: &mut ChaCha8Rng, p: usize, k: usize, mixtures: usize, seed: u64) -> SemSpec {
    let d = p + 1;
    let b: Vec<DMatrix<f64>> = (0..mixtures)
        .map(|_| DMatrix::from_fn(d, d, |r, c| if r == c { 0.0 } else { rng.random_range(-0.4..0.4) }))
        .collect();
    let mut probs: Vec<f64> = (0..mixtures).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= total);
    let last = 1.0 - probs[..mixtures - 1].iter().sum::<f64>();
    probs[mixtures - 1] = last;
    let noise = random_psd(rng, d, d, 0.1);
    let shifts = (0..k)
        .map(|_| {
            // shift only some coordinates
            let mask: Vec<bool> = (0..d).map(|_| rng.random_bool(0.7)).collect();
            let m = random_psd(rng, d, d, 0.05);
            DMatrix::from_fn(d, d, |r, c| if mask[r] && mask[c] { m[(r, c)] } else { 0.0 })
        })
        .collect();
    let dist = if rng.random_bool(0.5) { Distribution::Gaussian } else { Distribution::Uniform };
    SemSpec::new(b, probs, noise, shifts, seed).unwrap().with_distribution(dist)
}
