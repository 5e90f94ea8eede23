//! Brute-force checks: lattice minimization of the envelope and random-direction
//! maximization of the shifted risk.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::par::{self, Exec};
use crate::risk::WorstRiskObjective;

/// Largest number of lattice points a single grid may have.
pub const GRID_GUARD: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid of {points:.3e} points exceeds the guard of {GRID_GUARD:.0e}")]
    GridGuardExceeded { points: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no penalized risk is strictly convex; cannot bound the minimizer")]
    Unbounded,
}

/// The lattice `center + {−r, −r+δ, …, r}^p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub radius: f64,
    pub step: f64,
    pub dim: usize,
    pub center: Vec<f64>,
}

impl GridSpec {
    pub fn new(radius: f64, step: f64, dim: usize) -> Result<Self, OracleError> {
        GridSpec::centered(radius, step, vec![0.0; dim])
    }

    pub fn centered(radius: f64, step: f64, center: Vec<f64>) -> Result<Self, OracleError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(OracleError::InvalidGrid(format!("radius {radius} must be positive")));
        }
        if !(step > 0.0 && step <= radius) {
            return Err(OracleError::InvalidGrid(format!("step {step} must lie in (0, radius]")));
        }
        if center.is_empty() {
            return Err(OracleError::InvalidGrid("dimension must be at least 1".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(OracleError::InvalidGrid("non-finite center".into()));
        }
        let spec = GridSpec { radius, step, dim: center.len(), center };
        let points = (spec.per_axis() as f64).powi(spec.dim as i32);
        if points > GRID_GUARD {
            return Err(OracleError::GridGuardExceeded { points });
        }
        Ok(spec)
    }

    pub fn per_axis(&self) -> usize {
        (2.0 * self.radius / self.step + 1e-9).floor() as usize + 1
    }

    pub fn points(&self) -> usize {
        self.per_axis().pow(self.dim as u32)
    }

    fn coord(&self, axis: usize, m: usize) -> f64 {
        self.center[axis] - self.radius + m as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub beta: Vec<f64>,
    pub value: f64,
    pub evaluated: usize,
}

/// Lattice argmin of `f`, first in lexicographic order among ties.
pub fn grid_minimize_fn<F>(f: F, grid: &GridSpec, exec: Exec) -> GridResult
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let m = grid.per_axis();
    let p = grid.dim;
    let inner = m.pow(p as u32 - 1);
    // one shard per value of the first coordinate
    let shards = par::map_range(exec, m, |first| {
        let mut beta = vec![0.0; p];
        let mut idx = vec![0usize; p];
        idx[0] = first;
        let mut best = (f64::INFINITY, Vec::new());
        for flat in 0..inner {
            let mut rest = flat;
            for axis in (1..p).rev() {
                idx[axis] = rest % m;
                rest /= m;
            }
            for axis in 0..p {
                beta[axis] = grid.coord(axis, idx[axis]);
            }
            let v = f(&beta);
            if v < best.0 || (best.1.is_empty() && !v.is_nan()) {
                best = (v, beta.clone());
            }
        }
        best
    });
    let mut best = (f64::INFINITY, Vec::new());
    for s in shards {
        if !s.1.is_empty() && (s.0 < best.0 || best.1.is_empty()) {
            best = s;
        }
    }
    GridResult { beta: best.1, value: best.0, evaluated: m.pow(p as u32) }
}

pub fn grid_minimize(obj: &WorstRiskObjective, grid: &GridSpec) -> Result<GridResult, OracleError> {
    grid_minimize_with(obj, grid, Exec::default())
}

pub fn grid_minimize_with(obj: &WorstRiskObjective, grid: &GridSpec, exec: Exec) -> Result<GridResult, OracleError> {
    if grid.dim != obj.p() {
        return Err(OracleError::InvalidGrid(format!("grid dimension {} for p = {}", grid.dim, obj.p())));
    }
    Ok(grid_minimize_fn(|b| obj.value_slice(b), grid, exec))
}

/// Radius of a ball around the origin containing every minimizer of `f`.
///
/// Any minimizer satisfies `h_i(β) ≤ f(0)` for every `i`; for a strictly convex
/// `h_i = βᵀGβ − 2βᵀz + c` this gives `λ_min|β|² − 2|z||β| + c ≤ f(0)`.
pub fn minimizer_radius(obj: &WorstRiskObjective) -> Result<f64, OracleError> {
    let f0 = obj.value_slice(&vec![0.0; obj.p()]);
    obj.penalized_all()
        .iter()
        .filter_map(|h| {
            let lam = h.min_curvature();
            if !(lam > 0.0) {
                return None;
            }
            let w = h.z.norm();
            let slack = (f0 - h.c).max(0.0);
            Some((w + (w * w + lam * slack).sqrt()) / lam)
        })
        .min_by(f64::total_cmp)
        .ok_or(OracleError::Unbounded)
}

/// How [`refined_minimize`] ended up searching.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchTrace {
    pub radius: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
    pub recenterings: usize,
    pub evaluated: usize,
}

/// Points per axis of the first pass, by dimension.
const COARSE_PER_AXIS: [usize; 3] = [200_001, 401, 81];
/// Step shrink factor between refinement levels.
const REFINE: f64 = 10.0;
/// Half-width of a refinement window, in steps of the previous level.
const WINDOW: f64 = 4.0;
const MAX_RECENTER: usize = 50;

/// Lattice search at step `fine_step` over the ball given by [`minimizer_radius`].
pub fn refined_minimize(
    obj: &WorstRiskObjective,
    fine_step: f64,
    exec: Exec,
) -> Result<(GridResult, SearchTrace), OracleError> {
    let radius = minimizer_radius(obj)?;
    refined_minimize_fn(|b| obj.value_slice(b), obj.p(), radius, fine_step, exec)
}

/// Lattice search for `f` at step `fine_step` over the cube of half-width about `radius`.
///
/// A coarse lattice over the whole cube is scanned first. Each following level scans a
/// window around the current argmin with a step ten times smaller, moving the window
/// while the argmin sits on its boundary. For `p = 1` the first pass is usually already
/// at `fine_step`. Exact for convex `f`.
pub fn refined_minimize_fn<F>(
    f: F,
    p: usize,
    radius: f64,
    fine_step: f64,
    exec: Exec,
) -> Result<(GridResult, SearchTrace), OracleError>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if !(1..=3).contains(&p) {
        return Err(OracleError::InvalidGrid(format!("oracle supports p ≤ 3, got {p}")));
    }
    if !(fine_step > 0.0 && radius.is_finite() && radius >= 0.0) {
        return Err(OracleError::InvalidGrid(format!("radius {radius}, step {fine_step}")));
    }
    let radius = (radius * 1.05).max(fine_step) + fine_step;
    let coarse_step = (2.0 * radius / (COARSE_PER_AXIS[p - 1] - 1) as f64).max(fine_step);
    let coarse = grid_minimize_fn(&f, &GridSpec::new(radius, coarse_step, p)?, exec);
    let mut trace = SearchTrace { radius, coarse_step, fine_step, recenterings: 0, evaluated: coarse.evaluated };
    let mut best = coarse;
    let mut prev = coarse_step;
    while prev > fine_step {
        let step = (prev / REFINE).max(fine_step);
        // keep each level aligned with multiples of its step
        let snap = |v: f64| (v / step).round() * step;
        let half = (WINDOW * prev / step).ceil() * step;
        let mut center: Vec<f64> = best.beta.iter().map(|&v| snap(v)).collect();
        let mut moves = 0;
        loop {
            let fine = grid_minimize_fn(&f, &GridSpec::centered(half, step, center.clone())?, exec);
            trace.evaluated += fine.evaluated;
            let on_edge = fine.beta.iter().zip(&center).any(|(b, c)| (b - c).abs() >= half - 0.5 * step);
            let moved = fine.beta.clone();
            // a finer level always replaces the coarser answer
            best = fine;
            if !on_edge || moves >= MAX_RECENTER {
                break;
            }
            moves += 1;
            center = moved.iter().map(|&v| snap(v)).collect();
        }
        trace.recenterings += moves;
        prev = step;
    }
    best.evaluated = trace.evaluated;
    Ok((best, trace))
}

/// Largest `(1+τ)Σ w_i² R_i(β) − τR_O(β)` over `n_dirs` random unit `w` and the
/// coordinate axes.
///
/// Directions come from one stream, so a larger `n_dirs` extends the same set.
pub fn sphere_max_risk(obj: &WorstRiskObjective, beta: &DVector<f64>, n_dirs: usize, seed: u64) -> f64 {
    let k = obj.k();
    let tau = obj.tau();
    let risks = obj.env_risks(beta);
    let r_o = obj.risk_o().eval(beta);
    let at = |w2: &dyn Fn(usize) -> f64| -> f64 {
        let mixed: f64 = (0..k).map(|i| w2(i) * risks[i]).sum();
        (1.0 + tau) * mixed - tau * r_o
    };
    let mut best = f64::NEG_INFINITY;
    for axis in 0..k {
        best = best.max(at(&|i| if i == axis { 1.0 } else { 0.0 }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; k];
    for _ in 0..n_dirs {
        for wi in w.iter_mut() {
            *wi = StandardNormal.sample(&mut rng);
        }
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            continue;
        }
        best = best.max(at(&|i| w[i] * w[i] / norm2));
    }
    best
}
