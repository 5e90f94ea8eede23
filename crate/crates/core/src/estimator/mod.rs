//! Exact worst-risk minimizer over a finite candidate set.
//!
//! Candidates are
//! * the stationary point of every penalized risk `h_i` ("inflexion" candidates),
//! * for every pair `i < j`, the minimizer of `h_i` on `{h_i = h_j}`, reached through the
//!   real roots of `P̃(λ) = det(M(λ))²·(h_i − h_j)(β(λ))`,
//! * for `p = 2` and `k ≥ 3`, the points where three penalized risks coincide.
//!
//! Each candidate is kept when one of its generating environments attains the
//! envelope there; the kept candidate with the smallest worst risk wins.

mod lagrange;
mod vertex;

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::io::FORMAT_VERSION;
use crate::par::{self, Exec};
use crate::polyalg::{PolyError, RootIsolationOptions, RootMode};
use crate::risk::{tie_tol, RiskError, WorstRiskObjective};

pub use lagrange::{
    build_lagrange_system, intersection_candidates, intersection_polynomial, intersection_polynomial_from_risks,
    pair_candidates, LagrangeSystem, PairReport, PairStatus, RejectedRoot, RootSummary, VerifiedRoot,
};
pub use vertex::{triple_tie_points, VertexReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("combined matrix of environment A{} is numerically singular", .0 + 1)]
    SingularCombination(usize),
    #[error("no candidate survived; see the report")]
    NoCandidate(Box<EstimatorReport>),
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub gamma: f64,
    pub root_mode: RootMode,
    pub c_n: u32,
    /// Relative radius (scaled by `1 + |λ|`) around roots of `det M(λ)` inside which roots of `P̃` are discarded.
    pub det_exclusion_tol: f64,
    /// Relative band for the equal-risk check and for envelope activity.
    pub envelope_tol: f64,
    /// Smallest-to-largest singular value ratio below which a linear solve is refused.
    pub singular_tol: f64,
    pub max_intervals: usize,
    /// Enumerate three-way ties when `p = 2`.
    pub triple_ties: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            gamma: 1.0,
            root_mode: RootMode::ExactRefine,
            c_n: 60,
            det_exclusion_tol: 1e-7,
            envelope_tol: 1e-6,
            singular_tol: 1e-10,
            max_intervals: 1 << 20,
            triple_ties: true,
            exec: Exec::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        EstimatorConfig { gamma, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(EstimatorError::InvalidConfig(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.c_n < 1 {
            return Err(EstimatorError::InvalidConfig("c_n must be at least 1".into()));
        }
        for (name, v) in [
            ("det_exclusion_tol", self.det_exclusion_tol),
            ("envelope_tol", self.envelope_tol),
            ("singular_tol", self.singular_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EstimatorError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_intervals == 0 {
            return Err(EstimatorError::InvalidConfig("max_intervals must be positive".into()));
        }
        Ok(())
    }

    pub fn root_options(&self) -> RootIsolationOptions {
        RootIsolationOptions { max_intervals: self.max_intervals, exec: self.exec, ..Default::default() }
    }
}

/// Where a candidate came from. Environment indices are 0-based; reports print `A{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Inflexion { env: usize },
    Intersection { i: usize, j: usize, lambda: f64 },
    Vertex { envs: [usize; 3] },
}

impl Provenance {
    pub fn envs(&self) -> Vec<usize> {
        match *self {
            Provenance::Inflexion { env } => vec![env],
            Provenance::Intersection { i, j, .. } => vec![i, j],
            Provenance::Vertex { envs } => envs.to_vec(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::Inflexion { .. } => "inflexion",
            Provenance::Intersection { .. } => "intersection",
            Provenance::Vertex { .. } => "vertex",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            Provenance::Intersection { lambda, .. } => Some(lambda),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Provenance::Inflexion { .. } => 0,
            Provenance::Intersection { .. } => 1,
            Provenance::Vertex { .. } => 2,
        }
    }

    /// Enumeration order: kind, then environments, then `λ`.
    pub fn order(&self, other: &Provenance) -> Ordering {
        self.rank()
            .cmp(&other.rank())
            .then_with(|| self.envs().cmp(&other.envs()))
            .then_with(|| self.lambda().unwrap_or(0.0).total_cmp(&other.lambda().unwrap_or(0.0)))
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.envs().iter().map(|e| format!("A{}", e + 1)).collect();
        match self.lambda() {
            Some(l) => write!(f, "{}({}; λ={l:.9})", self.kind(), labels.join(",")),
            None => write!(f, "{}({})", self.kind(), labels.join(",")),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let labels: Vec<String> = self.envs().iter().map(|e| format!("A{}", e + 1)).collect();
        let mut st = s.serialize_struct("Provenance", 3)?;
        st.serialize_field("kind", self.kind())?;
        st.serialize_field("envs", &labels)?;
        st.serialize_field("lambda", &self.lambda())?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub beta: DVector<f64>,
    pub provenance: Provenance,
    /// `f(β)`.
    pub objective: f64,
}

/// Solves `m·x = b` unless `m` is numerically singular.
///
/// Symmetric inputs are screened by their eigenvalues; anything else by singular values.
pub fn solve_checked(m: &DMatrix<f64>, b: &DVector<f64>, singular_tol: f64) -> Option<DVector<f64>> {
    let symmetric = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(f64::MIN_POSITIVE);
    let (lo, hi) = if symmetric {
        let ev = m.clone().symmetric_eigenvalues();
        ev.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())))
    } else {
        let sv = m.clone().singular_values();
        (sv.min(), sv.max())
    };
    if !(hi > 0.0) || lo < singular_tol * hi {
        return None;
    }
    let x = m.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Stationary point of each penalized risk: `((1+γ)G_i + (1−γ)G_O)⁻¹((1+γ)Z_i + (1−γ)Z_O)`.
pub fn inflexion_candidates(obj: &WorstRiskObjective, cfg: &EstimatorConfig) -> Vec<Result<Candidate, EstimatorError>> {
    (0..obj.k())
        .map(|i| {
            let h = obj.penalized(i);
            let beta = solve_checked(&h.g, &h.z, cfg.singular_tol).ok_or(EstimatorError::SingularCombination(i))?;
            let objective = obj.value(&beta);
            Ok(Candidate { beta, provenance: Provenance::Inflexion { env: i }, objective })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub provenance: Provenance,
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Environments attaining the envelope at `β`, labelled `A1…`.
    pub active: Vec<String>,
    pub kept: bool,
    pub reason: String,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub format_version: u32,
    pub gamma: f64,
    pub tau: f64,
    pub p: usize,
    pub k: usize,
    pub config: EstimatorConfig,
    pub beta_hat: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub provenance: Option<Provenance>,
    pub active_envs: Vec<String>,
    /// Norm of the smallest convex combination of active gradients at `β̂`, relative to their magnitude.
    pub stationarity_residual: Option<f64>,
    pub candidates: Vec<CandidateRecord>,
    pub pairs: Vec<PairReport>,
    pub triples: Vec<VertexReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub provenance: Provenance,
    pub report: EstimatorReport,
}

fn label(i: usize) -> String {
    format!("A{}", i + 1)
}

/// Minimizes `f = max_i h_i` over the candidate set and documents every step.
///
/// The `gamma` of `obj` is used; `cfg.gamma` is only echoed when they agree and
/// rejected otherwise.
pub fn minimize_worst_risk(obj: &WorstRiskObjective, cfg: &EstimatorConfig) -> Result<Estimate, EstimatorError> {
    cfg.validate()?;
    if cfg.gamma != obj.gamma() {
        return Err(EstimatorError::InvalidConfig(format!(
            "config gamma {} differs from objective gamma {}",
            cfg.gamma,
            obj.gamma()
        )));
    }
    let k = obj.k();
    let p = obj.p();
    let mut warnings = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();

    for r in inflexion_candidates(obj, cfg) {
        match r {
            Ok(c) => candidates.push(c),
            Err(e) => {
                log::warn!("{e}; inflexion candidate skipped");
                warnings.push(format!("{e}; inflexion candidate skipped"));
            }
        }
    }

    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let pair_results = par::map_slice(cfg.exec, &pairs, |&(i, j)| {
        pair_candidates(obj.penalized(i), obj.penalized(j), i, j, cfg)
    });
    let mut pair_reports = Vec::with_capacity(pairs.len());
    for res in pair_results {
        let (cands, rep) = res?;
        for w in &rep.warnings {
            log::warn!("pair ({}, {}): {w}", label(rep.i), label(rep.j));
            warnings.push(format!("pair ({}, {}): {w}", label(rep.i), label(rep.j)));
        }
        candidates.extend(cands);
        pair_reports.push(rep);
    }

    let mut triple_reports = Vec::new();
    if cfg.triple_ties && p == 2 && k >= 3 {
        let triples: Vec<[usize; 3]> = (0..k)
            .flat_map(|i| (i + 1..k).flat_map(move |j| (j + 1..k).map(move |l| [i, j, l])))
            .collect();
        triple_reports = par::map_slice(cfg.exec, &triples, |t| {
            triple_tie_points(obj.penalized(t[0]), obj.penalized(t[1]), obj.penalized(t[2]), *t, cfg)
        });
        for rep in &triple_reports {
            for pt in &rep.points {
                candidates.push(Candidate {
                    beta: vertex::as_beta(*pt),
                    provenance: Provenance::Vertex { envs: rep.envs },
                    objective: f64::NAN,
                });
            }
        }
    } else if k >= 3 && p >= 3 {
        warnings.push("ties among three or more environments are not enumerated for p >= 3".into());
    }

    let band = |m: f64| cfg.envelope_tol * (1.0 + m.abs());
    let mut records = Vec::with_capacity(candidates.len());
    let mut kept: Vec<usize> = Vec::new();
    for (idx, c) in candidates.iter_mut().enumerate() {
        let wr = obj.worst_risk_within(&c.beta, band);
        c.objective = wr.value;
        let envs = c.provenance.envs();
        let ok = c.objective.is_finite() && envs.iter().any(|e| wr.argmax.contains(e));
        if ok {
            kept.push(idx);
        }
        records.push(CandidateRecord {
            provenance: c.provenance,
            beta: c.beta.as_slice().to_vec(),
            objective: c.objective,
            active: wr.argmax.iter().map(|&e| label(e)).collect(),
            kept: ok,
            reason: if ok { "on envelope".into() } else { "generating environments not on envelope".into() },
            selected: false,
        });
    }

    let mut report = EstimatorReport {
        format_version: FORMAT_VERSION,
        gamma: obj.gamma(),
        tau: obj.tau(),
        p,
        k,
        config: cfg.clone(),
        beta_hat: None,
        objective: None,
        provenance: None,
        active_envs: Vec::new(),
        stationarity_residual: None,
        candidates: records,
        pairs: pair_reports,
        triples: triple_reports,
        warnings,
    };

    let Some(best) = select(&candidates, &kept) else {
        return Err(EstimatorError::NoCandidate(Box::new(report)));
    };
    let winner = &candidates[best];
    report.candidates[best].selected = true;
    let active = obj.worst_risk(&winner.beta).argmax;
    report.active_envs = active.iter().map(|&e| label(e)).collect();
    let active_band = obj.worst_risk_within(&winner.beta, band).argmax;
    let residual = stationarity_residual(obj, &winner.beta, &active_band);
    if residual > 1e-4 {
        let msg = format!("selected point is not certified stationary (residual {residual:.3e})");
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    report.stationarity_residual = Some(residual);
    report.beta_hat = Some(winner.beta.as_slice().to_vec());
    report.objective = Some(winner.objective);
    report.provenance = Some(winner.provenance);
    Ok(Estimate { beta: winner.beta.clone(), objective: winner.objective, provenance: winner.provenance, report })
}

/// Smallest objective, ties (within [`tie_tol`]) broken by provenance order and then β.
fn select(candidates: &[Candidate], kept: &[usize]) -> Option<usize> {
    let fmin = kept.iter().map(|&i| candidates[i].objective).fold(f64::INFINITY, f64::min);
    if !fmin.is_finite() {
        return None;
    }
    let tol = tie_tol(fmin);
    kept.iter().copied().filter(|&i| candidates[i].objective - fmin <= tol).min_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        ca.provenance.order(&cb.provenance).then_with(|| {
            ca.beta.iter().zip(cb.beta.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        })
    })
}

/// `min ‖Σ θ_i ∇h_i(β)‖` over the simplex of active environments, relative to
/// `max 2(‖G_iβ‖ + ‖z_i‖)` so that rounding in an exact zero stays small.
/// Zero at a minimizer of a convex envelope.
///
/// Up to 12 active environments every face of the simplex is tried (the minimum-norm
/// point of each affine hull, kept when its weights are non-negative); beyond that
/// Frank–Wolfe with exact line search.
pub fn stationarity_residual(obj: &WorstRiskObjective, beta: &DVector<f64>, active: &[usize]) -> f64 {
    let grads: Vec<DVector<f64>> = active.iter().map(|&i| obj.penalized(i).gradient(beta)).collect();
    let scale = active
        .iter()
        .map(|&i| {
            let h = obj.penalized(i);
            2.0 * ((&h.g * beta).norm() + h.z.norm())
        })
        .fold(0.0_f64, f64::max);
    if grads.is_empty() || scale == 0.0 {
        return 0.0;
    }
    let m = grads.len();
    if m <= 12 {
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << m) {
            let idx: Vec<usize> = (0..m).filter(|b| mask & (1 << b) != 0).collect();
            let s = idx.len();
            let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
            for (a, &u) in idx.iter().enumerate() {
                for (b, &v) in idx.iter().enumerate() {
                    kkt[(a, b)] = grads[u].dot(&grads[v]);
                }
                kkt[(a, s)] = 1.0;
                kkt[(s, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(s + 1);
            rhs[s] = 1.0;
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            if (0..s).any(|a| !(sol[a] >= -1e-12)) {
                continue;
            }
            let point = idx.iter().enumerate().fold(DVector::zeros(beta.len()), |acc, (a, &u)| acc + &grads[u] * sol[a]);
            best = best.min(point.norm());
        }
        return best / scale;
    }
    let mut x = grads.iter().min_by(|a, b| a.norm().total_cmp(&b.norm())).cloned().expect("nonempty");
    for _ in 0..2000 {
        let s = grads.iter().min_by(|a, b| a.dot(&x).total_cmp(&b.dot(&x))).expect("nonempty");
        let d = s - &x;
        let dd = d.norm_squared();
        if dd == 0.0 {
            break;
        }
        let t = (-x.dot(&d) / dd).clamp(0.0, 1.0);
        if t == 0.0 {
            break;
        }
        x += d * t;
    }
    x.norm() / scale
}

impl EstimatorReport {
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }
}
