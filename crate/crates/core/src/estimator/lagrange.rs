//! Pairwise equal-risk candidates from the Lagrange system `M(λ)β = C(λ)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{solve_checked, Candidate, EstimatorConfig, EstimatorError, Provenance};
use crate::moments::EnvironmentMoments;
use crate::polyalg::{
    cramer_numerators, isolate_real_roots_with, pencil_det_polynomial, AffinePencil, PolyError, Polynomial,
    RootIsolationReport,
};
use crate::risk::{tie_tol, QuadraticRisk, WorstRiskObjective};

/// `M(λ) = G^i + λ(G^j − G^i)` together with `C(λ) = z^i + λ(z^j − z^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeSystem {
    pub pencil: AffinePencil,
    pub c0: DVector<f64>,
    pub c1: DVector<f64>,
}

impl LagrangeSystem {
    pub fn from_risks(ri: &QuadraticRisk, rj: &QuadraticRisk) -> Result<Self, EstimatorError> {
        let pencil = AffinePencil::new(ri.g.clone(), &rj.g - &ri.g)?;
        Ok(LagrangeSystem { pencil, c0: ri.z.clone(), c1: &rj.z - &ri.z })
    }

    pub fn m_at(&self, lambda: f64) -> DMatrix<f64> {
        self.pencil.at(lambda)
    }

    pub fn c_at(&self, lambda: f64) -> DVector<f64> {
        &self.c0 + &self.c1 * lambda
    }
}

pub fn build_lagrange_system(env_i: &EnvironmentMoments, env_j: &EnvironmentMoments) -> Result<LagrangeSystem, EstimatorError> {
    LagrangeSystem::from_risks(&QuadraticRisk::from_moments(env_i), &QuadraticRisk::from_moments(env_j))
}

/// `det(M)²·g(β(λ))` with `g = R_i − R_j`, together with `det M(λ)`.
pub fn intersection_polynomial_from_risks(
    ri: &QuadraticRisk,
    rj: &QuadraticRisk,
) -> Result<(Polynomial, Polynomial), EstimatorError> {
    let sys = LagrangeSystem::from_risks(ri, rj)?;
    let d = pencil_det_polynomial(&sys.pencil);
    let n = cramer_numerators(&sys.pencil, &sys.c0, &sys.c1)?;
    let dg = &ri.g - &rj.g;
    let dz = &ri.z - &rj.z;
    let dc = ri.c - rj.c;
    let p = n.len();

    // NᵀΔG N
    let mut quad = Polynomial::zero();
    for a in 0..p {
        for b in 0..p {
            let w = dg[(a, b)];
            if w != 0.0 {
                quad = &quad + &(&n[a] * &n[b]).scale(w);
            }
        }
    }
    let mut lin = Polynomial::zero();
    for (a, na) in n.iter().enumerate() {
        if dz[a] != 0.0 {
            lin = &lin + &na.scale(dz[a]);
        }
    }
    let p_tilde = &(&quad - &(&d * &lin).scale(2.0)) + &(&d * &d).scale(dc);
    Ok((p_tilde, d))
}

pub fn intersection_polynomial(env_i: &EnvironmentMoments, env_j: &EnvironmentMoments) -> Result<Polynomial, EstimatorError> {
    let (p, _) =
        intersection_polynomial_from_risks(&QuadraticRisk::from_moments(env_i), &QuadraticRisk::from_moments(env_j))?;
    if p.is_zero() {
        return Err(EstimatorError::Poly(PolyError::ZeroPolynomial));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootSummary {
    pub roots: Vec<f64>,
    pub bound_r: f64,
    pub log_separation: f64,
    pub intervals_scanned: usize,
    pub bisections_per_root: u32,
    pub method: crate::polyalg::ScanMethod,
}

impl From<&RootIsolationReport> for RootSummary {
    fn from(r: &RootIsolationReport) -> Self {
        RootSummary {
            roots: r.roots.clone(),
            bound_r: r.bound_r,
            log_separation: r.log_separation,
            intervals_scanned: r.intervals_scanned,
            bisections_per_root: r.bisections_per_root,
            method: r.method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifiedRoot {
    pub lambda: f64,
    pub beta: Vec<f64>,
    /// Value of the first quadratic of the pair at `β(λ)`.
    pub value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRoot {
    pub lambda: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStatus {
    Ok,
    NoIntersection,
    ZeroPolynomial,
    DegenerateSeparation,
    SingularPencil,
}

/// Everything computed for one pair `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub i: usize,
    pub j: usize,
    pub status: PairStatus,
    pub p_tilde: Polynomial,
    pub det: Polynomial,
    pub p_roots: Option<RootSummary>,
    pub det_roots: Vec<f64>,
    pub verified: Vec<VerifiedRoot>,
    pub rejected: Vec<RejectedRoot>,
    pub warnings: Vec<String>,
    /// Location reported when root separation failed.
    pub degenerate_at: Option<f64>,
}

/// Minimizers of `q_i` on `{q_i = q_j}` reachable from real roots of `P̃`.
///
/// `q_i`, `q_j` are arbitrary quadratics; the estimator passes the penalized risks.
pub fn pair_candidates(
    qi: &QuadraticRisk,
    qj: &QuadraticRisk,
    i: usize,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<(Vec<Candidate>, PairReport), EstimatorError> {
    let sys = LagrangeSystem::from_risks(qi, qj)?;
    let (p_tilde, det) = intersection_polynomial_from_risks(qi, qj)?;
    let mut report = PairReport {
        i,
        j,
        status: PairStatus::Ok,
        p_tilde: p_tilde.clone(),
        det: det.clone(),
        p_roots: None,
        det_roots: Vec::new(),
        verified: Vec::new(),
        rejected: Vec::new(),
        warnings: Vec::new(),
        degenerate_at: None,
    };
    if p_tilde.is_zero() {
        report.status = PairStatus::ZeroPolynomial;
        report.warnings.push("P̃ vanishes identically (risks agree along the solution curve); pair skipped".into());
        return Ok((Vec::new(), report));
    }
    if det.is_zero() {
        report.status = PairStatus::SingularPencil;
        report.warnings.push("det M(λ) vanishes identically; pair skipped".into());
        return Ok((Vec::new(), report));
    }
    if p_tilde.degree() == 0 {
        report.status = PairStatus::NoIntersection;
        return Ok((Vec::new(), report));
    }
    let opts = cfg.root_options();
    let roots = match isolate_real_roots_with(&p_tilde, cfg.c_n, cfg.root_mode, &opts) {
        Ok(r) => r,
        Err(PolyError::DegenerateSeparation { location }) => {
            report.status = PairStatus::DegenerateSeparation;
            report.warnings.push(format!("P̃ roots could not be separated near λ = {location:.6e}"));
            report.degenerate_at = Some(location);
            return Ok((Vec::new(), report));
        }
        Err(e) => return Err(e.into()),
    };
    report.p_roots = Some(RootSummary::from(&roots));

    if det.degree() >= 1 {
        match isolate_real_roots_with(&det, cfg.c_n, cfg.root_mode, &opts) {
            Ok(r) => report.det_roots = r.roots,
            Err(PolyError::DegenerateSeparation { location }) => {
                report.warnings.push(format!("det M(λ) has a suspected multiple root near {location:.6e}"));
                report.det_roots.push(location);
            }
            Err(e) => return Err(e.into()),
        }
    }

    for &lambda in &roots.roots {
        let excl = cfg.det_exclusion_tol * (1.0 + lambda.abs());
        if report.det_roots.iter().any(|&mu| (mu - lambda).abs() <= excl) {
            report.rejected.push(RejectedRoot { lambda, reason: "coincides with a root of det M(λ)".into() });
            continue;
        }
        let Some(beta) = solve_checked(&sys.m_at(lambda), &sys.c_at(lambda), cfg.singular_tol) else {
            report.rejected.push(RejectedRoot { lambda, reason: "M(λ) numerically singular".into() });
            continue;
        };
        let vi = qi.eval(&beta);
        let vj = qj.eval(&beta);
        let gap = (vi - vj).abs();
        if gap > cfg.envelope_tol * (1.0 + vi.abs()) {
            report.rejected.push(RejectedRoot { lambda, reason: format!("equal-risk check failed (gap {gap:.3e})") });
            continue;
        }
        report.verified.push(VerifiedRoot { lambda, beta: beta.as_slice().to_vec(), value: vi, gap });
    }

    if report.verified.is_empty() {
        report.status = PairStatus::NoIntersection;
        return Ok((Vec::new(), report));
    }
    let best = report.verified.iter().map(|v| v.value).fold(f64::INFINITY, f64::min);
    let band = tie_tol(best);
    let candidates = report
        .verified
        .iter()
        .filter(|v| v.value - best <= band)
        .map(|v| Candidate {
            beta: DVector::from_row_slice(&v.beta),
            provenance: Provenance::Intersection { i, j, lambda: v.lambda },
            objective: f64::NAN,
        })
        .collect();
    Ok((candidates, report))
}

/// Intersection candidates of the penalized risks `h_i`, `h_j` of an objective.
pub fn intersection_candidates(
    obj: &WorstRiskObjective,
    i: usize,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<Vec<Candidate>, EstimatorError> {
    let (mut cands, report) = pair_candidates(obj.penalized(i), obj.penalized(j), i, j, cfg)?;
    if let Some(location) = report.degenerate_at {
        return Err(PolyError::DegenerateSeparation { location }.into());
    }
    for c in &mut cands {
        c.objective = obj.value(&c.beta);
    }
    Ok(cands)
}
