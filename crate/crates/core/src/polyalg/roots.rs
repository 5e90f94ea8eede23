//! Real-root isolation by a bounded uniform scan followed by bisection.
//!
//! All real roots lie in `[-R, R]` with `R = 1 ∨ Σ_{u<d} |e_u / e_d|`. The scan width is
//! driven by a root-separation bound `Δ̂`, the smaller of a Rump-style quantity and
//! Mahler's gap bound (the former alone overshoots for small coefficients): when `2R/Δ̂` fits inside
//! `max_intervals`, a uniform partition of width below `Δ̂` isolates every simple root
//! and a sign change at the endpoints is both necessary and sufficient. Otherwise the
//! partition is capped at `max_intervals` intervals and every interval that cannot be
//! excluded is resolved by recursive subdivision with Taylor-remainder exclusion and
//! monotonicity tests.
//!
//! Roots of even multiplicity produce no sign change and are only reported when a grid
//! node lands within the residual tolerance of them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PolyError, Polynomial};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RootMode {
    /// Bisect each isolating bracket until it cannot shrink further in f64 (or `refine_tol`).
    #[default]
    ExactRefine,
    /// Bisect each isolating bracket exactly `c_n` times.
    BudgetedBisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMethod {
    /// Uniform partition finer than the separation bound.
    Uniform,
    /// Partition capped at `max_intervals`, unresolved intervals subdivided.
    CappedSubdivision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootIsolationOptions {
    pub max_intervals: usize,
    pub fallback_depth: u32,
    /// Relative residual under which a grid node counts as a root.
    pub residual_tol: f64,
    /// Relative bracket width at which exact refinement stops; 0 refines to f64 resolution.
    pub refine_tol: f64,
    pub exec: Exec,
}

impl Default for RootIsolationOptions {
    fn default() -> Self {
        RootIsolationOptions {
            max_intervals: 1 << 20,
            fallback_depth: 60,
            residual_tol: 1e-12,
            refine_tol: 0.0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootIsolationReport {
    /// Strictly increasing.
    pub roots: Vec<f64>,
    /// Isolating bracket each root was refined from (degenerate `(r, r)` for node hits).
    pub brackets: Vec<(f64, f64)>,
    pub bound_r: f64,
    /// Scan separation `Δ̂ ∧ Δ_Mahler`; may underflow to 0.
    pub separation: f64,
    pub log_separation: f64,
    pub intervals_scanned: usize,
    pub bisections_per_root: u32,
    pub mode: RootMode,
    pub method: ScanMethod,
}

/// `1 ∨ Σ_{u<d} |e_u / e_d|`.
pub fn lagrange_bound(p: &Polynomial) -> f64 {
    let c = p.coeffs();
    let d = p.degree();
    let lead = c[d].abs();
    let s: f64 = c[..d].iter().map(|e| e.abs() / lead).sum();
    s.max(1.0)
}

/// Sylvester determinant of `p` and `p'`, returned as (sign, ln|det|).
fn log_resultant_with_derivative(p: &Polynomial) -> (f64, f64) {
    let d = p.degree();
    let dp = p.derivative();
    let a: Vec<f64> = p.coeffs().iter().rev().copied().collect();
    let b: Vec<f64> = dp.coeffs().iter().rev().copied().collect();
    let n = 2 * d - 1;
    let mut syl = DMatrix::<f64>::zeros(n, n);
    for r in 0..d - 1 {
        for (t, &v) in a.iter().enumerate() {
            syl[(r, r + t)] = v;
        }
    }
    for r in 0..d {
        for (t, &v) in b.iter().enumerate() {
            syl[(d - 1 + r, r + t)] = v;
        }
    }
    let lu = syl.lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut log = 0.0;
    for i in 0..n {
        let v = u[(i, i)];
        if v == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if v < 0.0 {
            sign = -sign;
        }
        log += v.abs().ln();
    }
    (sign, log)
}

fn log_discriminant(p: &Polynomial) -> (f64, f64) {
    let d = p.degree();
    if d <= 1 {
        return (1.0, 0.0);
    }
    let (sign, log_res) = log_resultant_with_derivative(p);
    let lead = p.leading();
    let parity = if (d * (d - 1) / 2) % 2 == 1 { -1.0 } else { 1.0 };
    (sign * parity * lead.signum(), log_res - lead.abs().ln())
}

/// Discriminant of `p` (1 for linear polynomials).
pub fn discriminant(p: &Polynomial) -> f64 {
    let (s, l) = log_discriminant(p);
    s * l.exp()
}

/// Natural log of the separation bound
/// `Δ = (1 ∨ |e_d|)^{d(ln d + 1)} · |D(P)| · (2d)^{d-1} / s^{d(ln d + 3)}` with `s = Σ|e_u|`.
pub fn log_separation_bound(p: &Polynomial) -> f64 {
    let d = p.degree() as f64;
    let ln_d = d.ln();
    let s: f64 = p.coeffs().iter().map(|e| e.abs()).sum();
    let (_, log_disc) = log_discriminant(p);
    d * (ln_d + 1.0) * p.leading().abs().max(1.0).ln() + log_disc + (d - 1.0) * (2.0 * d).ln()
        - d * (ln_d + 3.0) * s.ln()
}

/// Natural log of Mahler's gap bound `√3 · |D(P)|^{1/2} / (d^{(d+2)/2} · ‖P‖₂^{d-1})`,
/// with the Mahler measure replaced by the larger coefficient 2-norm.
///
/// Unlike [`log_separation_bound`] it is invariant under `P ↦ cP`, and stays a valid
/// lower bound on the root gap when the coefficients are small.
pub fn log_mahler_separation(p: &Polynomial) -> f64 {
    let d = p.degree() as f64;
    let norm2 = p.coeffs().iter().map(|e| e * e).sum::<f64>().sqrt();
    let (_, log_disc) = log_discriminant(p);
    0.5 * 3f64.ln() + 0.5 * log_disc - 0.5 * (d + 2.0) * d.ln() - (d - 1.0) * norm2.ln()
}

/// Isolates and refines all real roots with default options.
pub fn isolate_real_roots(p: &Polynomial, c_n: u32, mode: RootMode) -> Result<RootIsolationReport, PolyError> {
    isolate_real_roots_with(p, c_n, mode, &RootIsolationOptions::default())
}

struct Scanner<'a> {
    p: &'a Polynomial,
    abs: Polynomial,
    opts: &'a RootIsolationOptions,
}

/// Ordered `(x, P(x))` samples of one chunk of the scan, endpoints included.
#[derive(Default)]
struct ScanOut {
    nodes: Vec<(f64, f64)>,
    scanned: usize,
    degenerate: Option<f64>,
}

impl Scanner<'_> {
    fn is_hit(&self, x: f64, fx: f64) -> bool {
        fx.abs() <= self.opts.residual_tol * self.abs.eval(x.abs()).max(f64::MIN_POSITIVE)
    }

    /// Subdivides `[a, b]` until every piece is root-free or monotone, pushing interior
    /// samples in increasing order.
    fn resolve(&self, a: f64, b: f64, fa: f64, fb: f64, depth: u32, out: &mut ScanOut) {
        out.scanned += 1;
        let h = 0.5 * (b - a);
        let m = a + h;
        let t = self.p.taylor_at(m);
        let mut tail = 0.0;
        let mut hk = 1.0;
        for c in &t[1..] {
            hk *= h;
            tail += c.abs() * hk;
        }
        if t[0].abs() > tail {
            return;
        }
        // |P'(x)| ≥ |t1| - Σ_{k≥2} k |t_k| h^{k-1}
        let mut dtail = 0.0;
        let mut hk = 1.0;
        for (k, c) in t.iter().enumerate().skip(2) {
            hk *= h;
            dtail += k as f64 * c.abs() * hk;
        }
        if t.len() > 1 && t[1].abs() > dtail {
            return;
        }
        let fm = t[0];
        if depth >= self.opts.fallback_depth || !(m > a && m < b) {
            let sign_change = fa * fb < 0.0;
            let touched = self.is_hit(a, fa) || self.is_hit(b, fb) || self.is_hit(m, fm);
            if !sign_change && !touched && out.degenerate.is_none() {
                out.degenerate = Some(m);
            }
            if m > a && m < b {
                out.nodes.push((m, fm));
            }
            return;
        }
        self.resolve(a, m, fa, fm, depth + 1, out);
        out.nodes.push((m, fm));
        self.resolve(m, b, fm, fb, depth + 1, out);
    }
}

/// Isolates all real roots of `p` inside its Lagrange bound and refines each.
pub fn isolate_real_roots_with(
    p: &Polynomial,
    c_n: u32,
    mode: RootMode,
    opts: &RootIsolationOptions,
) -> Result<RootIsolationReport, PolyError> {
    if !p.is_finite() {
        return Err(PolyError::NonFinite);
    }
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    if p.degree() == 0 {
        return Err(PolyError::ConstantPolynomial);
    }
    let bound_r = lagrange_bound(p);
    // the Rump-style quantity overshoots the true gap once Σ|e_u| < 1
    let log_sep = log_separation_bound(p).min(log_mahler_separation(p));
    let separation = log_sep.exp();
    // widen slightly so roots sitting on ±R are interior
    let r = bound_r * (1.0 + 1e-9) + 1e-12;
    let abs = Polynomial::new(p.coeffs().iter().map(|c| c.abs()).collect());
    let scanner = Scanner { p, abs, opts };

    let uniform_count = if separation > 0.0 && separation.is_finite() { (2.0 * r / separation).ceil() } else { f64::INFINITY };
    let (method, m) = if uniform_count <= opts.max_intervals as f64 {
        (ScanMethod::Uniform, (uniform_count as usize).max(1))
    } else {
        (ScanMethod::CappedSubdivision, opts.max_intervals.max(1))
    };
    let width = 2.0 * r / m as f64;
    let node = |t: usize| if t == m { r } else { -r + t as f64 * width };

    // global Lipschitz constant of P on [-r, r] for the cheap exclusion test
    let lipschitz = p.derivative().coeffs().iter().enumerate().map(|(u, c)| c.abs() * r.powi(u as i32)).sum::<f64>();

    const CHUNK: usize = 4096;
    let chunks = m.div_ceil(CHUNK);
    let parts = par::map_range(opts.exec, chunks, |ci| {
        let mut out = ScanOut::default();
        let lo = ci * CHUNK;
        let hi = ((ci + 1) * CHUNK).min(m);
        let mut xa = node(lo);
        let mut fa = p.eval(xa);
        out.nodes.push((xa, fa));
        for t in lo..hi {
            let xb = node(t + 1);
            let fb = p.eval(xb);
            out.scanned += 1;
            if method == ScanMethod::CappedSubdivision && (fa * fb < 0.0 || fa.abs() + fb.abs() <= lipschitz * (xb - xa)) {
                scanner.resolve(xa, xb, fa, fb, 0, &mut out);
            }
            out.nodes.push((xb, fb));
            xa = xb;
            fa = fb;
        }
        out
    });
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    let mut scanned = 0;
    let mut degenerate = None;
    for (ci, part) in parts.into_iter().enumerate() {
        // chunks share their boundary node
        nodes.extend(part.nodes.into_iter().skip(usize::from(ci > 0)));
        scanned += part.scanned;
        degenerate = degenerate.or(part.degenerate);
    }
    if let Some(location) = degenerate {
        return Err(PolyError::DegenerateSeparation { location });
    }

    // sign changes become brackets; exact zeros are roots; a run of residual hits that
    // touches neither is a root without sign change, reported at its smallest residual
    let mut explained = vec![false; nodes.len()];
    let mut found: Vec<(f64, (f64, f64), u32)> = Vec::new();
    for t in 0..nodes.len() {
        let (x, f) = nodes[t];
        if f == 0.0 {
            explained[t] = true;
            found.push((x, (x, x), 0));
        }
        if t + 1 < nodes.len() && f * nodes[t + 1].1 < 0.0 {
            explained[t] = true;
            explained[t + 1] = true;
            let (a, b) = (x, nodes[t + 1].0);
            let (root, iters) = refine(p, a, b, c_n, mode, opts.refine_tol);
            found.push((root, (a, b), iters));
        }
    }
    let mut t = 0;
    while t < nodes.len() {
        if !scanner.is_hit(nodes[t].0, nodes[t].1) {
            t += 1;
            continue;
        }
        let s = t;
        while t < nodes.len() && scanner.is_hit(nodes[t].0, nodes[t].1) {
            t += 1;
        }
        if !explained[s..t].iter().any(|&e| e) {
            let best = (s..t).min_by(|&u, &v| nodes[u].1.abs().total_cmp(&nodes[v].1.abs())).unwrap_or(s);
            let x = nodes[best].0;
            found.push((x, (x, x), 0));
        }
    }
    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    found.dedup_by(|later, earlier| later.0 == earlier.0);

    let bisections_per_root = match mode {
        RootMode::BudgetedBisection => c_n,
        RootMode::ExactRefine => found.iter().map(|f| f.2).max().unwrap_or(0),
    };
    Ok(RootIsolationReport {
        roots: found.iter().map(|f| f.0).collect(),
        brackets: found.iter().map(|f| f.1).collect(),
        bound_r,
        separation,
        log_separation: log_sep,
        intervals_scanned: scanned,
        bisections_per_root,
        mode,
        method,
    })
}

/// Bisection on a sign-change bracket. Both modes walk the same halving sequence, so a
/// budgeted result differs from the exact one by at most half the final budgeted width.
fn refine(p: &Polynomial, mut a: f64, mut b: f64, c_n: u32, mode: RootMode, refine_tol: f64) -> (f64, u32) {
    let mut fa = p.eval(a);
    let mut iters = 0u32;
    loop {
        let m = 0.5 * (a + b);
        let stop = match mode {
            RootMode::BudgetedBisection => iters >= c_n,
            RootMode::ExactRefine => b - a <= refine_tol * (1.0 + m.abs()),
        };
        if stop || !(m > a && m < b) {
            return (m, iters);
        }
        let fm = p.eval(m);
        iters += 1;
        if fm == 0.0 {
            return (m, iters);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    #[test]
    fn sqrt_two_budgeted() {
        let p = poly(&[-2.0, 0.0, 1.0]);
        let rep = isolate_real_roots(&p, 40, RootMode::BudgetedBisection).unwrap();
        assert_eq!(rep.roots.len(), 2);
        let s = 2f64.sqrt();
        for (r, (a, b), target) in rep.roots.iter().zip(&rep.brackets).zip([-s, s]).map(|((r, br), t)| (r, br, t)) {
            assert!((r - target).abs() <= (b - a) * 2f64.powi(-40));
        }
        assert_eq!(rep.bisections_per_root, 40);
    }

    #[test]
    fn cubic_with_three_roots() {
        // (λ-1)(λ-2)(λ+3) = λ³ - 7λ + 6
        let p = poly(&[6.0, -7.0, 0.0, 1.0]);
        let rep = isolate_real_roots(&p, 60, RootMode::ExactRefine).unwrap();
        let expected = [-3.0, 1.0, 2.0];
        assert_eq!(rep.roots.len(), 3);
        for (r, e) in rep.roots.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
    }

    #[test]
    fn no_real_roots() {
        let rep = isolate_real_roots(&poly(&[1.0, 0.0, 1.0]), 40, RootMode::ExactRefine).unwrap();
        assert!(rep.roots.is_empty());
        assert!(rep.intervals_scanned > 0);
    }

    #[test]
    fn lagrange_bound_values() {
        assert_eq!(lagrange_bound(&poly(&[6.0, -7.0, 0.0, 1.0])), 13.0);
        assert_eq!(lagrange_bound(&poly(&[0.1, 0.0, 1.0])), 1.0);
    }

    #[test]
    fn discriminant_of_quadratic() {
        // b² - 4ac for λ² - 2
        assert!((discriminant(&poly(&[-2.0, 0.0, 1.0])) - 8.0).abs() < 1e-10);
        // -5λ² + 20λ - 11: 400 - 220 = 180
        assert!((discriminant(&poly(&[-11.0, 20.0, -5.0])) - 180.0).abs() < 1e-9);
        // cubic x³ - 7x + 6: -4(-7)³ - 27·36 = 1372 - 972 = 400
        assert!((discriminant(&poly(&[6.0, -7.0, 0.0, 1.0])) - 400.0).abs() < 1e-8);
    }

    #[test]
    fn uniform_path_for_wide_separation() {
        let p = poly(&[-0.25, 0.0, 1.0]);
        let opts = RootIsolationOptions { max_intervals: 1 << 24, ..Default::default() };
        let rep = isolate_real_roots_with(&p, 60, RootMode::ExactRefine, &opts).unwrap();
        assert_eq!(rep.method, ScanMethod::Uniform);
        assert!((rep.roots[0] + 0.5).abs() < 1e-14 && (rep.roots[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn small_coefficients_do_not_inflate_separation() {
        let p = poly(&[-0.09913187360471098, 0.14266813104487358, -0.006068408054208059, -0.025871610044136545, 0.005876051638970328]);
        assert!(log_separation_bound(&p) > 10.0);
        let rep = isolate_real_roots(&p, 60, RootMode::ExactRefine).unwrap();
        assert!(rep.separation < 3.0);
        assert_eq!(rep.roots.len(), 2);
        assert!((rep.roots[0] + 2.26).abs() < 0.01 && (rep.roots[1] - 0.797).abs() < 0.01);
        for r in rep.roots {
            assert!(p.eval(r).abs() < 1e-14);
        }
    }

    #[test]
    fn mahler_bound_is_scale_invariant() {
        let p = poly(&[6.0, -7.0, 0.0, 1.0]);
        let q = poly(&[6e-3, -7e-3, 0.0, 1e-3]);
        assert!((log_mahler_separation(&p) - log_mahler_separation(&q)).abs() < 1e-9);
        // smallest gap of 1, 2, -3 is 1
        assert!(log_mahler_separation(&p).exp() <= 1.0);
    }

    #[test]
    fn capped_path_with_tight_cap() {
        let p = poly(&[6.0, -7.0, 0.0, 1.0]);
        let opts = RootIsolationOptions { max_intervals: 3, ..Default::default() };
        let rep = isolate_real_roots_with(&p, 60, RootMode::ExactRefine, &opts).unwrap();
        assert_eq!(rep.method, ScanMethod::CappedSubdivision);
        assert_eq!(rep.roots.len(), 3);
    }

    #[test]
    fn close_roots_are_separated() {
        // (λ - 1)(λ - 1 - 1e-6)
        let a = 1.0;
        let b = 1.0 + 1e-6;
        let p = poly(&[a * b, -(a + b), 1.0]);
        let opts = RootIsolationOptions { max_intervals: 16, ..Default::default() };
        let rep = isolate_real_roots_with(&p, 60, RootMode::ExactRefine, &opts).unwrap();
        assert_eq!(rep.roots.len(), 2);
        assert!((rep.roots[0] - a).abs() < 1e-9 && (rep.roots[1] - b).abs() < 1e-9);
    }

    #[test]
    fn root_on_grid_node_is_reported_once() {
        // root exactly at 0, which is a grid node for an even interval count
        let p = poly(&[0.0, 1.0]);
        let opts = RootIsolationOptions { max_intervals: 4, ..Default::default() };
        let rep = isolate_real_roots_with(&p, 60, RootMode::ExactRefine, &opts).unwrap();
        assert_eq!(rep.roots.len(), 1);
        assert!(rep.roots[0].abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert_eq!(isolate_real_roots(&Polynomial::zero(), 10, RootMode::ExactRefine), Err(PolyError::ZeroPolynomial));
        assert_eq!(isolate_real_roots(&poly(&[3.0]), 10, RootMode::ExactRefine), Err(PolyError::ConstantPolynomial));
        assert_eq!(isolate_real_roots(&poly(&[f64::NAN, 1.0]), 10, RootMode::ExactRefine), Err(PolyError::NonFinite));
    }

    #[test]
    fn double_root_off_grid_is_degenerate_or_hit() {
        // (λ - 0.3)^2 has no sign change; it is either caught as a residual hit or flagged
        let p = poly(&[0.09, -0.6, 1.0]);
        match isolate_real_roots(&p, 60, RootMode::ExactRefine) {
            Ok(rep) => assert!(rep.roots.iter().all(|r| (r - 0.3).abs() < 1e-5)),
            Err(PolyError::DegenerateSeparation { location }) => assert!((location - 0.3).abs() < 1e-3),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
