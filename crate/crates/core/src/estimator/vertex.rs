//! Points in the plane where three quadratics take the same value.
//!
//! For `p = 2` the minimax point can sit where three penalized risks tie, which no
//! pairwise constrained minimizer reaches. Such a point solves `q_i − q_j = 0`,
//! `q_i − q_l = 0`: two conics. Writing each conic as `a·y² + b(x)·y + c(x)` and
//! eliminating `y` gives the resultant
//!
//! ```text
//! Res(x) = (a1·c2 − a2·c1)² − (a1·b2 − a2·b1)(b1·c2 − b2·c1)
//! ```
//!
//! of degree at most 4, whose real roots are the abscissae of the common points.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use super::EstimatorConfig;
use crate::polyalg::{isolate_real_roots_with, PolyError, Polynomial};
use crate::risk::QuadraticRisk;

/// Coordinates tried in turn when the resultant degenerates in the original frame.
const ROTATIONS: [f64; 4] = [0.0, 0.3, 0.7, 1.1];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexReport {
    pub envs: [usize; 3],
    pub points: Vec<[f64; 2]>,
    pub warnings: Vec<String>,
}

/// `q(x, y) = A x² + B xy + C y² + D x + E y + F`
#[derive(Debug, Clone, Copy)]
struct Conic {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
}

impl Conic {
    fn from_quadratic(q: &QuadraticRisk) -> Self {
        Conic { a: q.g[(0, 0)], b: 2.0 * q.g[(0, 1)], c: q.g[(1, 1)], d: -2.0 * q.z[0], e: -2.0 * q.z[1], f: q.c }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    fn grad(&self, x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(2.0 * self.a * x + self.b * y + self.d, self.b * x + 2.0 * self.c * y + self.e)
    }

    /// Coefficients of `y², y, 1` as polynomials in `x`.
    fn in_y(&self) -> (Polynomial, Polynomial, Polynomial) {
        (Polynomial::constant(self.c), Polynomial::linear(self.e, self.b), Polynomial::new(vec![self.f, self.d, self.a]))
    }

    fn scale(&self) -> f64 {
        [self.a, self.b, self.c, self.d, self.e, self.f].iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Real roots in `y` of `q(x, ·)`.
    fn roots_in_y(&self, x: f64) -> Vec<f64> {
        let a = self.c;
        let b = self.b * x + self.e;
        let c = self.a * x * x + self.d * x + self.f;
        if a.abs() <= 1e-14 * self.scale() {
            return if b != 0.0 { vec![-c / b] } else { Vec::new() };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            // tangency lost to rounding; the vertex of the parabola in y is the best guess
            return vec![-b / (2.0 * a)];
        }
        let s = disc.sqrt();
        let q = -0.5 * (b + b.signum() * s);
        if q == 0.0 {
            return vec![0.0];
        }
        vec![q / a, c / q]
    }
}

fn rotated(q: &QuadraticRisk, theta: f64) -> QuadraticRisk {
    let (s, c) = theta.sin_cos();
    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    QuadraticRisk { g: r.transpose() * &q.g * &r, z: r.transpose() * &q.z, c: q.c }
}

fn rotate_back(u: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * u[0] - s * u[1], s * u[0] + c * u[1]]
}

/// Common real points of `{qi = qj}` and `{qi = ql}` for two-dimensional quadratics.
pub fn triple_tie_points(
    qi: &QuadraticRisk,
    qj: &QuadraticRisk,
    ql: &QuadraticRisk,
    envs: [usize; 3],
    cfg: &EstimatorConfig,
) -> VertexReport {
    let mut report = VertexReport { envs, points: Vec::new(), warnings: Vec::new() };
    let d1 = qi.combine(1.0, qj, -1.0);
    let d2 = qi.combine(1.0, ql, -1.0);
    for &theta in &ROTATIONS {
        let c1 = Conic::from_quadratic(&rotated(&d1, theta));
        let c2 = Conic::from_quadratic(&rotated(&d2, theta));
        let (res, elim) = resultant_in_y(&c1, &c2);
        if res.is_zero() {
            continue;
        }
        if res.degree() == 0 {
            return report;
        }
        let roots = match isolate_real_roots_with(&res, cfg.c_n, cfg.root_mode, &cfg.root_options()) {
            Ok(r) => r.roots,
            Err(PolyError::DegenerateSeparation { location }) => {
                report.warnings.push(format!("resultant has a suspected multiple root near {location:.6e}"));
                vec![location]
            }
            Err(e) => {
                report.warnings.push(format!("resultant root isolation failed: {e}"));
                return report;
            }
        };
        let scale = c1.scale().max(c2.scale()).max(f64::MIN_POSITIVE);
        for x in roots {
            let mut ys = Vec::new();
            if let Some((lin, cross)) = &elim {
                let den = cross.eval(x);
                if den.abs() > 1e-12 * scale * scale {
                    ys.push(-lin.eval(x) / den);
                }
            }
            ys.extend(c1.roots_in_y(x));
            ys.extend(c2.roots_in_y(x));
            let miss = |y: f64| c1.eval(x, y).abs() + c2.eval(x, y).abs();
            let Some(y) = ys.into_iter().filter(|y| y.is_finite()).min_by(|u, v| miss(*u).total_cmp(&miss(*v))) else {
                continue;
            };
            let (x, y) = polish(&c1, &c2, x, y);
            let size = 1.0 + x.abs().max(y.abs());
            if c1.eval(x, y).abs().max(c2.eval(x, y).abs()) <= cfg.envelope_tol * scale * size * size {
                report.points.push(rotate_back([x, y], theta));
            }
        }
        report.points.sort_by(|u, v| u[0].total_cmp(&v[0]).then(u[1].total_cmp(&v[1])));
        report.points.dedup_by(|u, v| (u[0] - v[0]).abs() + (u[1] - v[1]).abs() <= 1e-12 * (1.0 + v[0].abs() + v[1].abs()));
        return report;
    }
    report.warnings.push("equal-risk curves share a component; triple skipped".into());
    report
}

/// Resultant of the two conics with respect to `y`, plus (when both are quadratic in
/// `y`) the pair `(a1·c2 − a2·c1, a1·b2 − a2·b1)` that back-solves `y` linearly.
fn resultant_in_y(c1: &Conic, c2: &Conic) -> (Polynomial, Option<(Polynomial, Polynomial)>) {
    let (a1, b1, k1) = c1.in_y();
    let (a2, b2, k2) = c2.in_y();
    let quad1 = c1.c.abs() > 1e-14 * c1.scale();
    let quad2 = c2.c.abs() > 1e-14 * c2.scale();
    match (quad1, quad2) {
        (true, true) => {
            let lin = &(&a1 * &k2) - &(&a2 * &k1);
            let cross = &(&a1 * &b2) - &(&a2 * &b1);
            let tail = &(&b1 * &k2) - &(&b2 * &k1);
            (&(&lin * &lin) - &(&cross * &tail), Some((lin, cross)))
        }
        // a·y² + b·y + k against linear b'·y + k': substitute y = −k'/b'
        (true, false) => (linear_against_quadratic(&a1, &b1, &k1, &b2, &k2), None),
        (false, true) => (linear_against_quadratic(&a2, &b2, &k2, &b1, &k1), None),
        (false, false) => (&(&b1 * &k2) - &(&b2 * &k1), None),
    }
}

fn linear_against_quadratic(a: &Polynomial, b: &Polynomial, k: &Polynomial, bl: &Polynomial, kl: &Polynomial) -> Polynomial {
    &(&(a * &(kl * kl)) - &(&(b * bl) * kl)) + &(k * &(bl * bl))
}

/// Newton iterations on the 2×2 system `(q1, q2) = 0`.
fn polish(c1: &Conic, c2: &Conic, mut x: f64, mut y: f64) -> (f64, f64) {
    for _ in 0..20 {
        let f = Vector2::new(c1.eval(x, y), c2.eval(x, y));
        let (g1, g2) = (c1.grad(x, y), c2.grad(x, y));
        let j = Matrix2::new(g1[0], g1[1], g2[0], g2[1]);
        let Some(step) = j.lu().solve(&f) else { break };
        if !step.iter().all(|s| s.is_finite()) {
            break;
        }
        let (nx, ny) = (x - step[0], y - step[1]);
        let better = c1.eval(nx, ny).abs() + c2.eval(nx, ny).abs() <= f.abs().sum();
        if !better {
            break;
        }
        x = nx;
        y = ny;
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + x.abs() + y.abs()) {
            break;
        }
    }
    (x, y)
}

pub(crate) fn as_beta(point: [f64; 2]) -> DVector<f64> {
    DVector::from_row_slice(&point)
}
