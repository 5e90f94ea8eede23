//! Univariate real polynomials, affine matrix pencils and real-root isolation.
//!
//! Coefficients are stored in ascending degree, `coeffs[u]` multiplying `λ^u`.
//! Every constructor trims trailing coefficients whose magnitude is at most
//! `1e-12 · max|coeff|`, so `degree()` reflects the numerically meaningful
//! leading term.

mod pencil;
mod roots;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pencil::{cramer_numerators, pencil_det_polynomial, AffinePencil};
pub use roots::{
    discriminant, isolate_real_roots, isolate_real_roots_with, lagrange_bound, log_mahler_separation, log_separation_bound,
    RootIsolationOptions, RootIsolationReport, RootMode, ScanMethod,
};

/// Relative tolerance used when trimming trailing coefficients.
pub const TRIM_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("polynomial has degree 0; there are no roots to isolate")]
    ConstantPolynomial,
    #[error("non-finite coefficient in polynomial")]
    NonFinite,
    #[error("could not separate roots near {location:.6e} (suspected multiple root)")]
    DegenerateSeparation { location: f64 },
    #[error("interpolation needs {expected} values, got {got}")]
    InterpolationArity { expected: usize, got: usize },
    #[error("pencil matrices must be square and of equal size (got {m0:?} and {m1:?})")]
    PencilShape { m0: (usize, usize), m1: (usize, usize) },
    #[error("vector length {got} does not match pencil dimension {expected}")]
    VectorShape { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", from = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from ascending coefficients, trimming float dust at the top.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Polynomial { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `a + b·λ`
    pub fn linear(a: f64, b: f64) -> Self {
        Polynomial::new(vec![a, b])
    }

    fn trim(&mut self) {
        let scale = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let cutoff = TRIM_REL_TOL * scale;
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| c.abs() <= cutoff) {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(0.0);
        }
        if self.coeffs.len() == 1 && self.coeffs[0].abs() == 0.0 {
            self.coeffs[0] = 0.0;
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Index of the highest retained coefficient. The zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().expect("never empty")
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::zero();
        }
        let d = self.coeffs.iter().enumerate().skip(1).map(|(u, &c)| u as f64 * c).collect();
        Polynomial::new(d)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Coefficients of `p(x + h)` expanded around `x`, i.e. `p^{(m)}(x)/m!` for m = 0..=deg.
    pub fn taylor_at(&self, x: f64) -> Vec<f64> {
        // synthetic division repeated deg+1 times
        let mut work: Vec<f64> = self.coeffs.clone();
        let n = work.len();
        let mut out = Vec::with_capacity(n);
        for m in 0..n {
            let len = n - m;
            for u in (0..len - 1).rev() {
                work[u] += x * work[u + 1];
            }
            out.push(work[0]);
            work.remove(0);
        }
        out
    }

    /// Interpolates the unique polynomial of degree < `nodes.len()` through the given values
    /// using Newton divided differences, then expands to monomial form.
    pub fn interpolate(nodes: &[f64], values: &[f64]) -> Result<Polynomial, PolyError> {
        if nodes.len() != values.len() || nodes.is_empty() {
            return Err(PolyError::InterpolationArity { expected: nodes.len(), got: values.len() });
        }
        let n = nodes.len();
        let mut dd = values.to_vec();
        for level in 1..n {
            for u in (level..n).rev() {
                dd[u] = (dd[u] - dd[u - 1]) / (nodes[u] - nodes[u - level]);
            }
        }
        // Horner-style expansion of the Newton form
        let mut acc = vec![dd[n - 1]];
        for u in (0..n - 1).rev() {
            // acc <- acc * (x - nodes[u]) + dd[u]
            let mut next = vec![0.0; acc.len() + 1];
            for (v, &a) in acc.iter().enumerate() {
                next[v + 1] += a;
                next[v] -= a * nodes[u];
            }
            next[0] += dd[u];
            acc = next;
        }
        Ok(Polynomial::new(acc))
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl From<Vec<f64>> for Polynomial {
    fn from(c: Vec<f64>) -> Self {
        Polynomial::new(c)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (u, c) in self.coeffs.iter().enumerate().rev() {
            if *c == 0.0 && self.coeffs.len() > 1 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            let a = c.abs();
            match u {
                0 => write!(f, "{a}")?,
                1 => write!(f, "{a}·λ")?,
                _ => write!(f, "{a}·λ^{u}")?,
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c = (0..n)
            .map(|u| self.coeffs.get(u).copied().unwrap_or(0.0) + rhs.coeffs.get(u).copied().unwrap_or(0.0))
            .collect();
        Polynomial::new(c)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c = (0..n)
            .map(|u| self.coeffs.get(u).copied().unwrap_or(0.0) - rhs.coeffs.get(u).copied().unwrap_or(0.0))
            .collect();
        Polynomial::new(c)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut c = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (u, &a) in self.coeffs.iter().enumerate() {
            for (v, &b) in rhs.coeffs.iter().enumerate() {
                c[u + v] += a * b;
            }
        }
        Polynomial::new(c)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(Polynomial::new(vec![2.0, 0.0, 1.0]).eval(1.0), 3.0);
        assert_eq!(Polynomial::new(vec![0.0]).eval(5.0), 0.0);
        let p = Polynomial::new(vec![-2.0, 0.0, 1.0]);
        assert!(p.eval(2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trims_float_dust() {
        let p = Polynomial::new(vec![1.0, 2.0, 1e-15]);
        assert_eq!(p.degree(), 1);
        let z = Polynomial::new(vec![0.0, 0.0, 0.0]);
        assert!(z.is_zero());
        assert_eq!(z.degree(), 0);
    }

    #[test]
    fn linear_eval_is_exact() {
        let p = Polynomial::linear(0.1, 0.7);
        assert_eq!(p.eval(3.0), 0.1 + 0.7 * 3.0);
    }

    #[test]
    fn arithmetic() {
        let a = Polynomial::new(vec![1.0, 1.0]);
        let b = Polynomial::new(vec![-1.0, 1.0]);
        assert_eq!((&a * &b).coeffs(), &[-1.0, 0.0, 1.0]);
        assert_eq!((&a + &b).coeffs(), &[0.0, 2.0]);
        assert!((&a - &a).is_zero());
        assert_eq!((-&a).coeffs(), &[-1.0, -1.0]);
    }

    #[test]
    fn derivative_and_taylor() {
        let p = Polynomial::new(vec![6.0, -7.0, 0.0, 1.0]);
        assert_eq!(p.derivative().coeffs(), &[-7.0, 0.0, 3.0]);
        let t = p.taylor_at(2.0);
        // p(2) = 0, p'(2) = 5, p''(2)/2 = 6, p'''/6 = 1
        assert_eq!(t, vec![0.0, 5.0, 6.0, 1.0]);
    }

    #[test]
    fn interpolation_recovers_cubic() {
        let p = Polynomial::new(vec![6.0, -7.0, 0.0, 1.0]);
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let vals: Vec<f64> = nodes.iter().map(|&x| p.eval(x)).collect();
        let q = Polynomial::interpolate(&nodes, &vals).unwrap();
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_arity_error() {
        assert!(Polynomial::interpolate(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn display_is_readable() {
        let p = Polynomial::new(vec![-11.0, 20.0, -5.0]);
        assert_eq!(p.to_string(), "-5·λ^2 + 20·λ - 11");
    }
}
