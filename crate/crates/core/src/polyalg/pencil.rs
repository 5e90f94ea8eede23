use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PolyError, Polynomial};

/// Matrix-valued map `λ ↦ M0 + λ·M1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePencil {
    #[serde(with = "crate::io::row_major")]
    pub m0: DMatrix<f64>,
    #[serde(with = "crate::io::row_major")]
    pub m1: DMatrix<f64>,
}

impl AffinePencil {
    pub fn new(m0: DMatrix<f64>, m1: DMatrix<f64>) -> Result<Self, PolyError> {
        if !m0.is_square() || m0.shape() != m1.shape() || m0.nrows() == 0 {
            return Err(PolyError::PencilShape { m0: m0.shape(), m1: m1.shape() });
        }
        Ok(AffinePencil { m0, m1 })
    }

    pub fn dim(&self) -> usize {
        self.m0.nrows()
    }

    pub fn at(&self, lambda: f64) -> DMatrix<f64> {
        &self.m0 + &self.m1 * lambda
    }

    pub fn det_at(&self, lambda: f64) -> f64 {
        self.at(lambda).lu().determinant()
    }

    /// Interpolation nodes `0, 1, …, p` used by the evaluation–interpolation scheme.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.dim()).map(|u| u as f64).collect()
    }
}

/// `det(M0 + λ·M1)` as an explicit polynomial of degree ≤ p.
pub fn pencil_det_polynomial(pencil: &AffinePencil) -> Polynomial {
    let nodes = pencil.nodes();
    let values: Vec<f64> = nodes.iter().map(|&x| pencil.det_at(x)).collect();
    Polynomial::interpolate(&nodes, &values).expect("nodes and values have equal length")
}

/// Cramer numerators `N_u(λ) = det(M(λ) with column u replaced by C0 + λ·C1)`.
///
/// Wherever `det M(λ) ≠ 0`, the solution of `M(λ)β = C(λ)` is `β_u = N_u(λ) / det M(λ)`.
pub fn cramer_numerators(
    pencil: &AffinePencil,
    c0: &DVector<f64>,
    c1: &DVector<f64>,
) -> Result<Vec<Polynomial>, PolyError> {
    let p = pencil.dim();
    for v in [c0, c1] {
        if v.len() != p {
            return Err(PolyError::VectorShape { expected: p, got: v.len() });
        }
    }
    let nodes = pencil.nodes();
    let mut values = vec![vec![0.0; nodes.len()]; p];
    for (t, &x) in nodes.iter().enumerate() {
        let m = pencil.at(x);
        let c = c0 + c1 * x;
        for (u, row) in values.iter_mut().enumerate() {
            let mut mu = m.clone();
            mu.set_column(u, &c);
            row[t] = mu.lu().determinant();
        }
    }
    Ok(values
        .into_iter()
        .map(|v| Polynomial::interpolate(&nodes, &v).expect("arity matches"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn diagonal_pencil() {
        let pen = AffinePencil::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            -DMatrix::identity(2, 2),
        )
        .unwrap();
        let d = pencil_det_polynomial(&pen);
        assert!(close(d.coeffs(), &[2.0, -3.0, 1.0], 1e-12));
    }

    #[test]
    fn identity_pencil_is_constant() {
        let pen = AffinePencil::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 3)).unwrap();
        let d = pencil_det_polynomial(&pen);
        assert_eq!(d.degree(), 0);
        assert!((d.coeffs()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangular_pencil() {
        let pen = AffinePencil::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let d = pencil_det_polynomial(&pen);
        assert!(close(d.coeffs(), &[1.0, -1.0], 1e-12));
    }

    #[test]
    fn cramer_identity_system() {
        let pen = AffinePencil::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        let n = cramer_numerators(&pen, &DVector::from_vec(vec![3.0, 4.0]), &DVector::zeros(2)).unwrap();
        assert!(close(n[0].coeffs(), &[3.0], 1e-12));
        assert!(close(n[1].coeffs(), &[4.0], 1e-12));
    }

    #[test]
    fn cramer_diagonal_system() {
        let pen = AffinePencil::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let n = cramer_numerators(&pen, &DVector::from_vec(vec![2.0, 5.0]), &DVector::zeros(2)).unwrap();
        assert!(close(n[0].coeffs(), &[2.0], 1e-12));
        assert!(close(n[1].coeffs(), &[10.0], 1e-12));
        let det = pencil_det_polynomial(&pen).eval(0.0);
        assert!((n[0].eval(0.0) / det - 1.0).abs() < 1e-12);
        assert!((n[1].eval(0.0) / det - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cramer_scalar_case() {
        let pen = AffinePencil::new(DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, -1.0)).unwrap();
        let n = cramer_numerators(&pen, &DVector::from_element(1, 1.0), &DVector::from_element(1, 1.0)).unwrap();
        assert!(close(n[0].coeffs(), &[1.0, 1.0], 1e-12));
    }

    #[test]
    fn shape_errors() {
        assert!(AffinePencil::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 3)).is_err());
        assert!(AffinePencil::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)).is_err());
        let pen = AffinePencil::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        assert!(cramer_numerators(&pen, &DVector::zeros(3), &DVector::zeros(2)).is_err());
    }
}
