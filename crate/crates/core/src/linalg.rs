//! Small dense linear algebra for the ambient space: rigid motions, subspaces,
//! projectors and the two matrix norms used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};

/// Default orthogonality tolerance.
pub const TOL_ORTHO: f64 = 1e-10;
/// Default geometric tolerance.
pub const TOL_GEOM: f64 = 1e-9;
/// Largest ambient dimension handled by the dense routines.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub ortho: f64,
    pub geom: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ortho: TOL_ORTHO, geom: TOL_GEOM }
    }
}

/// Column-Euclidean norm `(sum_j |a_j|^2)^(1/2)`; the norm used for `Du`.
pub fn col_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Operator norm (largest singular value).
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.nrows() == 1 || a.ncols() == 1 {
        return col_norm(a);
    }
    a.clone().singular_values().max()
}

/// Smallest singular value.
pub fn min_singular(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values().min()
}

/// Nearest rotation in the Frobenius sense (polar factor with det fixed to +1).
pub fn nearest_rotation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut r = &u * &v_t;
    if r.determinant() < 0.0 {
        // flip the direction belonging to the smallest singular value
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut d = DMatrix::<f64>::identity(n, n);
        d[(imin, imin)] = -1.0;
        r = &u * d * &v_t;
    }
    r
}

/// Rotation plus translation, `x -> R x + T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanIsometry {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

impl EuclideanIsometry {
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>, tol: f64) -> Result<Self> {
        let n = rotation.nrows();
        if rotation.ncols() != n {
            return Err(GeomError::DimensionMismatch { expected: n, got: rotation.ncols() });
        }
        if translation.len() != n {
            return Err(GeomError::DimensionMismatch { expected: n, got: translation.len() });
        }
        if n == 0 || n > MAX_DIM {
            return Err(GeomError::InvalidArgument(format!("ambient dimension {n} out of range")));
        }
        let dev = (rotation.transpose() * &rotation - DMatrix::<f64>::identity(n, n)).amax();
        if dev > tol {
            return Err(GeomError::NotRotation(format!("orthogonality defect {dev:e}")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > tol.max(1e-12) * 10.0 {
            return Err(GeomError::NotRotation(format!("determinant {det}")));
        }
        Ok(EuclideanIsometry { rotation, translation })
    }

    pub fn identity(n: usize) -> Self {
        EuclideanIsometry { rotation: DMatrix::identity(n, n), translation: DVector::zeros(n) }
    }

    /// Re-orthonormalises an approximately orthogonal matrix.
    pub fn from_approx(rotation: &DMatrix<f64>, translation: DVector<f64>) -> Self {
        EuclideanIsometry { rotation: nearest_rotation(rotation), translation }
    }

    pub fn n(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rotation * x + &self.translation
    }

    pub fn apply_inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        self.rotation.tr_mul(&(y - &self.translation))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let t = -(&rt * &self.translation);
        EuclideanIsometry { rotation: rt, translation: t }
    }

    /// 2x2 rotation by `theta` (used by tests and scenarios).
    pub fn planar_rotation(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }
}

/// `a ∘ b`, re-projected onto SO(n).
pub fn compose(a: &EuclideanIsometry, b: &EuclideanIsometry) -> Result<EuclideanIsometry> {
    if a.n() != b.n() {
        return Err(GeomError::DimensionMismatch { expected: a.n(), got: b.n() });
    }
    let r = &a.rotation * &b.rotation;
    let t = &a.rotation * &b.translation + &a.translation;
    Ok(EuclideanIsometry { rotation: nearest_rotation(&r), translation: t })
}

/// `‖R - R̃‖_op`.
pub fn rotation_distance(r: &DMatrix<f64>, rt: &DMatrix<f64>) -> f64 {
    op_norm(&(r - rt))
}

/// Orthonormal basis of a `d`-dimensional subspace of `R^n`, stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub basis: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn new(basis: DMatrix<f64>, tol: f64) -> Result<Self> {
        let d = basis.ncols();
        let gram = basis.transpose() * &basis;
        let det = gram.determinant();
        if d > 0 && det.abs() < tol {
            return Err(GeomError::DegenerateBasis(det));
        }
        let dev = (gram - DMatrix::<f64>::identity(d, d)).amax();
        if dev > tol {
            return Err(GeomError::InvalidArgument(format!("basis not orthonormal ({dev:e})")));
        }
        Ok(SubspaceBasis { basis })
    }

    /// Orthonormalises arbitrary spanning columns (modified Gram-Schmidt).
    pub fn orthonormalize(cols: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = cols.nrows();
        let mut out: Vec<DVector<f64>> = Vec::new();
        for j in 0..cols.ncols() {
            let mut v = cols.column(j).into_owned();
            let scale = v.norm();
            for q in &out {
                let c = q.dot(&v);
                v -= q * c;
            }
            let nv = v.norm();
            if nv <= tol.max(1e-300) * scale.max(1.0) {
                return Err(GeomError::DegenerateBasis(nv));
            }
            out.push(v / nv);
        }
        Ok(SubspaceBasis { basis: DMatrix::from_columns(&out).resize(n, out.len(), 0.0) })
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn d(&self) -> usize {
        self.basis.ncols()
    }
}

/// Orthogonal projector onto `span(b)`.
pub fn subspace_projector(b: &SubspaceBasis, tol: f64) -> Result<DMatrix<f64>> {
    let gram = b.basis.transpose() * &b.basis;
    if b.d() > 0 && gram.determinant().abs() < tol {
        return Err(GeomError::DegenerateBasis(gram.determinant()));
    }
    let p = &b.basis * b.basis.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_planar_rotations() {
        let a = EuclideanIsometry::new(
            EuclideanIsometry::planar_rotation(0.3),
            DVector::zeros(2),
            TOL_ORTHO,
        )
        .unwrap();
        let b = EuclideanIsometry::new(
            EuclideanIsometry::planar_rotation(1.1),
            DVector::zeros(2),
            TOL_ORTHO,
        )
        .unwrap();
        let c = compose(&a, &b).unwrap();
        let expect = EuclideanIsometry::planar_rotation(1.4);
        assert!((c.rotation - expect).amax() < 1e-14);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let a = EuclideanIsometry::new(
            EuclideanIsometry::planar_rotation(2.0),
            DVector::from_vec(vec![1.0, -3.0]),
            TOL_ORTHO,
        )
        .unwrap();
        let c = compose(&a, &a.inverse()).unwrap();
        assert!((c.rotation - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(c.translation.amax() < 1e-12);
    }

    #[test]
    fn compose_dimension_mismatch() {
        let e = compose(&EuclideanIsometry::identity(2), &EuclideanIsometry::identity(3));
        assert!(matches!(e, Err(GeomError::DimensionMismatch { .. })));
    }

    #[test]
    fn rotation_distance_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(rotation_distance(&id, &id), 0.0);
        // eigenvalue oracle: |e^{iθ} - 1| = 2|sin(θ/2)|
        let d = rotation_distance(&id, &EuclideanIsometry::planar_rotation(std::f64::consts::FRAC_PI_3));
        assert!((d - 1.0).abs() < 1e-12);
        let d = rotation_distance(&id, &EuclideanIsometry::planar_rotation(std::f64::consts::PI));
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projector_examples() {
        let b = SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), TOL_ORTHO).unwrap();
        let p = subspace_projector(&b, TOL_ORTHO).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let full = SubspaceBasis::new(DMatrix::identity(3, 3), TOL_ORTHO).unwrap();
        assert!((subspace_projector(&full, TOL_ORTHO).unwrap() - DMatrix::identity(3, 3)).amax() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[s, s]), TOL_ORTHO).unwrap();
        let p = subspace_projector(&b, TOL_ORTHO).unwrap();
        let v = DVector::from_vec(vec![s, s]);
        let outer = &v * v.transpose();
        assert!((p - outer).amax() < 1e-15);
    }

    #[test]
    fn degenerate_basis_rejected() {
        let cols = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(SubspaceBasis::orthonormalize(&cols, TOL_ORTHO).is_err());
        assert!(SubspaceBasis::new(DMatrix::zeros(2, 1), TOL_ORTHO).is_err());
    }

    #[test]
    fn nearest_rotation_fixes_reflection() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = nearest_rotation(&m);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
}
