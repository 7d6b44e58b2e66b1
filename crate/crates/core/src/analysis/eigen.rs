//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Inputs whose entries differ from their transpose by more than this
/// (relative to the largest entry) are rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order, eigenvectors (if requested) as the matching
/// columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

impl SymmetricEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(symmetric_eigen(a, false)?.values)
}

/// Diagonalizes `a` by sweeping Jacobi plane rotations over every
/// off-diagonal pair until the off-diagonal mass is at rounding level.
pub fn symmetric_eigen(a: &DMatrix<f64>, with_vectors: bool) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale.max(1.0) {
        return Err(Error::Asymmetric(asym));
    }

    let mut m = (a + a.transpose()) * 0.5;
    let mut v = with_vectors.then(|| DMatrix::<f64>::identity(n, n));
    let frob = m.norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum();
        if off.sqrt() <= f64::EPSILON * frob * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                rotate(&mut m, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let vectors = v.map(|v| DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]));
    Ok(SymmetricEigen { values, vectors })
}

/// Applies `Jᵀ M J` for the rotation `J` in the `(p, q)` plane.
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity() {
        let e = symmetric_eigen(&DMatrix::identity(3, 3), false).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_edge_laplacian() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let e = symmetric_eigen(&l, true).unwrap();
        assert_abs_diff_eq!(e.values[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.values[1], 2.0, epsilon = 1e-15);
        let v0 = e.vectors.unwrap().column(0).into_owned();
        assert_abs_diff_eq!(v0[0].abs(), v0[1].abs(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(symmetric_eigen(&a, false), Err(Error::Asymmetric(_))));
        assert!(symmetric_eigen(&DMatrix::zeros(2, 3), false).is_err());
    }

    #[test]
    fn diagonal_is_sorted() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let e = symmetric_eigen(&a, true).unwrap();
        assert_eq!(e.values.as_slice(), &[-1.0, 2.0, 3.0]);
        let v = e.vectors.unwrap();
        assert_eq!(v[(1, 0)].abs(), 1.0);
    }
}
