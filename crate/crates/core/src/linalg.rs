//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SqpError};

/// Infinity norm of a vector; zero-length vectors have norm 0.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Largest absolute entry of a matrix; empty matrices have norm 0.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Symmetrize a square matrix: A <- (A + A')/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix; +inf for an empty matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|); 0 if empty.
pub fn symmetric_two_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b.abs()))
}

/// Orthonormal basis of the null space of `j` (m x n, m <= n), returned as an
/// n x (n - rank) matrix with orthonormal columns.
///
/// Completes the orthogonal factorization of J': the column space of J' is
/// orthonormalized first, then coordinate directions are projected and
/// re-orthogonalized to span the complement.
pub fn null_space_basis(j: &DMatrix<f64>) -> DMatrix<f64> {
    let m = j.nrows();
    let n = j.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);

    // Range(J') first so the complement is exactly Null(J).
    for i in 0..m {
        let mut v: DVector<f64> = j.row(i).transpose();
        orthogonalize_against(&mut v, &basis);
        let norm = v.norm();
        if norm > 1e-12 {
            basis.push(v / norm);
        }
    }
    let range_dim = basis.len();

    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        orthogonalize_against(&mut v, &basis);
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }

    let null_dim = basis.len() - range_dim;
    DMatrix::from_fn(n, null_dim, |r, c| basis[range_dim + c][r])
}

/// Two-pass modified Gram-Schmidt projection of `v` against an orthonormal set.
fn orthogonalize_against(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let coef = b.dot(v);
            v.axpy(-coef, b, 1.0);
        }
    }
}

/// Solve the dense square system A x = b by LU with partial pivoting, with
/// one step of iterative refinement.
pub fn lu_solve_refined(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b).ok_or(SqpError::SingularSystem)?;
    for _ in 0..2 {
        let r = b - a * &x;
        if inf_norm(&r) <= 1e-16 * max_abs(a).max(1.0) * inf_norm(&x).max(1.0) {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        } else {
            break;
        }
    }
    Ok(x)
}

/// Least-squares multipliers: y = argmin ||g + J' y||_2, via the normal
/// equations (J J') y = -J g.
pub fn least_squares_multipliers(g: &DVector<f64>, j: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = j.nrows();
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let jjt = j * j.transpose();
    let rhs = -(j * g);
    lu_solve_refined(&jjt, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_row_vector() {
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let z = null_space_basis(&j);
        assert_eq!(z.shape(), (2, 1));
        assert!((z[(0, 0)].abs()) < 1e-14);
        assert!((z[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let j =
            DMatrix::from_row_slice(2, 5, &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0, 1.0, 4.0, -2.0, 1.0]);
        let z = null_space_basis(&j);
        assert_eq!(z.shape(), (5, 3));
        let ztz = z.transpose() * &z;
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(max_abs(&(ztz - id)) < 1e-12);
        assert!(max_abs(&(&j * &z)) < 1e-12);
    }

    #[test]
    fn null_space_square_jacobian_is_empty() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let z = null_space_basis(&j);
        assert_eq!(z.shape(), (2, 0));
        assert!(min_symmetric_eigenvalue(&DMatrix::zeros(0, 0)).is_infinite());
    }

    #[test]
    fn refined_lu_solves_accurately() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = lu_solve_refined(&a, &b).unwrap();
        let r = &b - &a * &x;
        assert!(inf_norm(&r) < 1e-13);
    }

    #[test]
    fn least_squares_multiplier_residual_orthogonal() {
        let j = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 2.0, -1.0, 0.0, 1.0, 1.0, 1.0]);
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = least_squares_multipliers(&g, &j).unwrap();
        let residual = &g + j.transpose() * &y;
        // optimality: J (g + J' y) = 0
        assert!(inf_norm(&(&j * residual)) < 1e-10);
    }
}
