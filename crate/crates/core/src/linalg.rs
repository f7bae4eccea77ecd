//! Small dense linear algebra helpers.
//!
//! Everything here works on matrices of at most a few hundred rows (feature
//! Gram matrices, per-mode tridiagonal time systems), so plain O(n^3) dense
//! routines are the right tool.

use ndarray::{Array1, Array2};

/// Solves a tridiagonal system in place with the Thomas algorithm.
///
/// `lower[l]` couples row `l` to `l-1` (entry 0 unused), `upper[l]` couples
/// row `l` to `l+1` (last entry unused). The matrices used by the solver are
/// irreducibly diagonally dominant, so no pivoting is needed.
///
/// Panics if the system degenerates (zero pivot) or sizes mismatch.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Vec<f64> {
    let n = diag.len();
    assert!(n > 0, "empty tridiagonal system");
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    assert_eq!(rhs.len(), n);

    let mut c_prime = vec![0.0; n];
    let mut pivot = diag[0];
    assert!(pivot != 0.0, "zero pivot in tridiagonal solve");
    c_prime[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for l in 1..n {
        pivot = diag[l] - lower[l] * c_prime[l - 1];
        assert!(pivot != 0.0, "zero pivot in tridiagonal solve");
        c_prime[l] = upper[l] / pivot;
        rhs[l] = (rhs[l] - lower[l] * rhs[l - 1]) / pivot;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1];
    for l in (0..n - 1).rev() {
        x[l] = rhs[l] - c_prime[l] * x[l + 1];
    }
    x
}

/// Inverts a square matrix by Gauss-Jordan elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-300` in absolute value.
pub fn invert(matrix: &Array2<f64>) -> Option<Array2<f64>> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "invert expects a square matrix");
    let mut work = matrix.clone();
    let mut inv = Array2::<f64>::eye(n);

    for col in 0..n {
        let mut pivot_row = col;
        let mut best = work[[col, col]].abs();
        for r in col + 1..n {
            let v = work[[r, col]].abs();
            if v > best {
                best = v;
                pivot_row = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if pivot_row != col {
            swap_rows(&mut work, col, pivot_row);
            swap_rows(&mut inv, col, pivot_row);
        }
        let pivot = work[[col, col]];
        for c in 0..n {
            work[[col, c]] /= pivot;
            inv[[col, c]] /= pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[[r, col]];
            if factor == 0.0 {
                continue;
            }
            for c in 0..n {
                work[[r, c]] -= factor * work[[col, c]];
                inv[[r, c]] -= factor * inv[[col, c]];
            }
        }
    }
    Some(inv)
}

fn swap_rows(m: &mut Array2<f64>, a: usize, b: usize) {
    for c in 0..m.ncols() {
        let tmp = m[[a, c]];
        m[[a, c]] = m[[b, c]];
        m[[b, c]] = tmp;
    }
}

/// Checks that a symmetric matrix is positive semidefinite up to `slack`,
/// by attempting a Cholesky factorization of `matrix + slack * I`.
pub fn is_positive_semidefinite(matrix: &Array2<f64>, slack: f64) -> bool {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return false;
    }
    let mut a = matrix.clone();
    for i in 0..n {
        a[[i, i]] += slack;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum < 0.0 {
                    return false;
                }
                l[[i, i]] = sum.sqrt();
            } else if l[[j, j]] == 0.0 {
                if sum.abs() > 0.0 {
                    return false;
                }
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    true
}

/// Dense matrix-vector product into a fresh vector.
pub fn matvec(matrix: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    matrix.dot(v)
}
