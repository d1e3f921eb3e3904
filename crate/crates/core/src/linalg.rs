//! Small dense linear-algebra kernels.
//!
//! The matrices this crate works with are tiny (agent counts around 20,
//! strategy dimensions around 32), so a cyclic Jacobi eigensolver and a
//! partially pivoted Gaussian elimination cover every need without pulling
//! in a LAPACK backend. Jacobi is used for every symmetric eigenproblem
//! because of its accuracy on well-scaled symmetric matrices.

use ndarray::{Array1, Array2};

use crate::scalar::{cast, Scalar};

const MAX_JACOBI_SWEEPS: usize = 64;

/// Eigenvalues of a symmetric matrix, sorted ascending.
///
/// The input must be symmetric; only the given entries are read (no
/// symmetrization is applied), so callers that assemble `A` from a formula
/// should make both triangles agree.
pub fn symmetric_eigenvalues<T: Scalar>(a: &Array2<T>) -> Vec<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigenvalues needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[(0, 0)]];
    }

    let mut m = a.clone();
    let frob = frobenius(&m);
    let tol = T::epsilon() * frob * cast::<T>(n as f64);

    for _ in 0..MAX_JACOBI_SWEEPS {
        if off_diagonal_norm(&m) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol / cast::<T>((n * n) as f64) {
                    continue;
                }
                let (c, s, t) = jacobi_rotation(m[(p, p)], m[(q, q)], apq);
                apply_rotation(&mut m, p, q, c, s, t);
            }
        }
    }

    let mut eigs: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    eigs
}

/// Largest eigenvalue of a symmetric matrix.
pub fn symmetric_eigenvalue_max<T: Scalar>(a: &Array2<T>) -> T {
    *symmetric_eigenvalues(a)
        .last()
        .expect("non-empty symmetric matrix")
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_eigenvalue_min<T: Scalar>(a: &Array2<T>) -> T {
    symmetric_eigenvalues(a)[0]
}

/// Largest singular value, computed as the root of the largest eigenvalue
/// of the Gram matrix on the smaller side.
pub fn spectral_norm<T: Scalar>(a: &Array2<T>) -> T {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return T::zero();
    }
    let gram = if rows <= cols {
        a.dot(&a.t())
    } else {
        a.t().dot(a)
    };
    symmetric_eigenvalue_max(&gram).max(T::zero()).sqrt()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below the numerical-rank threshold.
pub fn solve_linear<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Option<Array1<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "solve_linear needs a square matrix");
    assert_eq!(n, b.len(), "rhs length must match matrix size");
    if n == 0 {
        return Some(Array1::zeros(0));
    }

    let mut m = a.clone();
    let mut rhs = b.clone();
    let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let pivot_tol = T::epsilon() * scale * cast::<T>(n as f64);

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = m[(col, col)].abs();
        for row in col + 1..n {
            let v = m[(row, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val <= pivot_tol || !pivot_val.is_finite() {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(pivot_row, k)];
                m[(pivot_row, k)] = tmp;
            }
            let tmp = rhs[col];
            rhs[col] = rhs[pivot_row];
            rhs[pivot_row] = tmp;
        }
        let pivot = m[(col, col)];
        for row in col + 1..n {
            let factor = m[(row, col)] / pivot;
            if factor == T::zero() {
                continue;
            }
            m[(row, col)] = T::zero();
            for k in col + 1..n {
                let delta = factor * m[(col, k)];
                m[(row, k)] -= delta;
            }
            let delta = factor * rhs[col];
            rhs[row] -= delta;
        }
    }

    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[(row, k)] * x[k];
        }
        x[row] = acc / m[(row, row)];
    }
    Some(x)
}

fn frobenius<T: Scalar>(a: &Array2<T>) -> T {
    a.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

fn off_diagonal_norm<T: Scalar>(a: &Array2<T>) -> T {
    let n = a.nrows();
    let mut acc = T::zero();
    for p in 0..n {
        for q in 0..n {
            if p != q {
                acc += a[(p, q)] * a[(p, q)];
            }
        }
    }
    acc.sqrt()
}

/// Classic symmetric Jacobi rotation (c, s, t) zeroing `a_pq`.
fn jacobi_rotation<T: Scalar>(app: T, aqq: T, apq: T) -> (T, T, T) {
    let tau = (aqq - app) / (cast::<T>(2.0) * apq);
    let t = if tau >= T::zero() {
        T::one() / (tau + (T::one() + tau * tau).sqrt())
    } else {
        T::one() / (tau - (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;
    (c, s, t)
}

fn apply_rotation<T: Scalar>(m: &mut Array2<T>, p: usize, q: usize, c: T, s: T, t: T) {
    let n = m.nrows();
    let apq = m[(p, q)];
    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = T::zero();
    m[(q, p)] = T::zero();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = c * akp - s * akq;
        m[(p, k)] = m[(k, p)];
        m[(k, q)] = s * akp + c * akq;
        m[(q, k)] = m[(k, q)];
    }
}
