//! Dense symmetric eigenvalue computation via cyclic Jacobi rotations.
//! Self-contained so the whole crate stays generic over the scalar type;
//! the matrices here are small (one row per cell), where Jacobi is both
//! robust and fast enough.

use crate::scalar::Scalar;
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta:e} exceeds {tol:e}")]
    NotSymmetric {
        i: usize,
        j: usize,
        delta: f64,
        tol: f64,
    },
    #[error("Jacobi iteration failed to converge in {0} sweeps")]
    NoConvergence(usize),
}

/// Largest absolute symmetry defect, with its location.
pub fn symmetry_defect<S: Scalar>(a: &Array2<S>) -> (usize, usize, S) {
    let n = a.nrows();
    let mut worst = (0, 0, S::zero());
    for i in 0..n {
        for j in i + 1..n {
            let d = (a[[i, j]] - a[[j, i]]).abs();
            if d > worst.2 {
                worst = (i, j, d);
            }
        }
    }
    worst
}

/// Error unless the matrix is symmetric within `tol`.
pub fn require_symmetric<S: Scalar>(a: &Array2<S>, tol: f64) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let (i, j, delta) = symmetry_defect(a);
    if delta > S::lit(tol) {
        return Err(LinalgError::NotSymmetric {
            i,
            j,
            delta: delta.to_f64().unwrap_or(f64::NAN),
            tol,
        });
    }
    Ok(())
}

const MAX_SWEEPS: usize = 64;

/// All eigenvalues of a symmetric matrix, ascending. The strict upper
/// triangle is ignored in favour of the lower one, so inputs symmetric
/// within a tolerance are handled as their symmetric part would be.
pub fn symmetric_eigenvalues<S: Scalar>(a: &Array2<S>) -> Result<Vec<S>, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // Work on the symmetrized copy.
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = (m[[i, j]] + m[[j, i]]) / S::lit(2.0);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }

    let norm = frobenius(&m).max(S::min_positive_value());
    let target = norm * S::epsilon() * S::from_count(n);

    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= target {
            let mut eigs: Vec<S> = (0..n).map(|i| m[[i, i]]).collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues must be ordered"));
            return Ok(eigs);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= target / S::from_count(n * n) {
                    continue;
                }
                let (c, s) = jacobi_rotation(m[[p, p]], m[[q, q]], apq);
                apply_rotation(&mut m, p, q, c, s);
            }
        }
    }
    if off_diagonal_norm(&m) <= target * S::lit(1e3) {
        let mut eigs: Vec<S> = (0..n).map(|i| m[[i, i]]).collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues must be ordered"));
        return Ok(eigs);
    }
    Err(LinalgError::NoConvergence(MAX_SWEEPS))
}

fn frobenius<S: Scalar>(m: &Array2<S>) -> S {
    m.iter().map(|&v| v * v).sum::<S>().sqrt()
}

fn off_diagonal_norm<S: Scalar>(m: &Array2<S>) -> S {
    let n = m.nrows();
    let mut s = S::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[[i, j]] * m[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Classic symmetric Schur decomposition of the 2x2 block.
fn jacobi_rotation<S: Scalar>(app: S, aqq: S, apq: S) -> (S, S) {
    let tau = (aqq - app) / (S::lit(2.0) * apq);
    let t = if tau >= S::zero() {
        S::one() / (tau + (S::one() + tau * tau).sqrt())
    } else {
        -S::one() / (-tau + (S::one() + tau * tau).sqrt())
    };
    let c = S::one() / (S::one() + t * t).sqrt();
    (c, t * c)
}

fn apply_rotation<S: Scalar>(m: &mut Array2<S>, p: usize, q: usize, c: S, s: S) {
    let n = m.nrows();
    let app = m[[p, p]];
    let aqq = m[[q, q]];
    let apq = m[[p, q]];
    let two = S::lit(2.0);
    m[[p, p]] = c * c * app - two * s * c * apq + s * s * aqq;
    m[[q, q]] = s * s * app + two * s * c * apq + c * c * aqq;
    m[[p, q]] = S::zero();
    m[[q, p]] = S::zero();
    for i in 0..n {
        if i == p || i == q {
            continue;
        }
        let aip = m[[i, p]];
        let aiq = m[[i, q]];
        m[[i, p]] = c * aip - s * aiq;
        m[[p, i]] = m[[i, p]];
        m[[i, q]] = s * aip + c * aiq;
        m[[q, i]] = m[[i, q]];
    }
}
