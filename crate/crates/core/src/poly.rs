//! Dense polynomials in one variable, stored as ascending coefficient lists
//! `c0 + c1*x + c2*x^2 + ...`. These carry the load dynamics of every cell,
//! so evaluation and differentiation stay allocation-free where possible.

use crate::scalar::Scalar;

/// Evaluate `sum c_k x^k` by Horner's rule. Empty list is the zero polynomial.
pub fn eval<S: Scalar>(coeffs: &[S], x: S) -> S {
    coeffs.iter().rev().fold(S::zero(), |acc, &c| acc * x + c)
}

/// Evaluate the analytic derivative `sum k c_k x^{k-1}`.
pub fn eval_derivative<S: Scalar>(coeffs: &[S], x: S) -> S {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(S::zero(), |acc, (k, &c)| acc * x + c * S::from_count(k))
}

/// Coefficient list of the derivative polynomial.
pub fn derivative_coeffs<S: Scalar>(coeffs: &[S]) -> Vec<S> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * S::from_count(k))
        .collect()
}

/// Least-squares failure modes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LstsqError {
    #[error("underdetermined fit: {samples} samples for {unknowns} unknowns")]
    Underdetermined { samples: usize, unknowns: usize },
    #[error("rank-deficient design matrix: column {column} is numerically dependent on the previous ones")]
    RankDeficient { column: usize },
}

/// Solve `min ||X b - y||_2` for a Vandermonde design matrix with columns
/// `x^0 .. x^degree`, via Householder QR. Returns the coefficient vector.
///
/// Rank deficiency (e.g. all sample abscissae equal) is reported with the
/// offending column index rather than silently producing garbage.
pub fn polyfit<S: Scalar>(xs: &[S], ys: &[S], degree: usize) -> Result<Vec<S>, LstsqError> {
    let n = xs.len();
    let m = degree + 1;
    debug_assert_eq!(xs.len(), ys.len());
    if n < m {
        return Err(LstsqError::Underdetermined {
            samples: n,
            unknowns: m,
        });
    }

    // Column-major Vandermonde, mutated into R by Householder reflections.
    let mut a = vec![S::zero(); n * m];
    for (i, &x) in xs.iter().enumerate() {
        let mut p = S::one();
        for j in 0..m {
            a[j * n + i] = p;
            p *= x;
        }
    }
    let mut y: Vec<S> = ys.to_vec();

    let col_scale: Vec<S> = (0..m)
        .map(|j| {
            a[j * n..(j + 1) * n]
                .iter()
                .fold(S::zero(), |acc, &v| acc.max(v.abs()))
        })
        .collect();

    for j in 0..m {
        // Householder vector for column j, rows j..n.
        let norm = a[j * n + j..(j + 1) * n]
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
            .sqrt();
        let tol = S::lit(1e-12) * col_scale[j].max(S::one()) * S::from_count(n);
        if norm <= tol {
            return Err(LstsqError::RankDeficient { column: j });
        }
        let alpha = if a[j * n + j] >= S::zero() {
            -norm
        } else {
            norm
        };
        let mut v = vec![S::zero(); n - j];
        v[0] = a[j * n + j] - alpha;
        v[1..].copy_from_slice(&a[j * n + j + 1..(j + 1) * n]);
        let vtv = v.iter().fold(S::zero(), |acc, &w| acc + w * w);
        if vtv == S::zero() {
            continue;
        }
        // Apply I - 2 v v^T / (v^T v) to the remaining columns and to y.
        for col in j..m {
            let dot = v
                .iter()
                .zip(&a[col * n + j..(col + 1) * n])
                .fold(S::zero(), |acc, (&w, &u)| acc + w * u);
            let f = S::lit(2.0) * dot / vtv;
            for (k, &w) in v.iter().enumerate() {
                a[col * n + j + k] -= f * w;
            }
        }
        let dot = v
            .iter()
            .zip(&y[j..])
            .fold(S::zero(), |acc, (&w, &u)| acc + w * u);
        let f = S::lit(2.0) * dot / vtv;
        for (k, &w) in v.iter().enumerate() {
            y[j + k] -= f * w;
        }
        a[j * n + j] = alpha;
    }

    // Back-substitute R b = Q^T y.
    let mut b = vec![S::zero(); m];
    for j in (0..m).rev() {
        let mut s = y[j];
        for k in j + 1..m {
            s -= a[k * n + j] * b[k];
        }
        let r_jj = a[j * n + j];
        if r_jj.abs() <= S::lit(1e-12) * col_scale[j].max(S::one()) {
            return Err(LstsqError::RankDeficient { column: j });
        }
        b[j] = s / r_jj;
    }
    Ok(b)
}
