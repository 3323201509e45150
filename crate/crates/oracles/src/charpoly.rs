//! Eigenvalues of a symmetric matrix by the most pedestrian route there is:
//! characteristic polynomial coefficients via Faddeev–LeVerrier, then all
//! real roots (with multiplicity) by recursively root-finding the derivative
//! cascade. Every derivative of a real-rooted polynomial is real-rooted, so
//! the roots of p' bracket the roots of p and plain bisection finds each one;
//! multiple roots of p surface exactly as near-zero values at the bracket
//! endpoints. Fine for the small matrices the tests feed it.

/// All eigenvalues (ascending, with multiplicity) of a symmetric matrix given
/// in row-major order.
pub fn symmetric_eigenvalues_charpoly(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    assert!(n > 0, "matrix must be non-empty");
    for row in matrix {
        assert_eq!(row.len(), n, "matrix must be square");
    }
    let coeffs = char_poly_monic(matrix);
    let mut roots = real_roots_all(&coeffs);
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Monic characteristic polynomial det(lambda I - A), ascending coefficients
/// `[c_0, .., c_{n-1}, 1]`, by the Faddeev–LeVerrier recursion.
fn char_poly_monic(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m = vec![vec![0.0; n]; n]; // M_0 = 0
    let mut coeffs_desc = vec![1.0]; // leading coefficient of lambda^n
    let mut c = 1.0;
    for k in 1..=n {
        // M_k = A * (M_{k-1} + c_{k-1} I)
        let mut t = m.clone();
        for (i, row) in t.iter_mut().enumerate() {
            row[i] += c;
        }
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for (l, t_row) in t.iter().enumerate() {
                    s += a[i][l] * t_row[j];
                }
                next[i][j] = s;
            }
        }
        let trace: f64 = (0..n).map(|i| next[i][i]).sum();
        c = -trace / k as f64;
        coeffs_desc.push(c);
        m = next;
    }
    coeffs_desc.reverse();
    coeffs_desc
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Horner evaluation plus a running rounding majorant: |p(x)| at or below
/// the bound is indistinguishable from zero at this x.
fn horner_with_error(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut bound = 0.0;
    for &c in coeffs.iter().rev() {
        value = value * x + c;
        bound = bound * x.abs() + value.abs();
    }
    (value, bound * f64::EPSILON * 4.0 * coeffs.len() as f64)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

/// All real roots, with multiplicity, of a polynomial known to have only
/// real roots (ascending coefficients, non-zero leading coefficient).
fn real_roots_all(coeffs: &[f64]) -> Vec<f64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    if degree == 1 {
        return vec![-coeffs[0] / coeffs[1]];
    }
    let inner = real_roots_all(&derivative(coeffs));
    // Cauchy bound on root magnitude.
    let lead = coeffs[degree].abs();
    let bound = 1.0
        + coeffs[..degree]
            .iter()
            .fold(0.0f64, |acc, &c| acc.max(c.abs() / lead));

    let mut brackets = Vec::with_capacity(degree + 1);
    brackets.push(-bound);
    brackets.extend_from_slice(&inner);
    brackets.push(bound);

    // Interlacing: [s_{k-1}, s_k] holds exactly one root of p. Multiple
    // roots coincide with an endpoint (they are roots of p' too), and the
    // endpoint is the accurate location — bisection near an even-order root
    // only resolves to sqrt(eps). Simple interior roots change the sign and
    // bisect cleanly. If neither test fires the root still sits at an
    // endpoint, just outside the noise bound; take the relatively smaller
    // one.
    let mut roots = Vec::with_capacity(degree);
    for w in brackets.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (f_lo, e_lo) = horner_with_error(coeffs, lo);
        let (f_hi, e_hi) = horner_with_error(coeffs, hi);
        if f_lo.abs() <= e_lo {
            roots.push(lo);
        } else if f_hi.abs() <= e_hi {
            roots.push(hi);
        } else if f_lo.signum() != f_hi.signum() {
            roots.push(bisect(coeffs, lo, hi, f_lo));
        } else if f_lo.abs() <= f_hi.abs() {
            roots.push(lo);
        } else {
            roots.push(hi);
        }
    }
    assert_eq!(roots.len(), degree, "real-rooted cascade lost a root");
    roots
}

fn bisect(coeffs: &[f64], mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let lo_sign = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = horner(coeffs, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_matrix_roots() {
        let m = vec![vec![2.0, 0.0], vec![0.0, -3.0]];
        let eigs = symmetric_eigenvalues_charpoly(&m);
        assert!((eigs[0] + 3.0).abs() < 1e-12);
        assert!((eigs[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_roots_of_complete_graph_laplacian() {
        // Laplacian of K4: eigenvalues {0, 4, 4, 4}.
        let m = vec![
            vec![3.0, -1.0, -1.0, -1.0],
            vec![-1.0, 3.0, -1.0, -1.0],
            vec![-1.0, -1.0, 3.0, -1.0],
            vec![-1.0, -1.0, -1.0, 3.0],
        ];
        let eigs = symmetric_eigenvalues_charpoly(&m);
        assert!(eigs[0].abs() < 1e-9);
        for &e in &eigs[1..] {
            assert!((e - 4.0).abs() < 1e-9, "eig {e}");
        }
    }

    #[test]
    fn path_graph_closed_form() {
        // Laplacian of the path 0-1-2: eigenvalues {0, 1, 3}.
        let m = vec![
            vec![1.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ];
        let eigs = symmetric_eigenvalues_charpoly(&m);
        assert!(eigs[0].abs() < 1e-10);
        assert!((eigs[1] - 1.0).abs() < 1e-10);
        assert!((eigs[2] - 3.0).abs() < 1e-10);
    }
}
