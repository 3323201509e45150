//! Brute-force reference computations for the test suites. Everything here
//! is deliberately written by the most literal route available — definitions
//! instead of algorithms — so the production code is checked against an
//! independent path. None of this is a dependency of the shipped crates;
//! it appears in `[dev-dependencies]` only.

pub mod charpoly;
pub mod delaunay;
pub mod graphs;

pub use charpoly::symmetric_eigenvalues_charpoly;
pub use delaunay::delaunay_edges_bruteforce;
pub use graphs::{connected_components_union_find, labeled_graphs_up_to_iso};

/// Closed-form simple linear regression `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares for a line, via the covariance formula.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> Line {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Line {
        slope,
        intercept: my - slope * mx,
    }
}
