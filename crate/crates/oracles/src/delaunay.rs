//! Delaunay edges straight from the definition: a pair is an edge iff some
//! circle through the two sites contains no other site strictly inside,
//! which (for a non-collinear set) is equivalent to some third site closing
//! an empty circumcircle. Exactly cocircular quadruples admit both crossing
//! diagonals; those ties are resolved by keeping the lexicographically
//! smallest id pair, matching the production tie-break.

use std::collections::BTreeSet;

/// Edge set of the Delaunay triangulation of `points`, ids by position index.
///
/// Panics on fewer than 2 points or an all-collinear set of 3 or more —
/// callers are tests that must not feed degenerate input.
pub fn delaunay_edges_bruteforce(points: &[(f64, f64)]) -> BTreeSet<(usize, usize)> {
    let n = points.len();
    assert!(n >= 2, "need at least two points");
    if n == 2 {
        return BTreeSet::from([(0, 1)]);
    }
    assert!(
        !all_collinear(points),
        "all points are collinear; no triangulation exists"
    );

    // Normalize into [-1, 1]^2 so the cocircularity tolerance is scale-free.
    let pts = normalize(points);

    let mut candidates: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if has_empty_circumcircle(&pts, i, j) {
                candidates.insert((i, j));
            }
        }
    }

    // Cocircular ties appear as properly crossing candidate edges; drop the
    // lexicographically larger edge of each crossing pair.
    let list: Vec<(usize, usize)> = candidates.iter().copied().collect();
    let mut dropped: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (a, e1) in list.iter().enumerate() {
        for e2 in list.iter().skip(a + 1) {
            if e1.0 == e2.0 || e1.0 == e2.1 || e1.1 == e2.0 || e1.1 == e2.1 {
                continue;
            }
            if segments_cross(&pts, *e1, *e2) {
                dropped.insert((*e1).max(*e2));
            }
        }
    }
    candidates.retain(|e| !dropped.contains(e));
    candidates
}

fn normalize(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let cx = 0.5 * (min_x + max_x);
    let cy = 0.5 * (min_y + max_y);
    let scale = 0.5 * (max_x - min_x).max(max_y - min_y).max(f64::MIN_POSITIVE);
    points
        .iter()
        .map(|&(x, y)| ((x - cx) / scale, (y - cy) / scale))
        .collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn all_collinear(points: &[(f64, f64)]) -> bool {
    let p0 = points[0];
    let Some(&p1) = points[1..].iter().max_by(|a, b| {
        let da = (a.0 - p0.0).hypot(a.1 - p0.1);
        let db = (b.0 - p0.0).hypot(b.1 - p0.1);
        da.partial_cmp(&db).unwrap()
    }) else {
        return true;
    };
    let span = (p1.0 - p0.0).hypot(p1.1 - p0.1);
    if span == 0.0 {
        return true;
    }
    points
        .iter()
        .all(|&p| cross(p0, p1, p).abs() <= 1e-12 * span * span)
}

/// Strictly-inside-circumcircle predicate: positive determinant means `d`
/// lies inside the circle through counterclockwise (a, b, c).
fn in_circle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let (ax, ay) = (a.0 - d.0, a.1 - d.1);
    let (bx, by) = (b.0 - d.0, b.1 - d.1);
    let (cx, cy) = (c.0 - d.0, c.1 - d.1);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

const COCIRCULAR_TOL: f64 = 1e-12;

fn has_empty_circumcircle(pts: &[(f64, f64)], i: usize, j: usize) -> bool {
    let n = pts.len();
    'witness: for k in 0..n {
        if k == i || k == j {
            continue;
        }
        let orient = cross(pts[i], pts[j], pts[k]);
        if orient.abs() <= COCIRCULAR_TOL {
            continue; // no circumcircle through a collinear triple
        }
        // Orient (i, j, k) counterclockwise for the in-circle sign.
        let (a, b, c) = if orient > 0.0 {
            (pts[i], pts[j], pts[k])
        } else {
            (pts[i], pts[k], pts[j])
        };
        for (l, &p) in pts.iter().enumerate() {
            if l == i || l == j || l == k {
                continue;
            }
            if in_circle(a, b, c, p) > COCIRCULAR_TOL {
                continue 'witness;
            }
        }
        return true;
    }
    false
}

fn segments_cross(pts: &[(f64, f64)], e1: (usize, usize), e2: (usize, usize)) -> bool {
    let (a, b) = (pts[e1.0], pts[e1.1]);
    let (c, d) = (pts[e2.0], pts[e2.1]);
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
