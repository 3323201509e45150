//! Incremental (Bowyer–Watson) Delaunay triangulation, reduced to the edge
//! set the neighbor graph needs.
//!
//! Geometry runs in f64 on coordinates normalized to [-1, 1]^2 regardless of
//! the caller's scalar type; the output is purely combinatorial. After
//! construction a Lawson pass repairs any floating-point slips and
//! canonicalizes exactly-cocircular quads: of two interchangeable diagonals
//! the lexicographically smallest id pair wins, so equal inputs always give
//! equal graphs.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("need at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("all {0} sites are collinear; the neighbor graph is undefined")]
    CollinearSites(usize),
    #[error("sites {0} and {1} coincide")]
    DuplicateSites(usize, usize),
}

const SUPER_SCALE: f64 = 1e6;
const COCIRCULAR_TOL: f64 = 1e-11;

/// Delaunay edge set over point ids (pairs stored as (min, max)).
pub fn delaunay_edges(points: &[(f64, f64)]) -> Result<BTreeSet<(usize, usize)>, GeometryError> {
    let n = points.len();
    if n < 2 {
        return Err(GeometryError::TooFewSites(n));
    }
    check_duplicates(points)?;
    if n == 2 {
        return Ok(BTreeSet::from([(0, 1)]));
    }
    let pts = normalize(points);
    if all_collinear(&pts) {
        return Err(GeometryError::CollinearSites(n));
    }

    let mut mesh = bowyer_watson(&pts);
    canonicalize(&mut mesh, &pts, n);

    let mut edges = BTreeSet::new();
    for tri in &mesh {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])] {
            if a < n && b < n {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    Ok(edges)
}

fn check_duplicates(points: &[(f64, f64)]) -> Result<(), GeometryError> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(GeometryError::DuplicateSites(
                w[0].min(w[1]),
                w[0].max(w[1]),
            ));
        }
    }
    Ok(())
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

fn all_collinear(pts: &[(f64, f64)]) -> bool {
    let p0 = pts[0];
    let p1 = match pts[1..]
        .iter()
        .find(|&&p| (p.0 - p0.0).hypot(p.1 - p0.1) > 0.0)
    {
        Some(&p) => p,
        None => return true,
    };
    pts.iter().all(|&p| cross(p0, p1, p).abs() <= 1e-14)
}

/// > 0 iff `d` lies strictly inside the circumcircle of CCW triangle (a, b, c).
fn in_circle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let (ax, ay) = (a.0 - d.0, a.1 - d.1);
    let (bx, by) = (b.0 - d.0, b.1 - d.1);
    let (cx, cy) = (c.0 - d.0, c.1 - d.1);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

type Tri = [usize; 3];

fn oriented(pts: &[(f64, f64)], a: usize, b: usize, c: usize) -> Option<Tri> {
    let o = cross(pts[a], pts[b], pts[c]);
    if o > 0.0 {
        Some([a, b, c])
    } else if o < 0.0 {
        Some([a, c, b])
    } else {
        None
    }
}

fn conflicts(pts: &[(f64, f64)], tri: &Tri, p: usize) -> bool {
    in_circle(pts[tri[0]], pts[tri[1]], pts[tri[2]], pts[p]) > 0.0
}

fn bowyer_watson(pts: &[(f64, f64)]) -> Vec<Tri> {
    let n = pts.len();
    let mut all = pts.to_vec();
    all.push((0.0, 3.0 * SUPER_SCALE));
    all.push((-3.0 * SUPER_SCALE, -3.0 * SUPER_SCALE));
    all.push((3.0 * SUPER_SCALE, -3.0 * SUPER_SCALE));
    let mut tris: Vec<Tri> = vec![oriented(&all, n, n + 1, n + 2).expect("super triangle")];

    for p in 0..n {
        let (cavity, kept): (Vec<Tri>, Vec<Tri>) =
            tris.into_iter().partition(|t| conflicts(&all, t, p));
        // Boundary edges appear in exactly one cavity triangle.
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &cavity {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        tris = kept;
        for t in &cavity {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if edge_count[&(a.min(b), a.max(b))] == 1 {
                    if let Some(fan) = oriented(&all, p, a, b) {
                        tris.push(fan);
                    }
                }
            }
        }
    }
    // Keep triangles with at least two finite vertices: hull edges also live
    // on super-adjacent triangles, which protects them from super-vertex
    // proximity artifacts.
    tris
}

/// Lawson repair plus deterministic tie resolution on the finite mesh.
fn canonicalize(tris: &mut Vec<Tri>, pts_finite: &[(f64, f64)], n: usize) {
    // Restrict to fully finite triangles for flipping.
    let mut finite: Vec<Tri> = tris
        .iter()
        .copied()
        .filter(|t| t.iter().all(|&v| v < n))
        .collect();
    let super_tris: Vec<Tri> = tris
        .iter()
        .copied()
        .filter(|t| t.iter().any(|&v| v >= n))
        .collect();

    let max_passes = 4 * finite.len().max(4);
    for _ in 0..max_passes {
        let mut adjacency: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (idx, t) in finite.iter().enumerate() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                adjacency.entry((a.min(b), a.max(b))).or_default().push(idx);
            }
        }
        let mut flipped = false;
        for (&(a, b), owners) in &adjacency {
            if owners.len() != 2 {
                continue;
            }
            let (t1, t2) = (owners[0], owners[1]);
            let c = opposite(&finite[t1], a, b);
            let d = opposite(&finite[t2], a, b);
            let Some(ccw) = oriented_pts(pts_finite, a, b, c) else {
                continue;
            };
            let det = in_circle(
                pts_finite[ccw[0]],
                pts_finite[ccw[1]],
                pts_finite[ccw[2]],
                pts_finite[d],
            );
            let prefer_flip = det > COCIRCULAR_TOL
                || (det.abs() <= COCIRCULAR_TOL && (c.min(d), c.max(d)) < (a, b));
            if prefer_flip && quad_convex(pts_finite, a, b, c, d) {
                finite[t1] = oriented_pts(pts_finite, c, d, a).expect("flip degenerate");
                finite[t2] = oriented_pts(pts_finite, d, c, b).expect("flip degenerate");
                flipped = true;
                break;
            }
        }
        if !flipped {
            break;
        }
    }

    *tris = finite;
    tris.extend(super_tris);
}

fn opposite(t: &Tri, a: usize, b: usize) -> usize {
    *t.iter()
        .find(|&&v| v != a && v != b)
        .expect("degenerate triangle")
}

fn oriented_pts(pts: &[(f64, f64)], a: usize, b: usize, c: usize) -> Option<Tri> {
    let o = cross(pts[a], pts[b], pts[c]);
    if o > 0.0 {
        Some([a, b, c])
    } else if o < 0.0 {
        Some([a, c, b])
    } else {
        None
    }
}

/// The flip (a, b) -> (c, d) is valid only when the segments properly cross.
fn quad_convex(pts: &[(f64, f64)], a: usize, b: usize, c: usize, d: usize) -> bool {
    let d1 = cross(pts[a], pts[b], pts[c]);
    let d2 = cross(pts[a], pts[b], pts[d]);
    let d3 = cross(pts[c], pts[d], pts[a]);
    let d4 = cross(pts[c], pts[d], pts[b]);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
