//! Geographic cell deployments and their offloading graph.
//!
//! Sites come from a Poisson point process over a flat rectangle, candidate
//! neighbor pairs from the Delaunay triangulation (the dual of shared
//! Voronoi boundaries), and each candidate edge survives independently with
//! probability P. The Laplacian L = D - A of the surviving graph carries
//! the whole story: its eigenvalues set the per-mode decay rates of the
//! linearized load dynamics.

mod delaunay;

pub use delaunay::GeometryError;

use crate::linalg::{self, LinalgError};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Eigenvalues with magnitude below this are clamped to exactly zero; the
/// structural lambda_1 = 0 must never surface as floating noise.
pub const EIGENVALUE_ZERO_TOL: f64 = 1e-9;

/// Required symmetry tolerance on matrices fed to [`spectrum`].
pub const SPECTRUM_SYMMETRY_TOL: f64 = 1e-12;

const PPP_MAX_DRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("site intensity must be positive and finite")]
    BadIntensity,
    #[error("region must have positive width and height")]
    BadRegion,
    #[error("connection probability must lie in [0, 1]")]
    BadProbability,
    #[error("Poisson draw produced zero sites {0} times in a row; the scenario is degenerate")]
    RetriesExhausted(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("site ids must be 0..N-1 in order; site {index} has id {id}")]
    BadSiteId { index: usize, id: usize },
    #[error("site {0} lies outside the declared region")]
    SiteOutsideRegion(usize),
    #[error("edge ({0}, {1}) is invalid (self-loop or id out of range)")]
    BadEdge(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Rectangular deployment region, dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Region<S> {
    pub width: S,
    pub height: S,
}

impl<S: Scalar> Region<S> {
    pub fn new(width: S, height: S) -> Result<Self, TopologyError> {
        if width <= S::zero() || height <= S::zero() || !width.is_finite() || !height.is_finite() {
            return Err(TopologyError::BadRegion);
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> S {
        self.width * self.height
    }
}

/// One base-station site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CellSite<S> {
    pub id: usize,
    pub position: (S, S),
}

/// Undirected offloading graph over cell sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "TopologyRepr<S>",
    into = "TopologyRepr<S>",
    bound = "S: Scalar"
)]
pub struct NetworkTopology<S> {
    sites: Vec<CellSite<S>>,
    edges: BTreeSet<(usize, usize)>,
    region: Region<S>,
    seed: Option<u64>,
    connection_probability: Option<S>,
}

impl<S: Scalar> NetworkTopology<S> {
    /// Explicit sites and edges. Edges are normalized to (min, max) pairs;
    /// self-loops and out-of-range ids are rejected.
    pub fn new(
        sites: Vec<CellSite<S>>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        region: Region<S>,
    ) -> Result<Self, TopologyError> {
        let n = sites.len();
        for (index, site) in sites.iter().enumerate() {
            if site.id != index {
                return Err(TopologyError::BadSiteId { index, id: site.id });
            }
            let (x, y) = site.position;
            let inside = x.is_finite()
                && y.is_finite()
                && x >= S::zero()
                && x <= region.width
                && y >= S::zero()
                && y <= region.height;
            if !inside {
                return Err(TopologyError::SiteOutsideRegion(index));
            }
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(TopologyError::BadEdge(a, b));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            sites,
            edges: set,
            region,
            seed: None,
            connection_probability: None,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[CellSite<S>] {
        &self.sites
    }

    pub fn region(&self) -> Region<S> {
        self.region
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }

    /// Seed and thinning probability of the generating draw, when the
    /// topology came out of [`build_neighbor_graph`].
    pub fn provenance(&self) -> (Option<u64>, Option<S>) {
        (self.seed, self.connection_probability)
    }

    /// Adjacency matrix A (zero diagonal, symmetric 0/1 entries).
    pub fn adjacency(&self) -> Array2<S> {
        let n = self.n_cells();
        let mut a = Array2::zeros((n, n));
        for &(i, j) in &self.edges {
            a[[i, j]] = S::one();
            a[[j, i]] = S::one();
        }
        a
    }

    /// Laplacian L = D - A: degree on the diagonal, -1 per edge.
    pub fn laplacian(&self) -> Array2<S> {
        let n = self.n_cells();
        let mut l = Array2::zeros((n, n));
        for &(i, j) in &self.edges {
            l[[i, j]] = -S::one();
            l[[j, i]] = -S::one();
            l[[i, i]] += S::one();
            l[[j, j]] += S::one();
        }
        l
    }

    /// Connected components by breadth-first search, each sorted, ordered by
    /// smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_cells();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start] = true;
            let mut comp = vec![start];
            while let Some(v) = queue.pop_front() {
                for w in self.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }
}

/// Sites drawn from a Poisson point process: count ~ Poisson(intensity * area),
/// positions i.i.d. uniform over the region. Deterministic per seed. A zero
/// count is redrawn up to 10 times before the scenario is declared degenerate.
pub fn generate_ppp<S: Scalar>(
    intensity: S,
    region: Region<S>,
    seed: u64,
) -> Result<Vec<CellSite<S>>, TopologyError> {
    if intensity <= S::zero() || !intensity.is_finite() {
        return Err(TopologyError::BadIntensity);
    }
    let lambda = (intensity * region.area())
        .to_f64()
        .ok_or(TopologyError::BadIntensity)?;
    let mut rng = stream_rng(seed, Stream::Sites);
    let poisson = rand_distr::Poisson::new(lambda).map_err(|_| TopologyError::BadIntensity)?;
    for _ in 0..PPP_MAX_DRAWS {
        let count = rand::Rng::sample(&mut rng, poisson) as usize;
        if count == 0 {
            continue;
        }
        let sites = (0..count)
            .map(|id| CellSite {
                id,
                position: (
                    rng.gen_range(S::zero()..region.width),
                    rng.gen_range(S::zero()..region.height),
                ),
            })
            .collect();
        return Ok(sites);
    }
    Err(TopologyError::RetriesExhausted(PPP_MAX_DRAWS))
}

/// Neighbor graph: Delaunay-adjacent site pairs thinned independently with
/// probability P (P = 1 keeps the full triangulation, P = 0 none of it).
pub fn build_neighbor_graph<S: Scalar>(
    sites: Vec<CellSite<S>>,
    region: Region<S>,
    connection_probability: S,
    seed: u64,
) -> Result<NetworkTopology<S>, TopologyError> {
    if connection_probability < S::zero()
        || connection_probability > S::one()
        || !connection_probability.is_finite()
    {
        return Err(TopologyError::BadProbability);
    }
    let coords: Vec<(f64, f64)> = sites
        .iter()
        .map(|s| {
            (
                s.position.0.to_f64().unwrap_or(f64::NAN),
                s.position.1.to_f64().unwrap_or(f64::NAN),
            )
        })
        .collect();
    let candidates = delaunay::delaunay_edges(&coords)?;

    let mut rng = stream_rng(seed, Stream::EdgeThinning);
    let kept: Vec<(usize, usize)> = candidates
        .into_iter()
        .filter(|_| rng.gen_range(S::zero()..S::one()) < connection_probability)
        .collect();

    let mut topology = NetworkTopology::new(sites, kept, region)?;
    topology.seed = Some(seed);
    topology.connection_probability = Some(connection_probability);
    Ok(topology)
}

/// Sorted Laplacian eigenvalues with the two headline numbers pulled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SpectralSummary<S> {
    /// Non-decreasing; values within [`EIGENVALUE_ZERO_TOL`] of zero are
    /// clamped to exactly zero, so `eigenvalues[0] == 0` structurally.
    pub eigenvalues: Vec<S>,
    /// lambda_2, absent for single-cell graphs.
    pub algebraic_connectivity: Option<S>,
    /// lambda_N.
    pub spectral_radius: S,
}

impl<S: Scalar> SpectralSummary<S> {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Multiplicity of the zero eigenvalue (= connected component count for
    /// genuine Laplacians).
    pub fn zero_multiplicity(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l == S::zero()).count()
    }

    /// CSV rows `index,eigenvalue`, ready for histogram plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue\n");
        for (i, l) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{i},{l}").expect("string write");
        }
        out
    }
}

/// Eigen-decompose a symmetric matrix (the Laplacian in practice): all
/// eigenvalues ascending, near-zeros clamped. Asymmetric input (beyond
/// 1e-12) is a contract violation, not something to silently symmetrize.
pub fn spectrum<S: Scalar>(laplacian: &Array2<S>) -> Result<SpectralSummary<S>, TopologyError> {
    linalg::require_symmetric(laplacian, SPECTRUM_SYMMETRY_TOL)?;
    let mut eigenvalues = linalg::symmetric_eigenvalues(laplacian)?;
    let tol = S::lit(EIGENVALUE_ZERO_TOL);
    for l in eigenvalues.iter_mut() {
        if l.abs() < tol {
            *l = S::zero();
        }
    }
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    let algebraic_connectivity = eigenvalues.get(1).copied();
    let spectral_radius = *eigenvalues.last().expect("at least one eigenvalue");
    Ok(SpectralSummary {
        eigenvalues,
        algebraic_connectivity,
        spectral_radius,
    })
}

/// Wire format: {"region": [w, h], "sites": [[x, y], ..], "edges": [[i, j], ..], "seed": n?, "P": p?}.
#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct TopologyRepr<S> {
    region: (S, S),
    sites: Vec<(S, S)>,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    connection_probability: Option<S>,
}

impl<S: Scalar> TryFrom<TopologyRepr<S>> for NetworkTopology<S> {
    type Error = String;

    fn try_from(repr: TopologyRepr<S>) -> Result<Self, String> {
        let region = Region::new(repr.region.0, repr.region.1).map_err(|e| e.to_string())?;
        let sites = repr
            .sites
            .into_iter()
            .enumerate()
            .map(|(id, position)| CellSite { id, position })
            .collect();
        let mut topology =
            NetworkTopology::new(sites, repr.edges, region).map_err(|e| e.to_string())?;
        topology.seed = repr.seed;
        topology.connection_probability = repr.connection_probability;
        Ok(topology)
    }
}

impl<S: Scalar> From<NetworkTopology<S>> for TopologyRepr<S> {
    fn from(t: NetworkTopology<S>) -> Self {
        Self {
            region: (t.region.width, t.region.height),
            sites: t.sites.iter().map(|s| s.position).collect(),
            edges: t.edges.iter().copied().collect(),
            seed: t.seed,
            connection_probability: t.connection_probability,
        }
    }
}

/// Convenience assembly of small explicit graphs in a unit region; positions
/// are laid out on a circle since only the combinatorics matter.
pub fn from_edge_list<S: Scalar>(
    n: usize,
    edges: &[(usize, usize)],
) -> Result<NetworkTopology<S>, TopologyError> {
    let region = Region::new(S::lit(2.0), S::lit(2.0))?;
    let sites = (0..n)
        .map(|id| {
            let angle = 2.0 * std::f64::consts::PI * id as f64 / n.max(1) as f64;
            CellSite {
                id,
                position: (
                    S::lit(1.0 + 0.9 * angle.cos()),
                    S::lit(1.0 + 0.9 * angle.sin()),
                ),
            }
        })
        .collect();
    NetworkTopology::new(sites, edges.iter().copied(), region)
}
