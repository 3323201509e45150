//! Analytic stability of the synchronized full-load state.
//!
//! Linearizing the coupled dynamics about `l_i = s` gives
//! `d(dl)/dt = (F + K - Q) dl` with `F = diag(f_i'(s))`, `Q = A (hadamard) H`
//! holding the pairwise coupling slopes `h_ij(s, s)`, and `K = diag(row sums
//! of Q)`. For one shared policy this collapses to `f'(s) I + h(s, s) L`, so
//! each Laplacian eigenmode decays like `exp((f' + h lambda_i) t)` and the
//! verdict reduces to a sign check per eigenvalue. Heterogeneous networks
//! get the Lyapunov route: with symmetric H, negative local slopes and
//! negative coupling slopes certify stability outright (identity P); an
//! asymmetric H certifies nothing, which is reported as its own verdict and
//! left to the simulator to settle.

use crate::linalg::{self, LinalgError};
use crate::policy::{
    coupling_slope_h, local_derivative, PolicyAssignment, PolicyError, REASON_DESTABILIZING_LOCAL,
};
use crate::scalar::Scalar;
use crate::topology::{spectrum, NetworkTopology, SpectralSummary, TopologyError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Symmetry tolerance on the pair-slope matrix H.
pub const H_SYMMETRY_TOL: f64 = 1e-9;

/// Recommended gate action attached to every culprit.
pub const ACTION_DENY: &str = "deny-load-balancing";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error("assignment covers {assignment} cells but the topology has {topology}")]
    CellCountMismatch { assignment: usize, topology: usize },
    #[error("linearization at s = {s} crosses the sleep threshold of cell {cell}")]
    SleepThresholdCrossed { cell: usize, s: f64 },
    #[error("vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("convergence rates are only defined for a Stable assessment")]
    NotStable,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Three-way outcome of an analytic check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    /// The paper's non-conclusion: the candidate Lyapunov argument fails,
    /// which proves nothing either way. The simulator gets the last word.
    NotGuaranteed,
}

/// A cell flagged by the audit, with the gating recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Culprit {
    pub cell: usize,
    pub reason: String,
    pub action: String,
}

impl Culprit {
    fn new(cell: usize, reason: impl Into<String>) -> Self {
        Self {
            cell,
            reason: reason.into(),
            action: ACTION_DENY.to_string(),
        }
    }
}

/// Verdict plus the evidence trail. `culprits` is empty exactly when the
/// verdict is Stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub rationale: String,
    pub culprits: Vec<Culprit>,
}

/// Eigenmode analysis of a homogeneous network.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousAssessment<S> {
    /// Shared local slope f'(s).
    pub f_prime: S,
    /// Shared coupling slope h(s, s).
    pub h: S,
    /// Per-eigenmode rates `f' + h lambda_i`; index 0 is the uniform mode.
    pub mode_rates: Vec<S>,
    pub verdict: StabilityVerdict,
    /// Largest (least negative) mode rate: the asymptotic decay of the
    /// slowest mode, `xi_i(t) = exp((f' + h lambda_i) t) xi_0`.
    pub slowest_rate: S,
}

/// Mode rates `f'(s) + h(s, s) lambda_i` and the all-rates-negative verdict.
pub fn assess_homogeneous<S: Scalar>(
    f_prime: S,
    h: S,
    spectrum: &SpectralSummary<S>,
) -> HomogeneousAssessment<S> {
    let mode_rates: Vec<S> = spectrum
        .eigenvalues
        .iter()
        .map(|&l| f_prime + h * l)
        .collect();
    let slowest_rate = mode_rates.iter().copied().fold(S::neg_infinity(), S::max);
    let stable = mode_rates.iter().all(|&r| r < S::zero());
    let verdict = if stable {
        StabilityVerdict {
            verdict: Verdict::Stable,
            rationale: format!(
                "all {} eigenmode rates f' + h lambda are negative (slowest {})",
                mode_rates.len(),
                slowest_rate
            ),
            culprits: Vec::new(),
        }
    } else {
        let n = spectrum.n();
        let (reason, rationale) = if f_prime >= S::zero() {
            (
                REASON_DESTABILIZING_LOCAL.to_string(),
                format!("the uniform mode rate f' = {f_prime} is non-negative"),
            )
        } else {
            (
                format!("destabilizing coupling slope (h = {h})"),
                format!(
                    "coupling slope h = {h} drives some eigenmode rate non-negative (worst {slowest_rate})"
                ),
            )
        };
        StabilityVerdict {
            verdict: Verdict::Unstable,
            rationale,
            culprits: (0..n).map(|i| Culprit::new(i, reason.clone())).collect(),
        }
    };
    HomogeneousAssessment {
        f_prime,
        h,
        mode_rates,
        verdict,
        slowest_rate,
    }
}

/// The linearization blocks at the synchronized state.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalMatrices<S> {
    /// diag(f_i'(s)).
    pub f: Array2<S>,
    /// Pair slopes h_ij(s, s) for every ordered pair, zero diagonal.
    pub h: Array2<S>,
    /// A (hadamard) H: slopes masked to actual links.
    pub q: Array2<S>,
    /// diag(k_ii = sum_j q_ij).
    pub k: Array2<S>,
    /// Assembled system matrix J = F + K - Q.
    pub j: Array2<S>,
    /// Adjacency mask the Q entries came from.
    pub a: Array2<S>,
    /// Set when some linked pair has h_ij != h_ji beyond [`H_SYMMETRY_TOL`].
    pub h_asymmetric: bool,
}

/// Evaluate F, H, Q, K and J = F + K - Q at the operating point `s`.
///
/// `s` must sit strictly inside every cell's active branch: a sleep-capable
/// cell with `s < gamma` (or exactly at it) has no classical derivative
/// there and the build refuses rather than guessing a side.
pub fn build_variational_matrices<S: Scalar>(
    topology: &NetworkTopology<S>,
    assignment: &PolicyAssignment<S>,
    s: S,
) -> Result<VariationalMatrices<S>, StabilityError> {
    let n = topology.n_cells();
    if assignment.n_cells() != n {
        return Err(StabilityError::CellCountMismatch {
            assignment: assignment.n_cells(),
            topology: n,
        });
    }
    let mut f = Array2::zeros((n, n));
    for i in 0..n {
        if let Some(gamma) = assignment.local(i).mode().gamma() {
            if s < gamma {
                return Err(StabilityError::SleepThresholdCrossed {
                    cell: i,
                    s: s.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        f[[i, i]] = local_derivative(assignment.local(i), s)?;
    }

    let mut h = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                h[[i, j]] = coupling_slope_h(assignment.coupling(i, j), s);
            }
        }
    }

    let a = topology.adjacency();
    let q = &a * &h;
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = q.row(i).iter().copied().sum::<S>();
    }
    let j = &f + &k - &q;

    let tol = S::lit(H_SYMMETRY_TOL);
    let h_asymmetric = topology
        .edges()
        .any(|(x, y)| (h[[x, y]] - h[[y, x]]).abs() > tol);

    Ok(VariationalMatrices {
        f,
        h,
        q,
        k,
        j,
        a,
        h_asymmetric,
    })
}

impl<S: Scalar> VariationalMatrices<S> {
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    /// Linked pairs (i < j) whose coupling slope is non-negative.
    fn non_negative_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.a[[i, j]] > S::zero()
                    && (self.h[[i, j]] >= S::zero() || self.h[[j, i]] >= S::zero())
                {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Linked pairs violating h_ij = h_ji.
    fn asymmetric_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let tol = S::lit(H_SYMMETRY_TOL);
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.a[[i, j]] > S::zero() && (self.h[[i, j]] - self.h[[j, i]]).abs() > tol {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Eigenvalues of the symmetric part (J + J^T) / 2, ascending.
    pub fn symmetric_part_eigenvalues(&self) -> Result<Vec<S>, StabilityError> {
        Ok(linalg::symmetric_eigenvalues(&self.j)?)
    }
}

/// Lyapunov verdict for a heterogeneous network, linearized at s = 1.
///
/// Three-way: (a) symmetric H with every `h_ij < 0` and every `f_i' < 0` is
/// Stable by the identity-P Lyapunov argument; (b) symmetric H failing that
/// sufficient condition falls back to the spectral test on the symmetric
/// part of J (an artifact addition, labeled as such in the rationale);
/// (c) asymmetric H is NotGuaranteed — the failed candidate Lyapunov
/// function proves nothing by itself.
pub fn assess_heterogeneous<S: Scalar>(
    matrices: &VariationalMatrices<S>,
) -> Result<StabilityVerdict, StabilityError> {
    if matrices.h_asymmetric {
        let mut culprits = Vec::new();
        for (i, j) in matrices.asymmetric_pairs() {
            let reason = format!("asymmetric coupling linearization on pair ({i}, {j})");
            culprits.push(Culprit::new(i, reason.clone()));
            culprits.push(Culprit::new(j, reason));
        }
        return Ok(StabilityVerdict {
            verdict: Verdict::NotGuaranteed,
            rationale: "H is asymmetric on coupled pairs, so K - Q is not positive \
                        semidefinite and the identity-P Lyapunov decrement is sign-indefinite"
                .to_string(),
            culprits,
        });
    }

    let n = matrices.n();
    let bad_local: Vec<usize> = (0..n)
        .filter(|&i| matrices.f[[i, i]] >= S::zero())
        .collect();
    let bad_pairs = matrices.non_negative_pairs();

    if bad_local.is_empty() && bad_pairs.is_empty() {
        return Ok(StabilityVerdict {
            verdict: Verdict::Stable,
            rationale: "sufficient Lyapunov condition (P = I): all f_i'(s) < 0 and all \
                        h_ij(s, s) < 0 on coupled pairs"
                .to_string(),
            culprits: Vec::new(),
        });
    }

    // Sufficient condition is silent; decide by the sign of the largest
    // eigenvalue of (J + J^T) / 2.
    let eigs = matrices.symmetric_part_eigenvalues()?;
    let lambda_max = *eigs.last().expect("non-empty spectrum");
    if lambda_max < S::zero() {
        return Ok(StabilityVerdict {
            verdict: Verdict::Stable,
            rationale: format!(
                "spectral test: largest eigenvalue of (J + J^T)/2 is {lambda_max} < 0"
            ),
            culprits: Vec::new(),
        });
    }
    let mut culprits: Vec<Culprit> = bad_local
        .iter()
        .map(|&i| Culprit::new(i, REASON_DESTABILIZING_LOCAL))
        .collect();
    for (i, j) in bad_pairs {
        let reason = format!("non-negative coupling slope on pair ({i}, {j})");
        culprits.push(Culprit::new(i, reason.clone()));
        culprits.push(Culprit::new(j, reason));
    }
    Ok(StabilityVerdict {
        verdict: Verdict::Unstable,
        rationale: format!("spectral test: largest eigenvalue of (J + J^T)/2 is {lambda_max} >= 0"),
        culprits,
    })
}

/// Lyapunov decrement `V'(x) = 2 (x^T F x + x^T (K - Q) x)` for V = x^T x.
pub fn lyapunov_decrement<S: Scalar>(
    matrices: &VariationalMatrices<S>,
    x: &[S],
) -> Result<S, StabilityError> {
    let n = matrices.n();
    if x.len() != n {
        return Err(StabilityError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let mut quad_f = S::zero();
    let mut quad_kq = S::zero();
    for i in 0..n {
        quad_f += x[i] * matrices.f[[i, i]] * x[i];
        for j in 0..n {
            let kq = matrices.k[[i, j]] - matrices.q[[i, j]];
            quad_kq += x[i] * kq * x[j];
        }
    }
    Ok(S::lit(2.0) * (quad_f + quad_kq))
}

/// Predicted decay rates of a Stable homogeneous network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct ConvergenceRates<S> {
    /// Rate of the uniform (all-cells-together) mode: f'(s).
    pub uniform: S,
    /// Slowest decay among the disagreement modes, `max_{i >= 2} f' + h lambda_i`;
    /// absent for single-cell networks.
    pub disagreement: Option<S>,
}

/// Slowest disagreement-mode rate (inter-cell error) and the uniform-mode
/// rate. Errors unless the assessment concluded Stable.
pub fn convergence_rate_estimate<S: Scalar>(
    assessment: &HomogeneousAssessment<S>,
) -> Result<ConvergenceRates<S>, StabilityError> {
    if assessment.verdict.verdict != Verdict::Stable {
        return Err(StabilityError::NotStable);
    }
    let disagreement = assessment.mode_rates[1..]
        .iter()
        .copied()
        .fold(None, |acc: Option<S>, r| Some(acc.map_or(r, |a| a.max(r))));
    Ok(ConvergenceRates {
        uniform: assessment.f_prime,
        disagreement,
    })
}

/// Full stability report: the CU-side computation that the DU gates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct StabilityReport<S> {
    pub verdict: Verdict,
    pub rationale: String,
    /// Homogeneous path: eigenmode rates f' + h lambda_i. Heterogeneous
    /// path: eigenvalues of (J + J^T)/2, labeled by `rates_kind`.
    pub mode_rates: Vec<S>,
    pub rates_kind: String,
    pub culprits: Vec<Culprit>,
    pub uniform_rate: Option<S>,
    pub disagreement_rate: Option<S>,
    pub components: Vec<Vec<usize>>,
}

/// Audit a scenario: run the homogeneous eigenmode criterion or the
/// heterogeneous Lyapunov check at s = 1, collect culprits in order of
/// argument strength (destabilizing f_i' first, then non-negative pair
/// slopes, then sleep-capable cells, whose threshold lets them break
/// coupling symmetry at run time), and recommend the gate action.
pub fn audit<S: Scalar>(
    topology: &NetworkTopology<S>,
    assignment: &PolicyAssignment<S>,
) -> Result<StabilityReport<S>, StabilityError> {
    let n = topology.n_cells();
    if assignment.n_cells() != n {
        return Err(StabilityError::CellCountMismatch {
            assignment: assignment.n_cells(),
            topology: n,
        });
    }
    let components = topology.connected_components();
    let one = S::one();

    if assignment.homogeneous() {
        let f_prime = local_derivative(assignment.local(0), one)?;
        let h = coupling_slope_h(assignment.default_coupling(), one);
        let lap_spectrum = spectrum(&topology.laplacian())?;
        let assessment = assess_homogeneous(f_prime, h, &lap_spectrum);
        let rates = convergence_rate_estimate(&assessment).ok();
        return Ok(StabilityReport {
            verdict: assessment.verdict.verdict,
            rationale: assessment.verdict.rationale,
            mode_rates: assessment.mode_rates,
            rates_kind: "eigenmode".to_string(),
            culprits: assessment.verdict.culprits,
            uniform_rate: rates.as_ref().map(|r| r.uniform),
            disagreement_rate: rates.and_then(|r| r.disagreement),
            components,
        });
    }

    let matrices = build_variational_matrices(topology, assignment, one)?;
    let base = assess_heterogeneous(&matrices)?;
    let mode_rates = matrices.symmetric_part_eigenvalues()?;

    let mut verdict = base.verdict;
    let mut rationale = base.rationale;
    let mut culprits = base.culprits;
    let sleep_cells = assignment.sleep_capable_cells();
    if !sleep_cells.is_empty() {
        for &cell in &sleep_cells {
            let gamma = assignment
                .local(cell)
                .mode()
                .gamma()
                .expect("sleep-capable cell has gamma");
            culprits.push(Culprit::new(
                cell,
                format!("sleep mode (gamma = {gamma}) can break coupling symmetry"),
            ));
        }
        if verdict == Verdict::Stable {
            verdict = Verdict::NotGuaranteed;
            rationale = format!(
                "{rationale}; however {} sleep-capable cell(s) can switch below gamma, \
                 making H asymmetric, so stability is not guaranteed",
                sleep_cells.len()
            );
        }
    }

    Ok(StabilityReport {
        verdict,
        rationale,
        mode_rates,
        rates_kind: "symmetric-part-spectrum".to_string(),
        culprits,
        uniform_rate: None,
        disagreement_rate: None,
        components,
    })
}
