//! Nonlinear integration of the coupled load dynamics — the empirical check
//! behind every analytic verdict.
//!
//! `dl_i/dt = f_i(l_i) + sum_j a_ij g_ij(l_i, l_j)`, integrated with
//! classic fixed-step RK4. The piecewise sleep-mode right-hand side is
//! evaluated as-is at every stage (no event location, no clamping: clamping
//! the dynamics would mask exactly the instabilities this exists to
//! observe). Loads may leave [0, 1] freely; a run halts early only when a
//! component exceeds the blow-up threshold or stops being finite.

use crate::policy::{eval_coupling_unchecked, PolicyAssignment};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::stability::StabilityReport;
use crate::topology::NetworkTopology;
use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// A load beyond this magnitude counts as numerical blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// Single-linkage gap separating terminal clusters.
pub const CLUSTER_GAP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("state vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state contains a non-finite load (component {0})")]
    NonFiniteState(usize),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("horizon must cover at least 100 steps, got horizon {horizon} with dt {dt}")]
    HorizonTooShort { horizon: f64, dt: f64 },
    #[error("sync tolerance must lie strictly in (0, 1), got {0}")]
    BadSyncTolerance(f64),
    #[error("perturbation amplitude must be non-negative, got {0}")]
    BadPerturbation(f64),
    #[error("record stride must be positive")]
    BadRecordStride,
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

/// Knobs for one integration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SimulationConfig<S> {
    pub dt: S,
    pub horizon: S,
    /// Max |l_i - 1| that still counts as synchronized.
    pub sync_tolerance: S,
    pub perturbation_amplitude: S,
    pub seed: u64,
    /// Steps between recorded samples.
    pub record_stride: usize,
}

impl<S: Scalar> SimulationConfig<S> {
    pub fn new(dt: S, horizon: S) -> Result<Self, SimError> {
        let config = Self {
            dt,
            horizon,
            sync_tolerance: S::lit(1e-3),
            perturbation_amplitude: S::zero(),
            seed: 0,
            record_stride: 10,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dt <= S::zero() || !self.dt.is_finite() {
            return Err(SimError::BadTimeStep(self.dt.to_f64().unwrap_or(f64::NAN)));
        }
        if self.horizon < S::lit(100.0) * self.dt {
            return Err(SimError::HorizonTooShort {
                horizon: self.horizon.to_f64().unwrap_or(f64::NAN),
                dt: self.dt.to_f64().unwrap_or(f64::NAN),
            });
        }
        if self.sync_tolerance <= S::zero() || self.sync_tolerance >= S::one() {
            return Err(SimError::BadSyncTolerance(
                self.sync_tolerance.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if self.perturbation_amplitude < S::zero() {
            return Err(SimError::BadPerturbation(
                self.perturbation_amplitude.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if self.record_stride == 0 {
            return Err(SimError::BadRecordStride);
        }
        Ok(())
    }

    pub fn with_sync_tolerance(mut self, tol: S) -> Self {
        self.sync_tolerance = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }
}

/// Active/sleeping flags for all cells at one sample, bit i set = sleeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeFlags {
    n_cells: usize,
    words: Vec<u64>,
}

impl ModeFlags {
    pub fn from_state<S: Scalar>(assignment: &PolicyAssignment<S>, state: &Array1<S>) -> Self {
        let n_cells = state.len();
        let mut words = vec![0u64; n_cells.div_ceil(64)];
        for (i, &l) in state.iter().enumerate() {
            if assignment.local(i).mode().is_sleeping(l) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self { n_cells, words }
    }

    pub fn is_sleeping(&self, cell: usize) -> bool {
        self.words[cell / 64] >> (cell % 64) & 1 == 1
    }

    pub fn any_sleeping(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    /// Hex bitmask, cell 0 in the least-significant bit, fixed width
    /// ceil(n/4) digits.
    pub fn to_hex(&self) -> String {
        let digits = self.n_cells.div_ceil(4).max(1);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = d * 4;
            let nibble = (self.words[bit / 64] >> (bit % 64) & 0xf) as u32;
            out.push(char::from_digit(nibble, 16).expect("nibble"));
        }
        out
    }
}

/// Recorded integration output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub states: Vec<Array1<S>>,
    pub mode_flags: Vec<ModeFlags>,
    /// Set when the run halted early on blow-up; the recorded prefix is
    /// kept for diagnosis.
    pub blowup: bool,
}

impl<S: Scalar> Trajectory<S> {
    pub fn n_cells(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn final_state(&self) -> Option<&Array1<S>> {
        self.states.last()
    }

    /// Max |l_i - 1| per sample.
    pub fn max_deviations(&self) -> Vec<S> {
        self.states
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&l| (l - S::one()).abs())
                    .fold(S::zero(), S::max)
            })
            .collect()
    }

    /// Spread max_i l_i - min_i l_i per sample: the pure disagreement
    /// signal, insensitive to the uniform mode.
    pub fn spreads(&self) -> Vec<S> {
        self.states
            .iter()
            .map(|s| {
                let max = s.iter().copied().fold(S::neg_infinity(), S::max);
                let min = s.iter().copied().fold(S::infinity(), S::min);
                max - min
            })
            .collect()
    }

    /// CSV rows `t,l_0,...,l_{N-1},modes` with the mode bitmask in hex.
    pub fn to_csv(&self) -> String {
        let n = self.n_cells();
        let mut out = String::from("t");
        for i in 0..n {
            write!(out, ",l_{i}").expect("string write");
        }
        out.push_str(",modes\n");
        for ((t, state), flags) in self.times.iter().zip(&self.states).zip(&self.mode_flags) {
            write!(out, "{t}").expect("string write");
            for &l in state.iter() {
                write!(out, ",{l}").expect("string write");
            }
            writeln!(out, ",{}", flags.to_hex()).expect("string write");
        }
        out
    }
}

/// Instantaneous rates `dl/dt`: local dynamics plus coupling over neighbors,
/// each cell's mode resolved from its current load against gamma.
pub fn rhs<S: Scalar>(
    state: &Array1<S>,
    topology: &NetworkTopology<S>,
    assignment: &PolicyAssignment<S>,
) -> Result<Array1<S>, SimError> {
    let n = topology.n_cells();
    if state.len() != n || assignment.n_cells() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            got: state.len(),
        });
    }
    if let Some(i) = state.iter().position(|l| !l.is_finite()) {
        return Err(SimError::NonFiniteState(i));
    }
    let mut out = Array1::zeros(n);
    for i in 0..n {
        out[i] = assignment.local(i).eval_unchecked(state[i]);
    }
    for (i, j) in topology.edges() {
        let mode_i = assignment.local(i).mode();
        let mode_j = assignment.local(j).mode();
        out[i] += eval_coupling_unchecked(
            assignment.coupling(i, j),
            mode_i,
            mode_j,
            state[i],
            state[j],
        );
        out[j] += eval_coupling_unchecked(
            assignment.coupling(j, i),
            mode_j,
            mode_i,
            state[j],
            state[i],
        );
    }
    Ok(out)
}

/// Fixed-step RK4 over the full horizon. Samples are recorded at step 0,
/// every `record_stride` steps, and at the final step. The run halts early
/// (with the blow-up flag and the recorded prefix) if any load exceeds
/// [`BLOWUP_THRESHOLD`] or stops being finite.
pub fn integrate<S: Scalar>(
    config: &SimulationConfig<S>,
    initial: &Array1<S>,
    topology: &NetworkTopology<S>,
    assignment: &PolicyAssignment<S>,
) -> Result<Trajectory<S>, SimError> {
    config.validate()?;
    if let Some(i) = initial.iter().position(|l| !l.is_finite()) {
        return Err(SimError::NonFiniteState(i));
    }
    let n_steps = (config.horizon / config.dt)
        .round()
        .to_usize()
        .unwrap_or(0)
        .max(1);
    let dt = config.dt;
    let half = dt / S::lit(2.0);
    let sixth = dt / S::lit(6.0);
    let two = S::lit(2.0);

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut mode_flags = Vec::new();
    let mut blowup = false;
    let mut last_recorded = 0usize;

    let mut record = |k: usize, state: &Array1<S>| {
        times.push(S::from_count(k) * dt);
        states.push(state.clone());
        mode_flags.push(ModeFlags::from_state(assignment, state));
    };

    let mut x = initial.clone();
    record(0, &x);

    for k in 1..=n_steps {
        let step = (|| -> Result<Array1<S>, SimError> {
            let k1 = rhs(&x, topology, assignment)?;
            let k2 = rhs(&(&x + &(&k1 * half)), topology, assignment)?;
            let k3 = rhs(&(&x + &(&k2 * half)), topology, assignment)?;
            let k4 = rhs(&(&x + &(&k3 * dt)), topology, assignment)?;
            Ok(&x + &((k1 + &k2 * two + &k3 * two + k4) * sixth))
        })();
        // Keep the last finite state in the record when halting, whatever
        // the stride says; it is the diagnosis.
        let next = match step {
            Ok(next) if next.iter().all(|l| l.is_finite()) => next,
            _ => {
                blowup = true;
                if last_recorded != k - 1 {
                    record(k - 1, &x);
                }
                break;
            }
        };
        x = next;
        let blown = x.iter().any(|l| l.abs() > S::lit(BLOWUP_THRESHOLD));
        if k % config.record_stride == 0 || k == n_steps || blown {
            record(k, &x);
            last_recorded = k;
        }
        if blown {
            blowup = true;
            break;
        }
    }

    Ok(Trajectory {
        times,
        states,
        mode_flags,
        blowup,
    })
}

/// Add i.i.d. uniform(-epsilon, epsilon) noise per component, clamped so no
/// load goes negative. Deterministic per seed.
pub fn perturb<S: Scalar>(state: &Array1<S>, epsilon: S, seed: u64) -> Array1<S> {
    if epsilon == S::zero() {
        return state.clone();
    }
    let mut rng = stream_rng(seed, Stream::Perturbation);
    state.mapv(|l| (l + rng.gen_range(-epsilon..=epsilon)).max(S::zero()))
}

/// One cluster of terminal loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Cluster<S> {
    /// Mean load of the members.
    pub representative: S,
    pub members: Vec<usize>,
}

/// What the trajectory did, in the terms the verdicts speak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SyncMetrics<S> {
    /// All loads within tolerance of 1 at the end, and from the first
    /// crossing onward.
    pub synchronized: bool,
    /// Time of the first sample after which the deviation never leaves the
    /// tolerance band.
    pub sync_time: Option<S>,
    /// Log-linear slope of the max deviation inside the fit window
    /// [10 * tolerance, 0.5 * initial deviation].
    pub empirical_rate: Option<S>,
    pub terminal_clusters: Vec<Cluster<S>>,
    /// Copied from the trajectory for self-contained serialization.
    pub blowup: bool,
}

/// Least-squares slope of `ln(value)` against time over the samples whose
/// value lies inside `[floor, ceiling]`. `None` without at least two usable
/// samples at distinct times.
pub fn fit_exponential_rate<S: Scalar>(
    times: &[S],
    values: &[S],
    floor: S,
    ceiling: S,
) -> Option<S> {
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if v >= floor && v <= ceiling && v > S::zero() {
            ts.push(t);
            logs.push(v.ln());
        }
    }
    if ts.len() < 2 {
        return None;
    }
    let n = S::from_count(ts.len());
    let mt = ts.iter().copied().sum::<S>() / n;
    let ml = logs.iter().copied().sum::<S>() / n;
    let mut sxy = S::zero();
    let mut sxx = S::zero();
    for (&t, &l) in ts.iter().zip(&logs) {
        sxy += (t - mt) * (l - ml);
        sxx += (t - mt) * (t - mt);
    }
    if sxx <= S::zero() {
        return None;
    }
    Some(sxy / sxx)
}

/// Synchronization verdict, first-crossing time, fitted decay rate and
/// terminal clustering for one trajectory.
pub fn sync_metrics<S: Scalar>(
    trajectory: &Trajectory<S>,
    config: &SimulationConfig<S>,
) -> Result<SyncMetrics<S>, SimError> {
    if trajectory.states.is_empty() {
        return Err(SimError::EmptyTrajectory);
    }
    let tol = config.sync_tolerance;
    let deviations = trajectory.max_deviations();
    let final_state = trajectory.final_state().expect("non-empty");
    let terminal_clusters = cluster_loads(final_state, S::lit(CLUSTER_GAP));

    if trajectory.blowup {
        return Ok(SyncMetrics {
            synchronized: false,
            sync_time: None,
            empirical_rate: None,
            terminal_clusters,
            blowup: true,
        });
    }

    // Synchronized means the deviation never leaves the band again after
    // first entering it, including at the final sample.
    let first_crossing = deviations.iter().position(|&d| d < tol);
    let synchronized = first_crossing
        .map(|k0| deviations[k0..].iter().all(|&d| d < tol))
        .unwrap_or(false);
    let sync_time = if synchronized {
        first_crossing.map(|k0| trajectory.times[k0])
    } else {
        None
    };

    let initial_deviation = deviations[0];
    let empirical_rate = fit_exponential_rate(
        &trajectory.times,
        &deviations,
        S::lit(10.0) * tol,
        S::lit(0.5) * initial_deviation,
    );

    Ok(SyncMetrics {
        synchronized,
        sync_time,
        empirical_rate,
        terminal_clusters,
        blowup: false,
    })
}

/// Single-linkage clustering of final loads with the given gap.
fn cluster_loads<S: Scalar>(state: &Array1<S>, gap: S) -> Vec<Cluster<S>> {
    let mut order: Vec<usize> = (0..state.len()).collect();
    order.sort_by(|&a, &b| state[a].partial_cmp(&state[b]).expect("finite loads"));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &cell in &order {
        match clusters.last_mut() {
            Some(current) if state[cell] - state[*current.last().expect("non-empty")] <= gap => {
                current.push(cell)
            }
            _ => clusters.push(vec![cell]),
        }
    }
    clusters
        .into_iter()
        .map(|mut members| {
            let representative =
                members.iter().map(|&c| state[c]).sum::<S>() / S::from_count(members.len());
            members.sort_unstable();
            Cluster {
                representative,
                members,
            }
        })
        .collect()
}

/// Member of a terminal cluster, with its end-of-run mode and whether the
/// analytic audit had flagged it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TerminalMember<S> {
    pub cell: usize,
    pub final_load: S,
    /// Sleeping at the final sample (final load below the cell's gamma).
    pub slept: bool,
    pub flagged_by_audit: bool,
}

/// Terminal clusters with per-member mode, cross-referenced against an
/// audit's culprit list when one is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TerminalStateReport<S> {
    pub clusters: Vec<TerminalCluster<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TerminalCluster<S> {
    pub representative: S,
    pub members: Vec<TerminalMember<S>>,
}

pub fn classify_terminal_states<S: Scalar>(
    trajectory: &Trajectory<S>,
    assignment: &PolicyAssignment<S>,
    audit: Option<&StabilityReport<S>>,
) -> Result<TerminalStateReport<S>, SimError> {
    let final_state = trajectory.final_state().ok_or(SimError::EmptyTrajectory)?;
    let culprits: std::collections::BTreeSet<usize> = audit
        .map(|report| report.culprits.iter().map(|c| c.cell).collect())
        .unwrap_or_default();
    let clusters = cluster_loads(final_state, S::lit(CLUSTER_GAP))
        .into_iter()
        .map(|cluster| TerminalCluster {
            representative: cluster.representative,
            members: cluster
                .members
                .into_iter()
                .map(|cell| TerminalMember {
                    cell,
                    final_load: final_state[cell],
                    slept: assignment.local(cell).mode().is_sleeping(final_state[cell]),
                    flagged_by_audit: culprits.contains(&cell),
                })
                .collect(),
        })
        .collect();
    Ok(TerminalStateReport { clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{CouplingPolicy, LocalPolicy};
    use crate::stability::{
        assess_homogeneous, build_variational_matrices, convergence_rate_estimate,
    };
    use crate::topology::{from_edge_list, spectrum};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn saturating(alpha: f64) -> LocalPolicy<f64> {
        LocalPolicy::active(vec![alpha, 0.0, -alpha]).unwrap()
    }

    fn exchange() -> CouplingPolicy<f64> {
        CouplingPolicy::new(vec![], vec![], 1.0, vec![])
    }

    #[test]
    fn rhs_vanishes_at_equilibrium() {
        let t = from_edge_list::<f64>(3, &[(0, 1), (1, 2)]).unwrap();
        let a = PolicyAssignment::uniform(3, saturating(1.0), exchange());
        let dot = rhs(&array![1.0, 1.0, 1.0], &t, &a).unwrap();
        assert_eq!(dot, array![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rhs_two_cell_exchange_antisymmetric() {
        let t = from_edge_list::<f64>(2, &[(0, 1)]).unwrap();
        let zero = LocalPolicy::active(vec![0.0]).unwrap();
        let a = PolicyAssignment::uniform(2, zero, exchange());
        let dot = rhs(&array![0.4, 0.6], &t, &a).unwrap();
        assert!((dot[0] - 0.2).abs() < 1e-15);
        assert!((dot[1] + 0.2).abs() < 1e-15);
        assert_eq!(dot[0], -dot[1]);
    }

    #[test]
    fn rhs_isolated_cell_is_local_only() {
        let t = from_edge_list::<f64>(1, &[]).unwrap();
        let a = PolicyAssignment::uniform(1, saturating(1.0), exchange());
        let dot = rhs(&array![0.5], &t, &a).unwrap();
        assert!((dot[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rhs_rejects_non_finite_state() {
        let t = from_edge_list::<f64>(2, &[(0, 1)]).unwrap();
        let a = PolicyAssignment::uniform(2, saturating(1.0), exchange());
        assert!(matches!(
            rhs(&array![f64::NAN, 1.0], &t, &a),
            Err(SimError::NonFiniteState(0))
        ));
    }

    #[test]
    fn integrate_matches_closed_form_relaxation() {
        // Isolated cell, f(l) = 1 - l from l(0) = 0: l(t) = 1 - exp(-t).
        let t = from_edge_list::<f64>(1, &[]).unwrap();
        let a =
            PolicyAssignment::uniform(1, LocalPolicy::active(vec![1.0, -1.0]).unwrap(), exchange());
        let config = SimulationConfig::new(1e-3, 5.0).unwrap();
        let trajectory = integrate(&config, &array![0.0], &t, &a).unwrap();
        let l = trajectory.final_state().unwrap()[0];
        let want = 1.0 - (-5.0f64).exp();
        assert!((l - want).abs() < 1e-5, "got {l}, want {want}");
        assert!(!trajectory.blowup);
        assert_eq!(trajectory.times.last().copied(), Some(5.0 * 1.0));
    }

    #[test]
    fn integrate_preserves_equilibrium() {
        let t = from_edge_list::<f64>(3, &[(0, 1), (1, 2)]).unwrap();
        let a = PolicyAssignment::uniform(3, saturating(1.0), exchange());
        let config = SimulationConfig::new(1e-3, 5.0).unwrap();
        let trajectory = integrate(&config, &array![1.0, 1.0, 1.0], &t, &a).unwrap();
        for state in &trajectory.states {
            for &l in state.iter() {
                assert!((l - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn integrate_synchronizes_stable_p3() {
        let t = from_edge_list::<f64>(3, &[(0, 1), (1, 2)]).unwrap();
        let a = PolicyAssignment::uniform(3, saturating(1.0), exchange());
        let config = SimulationConfig::new(1e-3, 20.0).unwrap();
        let initial = perturb(&array![1.0, 1.0, 1.0], 0.1, 7);
        let trajectory = integrate(&config, &initial, &t, &a).unwrap();
        let metrics = sync_metrics(&trajectory, &config).unwrap();
        assert!(metrics.synchronized);
        assert!(metrics.sync_time.unwrap() < 20.0);
        assert_eq!(metrics.terminal_clusters.len(), 1);
    }

    #[test]
    fn integrate_flags_blowup_and_keeps_prefix() {
        // f(l) = l - 1 repels from the equilibrium.
        let t = from_edge_list::<f64>(1, &[]).unwrap();
        let a =
            PolicyAssignment::uniform(1, LocalPolicy::active(vec![-1.0, 1.0]).unwrap(), exchange());
        let config = SimulationConfig::new(1e-2, 100.0).unwrap();
        let trajectory = integrate(&config, &array![2.0], &t, &a).unwrap();
        assert!(trajectory.blowup);
        assert!(!trajectory.states.is_empty());
        for state in &trajectory.states {
            assert!(state.iter().all(|l| l.is_finite()));
        }
        let metrics = sync_metrics(&trajectory, &config).unwrap();
        assert!(!metrics.synchronized);
        assert!(metrics.empirical_rate.is_none());
        assert!(metrics.blowup);
    }

    #[test]
    fn perturb_contracts() {
        let state = array![0.05, 0.05, 0.05];
        assert_eq!(perturb(&state, 0.0, 9), state);
        let a = perturb(&state, 0.1, 9);
        let b = perturb(&state, 0.1, 9);
        assert_eq!(a, b);
        assert!(a.iter().all(|&l| l >= 0.0));
        assert_ne!(a, perturb(&state, 0.1, 10));
    }

    #[test]
    fn sync_metrics_constant_trajectory() {
        let t = from_edge_list::<f64>(2, &[(0, 1)]).unwrap();
        let a = PolicyAssignment::uniform(2, saturating(1.0), exchange());
        let config = SimulationConfig::new(1e-2, 2.0).unwrap();
        let trajectory = integrate(&config, &array![1.0, 1.0], &t, &a).unwrap();
        let metrics = sync_metrics(&trajectory, &config).unwrap();
        assert!(metrics.synchronized);
        assert_eq!(metrics.sync_time, Some(0.0));
    }

    #[test]
    fn sync_metrics_recovers_synthetic_exponential_rate() {
        // l(t) = 1 - 0.1 exp(-2 t) sampled directly.
        let times: Vec<f64> = (0..2000).map(|k| k as f64 * 5e-3).collect();
        let states: Vec<Array1<f64>> = times
            .iter()
            .map(|&t| array![1.0 - 0.1 * (-2.0 * t).exp()])
            .collect();
        let dummy = PolicyAssignment::uniform(1, saturating(1.0), exchange());
        let mode_flags = states
            .iter()
            .map(|s| ModeFlags::from_state(&dummy, s))
            .collect();
        let trajectory = Trajectory {
            times,
            states,
            mode_flags,
            blowup: false,
        };
        let config = SimulationConfig::new(5e-3, 10.0)
            .unwrap()
            .with_sync_tolerance(1e-4);
        let metrics = sync_metrics(&trajectory, &config).unwrap();
        let rate = metrics.empirical_rate.unwrap();
        assert!(
            (rate - (-2.0)).abs() / 2.0 < 0.02,
            "rate {rate} not within 2% of -2"
        );
    }

    #[test]
    fn sync_metrics_clusters_failed_run() {
        let dummy = {
            let gamma = 0.5;
            let coeffs = vec![-gamma, 1.0 + gamma, -1.0];
            let mut locals = vec![LocalPolicy::active(vec![1.0, -1.0]).unwrap(); 4];
            locals[0] = LocalPolicy::sleep_capable(gamma, coeffs.clone(), coeffs).unwrap();
            PolicyAssignment::new(locals, exchange(), BTreeMap::new())
        };
        let states = vec![array![0.01, 1.0, 1.0, 1.2]];
        let mode_flags = vec![ModeFlags::from_state(&dummy, &states[0])];
        let trajectory = Trajectory {
            times: vec![0.0],
            states,
            mode_flags,
            blowup: false,
        };
        let config = SimulationConfig::new(1e-2, 2.0).unwrap();
        let metrics = sync_metrics(&trajectory, &config).unwrap();
        assert!(!metrics.synchronized);
        assert_eq!(metrics.terminal_clusters.len(), 3);
        assert_eq!(metrics.terminal_clusters[0].members, vec![0]);

        let classified = classify_terminal_states(&trajectory, &dummy, None).unwrap();
        assert!(classified.clusters[0].members[0].slept);
        assert!(!classified.clusters[1].members[0].slept);
    }

    #[test]
    fn classify_matches_mode_flags_for_sleep_run() {
        // One sleep-capable cell dragged below gamma by a heavy drain.
        let t = from_edge_list::<f64>(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let gamma = 0.3;
        let coeffs = vec![-gamma, 1.0 + gamma, -1.0];
        let mut locals = vec![LocalPolicy::active(vec![1.0, -1.0]).unwrap(); 3];
        locals[1] = LocalPolicy::sleep_capable(gamma, coeffs.clone(), coeffs).unwrap();
        let coupling = CouplingPolicy::new(vec![], vec![], 3.0, vec![0.0, -3.0]);
        let a = PolicyAssignment::new(locals, coupling, BTreeMap::new());
        let config = SimulationConfig::new(1e-3, 30.0).unwrap();
        let initial = array![1.0, 0.1, 1.0];
        let trajectory = integrate(&config, &initial, &t, &a).unwrap();
        assert!(!trajectory.blowup);
        let classified = classify_terminal_states(&trajectory, &a, None).unwrap();
        let final_flags = trajectory.mode_flags.last().unwrap();
        for cluster in &classified.clusters {
            for member in &cluster.members {
                assert_eq!(member.slept, final_flags.is_sleeping(member.cell));
                if member.slept {
                    assert!(member.final_load < gamma);
                }
            }
        }
    }

    #[test]
    fn finite_difference_jacobian_matches_variational_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let n = rng.gen_range(2..=8usize);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_range(0.0..1.0) < 0.5 {
                        edges.push((i, j));
                    }
                }
            }
            let t = from_edge_list::<f64>(n, &edges).unwrap();
            let locals: Vec<LocalPolicy<f64>> = (0..n)
                .map(|_| {
                    let alpha = rng.gen_range(0.5..2.0);
                    LocalPolicy::active(vec![alpha, 0.0, -alpha]).unwrap()
                })
                .collect();
            let coupling = CouplingPolicy::new(
                vec![rng.gen_range(-0.5..0.5)],
                vec![rng.gen_range(-0.5..0.5)],
                rng.gen_range(0.2..1.5),
                vec![],
            );
            let a = PolicyAssignment::new(locals, coupling, BTreeMap::new());
            let m = build_variational_matrices(&t, &a, 1.0).unwrap();

            let step = 1e-6;
            let ones = Array1::from_elem(n, 1.0);
            for col in 0..n {
                let mut up = ones.clone();
                let mut down = ones.clone();
                up[col] += step;
                down[col] -= step;
                let fu = rhs(&up, &t, &a).unwrap();
                let fd = rhs(&down, &t, &a).unwrap();
                for row in 0..n {
                    let fd_entry = (fu[row] - fd[row]) / (2.0 * step);
                    assert!(
                        (fd_entry - m.j[[row, col]]).abs() < 1e-5,
                        "J[{row}][{col}] fd {fd_entry} vs {}",
                        m.j[[row, col]]
                    );
                }
            }
        }
    }

    #[test]
    fn empirical_rate_agrees_with_analytic_worst_mode() {
        // K5 keeps the disagreement modes fast, so the uniform mode owns the
        // fitted tail.
        let edges: Vec<(usize, usize)> = (0..5)
            .flat_map(|i| (i + 1..5).map(move |j| (i, j)))
            .collect();
        let t = from_edge_list::<f64>(5, &edges).unwrap();
        let a = PolicyAssignment::uniform(5, saturating(1.0), exchange());
        let config = SimulationConfig::new(1e-3, 12.0)
            .unwrap()
            .with_sync_tolerance(1e-6);
        let initial = perturb(&Array1::from_elem(5, 1.0), 0.01, 3);
        let trajectory = integrate(&config, &initial, &t, &a).unwrap();
        let metrics = sync_metrics(&trajectory, &config).unwrap();
        let empirical = metrics.empirical_rate.unwrap();

        let s = spectrum(&t.laplacian()).unwrap();
        let assessment = assess_homogeneous(-2.0, -1.0, &s);
        let worst = assessment.slowest_rate;
        assert!(
            (empirical - worst).abs() / worst.abs() < 0.10,
            "empirical {empirical} vs analytic {worst}"
        );

        // The spread isolates the disagreement modes.
        let rates = convergence_rate_estimate(&assessment).unwrap();
        let spread_rate = fit_exponential_rate(
            &trajectory.times,
            &trajectory.spreads(),
            1e-5,
            0.5 * trajectory.spreads()[0],
        )
        .unwrap();
        let want = rates.disagreement.unwrap();
        assert!(
            (spread_rate - want).abs() / want.abs() < 0.10,
            "spread rate {spread_rate} vs disagreement {want}"
        );
    }

    #[test]
    fn step_halving_changes_little() {
        let t = from_edge_list::<f64>(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let a = PolicyAssignment::uniform(4, saturating(1.0), exchange());
        let initial = array![0.3, 1.6, 0.9, 1.2];
        let coarse = SimulationConfig::new(1e-3, 5.0).unwrap();
        let fine = SimulationConfig::new(5e-4, 5.0).unwrap();
        let xa = integrate(&coarse, &initial, &t, &a).unwrap();
        let xb = integrate(&fine, &initial, &t, &a).unwrap();
        let fa = xa.final_state().unwrap();
        let fb = xb.final_state().unwrap();
        for (u, v) in fa.iter().zip(fb.iter()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn integration_is_bit_deterministic() {
        let t = from_edge_list::<f64>(3, &[(0, 1), (1, 2)]).unwrap();
        let a = PolicyAssignment::uniform(3, saturating(1.0), exchange());
        let config = SimulationConfig::new(1e-3, 3.0).unwrap();
        let initial = perturb(&Array1::from_elem(3, 1.0), 0.2, 21);
        let run1 = integrate(&config, &initial, &t, &a).unwrap();
        let run2 = integrate(&config, &initial, &t, &a).unwrap();
        assert_eq!(run1, run2);
        assert_eq!(run1.to_csv(), run2.to_csv());
    }

    #[test]
    fn mode_flags_hex_layout() {
        let gamma = 0.5;
        let coeffs = vec![-gamma, 1.0 + gamma, -1.0];
        let sleepy = LocalPolicy::sleep_capable(gamma, coeffs.clone(), coeffs).unwrap();
        let locals = vec![
            sleepy.clone(),
            LocalPolicy::active(vec![1.0, -1.0]).unwrap(),
            sleepy,
        ];
        let a = PolicyAssignment::new(locals, exchange(), BTreeMap::new());
        // Cells 0 and 2 sleeping: bits 0 and 2 -> 0b101 = 5, one hex digit.
        let flags = ModeFlags::from_state(&a, &array![0.1, 0.1, 0.2]);
        assert!(flags.is_sleeping(0));
        assert!(!flags.is_sleeping(1));
        assert!(flags.is_sleeping(2));
        assert_eq!(flags.to_hex(), "5");
    }

    #[test]
    fn f32_integration_works() {
        let t = crate::topology::from_edge_list::<f32>(2, &[(0, 1)]).unwrap();
        let local = LocalPolicy::<f32>::active(vec![1.0, 0.0, -1.0]).unwrap();
        let coupling = CouplingPolicy::<f32>::new(vec![], vec![], 1.0, vec![]);
        let a = PolicyAssignment::uniform(2, local, coupling);
        let config = SimulationConfig::<f32>::new(1e-3, 10.0).unwrap();
        let trajectory = integrate(&config, &ndarray::array![0.5f32, 1.5], &t, &a).unwrap();
        let last = trajectory.final_state().unwrap();
        assert!(last.iter().all(|&l| (l - 1.0).abs() < 1e-3));
    }

    proptest::proptest! {
        /// Perturbation is per-seed deterministic and never drives a load
        /// negative.
        #[test]
        fn perturb_clamps_and_is_deterministic(
            loads in proptest::collection::vec(0.0f64..2.0, 1..16),
            epsilon in 0.0f64..0.5,
            seed in proptest::num::u64::ANY,
        ) {
            let state = Array1::from_vec(loads);
            let a = perturb(&state, epsilon, seed);
            let b = perturb(&state, epsilon, seed);
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert!(a.iter().all(|&l| l >= 0.0));
            proptest::prop_assert!(
                a.iter().zip(state.iter()).all(|(&p, &l)| (p - l).abs() <= epsilon)
            );
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let t = from_edge_list::<f64>(2, &[(0, 1)]).unwrap();
        let a = PolicyAssignment::uniform(2, saturating(1.0), exchange());
        let config = SimulationConfig::new(1e-2, 1.0).unwrap();
        let trajectory = integrate(&config, &array![0.5, 1.5], &t, &a).unwrap();
        let csv = trajectory.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,l_0,l_1,modes"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,0.5,1.5,"));
    }
}
