//! PRB-level grounding of the abstract loads: synthetic RSRP from a
//! log-distance model, the 3GPP handover inequality with per-pair CIO
//! offsets, and per-cell load as demanded-PRBs over available-PRBs. The
//! resulting snapshot seeds the ODE layer's initial conditions.

use crate::scalar::Scalar;
use crate::topology::CellSite;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadioError {
    #[error("radio config field {field} covers {got} cells, expected {expected}")]
    CellCountMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("every cell needs at least one PRB; cell {0} has none")]
    NoPrbs(usize),
    #[error("hysteresis must be non-negative")]
    NegativeHysteresis,
    #[error("CIO diagonal must be zero; theta[{0}][{0}] is not")]
    CioDiagonalNonZero(usize),
    #[error("user {0} has non-positive demand")]
    BadDemand(usize),
    #[error("need at least one cell")]
    EmptyNetwork,
    #[error(
        "user {user} exceeded {limit} handovers; CIO settings are inconsistent (requires Hys = 0)"
    )]
    HandoverOscillation { user: usize, limit: usize },
}

/// Physical-layer parameters. `cio_db[i][j]` is theta_{i -> j}, the offset
/// of cell i concerning cell j.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig<S> {
    pub tx_power_dbm: Vec<S>,
    pub path_loss_exponent: S,
    pub reference_loss_db: S,
    pub noise_power_dbm: S,
    pub prb_count: Vec<u32>,
    pub prb_bandwidth_hz: S,
    pub hysteresis_db: S,
    pub cio_db: Array2<S>,
}

impl<S: Scalar> RadioConfig<S> {
    /// Uniform parameters across `n` cells, zero CIO.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n: usize,
        tx_power_dbm: S,
        path_loss_exponent: S,
        reference_loss_db: S,
        noise_power_dbm: S,
        prb_count: u32,
        prb_bandwidth_hz: S,
        hysteresis_db: S,
    ) -> Result<Self, RadioError> {
        let config = Self {
            tx_power_dbm: vec![tx_power_dbm; n],
            path_loss_exponent,
            reference_loss_db,
            noise_power_dbm,
            prb_count: vec![prb_count; n],
            prb_bandwidth_hz,
            hysteresis_db,
            cio_db: Array2::zeros((n, n)),
        };
        config.validate(n)?;
        Ok(config)
    }

    pub fn validate(&self, n_cells: usize) -> Result<(), RadioError> {
        if n_cells == 0 {
            return Err(RadioError::EmptyNetwork);
        }
        if self.tx_power_dbm.len() != n_cells {
            return Err(RadioError::CellCountMismatch {
                field: "tx_power_dbm",
                expected: n_cells,
                got: self.tx_power_dbm.len(),
            });
        }
        if self.prb_count.len() != n_cells {
            return Err(RadioError::CellCountMismatch {
                field: "prb_count",
                expected: n_cells,
                got: self.prb_count.len(),
            });
        }
        if self.cio_db.nrows() != n_cells || self.cio_db.ncols() != n_cells {
            return Err(RadioError::CellCountMismatch {
                field: "cio_db",
                expected: n_cells,
                got: self.cio_db.nrows(),
            });
        }
        if let Some(cell) = self.prb_count.iter().position(|&b| b == 0) {
            return Err(RadioError::NoPrbs(cell));
        }
        if self.hysteresis_db < S::zero() {
            return Err(RadioError::NegativeHysteresis);
        }
        for i in 0..n_cells {
            if self.cio_db[[i, i]] != S::zero() {
                return Err(RadioError::CioDiagonalNonZero(i));
            }
        }
        Ok(())
    }
}

/// A downlink user with a minimum-rate demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct User<S> {
    pub position: (S, S),
    pub demand_bps: S,
}

/// Synthetic RSRP in dBm: tx power minus reference loss minus
/// `10 * exponent * log10(distance)`, distance clamped to >= 1 m.
pub fn rsrp<S: Scalar>(cell: &CellSite<S>, user: &User<S>, config: &RadioConfig<S>) -> S {
    let dx = cell.position.0 - user.position.0;
    let dy = cell.position.1 - user.position.1;
    let distance = (dx * dx + dy * dy).sqrt().max(S::one());
    config.tx_power_dbm[cell.id]
        - config.reference_loss_db
        - S::lit(10.0) * config.path_loss_exponent * distance.log10()
}

/// The 3GPP handover condition: a user served by cell i requests handover to
/// cell j iff `M_j + theta_{j->i} > Hys + M_i + theta_{i->j}`, strictly.
pub fn evaluate_handover<S: Scalar>(
    m_i: S,
    m_j: S,
    theta_i_to_j: S,
    theta_j_to_i: S,
    hysteresis: S,
) -> bool {
    m_j + theta_j_to_i > hysteresis + m_i + theta_i_to_j
}

/// Users bound to their serving cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct UserAssignment<S> {
    pub users: Vec<User<S>>,
    /// Serving cell id per user.
    pub serving: Vec<usize>,
}

/// Seed every user on its max-RSRP cell (ties to the lower id), then apply
/// the handover condition against all other cells, in user then candidate id
/// order, until no handover fires. More than N handovers for one user means
/// the CIO settings chase each other (possible only with Hys = 0) and is
/// reported as a configuration error.
pub fn assign_users<S: Scalar>(
    sites: &[CellSite<S>],
    users: Vec<User<S>>,
    config: &RadioConfig<S>,
) -> Result<UserAssignment<S>, RadioError> {
    let n = sites.len();
    config.validate(n)?;
    for (u, user) in users.iter().enumerate() {
        if user.demand_bps <= S::zero() {
            return Err(RadioError::BadDemand(u));
        }
    }

    // RSRP table, users x cells.
    let rsrp_table: Vec<Vec<S>> = users
        .iter()
        .map(|user| sites.iter().map(|cell| rsrp(cell, user, config)).collect())
        .collect();

    let mut serving: Vec<usize> = rsrp_table
        .iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, &m) in row.iter().enumerate().skip(1) {
                if m > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();

    let mut handovers = vec![0usize; users.len()];
    loop {
        let mut fired = false;
        for (u, row) in rsrp_table.iter().enumerate() {
            let i = serving[u];
            for j in 0..n {
                if j == i {
                    continue;
                }
                if evaluate_handover(
                    row[i],
                    row[j],
                    config.cio_db[[i, j]],
                    config.cio_db[[j, i]],
                    config.hysteresis_db,
                ) {
                    serving[u] = j;
                    handovers[u] += 1;
                    if handovers[u] > n {
                        return Err(RadioError::HandoverOscillation { user: u, limit: n });
                    }
                    fired = true;
                    break;
                }
            }
        }
        if !fired {
            break;
        }
    }

    Ok(UserAssignment { users, serving })
}

/// Loads and PRB accounting for every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CellLoadSnapshot<S> {
    /// l_i = sum of minimum PRBs over servable users / B_i; may exceed 1.
    pub loads: Vec<S>,
    /// U_i, users attached to cell i (servable or not).
    pub user_counts: Vec<usize>,
    /// Minimum PRBs per user (ceil of demand over per-PRB rate); None for
    /// unservable users.
    pub per_user_min_prbs: Vec<Option<u64>>,
    /// Harmonic fair share (B_i / U_i) * H(U_i) of each user's cell; absent
    /// for empty cells, so never 0/0.
    pub per_cell_share: Vec<Option<S>>,
    /// Users whose per-PRB rate underflowed to zero.
    pub unservable_users: Vec<usize>,
}

impl<S: Scalar> CellLoadSnapshot<S> {
    /// CSV rows `cell,load,users`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,load,users\n");
        for (i, (load, users)) in self.loads.iter().zip(&self.user_counts).enumerate() {
            writeln!(out, "{i},{load},{users}").expect("string write");
        }
        out
    }
}

/// Shannon rate of one PRB at the user's SNR.
fn prb_rate<S: Scalar>(rsrp_dbm: S, config: &RadioConfig<S>) -> S {
    let snr = S::lit(10.0).powf((rsrp_dbm - config.noise_power_dbm) / S::lit(10.0));
    config.prb_bandwidth_hz * (S::one() + snr).log2()
}

/// PRB demands and loads per cell: each user needs
/// `ceil(demand / (prb_bandwidth * log2(1 + SNR)))` PRBs, and cell load is
/// that total over the cell's PRB budget. Users whose rate underflows to
/// zero are flagged unservable and excluded from the sum.
pub fn cell_loads<S: Scalar>(
    sites: &[CellSite<S>],
    assignment: &UserAssignment<S>,
    config: &RadioConfig<S>,
) -> Result<CellLoadSnapshot<S>, RadioError> {
    let n = sites.len();
    config.validate(n)?;
    let mut user_counts = vec![0usize; n];
    let mut demanded_prbs = vec![0u64; n];
    let mut per_user_min_prbs = Vec::with_capacity(assignment.users.len());
    let mut unservable_users = Vec::new();

    for (u, (user, &cell)) in assignment.users.iter().zip(&assignment.serving).enumerate() {
        if user.demand_bps <= S::zero() {
            return Err(RadioError::BadDemand(u));
        }
        user_counts[cell] += 1;
        let rate = prb_rate(rsrp(&sites[cell], user, config), config);
        let prbs = (user.demand_bps / rate).ceil();
        if rate <= S::zero() || !prbs.is_finite() || prbs > S::lit(9e15) {
            unservable_users.push(u);
            per_user_min_prbs.push(None);
            continue;
        }
        let prbs = prbs.to_u64().unwrap_or(u64::MAX).max(1);
        demanded_prbs[cell] += prbs;
        per_user_min_prbs.push(Some(prbs));
    }

    let loads = demanded_prbs
        .iter()
        .zip(&config.prb_count)
        .map(|(&d, &b)| S::from_f64(d as f64).expect("prb count") / S::from_count(b as usize))
        .collect();

    let per_cell_share = user_counts
        .iter()
        .zip(&config.prb_count)
        .map(|(&u_i, &b_i)| {
            if u_i == 0 {
                None
            } else {
                let harmonic: S = (1..=u_i).map(|x| S::one() / S::from_count(x)).sum();
                Some(S::from_count(b_i as usize) / S::from_count(u_i) * harmonic)
            }
        })
        .collect();

    Ok(CellLoadSnapshot {
        loads,
        user_counts,
        per_user_min_prbs,
        per_cell_share,
        unservable_users,
    })
}

/// Bridge into the ODE layer: the snapshot's loads as an initial state.
pub fn snapshot_to_initial_loads<S: Scalar>(snapshot: &CellLoadSnapshot<S>) -> ndarray::Array1<S> {
    ndarray::Array1::from_vec(snapshot.loads.clone())
}
