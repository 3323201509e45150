//! Load-balancing policies as polynomial dynamics.
//!
//! Each cell reports a self-load law `dl/dt = f(l)` and each ordered cell
//! pair an offloading law `g(l_i, l_j)`. Active-mode couplings are kept in
//! the factored form `g(l_i, l_j) = (l_j - l_i) (sum p_n l_i^n + sum q_m l_j^m + c)`,
//! which makes `g(l, l) = 0` structural and gives the linearized slope
//! `h(s, s) = -(sum p_n s^n + sum q_m s^m + c)` in closed form. Sleep-capable
//! cells switch to a second polynomial branch strictly below their threshold
//! gamma, and shed load through a one-sided `sleep_drain` polynomial instead
//! of the symmetric exchange.

use crate::poly;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Tolerance on the full-load equilibrium requirement `f(1) = 0`.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

/// Largest polynomial degree `fit_policy` will produce.
pub const MAX_FIT_DEGREE: usize = 6;

/// Culprit label for a cell whose local slope at full load is non-negative.
pub const REASON_DESTABILIZING_LOCAL: &str = "destabilizing local dynamics";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("load must be non-negative, got {0}")]
    NegativeLoad(f64),
    #[error("sleep threshold gamma must lie strictly in (0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("active branch violates the equilibrium f(1) = 0: residual {0:e}")]
    EquilibriumViolated(f64),
    #[error("sleep-capable policy requires a below-threshold coefficient list")]
    MissingSleepBranch,
    #[error("active policy must not carry a sleep branch or gamma")]
    UnexpectedSleepFields,
    #[error("derivative is undefined at the switch point l = gamma = {0}")]
    DerivativeAtThreshold(f64),
    #[error("fit degree must lie in 1..={max}, got {got}", max = MAX_FIT_DEGREE)]
    FitDegreeOutOfRange { got: usize },
    #[error(transparent)]
    Fit(#[from] poly::LstsqError),
}

/// Whether a cell can power down, and if so at which load threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationMode<S> {
    Active,
    SleepCapable { gamma: S },
}

impl<S: Scalar> ActivationMode<S> {
    pub fn sleep_capable(gamma: S) -> Result<Self, PolicyError> {
        if gamma <= S::zero() || gamma >= S::one() {
            return Err(PolicyError::GammaOutOfRange(
                gamma.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(ActivationMode::SleepCapable { gamma })
    }

    /// Threshold, if any.
    pub fn gamma(&self) -> Option<S> {
        match self {
            ActivationMode::Active => None,
            ActivationMode::SleepCapable { gamma } => Some(*gamma),
        }
    }

    /// A cell sleeps iff it is sleep-capable and strictly below gamma.
    pub fn is_sleeping(&self, load: S) -> bool {
        match self {
            ActivationMode::Active => false,
            ActivationMode::SleepCapable { gamma } => load < *gamma,
        }
    }
}

/// A cell's self-load dynamics `dl/dt = f(l)`.
///
/// `coeffs` is the active branch; sleep-capable policies evaluate
/// `sleep_coeffs` strictly below gamma instead. Values are immutable after
/// construction and the active branch always satisfies `f(1) = 0` within
/// [`EQUILIBRIUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "LocalPolicyRepr<S>",
    into = "LocalPolicyRepr<S>",
    bound = "S: Scalar"
)]
pub struct LocalPolicy<S> {
    mode: ActivationMode<S>,
    coeffs: Vec<S>,
    sleep_coeffs: Option<Vec<S>>,
}

impl<S: Scalar> LocalPolicy<S> {
    /// Always-active policy.
    pub fn active(coeffs: Vec<S>) -> Result<Self, PolicyError> {
        Self::new(ActivationMode::Active, coeffs, None)
    }

    /// Sleep-capable policy with distinct below-threshold dynamics.
    pub fn sleep_capable(
        gamma: S,
        coeffs: Vec<S>,
        sleep_coeffs: Vec<S>,
    ) -> Result<Self, PolicyError> {
        Self::new(
            ActivationMode::sleep_capable(gamma)?,
            coeffs,
            Some(sleep_coeffs),
        )
    }

    pub fn new(
        mode: ActivationMode<S>,
        coeffs: Vec<S>,
        sleep_coeffs: Option<Vec<S>>,
    ) -> Result<Self, PolicyError> {
        match mode {
            ActivationMode::Active if sleep_coeffs.is_some() => {
                return Err(PolicyError::UnexpectedSleepFields)
            }
            ActivationMode::SleepCapable { gamma } => {
                ActivationMode::sleep_capable(gamma)?;
                if sleep_coeffs.is_none() {
                    return Err(PolicyError::MissingSleepBranch);
                }
            }
            _ => {}
        }
        let residual = poly::eval(&coeffs, S::one());
        if residual.abs() > S::lit(EQUILIBRIUM_TOL) {
            return Err(PolicyError::EquilibriumViolated(
                residual.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self {
            mode,
            coeffs,
            sleep_coeffs,
        })
    }

    pub fn mode(&self) -> &ActivationMode<S> {
        &self.mode
    }

    /// Active-branch coefficients.
    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn sleep_coeffs(&self) -> Option<&[S]> {
        self.sleep_coeffs.as_deref()
    }

    pub fn is_sleep_capable(&self) -> bool {
        matches!(self.mode, ActivationMode::SleepCapable { .. })
    }

    /// Branch coefficients governing the dynamics at load `l`.
    fn branch_at(&self, l: S) -> &[S] {
        if self.mode.is_sleeping(l) {
            self.sleep_coeffs
                .as_deref()
                .expect("sleep-capable policy carries a sleep branch by construction")
        } else {
            &self.coeffs
        }
    }

    /// Branch evaluation without the domain check; the integrator uses this
    /// because sleep-mode shedding can push loads transiently below zero and
    /// the polynomials extend there naturally.
    pub(crate) fn eval_unchecked(&self, l: S) -> S {
        poly::eval(self.branch_at(l), l)
    }
}

/// `f(l)` from the branch selected by mode and `l` vs gamma (strictly:
/// the sleep branch applies iff `l < gamma`).
pub fn eval_local<S: Scalar>(policy: &LocalPolicy<S>, l: S) -> Result<S, PolicyError> {
    if l < S::zero() {
        return Err(PolicyError::NegativeLoad(l.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(poly::eval(policy.branch_at(l), l))
}

/// Analytic `f'(s)` of the branch containing `s`. Undefined exactly at the
/// switch point of a sleep-capable policy.
pub fn local_derivative<S: Scalar>(policy: &LocalPolicy<S>, s: S) -> Result<S, PolicyError> {
    if let ActivationMode::SleepCapable { gamma } = policy.mode {
        if s == gamma {
            return Err(PolicyError::DerivativeAtThreshold(
                gamma.to_f64().unwrap_or(f64::NAN),
            ));
        }
    }
    Ok(poly::eval_derivative(policy.branch_at(s), s))
}

/// Pairwise offloading dynamics in factored form, plus the one-sided drain
/// used while the source cell sleeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CouplingPolicy<S> {
    /// Coefficients of the terms in `l_i` inside the factored bracket.
    #[serde(default)]
    pub p: Vec<S>,
    /// Coefficients of the terms in `l_j` inside the factored bracket.
    #[serde(default)]
    pub q: Vec<S>,
    /// Constant term of the bracket.
    pub c: S,
    /// Polynomial in `l_i` applied while cell i sleeps; sensible policies
    /// keep it non-positive (the sleeping cell sheds load, never gains).
    #[serde(default)]
    pub sleep_drain: Vec<S>,
}

impl<S: Scalar> CouplingPolicy<S> {
    pub fn new(p: Vec<S>, q: Vec<S>, c: S, sleep_drain: Vec<S>) -> Self {
        Self {
            p,
            q,
            c,
            sleep_drain,
        }
    }

    /// The common `beta (l_i - l_j)` exchange: encoded as `c = -beta`, so
    /// `h(s, s) = beta`.
    pub fn linear_exchange(beta: S) -> Self {
        Self::new(Vec::new(), Vec::new(), -beta, Vec::new())
    }

    /// Same exchange, with a `beta * l` drain while the source sleeps.
    pub fn linear_exchange_with_drain(beta: S) -> Self {
        Self::new(Vec::new(), Vec::new(), -beta, vec![S::zero(), beta])
    }
}

/// `g(l_i, l_j)` with both cells' modes resolved against their current loads.
///
/// Both active: the factored form. Source sleeping: `sleep_drain(l_i)`
/// regardless of the partner. Source active but partner sleeping: 0 (the
/// sleeper hands nothing over).
pub fn eval_coupling<S: Scalar>(
    coupling: &CouplingPolicy<S>,
    mode_i: &ActivationMode<S>,
    mode_j: &ActivationMode<S>,
    l_i: S,
    l_j: S,
) -> Result<S, PolicyError> {
    if l_i < S::zero() {
        return Err(PolicyError::NegativeLoad(l_i.to_f64().unwrap_or(f64::NAN)));
    }
    if l_j < S::zero() {
        return Err(PolicyError::NegativeLoad(l_j.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(eval_coupling_unchecked(coupling, mode_i, mode_j, l_i, l_j))
}

/// [`eval_coupling`] minus the domain check; see
/// [`LocalPolicy::eval_unchecked`] for why the integrator needs this.
pub(crate) fn eval_coupling_unchecked<S: Scalar>(
    coupling: &CouplingPolicy<S>,
    mode_i: &ActivationMode<S>,
    mode_j: &ActivationMode<S>,
    l_i: S,
    l_j: S,
) -> S {
    if mode_i.is_sleeping(l_i) {
        return poly::eval(&coupling.sleep_drain, l_i);
    }
    if mode_j.is_sleeping(l_j) {
        return S::zero();
    }
    let bracket = poly::eval(&coupling.p, l_i) + poly::eval(&coupling.q, l_j) + coupling.c;
    (l_j - l_i) * bracket
}

/// Linearized coupling slope `h(s, s) = dg/dl_i (s, s) = -(sum p_n s^n + sum q_m s^m + c)`;
/// the slope in the other argument is `-h(s, s)`.
pub fn coupling_slope_h<S: Scalar>(coupling: &CouplingPolicy<S>, s: S) -> S {
    -(poly::eval(&coupling.p, s) + poly::eval(&coupling.q, s) + coupling.c)
}

/// Outcome of fitting load-rate samples to a polynomial law.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFit<S> {
    pub policy: LocalPolicy<S>,
    /// Magnitude of the constant-term shift that pinned `f(1) = 0`.
    pub equilibrium_correction: S,
    /// Root-mean-square residual of the corrected polynomial on the samples.
    pub residual_rms: S,
}

/// Least-squares polynomial of the given degree through `(load, rate)`
/// samples, projected onto the equilibrium constraint by shifting the
/// constant coefficient so that `f(1) = 0` exactly.
pub fn fit_policy<S: Scalar>(
    samples: &[(S, S)],
    degree: usize,
) -> Result<PolicyFit<S>, PolicyError> {
    if !(1..=MAX_FIT_DEGREE).contains(&degree) {
        return Err(PolicyError::FitDegreeOutOfRange { got: degree });
    }
    let xs: Vec<S> = samples.iter().map(|&(x, _)| x).collect();
    let ys: Vec<S> = samples.iter().map(|&(_, y)| y).collect();
    let mut coeffs = poly::polyfit(&xs, &ys, degree)?;
    let correction = poly::eval(&coeffs, S::one());
    coeffs[0] -= correction;
    let residual_rms = (samples
        .iter()
        .map(|&(x, y)| {
            let r = poly::eval(&coeffs, x) - y;
            r * r
        })
        .sum::<S>()
        / S::from_count(samples.len()))
    .sqrt();
    let policy = LocalPolicy::new(ActivationMode::Active, coeffs, None)?;
    Ok(PolicyFit {
        policy,
        equilibrium_correction: correction.abs(),
        residual_rms,
    })
}

/// Diagnostics from [`validate_policy`]; informational, never a rejection.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct PolicyDiagnostics<S> {
    /// `f(1)` residual of the active branch and whether it passes.
    pub equilibrium_residual: S,
    pub equilibrium_ok: bool,
    /// Sign-pattern grid check: `f < 0` on (0, gamma) over the sleep branch,
    /// `f > 0` on (gamma, 1) over the active one. For active-mode policies
    /// gamma plays no role and only the (0, 1) positivity is checked.
    pub sign_pattern_ok: bool,
    /// Grid points violating the expected sign, if any.
    pub sign_violations: usize,
    /// `f'(1)` on the active branch.
    pub derivative_at_one: S,
    /// Set when `f'(1) >= 0`, i.e. the local dynamics push away from full load.
    pub destabilizing: bool,
}

/// Grid-check a policy: equilibrium residual, the sleep-mode sign pattern on
/// a 1000-point grid over (0, max(1.5, gamma + 1)), and the sign of `f'(1)`.
pub fn validate_policy<S: Scalar>(policy: &LocalPolicy<S>) -> PolicyDiagnostics<S> {
    let one = S::one();
    let equilibrium_residual = poly::eval(policy.coeffs(), one);
    let equilibrium_ok = equilibrium_residual.abs() <= S::lit(EQUILIBRIUM_TOL);

    let gamma = policy.mode.gamma().unwrap_or_else(S::zero);
    let upper = S::lit(1.5).max(gamma + one);
    let n_grid = 1000usize;
    let mut sign_violations = 0usize;
    for k in 1..n_grid {
        let l = upper * S::from_count(k) / S::from_count(n_grid);
        let f = poly::eval(policy.branch_at(l), l);
        let expected_negative = policy.is_sleep_capable() && l < gamma;
        let expected_positive = l > gamma && l < one;
        if expected_negative && f >= S::zero() {
            sign_violations += 1;
        }
        if expected_positive && f <= S::zero() {
            sign_violations += 1;
        }
    }

    let derivative_at_one = poly::eval_derivative(policy.coeffs(), one);
    PolicyDiagnostics {
        equilibrium_residual,
        equilibrium_ok,
        sign_pattern_ok: sign_violations == 0,
        sign_violations,
        derivative_at_one,
        destabilizing: derivative_at_one >= S::zero(),
    }
}

/// Per-cell local policies plus per-ordered-pair couplings, defaulting to a
/// single shared coupling law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PolicyAssignment<S> {
    locals: Vec<LocalPolicy<S>>,
    default_coupling: CouplingPolicy<S>,
    /// Overrides keyed by ordered pair (i, j); BTreeMap keeps every
    /// traversal deterministic.
    pair_couplings: BTreeMap<(usize, usize), CouplingPolicy<S>>,
    homogeneous: bool,
}

impl<S: Scalar> PolicyAssignment<S> {
    pub fn new(
        locals: Vec<LocalPolicy<S>>,
        default_coupling: CouplingPolicy<S>,
        pair_couplings: BTreeMap<(usize, usize), CouplingPolicy<S>>,
    ) -> Self {
        let homogeneous = locals
            .iter()
            .all(|p| !p.is_sleep_capable() && *p == locals[0])
            && pair_couplings.values().all(|c| *c == default_coupling);
        Self {
            locals,
            default_coupling,
            pair_couplings,
            homogeneous,
        }
    }

    /// One shared local policy and coupling for all `n` cells.
    pub fn uniform(n: usize, local: LocalPolicy<S>, coupling: CouplingPolicy<S>) -> Self {
        Self::new(vec![local; n], coupling, BTreeMap::new())
    }

    pub fn n_cells(&self) -> usize {
        self.locals.len()
    }

    /// All local policies identical and active, all couplings identical:
    /// the network reduces to the single-(f, g) analysis.
    pub fn homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn local(&self, cell: usize) -> &LocalPolicy<S> {
        &self.locals[cell]
    }

    pub fn locals(&self) -> &[LocalPolicy<S>] {
        &self.locals
    }

    pub fn coupling(&self, i: usize, j: usize) -> &CouplingPolicy<S> {
        self.pair_couplings
            .get(&(i, j))
            .unwrap_or(&self.default_coupling)
    }

    pub fn default_coupling(&self) -> &CouplingPolicy<S> {
        &self.default_coupling
    }

    /// Ids of sleep-capable cells, ascending.
    pub fn sleep_capable_cells(&self) -> Vec<usize> {
        self.locals
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_sleep_capable())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Wire format: {"mode": "active"|"sleep", "gamma": g?, "coeffs": [..], "sleep_coeffs": [..]?}.
#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct LocalPolicyRepr<S> {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<S>,
    coeffs: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sleep_coeffs: Option<Vec<S>>,
}

impl<S: Scalar> TryFrom<LocalPolicyRepr<S>> for LocalPolicy<S> {
    type Error = String;

    fn try_from(repr: LocalPolicyRepr<S>) -> Result<Self, String> {
        let mode = match repr.mode.as_str() {
            "active" => {
                if repr.gamma.is_some() {
                    return Err("active policy must not carry gamma".into());
                }
                ActivationMode::Active
            }
            "sleep" => {
                let gamma = repr.gamma.ok_or("sleep policy requires gamma")?;
                ActivationMode::sleep_capable(gamma).map_err(|e| e.to_string())?
            }
            other => return Err(format!("unknown policy mode {other:?}")),
        };
        LocalPolicy::new(mode, repr.coeffs, repr.sleep_coeffs).map_err(|e| e.to_string())
    }
}

impl<S: Scalar> From<LocalPolicy<S>> for LocalPolicyRepr<S> {
    fn from(policy: LocalPolicy<S>) -> Self {
        let (mode, gamma) = match policy.mode {
            ActivationMode::Active => ("active".to_string(), None),
            ActivationMode::SleepCapable { gamma } => ("sleep".to_string(), Some(gamma)),
        };
        Self {
            mode,
            gamma,
            coeffs: policy.coeffs,
            sleep_coeffs: policy.sleep_coeffs,
        }
    }
}
