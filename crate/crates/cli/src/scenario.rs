//! Scenario files: one JSON document pinning everything a run needs —
//! topology source, policy assignment, optional radio layer, integration
//! settings and the seed every stochastic stage derives from.

use anyhow::{anyhow, bail, Context, Result};
use cascade_core::policy::{CouplingPolicy, LocalPolicy, PolicyAssignment};
use cascade_core::radio::{CellLoadSnapshot, RadioConfig, User};
use cascade_core::rng::{stream_rng, Stream};
use cascade_core::simulate::{perturb, SimulationConfig};
use cascade_core::topology::{build_neighbor_graph, generate_ppp, NetworkTopology, Region};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Radio layer inputs resolved from a scenario: config plus users.
pub type RadioSetup = (RadioConfig<f64>, Vec<User<f64>>);

pub const SCHEMA_VERSION: u32 = 1;

/// Square meters per square kilometer; scenario intensities are per km^2,
/// region dimensions in meters.
const M2_PER_KM2: f64 = 1e6;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub seed: u64,
    pub topology: TopologySpec,
    pub policies: PoliciesSpec,
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub radio: Option<RadioSpec>,
    pub simulation: SimSpec,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    /// Poisson point process over a rectangle, Delaunay neighbors thinned
    /// with the given probability.
    Ppp {
        intensity_per_km2: f64,
        region_m: (f64, f64),
        connection_probability: f64,
    },
    /// Inline topology in the standard wire format.
    Explicit(NetworkTopology<f64>),
    /// Topology JSON on disk, relative to the scenario file.
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoliciesSpec {
    pub default: LocalPolicy<f64>,
    /// Per-cell overrides keyed by decimal cell index.
    #[serde(default)]
    pub cells: BTreeMap<String, LocalPolicy<f64>>,
    /// Seeded random subset of cells carrying an alternate policy.
    #[serde(default)]
    pub random_subset: Option<RandomSubset>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSubset {
    pub fraction: f64,
    pub policy: LocalPolicy<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub default: CouplingPolicy<f64>,
    /// Ordered-pair overrides keyed "i-j".
    #[serde(default)]
    pub pairs: BTreeMap<String, CouplingPolicy<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSpec {
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_loss_db: f64,
    pub noise_power_dbm: f64,
    pub prb_count: u32,
    pub prb_bandwidth_hz: f64,
    #[serde(default)]
    pub hysteresis_db: f64,
    #[serde(default)]
    pub cio_db: Option<Vec<Vec<f64>>>,
    pub users: UsersSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsersSpec {
    /// Uniformly placed users with one shared demand, drawn from the user
    /// stream of the scenario seed.
    Random {
        count: usize,
        demand_bps: f64,
    },
    Explicit(Vec<User<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sync_tolerance")]
    pub sync_tolerance: f64,
    #[serde(default)]
    pub perturbation_amplitude: f64,
    #[serde(default = "default_record_stride")]
    pub record_stride: usize,
    pub initial: InitialSpec,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    20.0
}
fn default_sync_tolerance() -> f64 {
    1e-3
}
fn default_record_stride() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    /// Seeded i.i.d. uniform loads in [low, high].
    Uniform {
        low: f64,
        high: f64,
    },
    /// All-ones state plus perturb() with the configured amplitude.
    OnesPerturbed,
    Explicit(Vec<f64>),
    /// Initial loads from the radio layer's PRB snapshot.
    FromRadio,
}

impl std::str::FromStr for InitialSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones-perturbed" => Ok(InitialSpec::OnesPerturbed),
            "from-radio" => Ok(InitialSpec::FromRadio),
            other => {
                if let Some(range) = other.strip_prefix("uniform:") {
                    let (low, high) = range
                        .split_once(',')
                        .ok_or_else(|| anyhow!("expected uniform:LOW,HIGH"))?;
                    return Ok(InitialSpec::Uniform {
                        low: low.trim().parse()?,
                        high: high.trim().parse()?,
                    });
                }
                bail!(
                    "unknown initial condition {other:?}; use uniform:LOW,HIGH, \
                     ones-perturbed or from-radio"
                )
            }
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot read scenario {}", path.display()))?;
        let scenario: Scenario = serde_json::from_slice(&bytes)
            .with_context(|| format!("scenario {} does not match the schema", path.display()))?;
        if scenario.schema != SCHEMA_VERSION {
            bail!(
                "unsupported scenario schema {} (this build reads {})",
                scenario.schema,
                SCHEMA_VERSION
            );
        }
        Ok((scenario, bytes))
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let scenario: Scenario = serde_json::from_value(value)?;
        if scenario.schema != SCHEMA_VERSION {
            bail!("unsupported scenario schema {}", scenario.schema);
        }
        Ok(scenario)
    }

    pub fn build_topology(&self, scenario_dir: &Path) -> Result<NetworkTopology<f64>> {
        match &self.topology {
            TopologySpec::Ppp {
                intensity_per_km2,
                region_m,
                connection_probability,
            } => {
                let region = Region::new(region_m.0, region_m.1)?;
                let sites = generate_ppp(intensity_per_km2 / M2_PER_KM2, region, self.seed)?;
                Ok(build_neighbor_graph(
                    sites,
                    region,
                    *connection_probability,
                    self.seed,
                )?)
            }
            TopologySpec::Explicit(topology) => Ok(topology.clone()),
            TopologySpec::File(path) => {
                let resolved = scenario_dir.join(path);
                let bytes = std::fs::read(&resolved)
                    .with_context(|| format!("cannot read topology {}", resolved.display()))?;
                Ok(serde_json::from_slice(&bytes)?)
            }
        }
    }

    pub fn build_assignment(&self, n_cells: usize) -> Result<PolicyAssignment<f64>> {
        let mut locals = vec![self.policies.default.clone(); n_cells];
        if let Some(subset) = &self.policies.random_subset {
            if !(0.0..=1.0).contains(&subset.fraction) {
                bail!("random_subset.fraction must lie in [0, 1]");
            }
            let mut rng = stream_rng(self.seed, Stream::PolicySelection);
            for local in locals.iter_mut() {
                if rng.gen_range(0.0..1.0) < subset.fraction {
                    *local = subset.policy.clone();
                }
            }
        }
        for (key, policy) in &self.policies.cells {
            let cell: usize = key
                .parse()
                .with_context(|| format!("policy override key {key:?} is not a cell index"))?;
            if cell >= n_cells {
                bail!("policy override for cell {cell} but the topology has {n_cells} cells");
            }
            locals[cell] = policy.clone();
        }

        let mut pairs = BTreeMap::new();
        for (key, coupling) in &self.coupling.pairs {
            let (i, j) = key
                .split_once('-')
                .ok_or_else(|| anyhow!("coupling pair key {key:?} is not of the form i-j"))?;
            let (i, j): (usize, usize) = (i.parse()?, j.parse()?);
            if i >= n_cells || j >= n_cells || i == j {
                bail!("coupling pair ({i}, {j}) is invalid for {n_cells} cells");
            }
            pairs.insert((i, j), coupling.clone());
        }
        Ok(PolicyAssignment::new(
            locals,
            self.coupling.default.clone(),
            pairs,
        ))
    }

    pub fn build_radio(&self, topology: &NetworkTopology<f64>) -> Result<Option<RadioSetup>> {
        let Some(spec) = &self.radio else {
            return Ok(None);
        };
        let n = topology.n_cells();
        let mut config = RadioConfig::uniform(
            n,
            spec.tx_power_dbm,
            spec.path_loss_exponent,
            spec.reference_loss_db,
            spec.noise_power_dbm,
            spec.prb_count,
            spec.prb_bandwidth_hz,
            spec.hysteresis_db,
        )?;
        if let Some(cio) = &spec.cio_db {
            if cio.len() != n || cio.iter().any(|row| row.len() != n) {
                bail!("cio_db must be an {n}x{n} matrix");
            }
            let mut matrix = Array2::zeros((n, n));
            for (i, row) in cio.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    matrix[[i, j]] = v;
                }
            }
            config.cio_db = matrix;
            config.validate(n)?;
        }
        let users = match &spec.users {
            UsersSpec::Explicit(users) => users.clone(),
            UsersSpec::Random { count, demand_bps } => {
                let region = topology.region();
                let mut rng = stream_rng(self.seed, Stream::Users);
                (0..*count)
                    .map(|_| User {
                        position: (
                            rng.gen_range(0.0..region.width),
                            rng.gen_range(0.0..region.height),
                        ),
                        demand_bps: *demand_bps,
                    })
                    .collect()
            }
        };
        Ok(Some((config, users)))
    }

    pub fn sim_config(&self) -> Result<SimulationConfig<f64>> {
        let config = SimulationConfig {
            dt: self.simulation.dt,
            horizon: self.simulation.horizon,
            sync_tolerance: self.simulation.sync_tolerance,
            perturbation_amplitude: self.simulation.perturbation_amplitude,
            seed: self.seed,
            record_stride: self.simulation.record_stride,
        };
        config.validate()?;
        Ok(config)
    }

    /// Resolve initial loads; `override_spec` (from --initial) wins over the
    /// scenario's own choice. The PRB snapshot is returned alongside when
    /// the radio layer produced the loads, so callers can export it.
    pub fn initial_loads(
        &self,
        topology: &NetworkTopology<f64>,
        override_spec: Option<&InitialSpec>,
    ) -> Result<(Array1<f64>, Option<CellLoadSnapshot<f64>>)> {
        let n = topology.n_cells();
        let spec = override_spec.unwrap_or(&self.simulation.initial);
        match spec {
            InitialSpec::Uniform { low, high } => {
                if low >= high || !low.is_finite() || !high.is_finite() {
                    bail!("uniform initial loads need low < high");
                }
                let mut rng = stream_rng(self.seed, Stream::InitialLoads);
                Ok((
                    Array1::from_iter((0..n).map(|_| rng.gen_range(*low..*high))),
                    None,
                ))
            }
            InitialSpec::OnesPerturbed => Ok((
                perturb(
                    &Array1::from_elem(n, 1.0),
                    self.simulation.perturbation_amplitude,
                    self.seed,
                ),
                None,
            )),
            InitialSpec::Explicit(loads) => {
                if loads.len() != n {
                    bail!(
                        "explicit initial loads cover {} cells, topology has {n}",
                        loads.len()
                    );
                }
                Ok((Array1::from_vec(loads.clone()), None))
            }
            InitialSpec::FromRadio => {
                let (config, users) = self
                    .build_radio(topology)?
                    .ok_or_else(|| anyhow!("initial = from-radio requires a radio section"))?;
                let assignment =
                    cascade_core::radio::assign_users(topology.sites(), users, &config)?;
                let snapshot =
                    cascade_core::radio::cell_loads(topology.sites(), &assignment, &config)?;
                let loads = cascade_core::radio::snapshot_to_initial_loads(&snapshot);
                Ok((loads, Some(snapshot)))
            }
        }
    }
}
