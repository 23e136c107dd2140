//! Scenario files.
//!
//! Every key except `algorithm` and `horizon_slots` has a default matching the Melbourne
//! CBD setup: 36 stations and 126 user groups in the default bounding box, Poisson
//! requests at 0.25 per ms per group, 1 ms slots, a 50 ms deadline and `V = 10`.
//! Energies are given in watts (Wh per hour) and converted to joules per slot.

use std::path::{Path, PathBuf};

use mec_core::scheduler::{deadline_bounds, BoundReport, WogConfig};
use mec_core::sim::{Algorithm, ArrivalProcess, LiftingMode, SimConfig, WorkloadDist};
use mec_core::{StationConfig, Topology, UtilitySpec};
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_locations, load_locations, location_set, BoundingBox, LocationSet};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub algorithm: Algorithm,
    pub horizon_slots: u64,
    #[serde(default)]
    pub seed: u64,
    /// Location CSV. Relative paths are resolved against the scenario file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Inline stations; used instead of a dataset when non-empty.
    #[serde(default)]
    pub stations: Vec<StationSpec>,
    #[serde(default)]
    pub user_groups: Vec<GroupSpec>,
    /// Seed of the synthetic layout used when neither a dataset nor inline stations are given.
    #[serde(default)]
    pub layout_seed: u64,
    #[serde(default = "default_layout_stations")]
    pub layout_stations: usize,
    #[serde(default = "default_layout_groups")]
    pub layout_groups: usize,
    #[serde(default)]
    pub bounding_box: BoundingBox,
    #[serde(default)]
    pub arrivals: ArrivalSpec,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub hardware: HardwareSpec,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_k")]
    pub k_classes: usize,
    #[serde(default = "default_l_max_ms")]
    pub l_max_ms: f64,
    #[serde(default = "default_slot_ms")]
    pub slot_ms: f64,
    #[serde(default = "default_one")]
    pub load_factor: f64,
    #[serde(default)]
    pub lifting: LiftingMode,
    #[serde(default)]
    pub early_refuse: bool,
    #[serde(default = "default_true")]
    pub bind_giant_tasks: bool,
    /// Reject `v` above the largest value meeting the deadline.
    #[serde(default)]
    pub enforce_deadline: bool,
    #[serde(default = "default_true")]
    pub check_invariants: bool,
    #[serde(default = "default_true")]
    pub record_trace: bool,
    #[serde(default = "default_true")]
    pub drain: bool,
    #[serde(default = "default_reassign")]
    pub reassign_period: u64,
    #[serde(default = "default_violation_t")]
    pub violation_t: Vec<u64>,
    /// Per-station arrival rates for the known-rate schedulers.
    #[serde(default)]
    pub known_lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_v() -> f64 {
    10.0
}
fn default_layout_stations() -> usize {
    36
}
fn default_layout_groups() -> usize {
    126
}
fn default_k() -> usize {
    5
}
fn default_l_max_ms() -> f64 {
    50.0
}
fn default_slot_ms() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_reassign() -> u64 {
    mec_core::extensions::classes::DEFAULT_REASSIGN_PERIOD
}
fn default_violation_t() -> Vec<u64> {
    (3..=10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub lat: f64,
    pub lon: f64,
    /// Overrides of the shared hardware parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    /// Probability of a task at each station per slot; one value applies to all.
    Bernoulli { p: Vec<f64> },
    UserGroupPoisson {
        #[serde(default = "default_rate")]
        rate_per_ms: f64,
        #[serde(default = "default_radius")]
        attach_radius_m: f64,
    },
    MarkovBurst {
        #[serde(default = "default_radius")]
        attach_radius_m: f64,
        p_on_to_off: f64,
        p_off_to_on: f64,
        on_rate_per_ms: f64,
    },
}

fn default_rate() -> f64 {
    0.25
}
fn default_radius() -> f64 {
    100.0
}

impl Default for ArrivalSpec {
    fn default() -> Self {
        ArrivalSpec::UserGroupPoisson { rate_per_ms: default_rate(), attach_radius_m: default_radius() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub min_cycles: f64,
    pub max_cycles: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { min_cycles: 2.5e6, max_cycles: 7.5e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub cpu_hz: f64,
    pub energy_per_cycle_nj: f64,
    pub static_w: f64,
    pub budget_w: f64,
    pub utility: UtilitySpec,
}

impl Default for HardwareSpec {
    fn default() -> Self {
        HardwareSpec { cpu_hz: 20e9, energy_per_cycle_nj: 8.2, static_w: 10.0, budget_w: 50.0, utility: UtilitySpec::Linear { slope: 1.0 } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    /// Trip times from great-circle distances; stations more than 900 m apart do not cooperate.
    #[default]
    Geographic,
    /// Every pair cooperates with the same trip time.
    Complete { delta_slots: u32 },
}

fn invalid(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Invalid { key: key.to_string(), msg: msg.into() }
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    let mut cfg = parse_scenario_str(&text)?;
    if let Some(d) = cfg.dataset.as_mut() {
        if d.is_relative() {
            if let Some(dir) = path.parent() {
                *d = dir.join(&*d);
            }
        }
    }
    Ok(cfg)
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        invalid(&key, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn emit_scenario(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("scenario serialises")
}

impl ScenarioConfig {
    /// Checks that do not need the station layout.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |key: &str, x: f64| if x > 0.0 && x.is_finite() { Ok(()) } else { Err(invalid(key, format!("must be positive, got {x}"))) };
        let prob = |key: &str, x: f64| if (0.0..=1.0).contains(&x) { Ok(()) } else { Err(invalid(key, format!("must lie in [0, 1], got {x}"))) };
        if self.horizon_slots == 0 {
            return Err(invalid("horizon_slots", "must be positive"));
        }
        positive("v", self.v)?;
        positive("slot_ms", self.slot_ms)?;
        positive("l_max_ms", self.l_max_ms)?;
        if !(self.load_factor >= 0.0) {
            return Err(invalid("load_factor", format!("must be non-negative, got {}", self.load_factor)));
        }
        if self.layout_stations == 0 {
            return Err(invalid("layout_stations", "must be at least 1"));
        }
        if self.k_classes == 0 {
            return Err(invalid("k_classes", "must be at least 1"));
        }
        if self.reassign_period == 0 {
            return Err(invalid("reassign_period", "must be positive"));
        }
        match &self.arrivals {
            ArrivalSpec::Bernoulli { p } => {
                for (i, x) in p.iter().enumerate() {
                    prob(&format!("arrivals.p[{i}]"), *x)?;
                }
            }
            ArrivalSpec::UserGroupPoisson { rate_per_ms, attach_radius_m } => {
                if !(*rate_per_ms >= 0.0) {
                    return Err(invalid("arrivals.rate_per_ms", format!("must be non-negative, got {rate_per_ms}")));
                }
                positive("arrivals.attach_radius_m", *attach_radius_m)?;
            }
            ArrivalSpec::MarkovBurst { attach_radius_m, p_on_to_off, p_off_to_on, on_rate_per_ms } => {
                positive("arrivals.attach_radius_m", *attach_radius_m)?;
                prob("arrivals.p_on_to_off", *p_on_to_off)?;
                prob("arrivals.p_off_to_on", *p_off_to_on)?;
                if !(*on_rate_per_ms >= 0.0) {
                    return Err(invalid("arrivals.on_rate_per_ms", format!("must be non-negative, got {on_rate_per_ms}")));
                }
            }
        }
        if self.workload.min_cycles > self.workload.max_cycles || !(self.workload.min_cycles > 0.0) {
            return Err(invalid("workload", "need 0 < min_cycles <= max_cycles"));
        }
        positive("hardware.cpu_hz", self.hardware.cpu_hz)?;
        positive("hardware.energy_per_cycle_nj", self.hardware.energy_per_cycle_nj)?;
        if !(self.hardware.static_w >= 0.0) {
            return Err(invalid("hardware.static_w", "must be non-negative"));
        }
        if let Some(l) = &self.known_lambda {
            for (i, x) in l.iter().enumerate() {
                prob(&format!("known_lambda[{i}]"), *x)?;
            }
        }
        if self.algorithm == Algorithm::Known && self.k_classes > 1 {
            return Err(invalid("k_classes", "the known-rate algorithm needs k_classes = 1"));
        }
        if self.early_refuse && (!self.algorithm.is_wog() || self.k_classes > 1) {
            return Err(invalid("early_refuse", "applies to wog and wog-observed with k_classes = 1"));
        }
        Ok(())
    }

    pub fn l_max_slots(&self) -> u32 {
        (self.l_max_ms / self.slot_ms + 1e-9).floor() as u32
    }

    fn locations(&self) -> Result<LocationSet, CliError> {
        if !self.stations.is_empty() {
            return Ok(LocationSet {
                stations: self.stations.iter().map(|s| (s.lat, s.lon)).collect(),
                groups: self.user_groups.iter().map(|g| (g.lat, g.lon)).collect(),
            });
        }
        match &self.dataset {
            Some(path) => load_locations(path, &self.bounding_box),
            None => Ok(location_set(&generate_locations(self.layout_seed, self.layout_stations, self.layout_groups, &self.bounding_box))),
        }
    }

    fn station_configs(&self, positions: &[(f64, f64)]) -> Result<Vec<StationConfig>, CliError> {
        let hw = &self.hardware;
        let j_per_slot = |watts: f64| watts * self.slot_ms / 1000.0;
        positions
            .iter()
            .enumerate()
            .map(|(id, pos)| {
                let spec = self.stations.get(id);
                let cpu_hz = spec.and_then(|s| s.cpu_hz).unwrap_or(hw.cpu_hz);
                let cpu_rate = cpu_hz * self.slot_ms / 1000.0;
                let e_static = j_per_slot(spec.and_then(|s| s.static_w).unwrap_or(hw.static_w));
                let s = StationConfig {
                    id,
                    position: *pos,
                    cpu_rate,
                    e_static,
                    e_active: e_static + cpu_rate * hw.energy_per_cycle_nj * 1e-9,
                    e_budget: j_per_slot(spec.and_then(|s| s.budget_w).unwrap_or(hw.budget_w)),
                    utility: spec.and_then(|s| s.utility.clone()).unwrap_or_else(|| hw.utility.clone()),
                };
                s.validate().map_err(|e| invalid(&format!("stations[{id}]"), e.to_string()))?;
                Ok(s)
            })
            .collect()
    }

    /// Resolves the layout and converts units into a simulator configuration.
    pub fn to_sim_config(&self) -> Result<SimConfig, CliError> {
        self.validate()?;
        let loc = self.locations()?;
        let stations = self.station_configs(&loc.stations)?;
        let n = stations.len();
        let topology = match self.topology {
            TopologySpec::Geographic => Topology::from_positions(&loc.stations, self.slot_ms)?,
            TopologySpec::Complete { delta_slots } => Topology::complete(n, delta_slots),
        };
        let arrivals = match &self.arrivals {
            ArrivalSpec::Bernoulli { p } => {
                let p = match p.len() {
                    1 => vec![p[0]; n],
                    len if len == n => p.clone(),
                    len => return Err(invalid("arrivals.p", format!("{len} probabilities for {n} stations"))),
                };
                ArrivalProcess::BernoulliPerBs { p }
            }
            ArrivalSpec::UserGroupPoisson { rate_per_ms, attach_radius_m } => {
                ArrivalProcess::UserGroupPoisson { groups: loc.groups.clone(), rate: rate_per_ms * self.slot_ms, attach_radius_m: *attach_radius_m }
            }
            ArrivalSpec::MarkovBurst { attach_radius_m, p_on_to_off, p_off_to_on, on_rate_per_ms } => ArrivalProcess::MarkovBurst {
                groups: loc.groups.clone(),
                attach_radius_m: *attach_radius_m,
                p_on_to_off: *p_on_to_off,
                p_off_to_on: *p_off_to_on,
                on_rate: on_rate_per_ms * self.slot_ms,
            },
        };
        if matches!(arrivals, ArrivalProcess::UserGroupPoisson { .. } | ArrivalProcess::MarkovBurst { .. }) && loc.groups.is_empty() {
            return Err(invalid("user_groups", "group-based arrivals need at least one user group"));
        }
        let sim = SimConfig {
            stations,
            topology,
            arrivals,
            workload: WorkloadDist { low: self.workload.min_cycles, high: self.workload.max_cycles },
            algorithm: self.algorithm,
            v: self.v,
            k_classes: self.k_classes,
            l_max_slots: self.l_max_slots(),
            slot_ms: self.slot_ms,
            horizon: self.horizon_slots,
            seed: self.seed,
            load_factor: self.load_factor,
            lifting: self.lifting,
            early_refuse: self.early_refuse,
            bind_giant_tasks: self.bind_giant_tasks,
            check_invariants: self.check_invariants,
            record_trace: self.record_trace,
            drain: self.drain,
            reassign_period: self.reassign_period,
            violation_t: self.violation_t.clone(),
            known_lambda: self.known_lambda.clone(),
        };
        if self.enforce_deadline {
            let report = bounds_for(&sim)?;
            if let Some(ceiling) = report.v_ceiling.filter(|c| self.v > *c) {
                return Err(invalid("v", format!("{} exceeds the deadline ceiling {ceiling}", self.v)));
            }
        }
        Ok(sim)
    }
}

/// Closed-form bounds of a resolved scenario.
pub fn bounds_for(sim: &SimConfig) -> Result<BoundReport, CliError> {
    let wc = WogConfig::known_rate(sim.v, vec![0.0; sim.stations.len()], sim.l_max_slots);
    Ok(deadline_bounds(&wc, &sim.stations, &sim.topology)?)
}
