//! Online drift-plus-penalty scheduling with a hard bound on head-of-line waiting time.
//!
//! Every slot runs four stages: pick the auxiliary throughput `gamma` per station, solve
//! a max-weight assignment of head-of-line tasks to servers, drop head-of-line tasks that
//! have waited at least `Z`, then update all queues. With `V` trading utility against
//! delay, no task waits more than `ceil(V nu) + 2` slots.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::build_schedule;
use crate::decision::SlotDecision;
use crate::error::{Error, Result};
use crate::model::{energy_of_slot, StationConfig, Topology};
use crate::queue::{process_workload, update_physical_queue, update_virtual_queues, QueueState, QueuedTask};
use crate::utility::UtilitySpec;

const BOUND_SLACK: f64 = 1e-9;

/// Source of the arrival term in the `Z` update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RateMode {
    KnownRate(Vec<f64>),
    /// Use the arrival observed `w_window` slots earlier.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WogConfig {
    pub v: f64,
    pub mode: RateMode,
    pub w_window: usize,
    /// Worst-case response bound in slots.
    pub l_max: u32,
}

impl WogConfig {
    pub fn known_rate(v: f64, lambda: Vec<f64>, l_max: u32) -> Self {
        WogConfig { v, mode: RateMode::KnownRate(lambda), w_window: 0, l_max }
    }

    /// The observation lag is the largest waiting-time bound over stations.
    pub fn observed(v: f64, stations: &[StationConfig], l_max: u32) -> Self {
        let w_window = stations.iter().map(|s| h_max_for(v, s.utility.nu())).max().unwrap_or(2) as usize;
        WogConfig { v, mode: RateMode::Observed, w_window, l_max }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(Error::Config(format!("V must be positive, got {}", self.v)));
        }
        if let RateMode::KnownRate(l) = &self.mode {
            if l.len() != n {
                return Err(Error::Config(format!("{} arrival rates for {n} stations", l.len())));
            }
            if let Some(bad) = l.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Domain { what: "arrival rate", value: *bad });
            }
        }
        Ok(())
    }
}

/// Closed-form bounds on the queues and the largest `V` meeting the deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub h_max: Vec<u64>,
    pub z_max: Vec<f64>,
    pub w_max: Vec<f64>,
    pub h_max_global: u64,
    /// `None` when every utility is flat, so any `V` meets the deadline.
    pub v_ceiling: Option<f64>,
}

pub fn h_max_for(v: f64, nu: f64) -> u64 {
    (v * nu).ceil() as u64 + 2
}

/// Queue bounds that hold for every slot of a run.
pub fn queue_bounds(v: f64, stations: &[StationConfig]) -> BoundReport {
    let h_max: Vec<u64> = stations.iter().map(|s| h_max_for(v, s.utility.nu())).collect();
    let h_max_global = h_max.iter().copied().max().unwrap_or(2);
    let w_max = stations.iter().map(|s| (h_max_global as f64 / (s.e_active - s.e_static)).ceil() + s.e_active - s.e_budget).collect();
    BoundReport { z_max: h_max.iter().map(|h| *h as f64).collect(), h_max, w_max, h_max_global, v_ceiling: None }
}

/// Queue bounds plus the largest `V` with `ceil(V max nu) + 2 <= L - 2 delta_max`.
pub fn deadline_bounds(cfg: &WogConfig, stations: &[StationConfig], topology: &Topology) -> Result<BoundReport> {
    let slack = cfg.l_max as i64 - 2 * topology.delta_max as i64 - 2;
    if slack <= 0 {
        return Err(Error::Config(format!("deadline {} slots leaves no room for a positive V with trip time {}", cfg.l_max, topology.delta_max)));
    }
    let nu = stations.iter().map(|s| s.utility.nu()).fold(0.0, f64::max);
    let mut report = queue_bounds(cfg.v, stations);
    report.v_ceiling = (nu > 0.0).then(|| slack as f64 / nu);
    Ok(report)
}

/// Largest maximiser of `V g_hat(gamma) - Z gamma` over `[-1, 1]`.
pub fn choose_gamma(z: f64, v: f64, utility: &UtilitySpec) -> f64 {
    utility.argmax_penalised(v, z)
}

/// Drop the head-of-line task of idle stations whose waiting time reached `Z`.
pub fn drop_decisions(states: &[QueueState], eta: &[bool]) -> Vec<bool> {
    states.iter().zip(eta).map(|(q, e)| !e && !q.is_empty() && q.h as f64 >= q.z).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeEvent {
    pub origin: usize,
    pub server: usize,
    pub task: QueuedTask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub decision: SlotDecision,
    pub served: Vec<ServeEvent>,
    /// `(origin, task)` of dropped tasks.
    pub dropped: Vec<(usize, QueuedTask)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerOptions {
    /// One task per station per slot, served whole. When false, tasks carry a workload and
    /// each serving or dropping slot removes one slot of CPU work from the queue front.
    pub bind_giant_tasks: bool,
    pub check_invariants: bool,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        SchedulerOptions { bind_giant_tasks: true, check_invariants: true }
    }
}

#[derive(Debug, Clone)]
pub struct WogScheduler {
    cfg: WogConfig,
    stations: Vec<StationConfig>,
    topology: Topology,
    options: SchedulerOptions,
    states: Vec<QueueState>,
    history: VecDeque<Vec<bool>>,
    bounds: BoundReport,
    slot: u64,
}

impl WogScheduler {
    pub fn new(cfg: WogConfig, stations: Vec<StationConfig>, topology: Topology) -> Result<Self> {
        Self::with_options(cfg, stations, topology, SchedulerOptions::default())
    }

    pub fn with_options(cfg: WogConfig, stations: Vec<StationConfig>, topology: Topology, options: SchedulerOptions) -> Result<Self> {
        let n = stations.len();
        if topology.n_stations != n {
            return Err(Error::Config(format!("topology has {} stations, config has {n}", topology.n_stations)));
        }
        cfg.validate(n)?;
        for s in &stations {
            s.validate()?;
        }
        let bounds = queue_bounds(cfg.v, &stations);
        Ok(WogScheduler { cfg, stations, topology, options, states: vec![QueueState::default(); n], history: VecDeque::new(), bounds, slot: 0 })
    }

    pub fn states(&self) -> &[QueueState] {
        &self.states
    }

    pub fn bounds(&self) -> &BoundReport {
        &self.bounds
    }

    pub fn stations(&self) -> &[StationConfig] {
        &self.stations
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Replaces the energy allowances, e.g. after a class budget refresh.
    pub fn set_budgets(&mut self, budgets: &[f64]) -> Result<()> {
        for (s, b) in self.stations.iter_mut().zip(budgets) {
            s.e_budget = *b;
            s.validate()?;
        }
        // bounds only widen so that queues built up under the old allowance stay within them
        let fresh = queue_bounds(self.cfg.v, &self.stations);
        for (old, new) in self.bounds.w_max.iter_mut().zip(fresh.w_max) {
            *old = old.max(new);
        }
        Ok(())
    }

    /// Runs one slot. `arrivals[n]` is the task arriving at station `n` in this slot; it
    /// joins the queue at the end of the slot.
    pub fn step(&mut self, arrivals: &[Option<QueuedTask>]) -> Result<SlotOutcome> {
        let dec = self.decide();
        self.commit(dec, arrivals)
    }

    /// The first three stages of a slot: auxiliary throughput, service and drops.
    pub fn decide(&self) -> SlotDecision {
        let n = self.stations.len();
        let mut dec = SlotDecision::empty(n);
        for (k, (q, s)) in self.states.iter().zip(&self.stations).enumerate() {
            dec.gamma[k] = choose_gamma(q.z, self.cfg.v, &s.utility);
        }
        dec.server = build_schedule(&self.states, &self.stations, &self.topology.peer_mask);
        let eta: Vec<bool> = dec.server.iter().map(Option::is_some).collect();
        dec.drop = drop_decisions(&self.states, &eta);
        self.fill_energy(&mut dec);
        dec
    }

    /// Withdraws the service of `origin`'s head-of-line task, e.g. when its server runs
    /// out of CPU this slot. The drop rule is reapplied to the now idle queue.
    pub fn defer(&self, dec: &mut SlotDecision, origin: usize) {
        dec.server[origin] = None;
        let q = &self.states[origin];
        dec.drop[origin] = !q.is_empty() && q.h as f64 >= q.z;
        self.fill_energy(dec);
    }

    fn fill_energy(&self, dec: &mut SlotDecision) {
        let busy = dec.busy_vector();
        for (m, s) in self.stations.iter().enumerate() {
            dec.energy[m] = energy_of_slot(s, busy[m]);
        }
    }

    /// Applies a decision and the slot's arrivals to the queues.
    pub fn commit(&mut self, dec: SlotDecision, arrivals: &[Option<QueuedTask>]) -> Result<SlotOutcome> {
        let n = self.stations.len();
        if arrivals.len() != n || dec.n() != n {
            return Err(Error::Contract(format!("{} arrivals and a decision of size {} for {n} stations", arrivals.len(), dec.n())));
        }
        let t = self.slot;
        if self.options.check_invariants {
            dec.validate(&self.topology, &self.states, t)?;
        }
        let eta: Vec<bool> = dec.server.iter().map(Option::is_some).collect();

        let observed = self.observed_arrivals(arrivals);
        let mut served = Vec::new();
        let mut dropped = Vec::new();
        for k in 0..n {
            let q = &mut self.states[k];
            if self.options.bind_giant_tasks {
                let left = update_physical_queue(q, eta[k], dec.drop[k], arrivals[k], t)?;
                if let Some(task) = left {
                    match dec.server[k] {
                        Some(m) => served.push(ServeEvent { origin: k, server: m, task }),
                        None => dropped.push((k, task)),
                    }
                }
            } else {
                if eta[k] || dec.drop[k] {
                    let capacity = dec.server[k].map_or(self.stations[k].cpu_rate, |m| self.stations[m].cpu_rate);
                    for task in process_workload(q, capacity, t) {
                        match dec.server[k] {
                            Some(m) => served.push(ServeEvent { origin: k, server: m, task }),
                            None => dropped.push((k, task)),
                        }
                    }
                }
                if let Some(task) = arrivals[k] {
                    q.tasks.push_back(task);
                }
                q.refresh_age(t + 1);
            }
            let lambda = match &self.cfg.mode {
                RateMode::KnownRate(l) => l[k],
                RateMode::Observed => f64::from(u8::from(observed[k])),
            };
            update_virtual_queues(q, dec.drop[k], dec.gamma[k], dec.energy[k], lambda, self.stations[k].e_budget);
        }
        self.slot += 1;
        if self.options.check_invariants {
            self.check_bounds()?;
        }
        Ok(SlotOutcome { slot: t, decision: dec, served, dropped })
    }

    /// Arrival presence `w_window` slots ago, zero before the window fills.
    fn observed_arrivals(&mut self, arrivals: &[Option<QueuedTask>]) -> Vec<bool> {
        let now: Vec<bool> = arrivals.iter().map(Option::is_some).collect();
        if self.cfg.mode != RateMode::Observed {
            return now;
        }
        if self.cfg.w_window == 0 {
            return now;
        }
        self.history.push_back(now);
        if self.history.len() > self.cfg.w_window {
            self.history.pop_front().expect("history is non-empty")
        } else {
            vec![false; arrivals.len()]
        }
    }

    fn check_bounds(&self) -> Result<()> {
        let t = self.slot;
        for (n, q) in self.states.iter().enumerate() {
            let fail = |what: &str| Error::Invariant { slot: t, detail: format!("station {n}: {what}\n{}", self.dump()) };
            q.check_consistency(t).map_err(|e| fail(&e.to_string()))?;
            if self.options.bind_giant_tasks && q.q_len() as u64 > q.h {
                return Err(fail("queue longer than head-of-line age"));
            }
            if self.options.bind_giant_tasks && q.h > self.bounds.h_max[n] {
                return Err(fail(&format!("H={} above {}", q.h, self.bounds.h_max[n])));
            }
            if q.z > self.bounds.z_max[n] + BOUND_SLACK {
                return Err(fail(&format!("Z={} above {}", q.z, self.bounds.z_max[n])));
            }
            if q.w > self.bounds.w_max[n] + BOUND_SLACK {
                return Err(fail(&format!("W={} above {}", q.w, self.bounds.w_max[n])));
            }
        }
        Ok(())
    }

    /// One line per station with its queue state.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (n, q) in self.states.iter().enumerate() {
            let _ = writeln!(out, "  bs {n}: Q={} H={} Z={:.6} W={:.6}", q.q_len(), q.h, q.z, q.w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn station(id: usize) -> StationConfig {
        StationConfig { id, position: (0.0, 0.0), cpu_rate: 2e7, e_static: 0.01, e_active: 0.174, e_budget: 0.05, utility: UtilitySpec::default() }
    }

    fn queue(q: usize, h: u64, z: f64) -> QueueState {
        let mut s = QueueState { z, h, ..Default::default() };
        for k in 0..q {
            s.tasks.push_back(QueuedTask::new(k as u64, k as u64));
        }
        s
    }

    #[test]
    fn gamma_examples() {
        let lin = UtilitySpec::Linear { slope: 1.0 };
        assert_eq!(choose_gamma(15.0, 10.0, &lin), -1.0);
        assert_eq!(choose_gamma(3.0, 10.0, &lin), 1.0);
        assert_eq!(choose_gamma(10.0, 10.0, &lin), 1.0);
        let log = UtilitySpec::Log { scale: 1.0 };
        assert!((choose_gamma(8.0, 10.0, &log) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn drop_examples() {
        assert_eq!(drop_decisions(&[queue(2, 4, 4.0)], &[false]), vec![true]);
        assert_eq!(drop_decisions(&[queue(2, 3, 4.0)], &[false]), vec![false]);
        assert_eq!(drop_decisions(&[queue(2, 5, 3.0)], &[true]), vec![false]);
        assert_eq!(drop_decisions(&[queue(0, 0, 0.0)], &[false]), vec![false]);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(h_max_for(10.0, 1.0), 12);
        assert_eq!(h_max_for(123.0, 0.0), 2);
        let topo = Topology::complete(2, 5);
        let cfg = WogConfig::known_rate(10.0, vec![0.5, 0.5], 50);
        let rep = deadline_bounds(&cfg, &[station(0), station(1)], &topo).unwrap();
        assert_eq!(rep.h_max, vec![12, 12]);
        assert_eq!(rep.v_ceiling, Some(38.0));
        // ceil(12 / 0.164) + 0.174 - 0.05
        assert!((rep.w_max[0] - (74.0 + 0.124)).abs() < 1e-12);
        let tight = WogConfig { l_max: 12, ..cfg };
        assert!(deadline_bounds(&tight, &[station(0), station(1)], &topo).is_err());
        let just = WogConfig { l_max: 13, ..tight };
        assert_eq!(deadline_bounds(&just, &[station(0), station(1)], &topo).unwrap().v_ceiling, Some(1.0));
    }

    #[test]
    fn idle_system_only_moves_z() {
        let mut s = WogScheduler::new(WogConfig::known_rate(10.0, vec![0.0], 50), vec![station(0)], Topology::complete(1, 0)).unwrap();
        let out = s.step(&[None]).unwrap();
        assert!(out.served.is_empty() && out.dropped.is_empty());
        assert_eq!(out.decision.gamma, vec![1.0]);
        assert_eq!(s.states()[0].z, 1.0);
        assert_eq!(s.states()[0].w, 0.0);
        assert!(s.states()[0].is_empty());
    }

    #[test]
    fn heavy_energy_debt_turns_service_into_a_drop() {
        let mut s = WogScheduler::new(WogConfig::known_rate(10.0, vec![1.0], 50), vec![station(0)], Topology::complete(1, 0)).unwrap();
        s.states[0] = QueueState { w: 50.0, z: 2.0, ..queue(1, 0, 2.0) };
        s.states[0].tasks[0].arrival = 0;
        s.slot = 3;
        s.states[0].h = 3;
        let out = s.step(&[None]).unwrap();
        assert_eq!(out.decision.server, vec![None]);
        assert_eq!(out.dropped.len(), 1);
    }

    #[test]
    fn bernoulli_half_keeps_h_within_twelve() {
        let n = 3;
        let stations: Vec<_> = (0..n).map(station).collect();
        let mut s = WogScheduler::new(WogConfig::known_rate(10.0, vec![0.5; n], 50), stations, Topology::complete(n, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_h = 0;
        let mut id = 0;
        for t in 0..20_000u64 {
            let arr: Vec<Option<QueuedTask>> = (0..n)
                .map(|_| {
                    rng.random_bool(0.5).then(|| {
                        id += 1;
                        QueuedTask::new(t, id)
                    })
                })
                .collect();
            s.step(&arr).unwrap();
            max_h = max_h.max(s.states().iter().map(|q| q.h).max().unwrap());
        }
        assert!(max_h <= 12);
    }

    #[test]
    fn observed_mode_lags_arrivals() {
        let stations = vec![station(0)];
        let cfg = WogConfig::observed(1.0, &stations, 50);
        assert_eq!(cfg.w_window, 3);
        let mut s = WogScheduler::new(cfg, stations, Topology::complete(1, 0)).unwrap();
        let mut lagged = Vec::new();
        for t in 0..6 {
            let arr = [(t == 1).then(|| QueuedTask::new(t, t))];
            lagged.push(s.observed_arrivals(&arr)[0]);
        }
        assert_eq!(lagged, vec![false, false, false, false, true, false]);
    }
}
