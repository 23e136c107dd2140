//! Slot loop: arrivals, scheduling, lifting to the delayed network and bookkeeping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::SlotDecision;
use crate::error::{Error, Result};
use crate::extensions::{class_partition_and_budget, multiplex_classes, ClassPlan, RefuseLedger, ViolationCounter};
use crate::known_rate::{plan_offloading, run_known_rate_slot, ExpectationModel};
use crate::model::{energy_of_slot, StationConfig, Topology};
use crate::planner::{solve_pk, PkSolution};
use crate::queue::{QueueState, QueuedTask};
use crate::scheduler::{BoundReport, RateMode, SchedulerOptions, SlotOutcome, WogConfig, WogScheduler};
use crate::sim::arrivals::{bind_giant_tasks, ArrivalGenerator, ArrivalProcess, WorkloadDist};
use crate::sim::baseline::{BaselineMode, BaselineScheduler};
use crate::sim::lifting::{lift_serve, LiftingMode, RelaxedServe};
use crate::sim::metrics::{MetricsAccumulator, MetricsSummary};

const ARRIVAL_STREAM: u64 = 1;
const ALGORITHM_STREAM: u64 = 2;
const CLASS_STREAM: u64 = 3;
const CLASS_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// One-slot randomised offloading for known arrival rates.
    Known,
    /// Drift-plus-penalty with known arrival rates.
    Wog,
    /// Drift-plus-penalty with arrival rates estimated from lagged observations.
    WogObserved,
    Nop,
    Greedy,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Known => "known",
            Algorithm::Wog => "wog",
            Algorithm::WogObserved => "wog-observed",
            Algorithm::Nop => "nop",
            Algorithm::Greedy => "greedy",
        }
    }

    pub fn is_wog(self) -> bool {
        matches!(self, Algorithm::Wog | Algorithm::WogObserved)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub stations: Vec<StationConfig>,
    pub topology: Topology,
    pub arrivals: ArrivalProcess,
    pub workload: WorkloadDist,
    pub algorithm: Algorithm,
    pub v: f64,
    pub k_classes: usize,
    /// Response deadline in slots.
    pub l_max_slots: u32,
    pub slot_ms: f64,
    pub horizon: u64,
    pub seed: u64,
    pub load_factor: f64,
    pub lifting: LiftingMode,
    pub early_refuse: bool,
    /// When false, tasks keep their CPU workload and may need several slots of service.
    pub bind_giant_tasks: bool,
    pub check_invariants: bool,
    pub record_trace: bool,
    /// Keep running without arrivals after the horizon until the queues are empty, for
    /// at most another horizon.
    pub drain: bool,
    pub reassign_period: u64,
    /// Violation depths `T` reported for the drift-plus-penalty schedulers.
    pub violation_t: Vec<u64>,
    /// Arrival rates given to the known-rate schedulers instead of the process's own.
    pub known_lambda: Option<Vec<f64>>,
}

impl SimConfig {
    /// A run with the usual defaults around the given network and arrivals.
    pub fn new(stations: Vec<StationConfig>, topology: Topology, arrivals: ArrivalProcess, algorithm: Algorithm) -> Self {
        SimConfig {
            stations,
            topology,
            arrivals,
            workload: WorkloadDist::default(),
            algorithm,
            v: 10.0,
            k_classes: 1,
            l_max_slots: 50,
            slot_ms: 1.0,
            horizon: 1000,
            seed: 0,
            load_factor: 1.0,
            lifting: LiftingMode::Faithful,
            early_refuse: false,
            bind_giant_tasks: true,
            check_invariants: true,
            record_trace: false,
            drain: true,
            reassign_period: crate::extensions::classes::DEFAULT_REASSIGN_PERIOD,
            violation_t: (3..=10).collect(),
            known_lambda: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stations.len();
        if n == 0 {
            return Err(Error::Config("at least one station is required".into()));
        }
        if self.topology.n_stations != n {
            return Err(Error::Config(format!("topology has {} stations, config has {n}", self.topology.n_stations)));
        }
        for s in &self.stations {
            s.validate()?;
        }
        if self.k_classes == 0 {
            return Err(Error::Config("k_classes must be at least 1".into()));
        }
        if !(self.slot_ms > 0.0) {
            return Err(Error::Domain { what: "slot length", value: self.slot_ms });
        }
        if self.reassign_period == 0 {
            return Err(Error::Config("reassign_period must be positive".into()));
        }
        if matches!(self.algorithm, Algorithm::Known) && self.k_classes > 1 {
            return Err(Error::Config("the known-rate algorithm serves whole slots and needs k_classes = 1".into()));
        }
        if self.early_refuse && (!self.algorithm.is_wog() || self.k_classes > 1) {
            return Err(Error::Config("early refuse applies to wog and wog-observed with k_classes = 1".into()));
        }
        if let Some(l) = &self.known_lambda {
            if l.len() != n {
                return Err(Error::Config(format!("{} known rates for {n} stations", l.len())));
            }
        }
        self.arrivals.validate()
    }
}

/// One row of the per-slot trace. Queue values are taken at the start of the slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: u64,
    pub bs: usize,
    pub class: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "H")]
    pub h: u64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub eta: u8,
    #[serde(rename = "D")]
    pub d: u8,
    pub gamma: f64,
    pub energy_j: f64,
    pub arrivals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub summary: MetricsSummary,
    pub trace: Vec<TraceRow>,
    pub pk: Option<PkSolution>,
    pub bounds: Option<BoundReport>,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let positions: Vec<(f64, f64)> = cfg.stations.iter().map(|s| s.position).collect();
    let mut arrival_rng = rng_stream(cfg.seed, ARRIVAL_STREAM);
    let gen = ArrivalGenerator::new(&cfg.arrivals, &positions, cfg.load_factor, cfg.workload, &mut arrival_rng)?;
    if cfg.algorithm == Algorithm::Known {
        return run_known(cfg, gen, arrival_rng);
    }
    Engine::new(cfg, gen)?.run(arrival_rng)
}

fn run_known(cfg: &SimConfig, mut gen: ArrivalGenerator, mut arrival_rng: ChaCha8Rng) -> Result<SimResult> {
    let n = cfg.stations.len();
    let lambda = cfg.known_lambda.clone().unwrap_or_else(|| gen.presence_rate(1.0));
    let sol = solve_pk(&cfg.stations, &lambda)?;
    let plan = plan_offloading(&sol, ExpectationModel::for_size(n))?;
    let mut rng = rng_stream(cfg.seed, ALGORITHM_STREAM);
    let mut metrics = MetricsAccumulator::new(n, cfg.horizon, cfg.slot_ms, cfg.l_max_slots);
    let mut trace = Vec::new();
    let mut energy = vec![0.0; n];
    for t in 0..cfg.horizon {
        let mut present = vec![0usize; n];
        for task in gen.next_slot(t, &mut arrival_rng) {
            present[task.origin] += 1;
        }
        let arrived: Vec<bool> = present.iter().map(|c| *c > 0).collect();
        for c in present.iter().filter(|c| **c > 0) {
            metrics.arrival(*c);
        }
        let slot = run_known_rate_slot(&arrived, &lambda, &sol, &plan, &mut rng)?;
        for _ in slot.dropped.iter().filter(|d| **d) {
            metrics.dropped();
        }
        for (m, origin) in slot.served_origin.iter().enumerate() {
            if let Some(origin) = origin {
                // accepted in slot t, computed in slot t + 1
                let ev = RelaxedServe { origin: *origin, server: m, arrival: t, served: t + 1 };
                metrics.served(&lift_serve(&ev, &cfg.topology, cfg.lifting));
            }
            energy[m] = energy_of_slot(&cfg.stations[m], origin.is_some());
        }
        metrics.energy(&cfg.stations, &energy);
        metrics.end_slot(&cfg.stations);
        if cfg.record_trace {
            for m in 0..n {
                trace.push(TraceRow {
                    slot: t,
                    bs: m,
                    class: 0,
                    q: 0,
                    h: 0,
                    z: 0.0,
                    w: 0.0,
                    eta: u8::from(slot.assignment[m]),
                    d: u8::from(slot.dropped[m]),
                    gamma: 0.0,
                    energy_j: energy[m],
                    arrivals: present[m],
                });
            }
        }
    }
    Ok(SimResult { summary: metrics.finish(&cfg.stations, 0, 0), trace, pk: Some(sol), bounds: None })
}

enum Policy {
    Wog(WogScheduler),
    Base(BaselineScheduler),
}

impl Policy {
    fn states(&self) -> &[QueueState] {
        match self {
            Policy::Wog(s) => s.states(),
            Policy::Base(s) => s.states(),
        }
    }

    fn decide(&self) -> SlotDecision {
        match self {
            Policy::Wog(s) => s.decide(),
            Policy::Base(s) => s.decide(),
        }
    }

    fn defer(&self, dec: &mut SlotDecision, origin: usize) {
        match self {
            Policy::Wog(s) => s.defer(dec, origin),
            Policy::Base(s) => s.defer(dec, origin),
        }
    }

    fn commit(&mut self, dec: SlotDecision, arrivals: &[Option<QueuedTask>]) -> Result<(SlotOutcome, Vec<(usize, QueuedTask)>)> {
        match self {
            Policy::Wog(s) => Ok((s.commit(dec, arrivals)?, Vec::new())),
            Policy::Base(s) => {
                let out = s.commit(dec, arrivals)?;
                Ok((out.outcome, out.blocked))
            }
        }
    }

    fn set_budgets(&mut self, budgets: &[f64]) -> Result<()> {
        match self {
            Policy::Wog(s) => s.set_budgets(budgets),
            Policy::Base(s) => s.set_budgets(budgets),
        }
    }

    fn bounds(&self) -> Option<&BoundReport> {
        match self {
            Policy::Wog(s) => Some(s.bounds()),
            Policy::Base(_) => None,
        }
    }
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    gen: ArrivalGenerator,
    plan: Option<ClassPlan>,
    class_stations: Vec<Vec<StationConfig>>,
    policies: Vec<Policy>,
    ledger: Option<RefuseLedger>,
    lifting: LiftingMode,
    response_cap: Option<u64>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, gen: ArrivalGenerator) -> Result<Self> {
        let n = cfg.stations.len();
        let plan = if cfg.k_classes > 1 {
            let mut rng = rng_stream(cfg.seed, CLASS_STREAM);
            let samples: Vec<f64> = (0..CLASS_SAMPLES).map(|_| cfg.workload.sample(&mut rng)).collect();
            let mut plan = class_partition_and_budget(&samples, cfg.k_classes, &cfg.stations, Some((cfg.workload.low, cfg.workload.high)))?;
            plan.reassign_period = cfg.reassign_period;
            // until load is observed, split by the expected cycles of each class
            let shares = plan.uniform_shares(cfg.workload.low, cfg.workload.high);
            let expected: Vec<Vec<f64>> = gen.mean_task_rate().iter().map(|r| (0..plan.k).map(|c| r * shares[c] * plan.mean_work[c]).collect()).collect();
            plan.refresh_budgets(&cfg.stations, &expected)?;
            Some(plan)
        } else {
            None
        };
        let k = plan.as_ref().map_or(1, |p| p.k);
        let class_stations: Vec<Vec<StationConfig>> = (0..k)
            .map(|c| match &plan {
                Some(p) => cfg.stations.iter().enumerate().map(|(m, s)| p.class_station(s, m, c)).collect(),
                None => cfg.stations.clone(),
            })
            .collect();
        let shares = plan.as_ref().map_or(vec![1.0], |p| p.uniform_shares(cfg.workload.low, cfg.workload.high));
        let options = SchedulerOptions { bind_giant_tasks: cfg.bind_giant_tasks, check_invariants: cfg.check_invariants };
        let mut policies = Vec::with_capacity(k);
        for (c, stations) in class_stations.iter().enumerate() {
            let policy = match cfg.algorithm {
                Algorithm::Wog => {
                    let lambda = match (&cfg.known_lambda, k) {
                        (Some(l), 1) => l.clone(),
                        _ => gen.presence_rate(shares[c]),
                    };
                    let wc = WogConfig::known_rate(cfg.v, lambda, cfg.l_max_slots);
                    Policy::Wog(WogScheduler::with_options(wc, stations.clone(), cfg.topology.clone(), options)?)
                }
                Algorithm::WogObserved => {
                    let wc = WogConfig::observed(cfg.v, stations, cfg.l_max_slots);
                    debug_assert_eq!(wc.mode, RateMode::Observed);
                    Policy::Wog(WogScheduler::with_options(wc, stations.clone(), cfg.topology.clone(), options)?)
                }
                Algorithm::Nop => {
                    Policy::Base(BaselineScheduler::new(BaselineMode::Nop, stations.clone(), cfg.topology.clone(), cfg.l_max_slots, cfg.bind_giant_tasks)?)
                }
                Algorithm::Greedy => Policy::Base(BaselineScheduler::new(
                    BaselineMode::GreedyLatency,
                    stations.clone(),
                    cfg.topology.clone(),
                    cfg.l_max_slots,
                    cfg.bind_giant_tasks,
                )?),
                Algorithm::Known => unreachable!("handled separately"),
            };
            policies.push(policy);
        }
        let h_global = policies[0].bounds().map(|b| b.h_max_global);
        let ledger = cfg.early_refuse.then(|| RefuseLedger::new(n, h_global.unwrap_or(2) as usize));
        // a station serving only its own queue has nothing to ship
        let lifting = if cfg.algorithm == Algorithm::Nop { LiftingMode::None } else { cfg.lifting };
        let response_cap = h_global.filter(|_| cfg.check_invariants && cfg.bind_giant_tasks).map(|h| h + 2 * u64::from(cfg.topology.delta_max));
        Ok(Engine { cfg, gen, plan, class_stations, policies, ledger, lifting, response_cap })
    }

    fn idle(&self) -> bool {
        self.policies.iter().all(|p| p.states().iter().all(|q| q.tasks.iter().all(|t| t.ghost)))
    }

    fn run(mut self, mut arrival_rng: ChaCha8Rng) -> Result<SimResult> {
        let cfg = self.cfg;
        let n = cfg.stations.len();
        let k = self.policies.len();
        let mut metrics = MetricsAccumulator::new(n, cfg.horizon, cfg.slot_ms, cfg.l_max_slots);
        let h_bound = self.policies[0].bounds().map(|b| b.h_max.clone());
        let mut violation: Option<Vec<ViolationCounter>> = h_bound.as_ref().map(|h| h.iter().map(|b| ViolationCounter::new(*b, &cfg.violation_t)).collect());
        let mut trace = Vec::new();
        let mut class_load = vec![vec![0.0; k]; n];
        let mut next_id = 0u64;
        let mut t = 0u64;
        let mut drain_slots = 0;
        loop {
            let in_horizon = t < cfg.horizon;
            if !in_horizon {
                if !cfg.drain || self.idle() || drain_slots >= cfg.horizon {
                    break;
                }
                drain_slots += 1;
            }
            let raw = if in_horizon { self.gen.next_slot(t, &mut arrival_rng) } else { Vec::new() };
            let plan = &self.plan;
            let groups = bind_giant_tasks(&raw, n, k, |w| plan.as_ref().map_or(0, |p| p.class_of(w)));
            let mut arrivals = vec![vec![None; n]; k];
            for c in 0..k {
                for m in 0..n {
                    let members = &groups[c][m];
                    if members.is_empty() {
                        continue;
                    }
                    let work: f64 = members.iter().map(|i| raw[*i].work).sum();
                    class_load[m][c] += work;
                    next_id += 1;
                    metrics.arrival(members.len());
                    let task = QueuedTask { work, ..QueuedTask::new(t, next_id) };
                    arrivals[c][m] = Some(match self.ledger.as_mut() {
                        Some(ledger) => {
                            let (admission, task) = ledger.admit(m, task);
                            if admission == crate::extensions::Admission::Block {
                                metrics.blocked();
                            }
                            task
                        }
                        None => task,
                    });
                }
            }

            let snapshot: Vec<Vec<(usize, u64, f64, f64)>> = if cfg.record_trace {
                self.policies.iter().map(|p| p.states().iter().map(|q| (q.q_len(), q.h, q.z, q.w)).collect()).collect()
            } else {
                Vec::new()
            };

            let mut decisions: Vec<SlotDecision> = self.policies.iter().map(Policy::decide).collect();
            if k > 1 {
                for m in 0..n {
                    let mut origin = vec![None; k];
                    let mut requests = vec![None; k];
                    for c in 0..k {
                        if let Some(r) = decisions[c].server.iter().position(|s| *s == Some(m)) {
                            origin[c] = Some(r);
                            requests[c] = self.policies[c].states()[r].head().map(|h| h.work);
                        }
                    }
                    let (_, carry) = multiplex_classes(&requests, cfg.stations[m].cpu_rate);
                    for c in carry {
                        self.policies[c].defer(&mut decisions[c], origin[c].expect("carried class has a request"));
                        metrics.capacity_delayed();
                    }
                }
            }

            let mut physical = vec![0.0; n];
            for (c, dec) in decisions.into_iter().enumerate() {
                let (outcome, blocked) = self.policies[c].commit(dec, &arrivals[c])?;
                for _ in &blocked {
                    metrics.blocked();
                }
                let (served, dropped, energy) = match self.ledger.as_mut() {
                    Some(ledger) => {
                        let phys = ledger.apply(&outcome, &cfg.stations, &cfg.topology.peer_mask);
                        (phys.served, phys.plain_drops, phys.decision.energy)
                    }
                    None => (outcome.served.clone(), outcome.dropped.clone(), outcome.decision.energy.clone()),
                };
                for ev in served.iter().filter(|e| !e.task.ghost) {
                    let relaxed = RelaxedServe { origin: ev.origin, server: ev.server, arrival: ev.task.arrival, served: t };
                    let lifted = lift_serve(&relaxed, &cfg.topology, self.lifting);
                    if let Some(cap) = self.response_cap.filter(|cap| lifted.response > *cap) {
                        return Err(Error::Invariant { slot: t, detail: format!("response {} above {cap} for task {:?}", lifted.response, ev) });
                    }
                    metrics.served(&lifted);
                }
                for _ in dropped.iter().filter(|(_, task)| !task.ghost) {
                    metrics.dropped();
                }
                for m in 0..n {
                    physical[m] += if k == 1 { energy[m] } else { energy[m] - self.class_stations[c][m].e_static };
                }
                if cfg.record_trace {
                    for m in 0..n {
                        let (q, h, z, w) = snapshot[c][m];
                        trace.push(TraceRow {
                            slot: t,
                            bs: m,
                            class: c,
                            q,
                            h,
                            z,
                            w,
                            eta: u8::from(outcome.decision.server[m].is_some()),
                            d: u8::from(outcome.decision.drop[m]),
                            gamma: outcome.decision.gamma[m],
                            energy_j: outcome.decision.energy[m],
                            arrivals: groups[c][m].len(),
                        });
                    }
                }
            }
            if k > 1 {
                for m in 0..n {
                    physical[m] += cfg.stations[m].e_static;
                }
            }
            if in_horizon {
                metrics.energy(&cfg.stations, &physical);
            }
            for m in 0..n {
                let h = self.policies.iter().map(|p| p.states()[m].h).max().unwrap_or(0);
                let z = self.policies.iter().map(|p| p.states()[m].z).fold(0.0, f64::max);
                let w = self.policies.iter().map(|p| p.states()[m].w).fold(0.0, f64::max);
                metrics.queues(m, h, z, w);
                if in_horizon {
                    if let Some(v) = violation.as_mut() {
                        v[m].push(h);
                    }
                }
            }
            metrics.end_slot(&cfg.stations);

            if let Some(plan) = self.plan.as_mut() {
                if in_horizon && (t + 1) % plan.reassign_period == 0 {
                    plan.refresh_budgets(&cfg.stations, &class_load)?;
                    for (c, policy) in self.policies.iter_mut().enumerate() {
                        let budgets: Vec<f64> = plan.budgets.iter().map(|b| b[c]).collect();
                        for (m, s) in self.class_stations[c].iter_mut().enumerate() {
                            s.e_budget = budgets[m];
                        }
                        policy.set_budgets(&budgets)?;
                    }
                    class_load.iter_mut().for_each(|l| l.iter_mut().for_each(|x| *x = 0.0));
                }
            }
            t += 1;
        }

        let pending = self.policies.iter().flat_map(|p| p.states()).map(|q| q.tasks.iter().filter(|t| !t.ghost).count() as u64).sum();
        let mut summary = metrics.finish(&cfg.stations, drain_slots, pending);
        let bounds = self.policies[0].bounds().cloned().map(|mut b| {
            for p in &self.policies[1..] {
                for (w, other) in b.w_max.iter_mut().zip(&p.bounds().expect("all classes run the same policy").w_max) {
                    *w = w.max(*other);
                }
            }
            b
        });
        summary.h_bound = h_bound;
        summary.w_bound = bounds.as_ref().map(|b| b.w_max.clone());
        summary.violation_stats = violation.map(|v| {
            let mut pooled = v[0].clone();
            for other in &v[1..] {
                pooled.merge(other);
            }
            pooled.finish()
        });
        Ok(SimResult { summary, trace, pk: None, bounds })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilitySpec;

    fn station(id: usize, e_budget: f64) -> StationConfig {
        StationConfig { id, position: (0.0, 0.0), cpu_rate: 2e7, e_static: 0.01, e_active: 0.174, e_budget, utility: UtilitySpec::default() }
    }

    fn config(algorithm: Algorithm, p: f64, n: usize) -> SimConfig {
        let stations = (0..n).map(|i| station(i, 0.05)).collect();
        SimConfig { horizon: 2000, ..SimConfig::new(stations, Topology::complete(n, 5), ArrivalProcess::BernoulliPerBs { p: vec![p; n] }, algorithm) }
    }

    fn closes(s: &MetricsSummary) -> bool {
        s.arrived == s.served + s.blocked + s.dropped + s.pending
    }

    #[test]
    fn zero_arrivals_leave_counters_at_zero() {
        for alg in [Algorithm::Known, Algorithm::Wog, Algorithm::WogObserved, Algorithm::Nop, Algorithm::Greedy] {
            let s = run_simulation(&config(alg, 0.0, 3)).unwrap().summary;
            assert_eq!((s.arrived, s.served, s.blocked, s.dropped, s.late), (0, 0, 0, 0, 0), "{alg:?}");
            assert_eq!(s.utility, 0.0);
        }
    }

    #[test]
    fn accounting_closes_for_every_algorithm() {
        for alg in [Algorithm::Known, Algorithm::Wog, Algorithm::WogObserved, Algorithm::Nop, Algorithm::Greedy] {
            let s = run_simulation(&config(alg, 0.4, 4)).unwrap().summary;
            assert!(closes(&s), "{alg:?}: {s:?}");
            assert!(s.arrived > 0);
            assert!((0.0..=1.0).contains(&s.satisfaction_ratio));
        }
    }

    #[test]
    fn identical_seeds_reproduce_the_run() {
        let mut cfg = config(Algorithm::Wog, 0.5, 3);
        cfg.record_trace = true;
        cfg.k_classes = 3;
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.trace, b.trace);
        cfg.seed = 1;
        assert_ne!(run_simulation(&cfg).unwrap().summary, a.summary);
    }

    #[test]
    fn wog_response_within_lifted_bound() {
        let s = run_simulation(&config(Algorithm::Wog, 0.6, 4)).unwrap().summary;
        assert!(s.max_response_ms <= 22.0, "{}", s.max_response_ms);
        assert!(s.max_h.iter().all(|h| *h <= 12));
    }

    #[test]
    fn classes_share_the_cpu() {
        let mut cfg = config(Algorithm::Wog, 0.9, 3);
        cfg.k_classes = 5;
        cfg.arrivals = ArrivalProcess::UserGroupPoisson { groups: vec![(0.0, 0.0); 4], rate: 1.0, attach_radius_m: 100.0 };
        let s = run_simulation(&cfg).unwrap().summary;
        assert!(closes(&s));
        assert!(s.capacity_delayed > 0);
        assert!(s.served > 0);
    }

    #[test]
    fn early_refuse_requires_wog() {
        let mut cfg = config(Algorithm::Nop, 0.5, 2);
        cfg.early_refuse = true;
        assert!(matches!(run_simulation(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn trace_has_a_row_per_station_class_and_slot() {
        let mut cfg = config(Algorithm::Greedy, 0.3, 2);
        cfg.record_trace = true;
        cfg.drain = false;
        cfg.horizon = 10;
        let r = run_simulation(&cfg).unwrap();
        assert_eq!(r.trace.len(), 20);
    }
}
