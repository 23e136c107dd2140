//! Reference policies without the drift-plus-penalty machinery.
//!
//! Both keep each station's running-average energy within its allowance with a simple
//! credit rule: a station may compute in slot `t` only if its energy spent so far plus
//! a busy slot stays within `(t + 1) E`. Neither policy drops queued tasks.

use serde::{Deserialize, Serialize};

use crate::assignment::positive_assignment;
use crate::decision::SlotDecision;
use crate::error::{Error, Result};
use crate::model::{energy_of_slot, StationConfig, Topology};
use crate::queue::{process_workload, update_physical_queue, QueueState, QueuedTask};
use crate::scheduler::{ServeEvent, SlotOutcome};

const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Every station serves its own queue and refuses arrivals beyond a backlog cap.
    Nop,
    /// Max-weight assignment on head-of-line age across peers.
    GreedyLatency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub outcome: SlotOutcome,
    /// `(origin, task)` of arrivals refused at admission.
    pub blocked: Vec<(usize, QueuedTask)>,
}

#[derive(Debug, Clone)]
pub struct BaselineScheduler {
    mode: BaselineMode,
    stations: Vec<StationConfig>,
    topology: Topology,
    bind_giant_tasks: bool,
    states: Vec<QueueState>,
    spent: Vec<f64>,
    backlog_cap: Vec<usize>,
    slot: u64,
}

/// Tasks a station can still finish within `l_max` slots at its sustainable service rate.
pub fn nop_backlog_cap(station: &StationConfig, l_max: u32) -> usize {
    ((f64::from(l_max) * station.service_cap()).floor() as usize).max(1)
}

impl BaselineScheduler {
    pub fn new(mode: BaselineMode, stations: Vec<StationConfig>, topology: Topology, l_max: u32, bind_giant_tasks: bool) -> Result<Self> {
        let n = stations.len();
        if topology.n_stations != n {
            return Err(Error::Config(format!("topology has {} stations, config has {n}", topology.n_stations)));
        }
        for s in &stations {
            s.validate()?;
        }
        let backlog_cap = stations.iter().map(|s| nop_backlog_cap(s, l_max)).collect();
        Ok(BaselineScheduler { mode, stations, topology, bind_giant_tasks, states: vec![QueueState::default(); n], spent: vec![0.0; n], backlog_cap, slot: 0 })
    }

    pub fn states(&self) -> &[QueueState] {
        &self.states
    }

    pub fn set_budgets(&mut self, budgets: &[f64]) -> Result<()> {
        for (s, b) in self.stations.iter_mut().zip(budgets) {
            s.e_budget = *b;
            s.validate()?;
        }
        Ok(())
    }

    fn may_compute(&self, m: usize) -> bool {
        let s = &self.stations[m];
        self.spent[m] + s.e_active <= (self.slot + 1) as f64 * s.e_budget + ENERGY_SLACK
    }

    pub fn decide(&self) -> SlotDecision {
        let n = self.stations.len();
        let mut dec = SlotDecision::empty(n);
        match self.mode {
            BaselineMode::Nop => {
                for k in 0..n {
                    if !self.states[k].is_empty() && self.may_compute(k) {
                        dec.server[k] = Some(k);
                    }
                }
            }
            BaselineMode::GreedyLatency => {
                let open: Vec<bool> = (0..n).map(|m| self.may_compute(m)).collect();
                let states = &self.states;
                let mask = &self.topology.peer_mask;
                dec.server = positive_assignment(n, |r, m| (!states[r].is_empty() && mask[r][m] && open[m]).then(|| states[r].h.max(1) as f64));
            }
        }
        self.fill_energy(&mut dec);
        dec
    }

    pub fn defer(&self, dec: &mut SlotDecision, origin: usize) {
        dec.server[origin] = None;
        self.fill_energy(dec);
    }

    fn fill_energy(&self, dec: &mut SlotDecision) {
        let busy = dec.busy_vector();
        for (m, s) in self.stations.iter().enumerate() {
            dec.energy[m] = energy_of_slot(s, busy[m]);
        }
    }

    pub fn commit(&mut self, dec: SlotDecision, arrivals: &[Option<QueuedTask>]) -> Result<BaselineOutcome> {
        let n = self.stations.len();
        if arrivals.len() != n || dec.n() != n {
            return Err(Error::Contract(format!("{} arrivals and a decision of size {} for {n} stations", arrivals.len(), dec.n())));
        }
        let t = self.slot;
        dec.validate(&self.topology, &self.states, t)?;
        let mut served = Vec::new();
        let mut blocked = Vec::new();
        for k in 0..n {
            let admitted = match arrivals[k] {
                Some(task) if self.mode == BaselineMode::Nop && self.backlog_after_service(k, &dec) >= self.backlog_cap[k] => {
                    blocked.push((k, task));
                    None
                }
                other => other,
            };
            let q = &mut self.states[k];
            if self.bind_giant_tasks {
                if let Some(task) = update_physical_queue(q, dec.server[k].is_some(), false, admitted, t)? {
                    served.push(ServeEvent { origin: k, server: dec.server[k].expect("served"), task });
                }
            } else {
                if let Some(m) = dec.server[k] {
                    for task in process_workload(q, self.stations[m].cpu_rate, t) {
                        served.push(ServeEvent { origin: k, server: m, task });
                    }
                }
                if let Some(task) = admitted {
                    q.tasks.push_back(task);
                }
                q.refresh_age(t + 1);
            }
        }
        for m in 0..n {
            self.spent[m] += dec.energy[m];
        }
        self.slot += 1;
        Ok(BaselineOutcome { outcome: SlotOutcome { slot: t, decision: dec, served, dropped: Vec::new() }, blocked })
    }

    fn backlog_after_service(&self, k: usize, dec: &SlotDecision) -> usize {
        let len = self.states[k].q_len();
        if dec.server[k].is_some() && self.bind_giant_tasks {
            len - 1
        } else {
            len
        }
    }

    pub fn step(&mut self, arrivals: &[Option<QueuedTask>]) -> Result<BaselineOutcome> {
        let dec = self.decide();
        self.commit(dec, arrivals)
    }
}
