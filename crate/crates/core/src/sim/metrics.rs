//! Run statistics.
//!
//! Counts are in scheduled units: all tasks a station receives in one slot (per class)
//! form one unit. A task served after the deadline scores `-2` instead of counting
//! towards throughput; refused tasks score nothing.

use serde::{Deserialize, Serialize};

use crate::extensions::ViolationStats;
use crate::model::StationConfig;
use crate::sim::lifting::LiftedServe;

pub const LATE_PENALTY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub slots: u64,
    /// Extra slots run without arrivals to empty the queues.
    pub drain_slots: u64,
    pub raw_tasks: u64,
    pub arrived: u64,
    pub served: u64,
    pub blocked: u64,
    pub dropped: u64,
    /// Units still queued when the drain phase ended. They count as late.
    pub pending: u64,
    pub late: u64,
    pub offloaded: u64,
    /// Service postponed because the server's CPU was taken by other classes.
    pub capacity_delayed: u64,
    pub mean_response_ms: f64,
    pub min_response_ms: f64,
    pub max_response_ms: f64,
    /// Mean of the per-task worst case guaranteed by the lifting mode.
    pub mean_response_bound_ms: f64,
    pub max_response_bound_ms: f64,
    pub utility: f64,
    pub utility_running_mean: f64,
    pub throughput: f64,
    pub block_rate: f64,
    pub satisfaction_ratio: f64,
    /// Units computed by each server per slot.
    pub service_rate_per_bs: Vec<f64>,
    pub energy_per_bs: Vec<f64>,
    /// Largest cumulative excess `sum_t (e(t) - E)` over all prefixes of the run.
    pub energy_excess_max: Vec<f64>,
    pub max_h: Vec<u64>,
    pub max_z: Vec<f64>,
    pub max_w: Vec<f64>,
    pub h_bound: Option<Vec<u64>>,
    pub w_bound: Option<Vec<f64>>,
    pub violation_stats: Option<ViolationStats>,
}

#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    n: usize,
    horizon: u64,
    slot_ms: f64,
    l_max: u64,
    raw_tasks: u64,
    arrived: u64,
    served: u64,
    blocked: u64,
    dropped: u64,
    late: u64,
    offloaded: u64,
    capacity_delayed: u64,
    on_time: Vec<u64>,
    served_by: Vec<u64>,
    response_sum: u64,
    response_min: u64,
    response_max: u64,
    bound_sum: u64,
    bound_max: u64,
    slot_utility_sum: f64,
    slot_on_time: Vec<u64>,
    slot_late: u64,
    energy: Vec<f64>,
    excess: Vec<f64>,
    excess_max: Vec<f64>,
    max_h: Vec<u64>,
    max_z: Vec<f64>,
    max_w: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new(n: usize, horizon: u64, slot_ms: f64, l_max: u32) -> Self {
        MetricsAccumulator {
            n,
            horizon,
            slot_ms,
            l_max: u64::from(l_max),
            raw_tasks: 0,
            arrived: 0,
            served: 0,
            blocked: 0,
            dropped: 0,
            late: 0,
            offloaded: 0,
            capacity_delayed: 0,
            on_time: vec![0; n],
            served_by: vec![0; n],
            response_sum: 0,
            response_min: u64::MAX,
            response_max: 0,
            bound_sum: 0,
            bound_max: 0,
            slot_utility_sum: 0.0,
            slot_on_time: vec![0; n],
            slot_late: 0,
            energy: vec![0.0; n],
            excess: vec![0.0; n],
            excess_max: vec![0.0; n],
            max_h: vec![0; n],
            max_z: vec![0.0; n],
            max_w: vec![0.0; n],
        }
    }

    pub fn arrival(&mut self, raw_tasks: usize) {
        self.arrived += 1;
        self.raw_tasks += raw_tasks as u64;
    }

    pub fn blocked(&mut self) {
        self.blocked += 1;
    }

    pub fn dropped(&mut self) {
        self.dropped += 1;
    }

    pub fn capacity_delayed(&mut self) {
        self.capacity_delayed += 1;
    }

    pub fn served(&mut self, s: &LiftedServe) {
        self.served += 1;
        self.served_by[s.relaxed.server] += 1;
        if s.relaxed.server != s.relaxed.origin {
            self.offloaded += 1;
        }
        self.response_sum += s.response;
        self.response_min = self.response_min.min(s.response);
        self.response_max = self.response_max.max(s.response);
        self.bound_sum += s.bound;
        self.bound_max = self.bound_max.max(s.bound);
        if s.response > self.l_max {
            self.late += 1;
            self.slot_late += 1;
        } else {
            self.on_time[s.relaxed.origin] += 1;
            self.slot_on_time[s.relaxed.origin] += 1;
        }
    }

    /// Physical energy of a slot within the horizon.
    pub fn energy(&mut self, stations: &[StationConfig], energy: &[f64]) {
        for m in 0..self.n {
            self.energy[m] += energy[m];
            self.excess[m] += energy[m] - stations[m].e_budget;
            self.excess_max[m] = self.excess_max[m].max(self.excess[m]);
        }
    }

    pub fn queues(&mut self, m: usize, h: u64, z: f64, w: f64) {
        self.max_h[m] = self.max_h[m].max(h);
        self.max_z[m] = self.max_z[m].max(z);
        self.max_w[m] = self.max_w[m].max(w);
    }

    /// Closes a slot for the running utility mean.
    pub fn end_slot(&mut self, stations: &[StationConfig]) {
        let mut u = -LATE_PENALTY * self.slot_late as f64;
        for (m, s) in stations.iter().enumerate() {
            u += s.utility.eval(self.slot_on_time[m] as f64);
            self.slot_on_time[m] = 0;
        }
        self.slot_utility_sum += u;
        self.slot_late = 0;
    }

    pub fn finish(&self, stations: &[StationConfig], drain_slots: u64, pending: u64) -> MetricsSummary {
        let t = self.horizon.max(1) as f64;
        let late = self.late + pending;
        let utility = stations.iter().zip(&self.on_time).map(|(s, c)| s.utility.eval(*c as f64 / t)).sum::<f64>() - LATE_PENALTY * late as f64 / t;
        let total_slots = (self.horizon + drain_slots).max(1) as f64;
        let served = self.served.max(1) as f64;
        let accepted = self.arrived - self.blocked;
        let on_time: u64 = self.on_time.iter().sum();
        MetricsSummary {
            slots: self.horizon,
            drain_slots,
            raw_tasks: self.raw_tasks,
            arrived: self.arrived,
            served: self.served,
            blocked: self.blocked,
            dropped: self.dropped,
            pending,
            late,
            offloaded: self.offloaded,
            capacity_delayed: self.capacity_delayed,
            mean_response_ms: self.response_sum as f64 / served * self.slot_ms,
            min_response_ms: if self.served == 0 { 0.0 } else { self.response_min as f64 * self.slot_ms },
            max_response_ms: self.response_max as f64 * self.slot_ms,
            mean_response_bound_ms: self.bound_sum as f64 / served * self.slot_ms,
            max_response_bound_ms: self.bound_max as f64 * self.slot_ms,
            utility,
            utility_running_mean: (self.slot_utility_sum - LATE_PENALTY * pending as f64) / total_slots,
            throughput: self.served as f64 / t,
            block_rate: if self.arrived == 0 { 0.0 } else { self.blocked as f64 / self.arrived as f64 },
            satisfaction_ratio: if accepted == 0 { 1.0 } else { on_time as f64 / accepted as f64 },
            service_rate_per_bs: self.served_by.iter().map(|c| *c as f64 / t).collect(),
            energy_per_bs: self.energy.iter().map(|e| e / t).collect(),
            energy_excess_max: self.excess_max.clone(),
            max_h: self.max_h.clone(),
            max_z: self.max_z.clone(),
            max_w: self.max_w.clone(),
            h_bound: None,
            w_bound: None,
            violation_stats: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::lifting::RelaxedServe;
    use crate::utility::UtilitySpec;

    fn station() -> StationConfig {
        StationConfig { id: 0, position: (0.0, 0.0), cpu_rate: 2e7, e_static: 0.01, e_active: 0.174, e_budget: 0.05, utility: UtilitySpec::default() }
    }

    fn lifted(response: u64) -> LiftedServe {
        LiftedServe { relaxed: RelaxedServe { origin: 0, server: 0, arrival: 0, served: response }, execute: response, response, bound: response }
    }

    #[test]
    fn empty_run() {
        let acc = MetricsAccumulator::new(1, 10, 1.0, 50);
        let s = acc.finish(&[station()], 0, 0);
        assert_eq!((s.arrived, s.served, s.blocked, s.dropped), (0, 0, 0, 0));
        assert_eq!(s.utility, 0.0);
        assert_eq!(s.satisfaction_ratio, 1.0);
    }

    #[test]
    fn late_tasks_are_punished_twice() {
        let mut acc = MetricsAccumulator::new(1, 4, 1.0, 50);
        for r in [1, 60] {
            acc.arrival(1);
            acc.served(&lifted(r));
        }
        acc.end_slot(&[station()]);
        let s = acc.finish(&[station()], 0, 0);
        // one on-time unit over 4 slots, one late unit
        assert!((s.utility - (0.25 - 0.5)).abs() < 1e-15);
        assert_eq!(s.late, 1);
        assert_eq!(s.satisfaction_ratio, 0.5);
        assert_eq!(s.mean_response_ms, 30.5);
    }
}
