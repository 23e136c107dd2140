//! Per-station queue state: the physical task queue plus the Z, W and H virtual queues.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A backlogged (giant) task. `ghost` marks placeholders kept by the early-refuse
/// transform for tasks that were blocked at admission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuedTask {
    pub arrival: u64,
    pub id: u64,
    pub ghost: bool,
    /// Remaining CPU cycles. Only consulted when tasks are served by workload rather
    /// than one per slot.
    pub work: f64,
}

impl QueuedTask {
    pub fn new(arrival: u64, id: u64) -> Self {
        QueuedTask { arrival, id, ghost: false, work: 0.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    /// Oldest first.
    pub tasks: VecDeque<QueuedTask>,
    pub z: f64,
    pub w: f64,
    /// Age of the head-of-line task, 0 when empty.
    pub h: u64,
}

impl QueueState {
    pub fn q_len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn head(&self) -> Option<&QueuedTask> {
        self.tasks.front()
    }

    pub fn arrival_slots(&self) -> impl Iterator<Item = u64> + '_ {
        self.tasks.iter().map(|t| t.arrival)
    }

    /// Recompute `h` as seen at the start of `slot`.
    pub fn refresh_age(&mut self, slot: u64) {
        self.h = self.tasks.front().map_or(0, |t| slot.saturating_sub(t.arrival));
    }

    /// Checks `h` against the oldest timestamp as seen at the start of `slot`.
    pub fn check_consistency(&self, slot: u64) -> Result<()> {
        let expect = self.tasks.front().map_or(0, |t| slot.saturating_sub(t.arrival));
        if self.h != expect {
            return Err(Error::Invariant { slot, detail: format!("H={} but head-of-line age is {expect}", self.h) });
        }
        if self.z < 0.0 || self.w < 0.0 {
            return Err(Error::Invariant { slot, detail: format!("negative virtual queue Z={} W={}", self.z, self.w) });
        }
        Ok(())
    }
}

/// `Q(t+1) = max[Q(t) - eta - d, 0] + a`, applied at the end of `slot`.
///
/// Returns the head-of-line task that left the queue, if any. Afterwards `h` holds the
/// head-of-line age at the start of `slot + 1`.
pub fn update_physical_queue(q: &mut QueueState, eta: bool, drop: bool, arrival: Option<QueuedTask>, slot: u64) -> Result<Option<QueuedTask>> {
    if eta && drop {
        return Err(Error::Contract(format!("slot {slot}: a task cannot be both served and dropped")));
    }
    if eta && q.is_empty() {
        return Err(Error::Contract(format!("slot {slot}: service scheduled on an empty queue")));
    }
    let left = if eta || drop { q.tasks.pop_front() } else { None };
    if let Some(task) = arrival {
        q.tasks.push_back(task);
    }
    q.refresh_age(slot + 1);
    Ok(left)
}

/// Removes up to `capacity` cycles from the front of the queue and returns the tasks
/// that completed. Used when arrivals may exceed one slot of work.
pub fn process_workload(q: &mut QueueState, capacity: f64, slot: u64) -> Vec<QueuedTask> {
    let mut left = capacity;
    let mut done = Vec::new();
    while left > 0.0 {
        let Some(head) = q.tasks.front_mut() else { break };
        if head.work <= left {
            left -= head.work;
            done.push(q.tasks.pop_front().expect("front exists"));
        } else {
            head.work -= left;
            left = 0.0;
        }
    }
    q.refresh_age(slot + 1);
    done
}

/// `Z' = max[Z - lambda + D + gamma, 0]` and `W' = max[W - E + e, 0]`.
///
/// `lambda_or_obs` is the known arrival rate, or the arrival observed `W` slots earlier
/// when rates are unknown.
pub fn update_virtual_queues(q: &mut QueueState, drop: bool, gamma: f64, energy: f64, lambda_or_obs: f64, e_budget: f64) {
    let d = if drop { 1.0 } else { 0.0 };
    q.z = (q.z - lambda_or_obs + d + gamma).max(0.0);
    q.w = (q.w - e_budget + energy).max(0.0);
}

/// The head-of-line waiting time recursion with a realised inter-arrival time `t_inter`
/// between the head-of-line task and its successor.
pub fn h_update_rule(h: u64, occupied: bool, left: bool, t_inter: u64, arrival: bool) -> u64 {
    if occupied {
        let out = if left { t_inter as i64 } else { 0 };
        (h as i64 + 1 - out).max(0) as u64
    } else {
        u64::from(arrival)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn physical_examples() {
        let mut q = QueueState::default();
        update_physical_queue(&mut q, false, false, Some(QueuedTask::new(0, 0)), 0).unwrap();
        assert_eq!(q.q_len(), 1);
        assert_eq!(q.h, 1);

        let mut q = QueueState::default();
        for t in 0..3 {
            update_physical_queue(&mut q, false, false, Some(QueuedTask::new(t, t)), t).unwrap();
        }
        update_physical_queue(&mut q, true, false, None, 3).unwrap();
        assert_eq!(q.q_len(), 2);

        // serve the only task while a new one arrives: age restarts at the newcomer
        let mut q = QueueState::default();
        update_physical_queue(&mut q, false, false, Some(QueuedTask::new(0, 0)), 0).unwrap();
        for t in 1..5 {
            update_physical_queue(&mut q, false, false, None, t).unwrap();
        }
        assert_eq!(q.h, 5);
        let left = update_physical_queue(&mut q, true, false, Some(QueuedTask::new(5, 1)), 5).unwrap();
        assert_eq!(left.unwrap().id, 0);
        assert_eq!(q.q_len(), 1);
        assert_eq!(q.h, 1);
    }

    #[test]
    fn serving_empty_queue_is_a_contract_error() {
        let mut q = QueueState::default();
        assert!(matches!(update_physical_queue(&mut q, true, false, None, 0), Err(Error::Contract(_))));
        let mut q = QueueState::default();
        q.tasks.push_back(QueuedTask::new(0, 0));
        assert!(update_physical_queue(&mut q, true, true, None, 1).is_err());
    }

    #[test]
    fn virtual_examples() {
        let mut q = QueueState::default();
        update_virtual_queues(&mut q, true, 1.0, 0.0, 0.8, 0.0);
        assert!((q.z - 1.2).abs() < 1e-12);

        let e1: f64 = 0.01 + 8.2e-9 * 2e7;
        let mut q = QueueState { w: 2.0, ..Default::default() };
        update_virtual_queues(&mut q, false, 0.0, e1, 0.0, 0.05);
        assert!((q.w - 2.124).abs() < 1e-12);
        assert_eq!(h_update_rule(4, true, true, 2, false), 3);
    }

    #[test]
    fn workload_service_spans_slots() {
        let mut q = QueueState::default();
        q.tasks.push_back(QueuedTask { work: 50.0, ..QueuedTask::new(0, 0) });
        q.tasks.push_back(QueuedTask { work: 5.0, ..QueuedTask::new(0, 1) });
        assert!(process_workload(&mut q, 20.0, 1).is_empty());
        assert!(process_workload(&mut q, 20.0, 2).is_empty());
        assert_eq!(q.h, 3);
        let done = process_workload(&mut q, 20.0, 3);
        assert_eq!(done.len(), 2);
        assert!(q.is_empty());
    }

    proptest! {
        /// Timestamp-derived H equals the recursion with realised inter-arrival times, and
        /// tasks are conserved.
        #[test]
        fn timestamps_agree_with_h_recursion(events in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..200)) {
            let mut q = QueueState::default();
            let mut next_id = 0;
            for (t, (serve, drop, arrive)) in events.into_iter().enumerate() {
                let t = t as u64;
                let occupied = !q.is_empty();
                let leave = occupied && (serve || drop);
                let before = q.q_len();
                let h_before = q.h;
                let t_inter = if q.q_len() >= 2 { q.tasks[1].arrival - q.tasks[0].arrival } else if arrive && occupied { t - q.tasks[0].arrival } else { h_before + 1 };
                let arrival = arrive.then(|| { next_id += 1; QueuedTask::new(t, next_id) });
                update_physical_queue(&mut q, leave && serve, leave && !serve, arrival, t).unwrap();
                prop_assert_eq!(q.q_len() as i64 - before as i64, i64::from(arrive) - i64::from(leave));
                prop_assert_eq!(q.h, h_update_rule(h_before, occupied, leave, t_inter, arrive));
                prop_assert!(q.h as usize >= q.q_len());
                q.check_consistency(t + 1).unwrap();
            }
        }
    }
}
