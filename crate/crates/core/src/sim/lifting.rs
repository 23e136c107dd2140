//! Execution of schedules computed with zero trip times on the delayed network.
//!
//! In faithful mode every service decided at slot `t` runs at `t + delta_max`, which
//! leaves time to ship any task to any peer; an offloaded result then travels back. The
//! response of a task grows by at most `2 delta_max`.

use serde::{Deserialize, Serialize};

use crate::model::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftingMode {
    /// Uniform `delta_max` execution delay plus the actual return trip.
    #[default]
    Faithful,
    /// Only offloaded tasks pay their actual round trip.
    Eager,
    /// Trip times are ignored.
    None,
}

/// A service in the zero-delay schedule. The task arrived in slot `arrival` and was
/// computed in slot `served`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelaxedServe {
    pub origin: usize,
    pub server: usize,
    pub arrival: u64,
    pub served: u64,
}

impl RelaxedServe {
    pub fn response(&self) -> u64 {
        self.served - self.arrival
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftedServe {
    pub relaxed: RelaxedServe,
    /// Slot in which the server computes the task.
    pub execute: u64,
    /// Response in slots, including any return trip.
    pub response: u64,
    /// The worst case this mode guarantees for the task.
    pub bound: u64,
}

pub fn lift_serve(ev: &RelaxedServe, topology: &Topology, mode: LiftingMode) -> LiftedServe {
    let d_max = u64::from(topology.delta_max);
    let trip = u64::from(topology.delta[ev.origin][ev.server]);
    let relaxed = ev.response();
    let (execute, response, bound) = match mode {
        LiftingMode::Faithful => (ev.served + d_max, relaxed + d_max + trip, relaxed + 2 * d_max),
        LiftingMode::Eager => (ev.served + trip, relaxed + 2 * trip, relaxed + 2 * trip),
        LiftingMode::None => (ev.served, relaxed, relaxed),
    };
    LiftedServe { relaxed: *ev, execute, response, bound }
}

pub fn lift_relaxed_schedule(events: &[RelaxedServe], topology: &Topology, mode: LiftingMode) -> Vec<LiftedServe> {
    events.iter().map(|e| lift_serve(e, topology, mode)).collect()
}
