use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Topology;
use crate::queue::QueueState;

/// Control decisions of one slot.
///
/// The serve matrix `b[n][m]` is stored row-wise as `server[n] = Some(m)`, which makes
/// `eta_n <= 1` structural.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub server: Vec<Option<usize>>,
    pub drop: Vec<bool>,
    pub gamma: Vec<f64>,
    /// Energy spent by each station in the slot.
    pub energy: Vec<f64>,
}

impl SlotDecision {
    pub fn empty(n: usize) -> Self {
        SlotDecision { server: vec![None; n], drop: vec![false; n], gamma: vec![0.0; n], energy: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.server.len()
    }

    pub fn b(&self, n: usize, m: usize) -> bool {
        self.server[n] == Some(m)
    }

    pub fn eta(&self, n: usize) -> bool {
        self.server[n].is_some()
    }

    /// Whether station `m` computes a task in this slot.
    pub fn busy(&self, m: usize) -> bool {
        self.server.iter().any(|s| *s == Some(m))
    }

    pub fn busy_vector(&self) -> Vec<bool> {
        let mut busy = vec![false; self.n()];
        for m in self.server.iter().flatten() {
            busy[*m] = true;
        }
        busy
    }

    /// Checks the per-slot constraints against the queues observed at the start of the slot.
    pub fn validate(&self, topology: &Topology, queues: &[QueueState], slot: u64) -> Result<()> {
        let n = self.n();
        let mut load = vec![0usize; n];
        for (row, s) in self.server.iter().enumerate() {
            if let Some(m) = *s {
                if m >= n {
                    return Err(Error::Invariant { slot, detail: format!("server index {m} out of range") });
                }
                load[m] += 1;
                if !topology.peer_mask[row][m] {
                    return Err(Error::Invariant { slot, detail: format!("{row} -> {m} is not a permitted pair") });
                }
                if queues[row].is_empty() {
                    return Err(Error::Invariant { slot, detail: format!("station {row} served with an empty queue") });
                }
                if self.drop[row] {
                    return Err(Error::Invariant { slot, detail: format!("station {row} both serves and drops") });
                }
            }
        }
        if let Some(m) = load.iter().position(|l| *l > 1) {
            return Err(Error::Invariant { slot, detail: format!("station {m} serves {} tasks", load[m]) });
        }
        Ok(())
    }
}
