//! Early refuse: a dropped task is served by an idle station right away, and the next
//! arrival at the dropping station is refused at admission instead.
//!
//! The scheduler keeps running on the queues it would have had without the transform:
//! a refused arrival enters them as a ghost. Serving a ghost costs nothing physically,
//! so the station that served the dropped task is later relieved of one real service by
//! the ghost's server. Dropping a ghost refuses yet another arrival.

use std::collections::{HashMap, VecDeque};

use crate::decision::SlotDecision;
use crate::model::{energy_of_slot, StationConfig};
use crate::queue::QueuedTask;
use crate::scheduler::{ServeEvent, SlotOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accept,
    Block,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefuseLedger {
    /// Pending refusals per station. Each entry remembers the station that did the extra
    /// work for the drop that issued it.
    pub block_credits: Vec<VecDeque<Option<usize>>>,
    /// `owed[d][c]`: station `d` owes station `c` one service.
    pub owed: Vec<Vec<u32>>,
    pub credit_cap: usize,
    /// Drops that could not be converted because the station's credits were at the cap.
    pub overflow: u64,
    /// Drops left in place because no idle peer was available.
    pub plain_drops: u64,
    pub substitutions: u64,
    pub settled: u64,
    ghosts: HashMap<u64, Option<usize>>,
}

/// What physically happens in a slot after the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSlot {
    pub decision: SlotDecision,
    /// Real tasks executed this slot with their physical server.
    pub served: Vec<ServeEvent>,
    pub plain_drops: Vec<(usize, QueuedTask)>,
    pub busy: Vec<bool>,
}

impl RefuseLedger {
    pub fn new(n: usize, credit_cap: usize) -> Self {
        RefuseLedger { block_credits: vec![VecDeque::new(); n], owed: vec![vec![0; n]; n], credit_cap, ..Default::default() }
    }

    pub fn credits(&self, n: usize) -> usize {
        self.block_credits[n].len()
    }

    pub fn outstanding_credits(&self) -> usize {
        self.block_credits.iter().map(VecDeque::len).sum()
    }

    pub fn outstanding_owed(&self) -> u64 {
        self.owed.iter().flatten().map(|x| u64::from(*x)).sum()
    }

    /// Admission of an arrival at station `n`. A blocked arrival is returned as the ghost
    /// that must be handed to the scheduler in its place.
    pub fn admit(&mut self, n: usize, task: QueuedTask) -> (Admission, QueuedTask) {
        match self.block_credits[n].pop_front() {
            None => (Admission::Accept, task),
            Some(beneficiary) => {
                self.ghosts.insert(task.id, beneficiary);
                (Admission::Block, QueuedTask { ghost: true, ..task })
            }
        }
    }

    fn issue_credit(&mut self, n: usize, beneficiary: Option<usize>) -> bool {
        if self.block_credits[n].len() >= self.credit_cap {
            self.overflow += 1;
            return false;
        }
        self.block_credits[n].push_back(beneficiary);
        true
    }

    /// Turns the scheduler's outcome into physical service.
    ///
    /// Each real drop at `n` is served by the lowest-index idle peer other than `n` (or
    /// by `n` itself when no other peer is idle) and a credit is issued against `n`.
    /// Debts are then settled where a debtor is idle and may serve a creditor's task.
    pub fn apply(&mut self, outcome: &SlotOutcome, stations: &[StationConfig], mask: &[Vec<bool>]) -> PhysicalSlot {
        let n = stations.len();
        let mut decision = outcome.decision.clone();
        let mut busy = vec![false; n];
        let mut served = Vec::new();
        for ev in &outcome.served {
            if ev.task.ghost {
                let beneficiary = self.ghosts.remove(&ev.task.id).flatten();
                if let Some(c) = beneficiary.filter(|c| *c != ev.server) {
                    self.owed[ev.server][c] += 1;
                }
                decision.server[ev.origin] = None;
            } else {
                busy[ev.server] = true;
                served.push(ev.clone());
            }
        }

        let mut plain_drops = Vec::new();
        for (origin, task) in &outcome.dropped {
            if task.ghost {
                let beneficiary = self.ghosts.remove(&task.id).flatten();
                self.issue_credit(*origin, beneficiary);
                decision.drop[*origin] = false;
                continue;
            }
            let idle = (0..n).find(|m| *m != *origin && mask[*origin][*m] && !busy[*m]).or_else(|| (!busy[*origin]).then_some(*origin));
            match idle {
                Some(m) if self.credits(*origin) < self.credit_cap => {
                    self.issue_credit(*origin, Some(m));
                    busy[m] = true;
                    decision.server[*origin] = Some(m);
                    decision.drop[*origin] = false;
                    served.push(ServeEvent { origin: *origin, server: m, task: *task });
                    self.substitutions += 1;
                }
                found => {
                    if found.is_some() {
                        self.overflow += 1;
                    }
                    self.plain_drops += 1;
                    plain_drops.push((*origin, *task));
                }
            }
        }

        for ev in served.iter_mut() {
            let creditor = ev.server;
            let debtor = (0..n).find(|d| self.owed[*d][creditor] > 0 && !busy[*d] && mask[ev.origin][*d]);
            if let Some(d) = debtor {
                self.owed[d][creditor] -= 1;
                busy[creditor] = false;
                busy[d] = true;
                ev.server = d;
                decision.server[ev.origin] = Some(d);
                self.settled += 1;
            }
        }
        for m in 0..n {
            decision.energy[m] = energy_of_slot(&stations[m], busy[m]);
        }
        PhysicalSlot { decision, served, plain_drops, busy }
    }
}
