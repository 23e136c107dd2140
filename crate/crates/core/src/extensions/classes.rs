//! Workload classes. Tasks are binned by CPU workload; each class runs its own scheduler
//! instance with a share of the station's energy allowance, and the instances share the
//! station's CPU slot by slot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StationConfig;

pub const DEFAULT_REASSIGN_PERIOD: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub k: usize,
    /// Workload bounds `[low, high]` in cycles, ascending and adjacent.
    pub intervals: Vec<(f64, f64)>,
    /// Mean workload of the samples falling in each class.
    pub mean_work: Vec<f64>,
    /// `budgets[n][k]`: energy allowance of class `k` at station `n`.
    pub budgets: Vec<Vec<f64>>,
    pub reassign_period: u64,
}

impl ClassPlan {
    /// Class of a task with `work` cycles.
    pub fn class_of(&self, work: f64) -> usize {
        self.intervals[..self.k - 1].partition_point(|(_, hi)| *hi < work)
    }

    /// Fraction of a uniform workload on `[lo, hi]` that falls in each class.
    pub fn uniform_shares(&self, lo: f64, hi: f64) -> Vec<f64> {
        if hi <= lo {
            let mut out = vec![0.0; self.k];
            out[self.class_of(lo)] = 1.0;
            return out;
        }
        self.intervals.iter().map(|(a, b)| ((b.min(hi) - a.max(lo)) / (hi - lo)).max(0.0)).collect()
    }

    /// Re-splits every station's allowance in proportion to the observed per-class
    /// workload `load[n][k]`. Stations without observed load split evenly.
    pub fn refresh_budgets(&mut self, stations: &[StationConfig], load: &[Vec<f64>]) -> Result<()> {
        for (n, s) in stations.iter().enumerate() {
            self.budgets[n] = split_budget(s, self.k, load.get(n).map(Vec::as_slice));
            let total: f64 = self.budgets[n].iter().sum();
            if total > s.e_budget * (1.0 + 1e-12) {
                return Err(Error::Invariant { slot: 0, detail: format!("class budgets of station {n} sum to {total} > {}", s.e_budget) });
            }
        }
        Ok(())
    }

    /// Station parameters seen by the scheduler instance of class `k`. Static energy is
    /// split evenly; a busy slot adds the class's mean workload at the station's
    /// energy per cycle.
    pub fn class_station(&self, base: &StationConfig, n: usize, k: usize) -> StationConfig {
        let per_cycle = (base.e_active - base.e_static) / base.cpu_rate;
        let e_static = base.e_static / self.k as f64;
        StationConfig { e_static, e_active: e_static + self.mean_work[k].min(base.cpu_rate) * per_cycle, e_budget: self.budgets[n][k], ..base.clone() }
    }
}

fn split_budget(s: &StationConfig, k: usize, load: Option<&[f64]>) -> Vec<f64> {
    let base = s.e_static / k as f64;
    let spare = s.e_budget - s.e_static;
    let total: f64 = load.map_or(0.0, |l| l.iter().sum());
    (0..k)
        .map(|c| {
            let share = if total > 0.0 { load.expect("total > 0")[c] / total } else { 1.0 / k as f64 };
            base + share * spare
        })
        .collect()
}

/// Equal-count workload classes over `samples`, with budgets split evenly until load is
/// observed. When `k` exceeds the number of distinct cut points fewer classes are used.
pub fn class_partition_and_budget(samples: &[f64], k: usize, stations: &[StationConfig], range: Option<(f64, f64)>) -> Result<ClassPlan> {
    if k == 0 {
        return Err(Error::Config("number of classes must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::Config("workload classes need at least one sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = range.unwrap_or((sorted[0], sorted[sorted.len() - 1]));
    let mut cuts: Vec<f64> = (1..k).map(|j| sorted[j * sorted.len() / k]).filter(|c| *c > lo && *c < hi).collect();
    cuts.dedup();
    if cuts.len() + 1 < k {
        log::warn!("only {} workload classes are distinguishable, {k} requested", cuts.len() + 1);
    }
    let k = cuts.len() + 1;
    let mut edges = vec![lo];
    edges.extend(&cuts);
    edges.push(hi);
    let intervals: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    let mut plan = ClassPlan { k, intervals, mean_work: vec![0.0; k], budgets: vec![Vec::new(); stations.len()], reassign_period: DEFAULT_REASSIGN_PERIOD };
    let mut count = vec![0usize; k];
    for s in &sorted {
        let c = plan.class_of(*s);
        plan.mean_work[c] += s;
        count[c] += 1;
    }
    for c in 0..k {
        plan.mean_work[c] = if count[c] > 0 { plan.mean_work[c] / count[c] as f64 } else { 0.5 * (plan.intervals[c].0 + plan.intervals[c].1) };
    }
    plan.refresh_budgets(stations, &[])?;
    Ok(plan)
}

/// Which class requests a station executes this slot. `requests[k]` holds the cycles
/// requested by class `k`, each capped at `cpu_rate`. Classes run in ascending order
/// until the next one no longer fits; it and all later ones are carried over.
pub fn multiplex_classes(requests: &[Option<f64>], cpu_rate: f64) -> (Vec<usize>, Vec<usize>) {
    let mut used = 0.0;
    let mut run = Vec::new();
    let mut carry = Vec::new();
    for (k, r) in requests.iter().enumerate() {
        let Some(cycles) = r else { continue };
        let cycles = cycles.min(cpu_rate);
        if carry.is_empty() && used + cycles <= cpu_rate {
            used += cycles;
            run.push(k);
        } else {
            carry.push(k);
        }
    }
    (run, carry)
}
