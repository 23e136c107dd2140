//! Task arrival processes and giant-task binding.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::haversine_m;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalProcess {
    /// One task at station `n` with probability `p[n]` per slot.
    BernoulliPerBs { p: Vec<f64> },
    /// Each user group emits Poisson(`rate`) tasks per slot; each task goes to a uniformly
    /// chosen station within `attach_radius_m`.
    UserGroupPoisson { groups: Vec<(f64, f64)>, rate: f64, attach_radius_m: f64 },
    /// As above, but each group alternates between an on state emitting
    /// Poisson(`on_rate`) tasks per slot and a silent off state.
    MarkovBurst { groups: Vec<(f64, f64)>, attach_radius_m: f64, p_on_to_off: f64, p_off_to_on: f64, on_rate: f64 },
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<()> {
        let prob = |what: &'static str, p: f64| if (0.0..=1.0).contains(&p) { Ok(()) } else { Err(Error::Domain { what, value: p }) };
        let nonneg = |what: &'static str, x: f64| if x >= 0.0 && x.is_finite() { Ok(()) } else { Err(Error::Domain { what, value: x }) };
        match self {
            ArrivalProcess::BernoulliPerBs { p } => p.iter().try_for_each(|x| prob("arrival probability", *x)),
            ArrivalProcess::UserGroupPoisson { rate, attach_radius_m, .. } => {
                nonneg("group arrival rate", *rate)?;
                positive_radius(*attach_radius_m)
            }
            ArrivalProcess::MarkovBurst { attach_radius_m, p_on_to_off, p_off_to_on, on_rate, .. } => {
                prob("on-to-off probability", *p_on_to_off)?;
                prob("off-to-on probability", *p_off_to_on)?;
                nonneg("on-state rate", *on_rate)?;
                positive_radius(*attach_radius_m)
            }
        }
    }
}

fn positive_radius(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { what: "attach radius", value: r })
    }
}

/// Uniform task workload in CPU cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadDist {
    pub low: f64,
    pub high: f64,
}

impl Default for WorkloadDist {
    fn default() -> Self {
        WorkloadDist { low: 2.5e6, high: 7.5e6 }
    }
}

impl WorkloadDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.high > self.low {
            rng.random_range(self.low..self.high)
        } else {
            self.low
        }
    }
}

/// One user task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTask {
    pub id: u64,
    pub origin: usize,
    pub arrival: u64,
    pub work: f64,
}

#[derive(Debug, Clone)]
pub struct ArrivalGenerator {
    process: ArrivalProcess,
    n_stations: usize,
    load: f64,
    workload: WorkloadDist,
    /// Stations reachable from each group.
    attach: Vec<Vec<usize>>,
    on: Vec<bool>,
    next_id: u64,
}

impl ArrivalGenerator {
    pub fn new<R: Rng + ?Sized>(process: &ArrivalProcess, positions: &[(f64, f64)], load_factor: f64, workload: WorkloadDist, rng: &mut R) -> Result<Self> {
        process.validate()?;
        if !(load_factor >= 0.0) {
            return Err(Error::Domain { what: "load factor", value: load_factor });
        }
        let n = positions.len();
        let (groups, radius) = match process {
            ArrivalProcess::BernoulliPerBs { p } => {
                if p.len() != n {
                    return Err(Error::Config(format!("{} arrival probabilities for {n} stations", p.len())));
                }
                (Vec::new(), 0.0)
            }
            ArrivalProcess::UserGroupPoisson { groups, attach_radius_m, .. } | ArrivalProcess::MarkovBurst { groups, attach_radius_m, .. } => {
                (groups.clone(), *attach_radius_m)
            }
        };
        let mut attach = Vec::with_capacity(groups.len());
        for (g, pos) in groups.iter().enumerate() {
            let near: Vec<usize> = (0..n).filter(|m| haversine_m(*pos, positions[*m]) <= radius).collect();
            if near.is_empty() {
                return Err(Error::Config(format!("user group {g} at {pos:?} has no station within {radius} m")));
            }
            attach.push(near);
        }
        let on = match process {
            ArrivalProcess::MarkovBurst { p_on_to_off, p_off_to_on, .. } => {
                let pi_on = stationary_on(*p_on_to_off, *p_off_to_on);
                (0..groups.len()).map(|_| rng.random::<f64>() < pi_on).collect()
            }
            _ => vec![true; groups.len()],
        };
        Ok(ArrivalGenerator { process: process.clone(), n_stations: n, load: load_factor, workload, attach, on, next_id: 0 })
    }

    /// Tasks arriving in `slot`, ordered by origin station.
    pub fn next_slot<R: Rng + ?Sized>(&mut self, slot: u64, rng: &mut R) -> Vec<RawTask> {
        let mut out = Vec::new();
        match &self.process {
            ArrivalProcess::BernoulliPerBs { p } => {
                for (n, pn) in p.iter().enumerate() {
                    if rng.random::<f64>() < (pn * self.load).min(1.0) {
                        out.push((n, self.workload.sample(rng)));
                    }
                }
            }
            ArrivalProcess::UserGroupPoisson { rate, .. } => {
                let mean = rate * self.load;
                for near in &self.attach {
                    for _ in 0..poisson(mean, rng) {
                        out.push((near[rng.random_range(0..near.len())], self.workload.sample(rng)));
                    }
                }
            }
            ArrivalProcess::MarkovBurst { p_on_to_off, p_off_to_on, on_rate, .. } => {
                let mean = on_rate * self.load;
                for (g, near) in self.attach.iter().enumerate() {
                    if self.on[g] {
                        for _ in 0..poisson(mean, rng) {
                            out.push((near[rng.random_range(0..near.len())], self.workload.sample(rng)));
                        }
                    }
                    let flip = if self.on[g] { *p_on_to_off } else { *p_off_to_on };
                    if rng.random::<f64>() < flip {
                        self.on[g] = !self.on[g];
                    }
                }
            }
        }
        out.sort_by_key(|(n, _)| *n);
        out.into_iter()
            .map(|(origin, work)| {
                self.next_id += 1;
                RawTask { id: self.next_id, origin, arrival: slot, work }
            })
            .collect()
    }

    /// Stationary probability that station `n` receives at least one task of a class
    /// drawn with probability `share`, per slot.
    pub fn presence_rate(&self, share: f64) -> Vec<f64> {
        let mut idle = vec![1.0; self.n_stations];
        match &self.process {
            ArrivalProcess::BernoulliPerBs { p } => {
                for (n, pn) in p.iter().enumerate() {
                    idle[n] = 1.0 - (pn * self.load).min(1.0) * share;
                }
            }
            ArrivalProcess::UserGroupPoisson { rate, .. } => {
                for near in &self.attach {
                    let per = rate * self.load * share / near.len() as f64;
                    for n in near {
                        idle[*n] *= (-per).exp();
                    }
                }
            }
            ArrivalProcess::MarkovBurst { p_on_to_off, p_off_to_on, on_rate, .. } => {
                let pi_on = stationary_on(*p_on_to_off, *p_off_to_on);
                for near in &self.attach {
                    let per = on_rate * self.load * share / near.len() as f64;
                    for n in near {
                        idle[*n] *= 1.0 - pi_on + pi_on * (-per).exp();
                    }
                }
            }
        }
        idle.into_iter().map(|q| 1.0 - q).collect()
    }

    /// Mean number of tasks per slot at each station.
    pub fn mean_task_rate(&self) -> Vec<f64> {
        let mut rate = vec![0.0; self.n_stations];
        match &self.process {
            ArrivalProcess::BernoulliPerBs { p } => {
                for (n, pn) in p.iter().enumerate() {
                    rate[n] = (pn * self.load).min(1.0);
                }
            }
            ArrivalProcess::UserGroupPoisson { rate: r, .. } => {
                for near in &self.attach {
                    for n in near {
                        rate[*n] += r * self.load / near.len() as f64;
                    }
                }
            }
            ArrivalProcess::MarkovBurst { p_on_to_off, p_off_to_on, on_rate, .. } => {
                let pi_on = stationary_on(*p_on_to_off, *p_off_to_on);
                for near in &self.attach {
                    for n in near {
                        rate[*n] += pi_on * on_rate * self.load / near.len() as f64;
                    }
                }
            }
        }
        rate
    }
}

fn stationary_on(on_to_off: f64, off_to_on: f64) -> f64 {
    if on_to_off + off_to_on == 0.0 {
        1.0
    } else {
        off_to_on / (on_to_off + off_to_on)
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Groups a slot's tasks into at most one giant task per class and station.
/// Returns `giants[class][station]` as indices into `tasks`.
pub fn bind_giant_tasks(tasks: &[RawTask], n_stations: usize, k: usize, class_of: impl Fn(f64) -> usize) -> Vec<Vec<Vec<usize>>> {
    let mut giants = vec![vec![Vec::new(); n_stations]; k];
    for (i, t) in tasks.iter().enumerate() {
        giants[class_of(t.work)][t.origin].push(i);
    }
    giants
}
