//! Randomised one-slot offloading for known arrival rates.
//!
//! Each slot, accepted tasks (after the drop rule) are moved between stations by a
//! sequence of randomised swaps so that station `n` ends up holding a task with
//! probability `mu_n`, while no station holds more than one task and no task waits
//! longer than one slot.
//!
//! The swap probabilities depend only on the arrival rates and the targets, so they are
//! planned once and replayed every slot.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PkSolution;

const TOL: f64 = 1e-12;
const PROB_SLACK: f64 = 1e-9;
const EXACT_LIMIT: usize = 16;
const RANDOM_ORDERS: usize = 64;
const ORDER_SEED: u64 = 0x5eed_0ff1;

/// How the planner tracks the law of the assignment vector between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectationModel {
    /// Exact joint law over all `2^N` assignment vectors.
    Exact,
    /// Only the marginals, combined as if components were independent.
    ProductForm,
}

impl ExpectationModel {
    pub fn for_size(n: usize) -> Self {
        if n <= EXACT_LIMIT {
            ExpectationModel::Exact
        } else {
            ExpectationModel::ProductForm
        }
    }
}

/// Rule applied at one step. Window ends are positions in the processing order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    Keep,
    /// An idle station pulls the first task found in its window; the task at the window
    /// end is pulled only with `boundary_prob`.
    OffloadIn {
        window_end: usize,
        boundary_prob: f64,
    },
    /// A busy station pushes its task to the first idle station of its window with `prob`.
    OffloadOut {
        window_end: usize,
        prob: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadPlan {
    /// Station processed at each step.
    pub order: Vec<usize>,
    pub rules: Vec<StepRule>,
    /// `expect_trace[k][n]`: expected load of station `n` before step `k`; the last
    /// entry is the final expectation.
    pub expect_trace: Vec<Vec<f64>>,
    pub model: ExpectationModel,
}

impl OffloadPlan {
    pub fn final_expectation(&self) -> &[f64] {
        self.expect_trace.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Assignment vector of one slot while the steps are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub a: Vec<bool>,
    /// Origin of the task each station currently holds.
    pub holder: Vec<Option<usize>>,
    pub expect: Vec<f64>,
    pub step: usize,
}

impl StepState {
    pub fn new(accepted: &[bool], plan: &OffloadPlan) -> Self {
        StepState {
            a: accepted.to_vec(),
            holder: accepted.iter().enumerate().map(|(n, a)| a.then_some(n)).collect(),
            expect: plan.expect_trace[0].clone(),
            step: 0,
        }
    }
}

/// Outcome of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAssignment {
    pub dropped: Vec<bool>,
    pub accepted: Vec<bool>,
    /// Final assignment: station `m` serves a task next slot.
    pub assignment: Vec<bool>,
    /// `served_origin[m]`: origin station of the task assigned to `m`.
    pub served_origin: Vec<Option<usize>>,
}

/// Drops an arrived task with probability `1 - y/lambda`.
pub fn drop_rule<R: Rng + ?Sized>(arrived: bool, lambda: f64, y_star: f64, rng: &mut R) -> Result<bool> {
    if y_star > lambda + TOL || y_star < -TOL {
        return Err(Error::Contract(format!("accepted rate {y_star} outside [0, {lambda}]")));
    }
    if !arrived {
        return Ok(false);
    }
    if lambda <= 0.0 {
        return Ok(true);
    }
    let p = (1.0 - y_star / lambda).clamp(0.0, 1.0);
    Ok(p > 0.0 && rng.random::<f64>() < p)
}

/// Plans the swap rules for targets `sol.mu_star` given accepted rates `sol.y_star`.
///
/// The processing order is the stations by descending target, then index order, then a
/// fixed set of seeded random orders. Fails with `TargetUnreachable` when no order works.
pub fn plan_offloading(sol: &PkSolution, model: ExpectationModel) -> Result<OffloadPlan> {
    let n = sol.y_star.len();
    if sol.mu_star.len() != n {
        return Err(Error::Contract("targets and accepted rates differ in length".into()));
    }
    let mut by_target: Vec<usize> = (0..n).collect();
    by_target.sort_by(|a, b| sol.mu_star[*b].total_cmp(&sol.mu_star[*a]));
    let mut candidates = vec![by_target, (0..n).collect::<Vec<_>>()];
    let mut rng = ChaCha8Rng::seed_from_u64(ORDER_SEED);
    for _ in 0..RANDOM_ORDERS {
        let mut o: Vec<usize> = (0..n).collect();
        o.shuffle(&mut rng);
        candidates.push(o);
    }
    for order in candidates {
        if let Some(plan) = plan_in_order(sol, &order, model) {
            return Ok(plan);
        }
    }
    let why = if one_slot_achievable(&sol.y_star, &sol.mu_star) {
        "no processing order admits a window for every step"
    } else {
        "targets exceed what one-slot service of the accepted tasks can reach"
    };
    Err(Error::TargetUnreachable(why.into()))
}

/// Necessary condition for a one-slot assignment: the `k` largest targets together must
/// not exceed `E[min(k, X)]`, where `X` counts accepted tasks.
pub fn one_slot_achievable(y: &[f64], mu: &[f64]) -> bool {
    let mut pmf = vec![1.0];
    for p in y {
        let mut next = vec![0.0; pmf.len() + 1];
        for (j, q) in pmf.iter().enumerate() {
            next[j] += q * (1.0 - p);
            next[j + 1] += q * p;
        }
        pmf = next;
    }
    let mut sorted = mu.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    for (k, m) in sorted.iter().enumerate() {
        prefix += m;
        let cap: f64 = pmf.iter().enumerate().map(|(j, q)| (j.min(k + 1)) as f64 * q).sum();
        if prefix > cap + PROB_SLACK {
            return false;
        }
    }
    let mean: f64 = y.iter().sum();
    (prefix - mean).abs() <= PROB_SLACK.max(1e-9 * mean)
}

fn plan_in_order(sol: &PkSolution, order: &[usize], model: ExpectationModel) -> Option<OffloadPlan> {
    let mut tracker = match model {
        ExpectationModel::Exact => Tracker::exact(&sol.y_star),
        ExpectationModel::ProductForm => Tracker::Product(sol.y_star.clone()),
    };
    let mut rules = Vec::with_capacity(order.len());
    let mut trace = vec![tracker.marginals()];
    for k in 0..order.len() {
        let i = order[k];
        let e = tracker.marginal(i);
        let target = sol.mu_star[i];
        let rule = if (e - target).abs() <= TOL {
            StepRule::Keep
        } else if e < target {
            let zero_upto = tracker.all_zero_prefix(order, k);
            // zero_upto[j]: P(positions k..=k+j all idle)
            let j = zero_upto.iter().position(|z| 1.0 - z >= target - TOL)?;
            if j == 0 {
                return None;
            }
            let before = zero_upto[j - 1];
            let edge = before - zero_upto[j];
            let need = target - (1.0 - before);
            let p = if edge <= TOL { 0.0 } else { need / edge };
            if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
                return None;
            }
            StepRule::OffloadIn { window_end: k + j, boundary_prob: p.clamp(0.0, 1.0) }
        } else {
            let busy_upto = tracker.all_busy_prefix(order, k);
            let j = busy_upto.iter().position(|b| *b <= target + TOL)?;
            if j == 0 {
                return None;
            }
            let movable = busy_upto[0] - busy_upto[j];
            let p = if movable <= TOL { 0.0 } else { (e - target) / movable };
            if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
                return None;
            }
            StepRule::OffloadOut { window_end: k + j, prob: p.clamp(0.0, 1.0) }
        };
        tracker.apply(order, k, rule);
        rules.push(rule);
        trace.push(tracker.marginals());
    }
    if model == ExpectationModel::Exact {
        let fin = trace.last()?;
        if fin.iter().zip(&sol.mu_star).any(|(a, b)| (a - b).abs() > 1e-9) {
            return None;
        }
    }
    Some(OffloadPlan { order: order.to_vec(), rules, expect_trace: trace, model })
}

enum Tracker {
    /// Probability of each assignment vector, bit `n` for station `n`.
    Exact {
        n: usize,
        law: Vec<f64>,
    },
    Product(Vec<f64>),
}

impl Tracker {
    fn exact(y: &[f64]) -> Self {
        let n = y.len();
        let mut law = vec![1.0; 1 << n];
        for (mask, p) in law.iter_mut().enumerate() {
            for (b, yb) in y.iter().enumerate() {
                *p *= if mask >> b & 1 == 1 { *yb } else { 1.0 - yb };
            }
        }
        Tracker::Exact { n, law }
    }

    fn marginal(&self, i: usize) -> f64 {
        match self {
            Tracker::Exact { law, .. } => law.iter().enumerate().filter(|(m, _)| m >> i & 1 == 1).map(|(_, p)| p).sum(),
            Tracker::Product(e) => e[i],
        }
    }

    fn marginals(&self) -> Vec<f64> {
        match self {
            Tracker::Exact { n, .. } => (0..*n).map(|i| self.marginal(i)).collect(),
            Tracker::Product(e) => e.clone(),
        }
    }

    /// `out[j]` = P(stations at positions `k..=k+j` are all idle).
    fn all_zero_prefix(&self, order: &[usize], k: usize) -> Vec<f64> {
        self.run_prefix(order, k, false)
    }

    /// `out[j]` = P(stations at positions `k..=k+j` are all busy).
    fn all_busy_prefix(&self, order: &[usize], k: usize) -> Vec<f64> {
        self.run_prefix(order, k, true)
    }

    fn run_prefix(&self, order: &[usize], k: usize, busy: bool) -> Vec<f64> {
        let len = order.len() - k;
        match self {
            Tracker::Exact { law, .. } => {
                // histogram of the first position that breaks the run
                let mut first_break = vec![0.0; len + 1];
                for (mask, p) in law.iter().enumerate() {
                    let brk = (0..len).find(|j| (mask >> order[k + j] & 1 == 1) != busy).unwrap_or(len);
                    first_break[brk] += p;
                }
                let mut out = vec![0.0; len];
                let mut tail: f64 = first_break.iter().sum();
                for j in 0..len {
                    tail -= first_break[j];
                    out[j] = tail.max(0.0);
                }
                out
            }
            Tracker::Product(e) => {
                let mut acc = 1.0;
                (0..len)
                    .map(|j| {
                        let p = e[order[k + j]];
                        acc *= if busy { p } else { 1.0 - p };
                        acc
                    })
                    .collect()
            }
        }
    }

    fn apply(&mut self, order: &[usize], k: usize, rule: StepRule) {
        let i = order[k];
        match self {
            Tracker::Exact { law, .. } => {
                let mut next = vec![0.0; law.len()];
                for (mask, p) in law.iter().enumerate() {
                    if *p == 0.0 {
                        continue;
                    }
                    for (to, q) in transitions(mask, order, k, rule) {
                        next[to] += p * q;
                    }
                }
                *law = next;
            }
            Tracker::Product(e) => match rule {
                StepRule::Keep => {}
                StepRule::OffloadIn { window_end, boundary_prob } => {
                    let mut idle = 1.0 - e[i];
                    let mut gained = 0.0;
                    for pos in k + 1..=window_end {
                        let j = order[pos];
                        let take = if pos == window_end { boundary_prob } else { 1.0 };
                        let moved = idle * e[j] * take;
                        idle *= 1.0 - e[j];
                        e[j] -= moved;
                        gained += moved;
                    }
                    e[i] += gained;
                }
                StepRule::OffloadOut { window_end, prob } => {
                    let mut run = e[i];
                    let mut lost = 0.0;
                    for pos in k + 1..=window_end {
                        let j = order[pos];
                        let moved = run * (1.0 - e[j]) * prob;
                        run *= e[j];
                        e[j] += moved;
                        lost += moved;
                    }
                    e[i] -= lost;
                }
            },
        }
    }
}

/// Successor masks of `mask` under `rule` with their probabilities.
fn transitions(mask: usize, order: &[usize], k: usize, rule: StepRule) -> Vec<(usize, f64)> {
    let i = order[k];
    let has = |m: usize, s: usize| m >> s & 1 == 1;
    match rule {
        StepRule::Keep => vec![(mask, 1.0)],
        StepRule::OffloadIn { window_end, boundary_prob } => {
            if has(mask, i) {
                return vec![(mask, 1.0)];
            }
            match (k + 1..=window_end).find(|pos| has(mask, order[*pos])) {
                None => vec![(mask, 1.0)],
                Some(pos) => {
                    let moved = (mask | 1 << i) & !(1 << order[pos]);
                    if pos < window_end {
                        vec![(moved, 1.0)]
                    } else {
                        vec![(moved, boundary_prob), (mask, 1.0 - boundary_prob)]
                    }
                }
            }
        }
        StepRule::OffloadOut { window_end, prob } => {
            if !has(mask, i) {
                return vec![(mask, 1.0)];
            }
            match (k + 1..=window_end).find(|pos| !has(mask, order[*pos])) {
                None => vec![(mask, 1.0)],
                Some(pos) => {
                    let moved = (mask | 1 << order[pos]) & !(1 << i);
                    vec![(moved, prob), (mask, 1.0 - prob)]
                }
            }
        }
    }
}

/// Applies the rule of `state.step` to one slot's assignment and advances the step.
pub fn known_rate_step<R: Rng + ?Sized>(state: &mut StepState, plan: &OffloadPlan, rng: &mut R) -> Result<()> {
    let k = state.step;
    let Some(&rule) = plan.rules.get(k) else {
        return Err(Error::Contract(format!("step {k} beyond the {} planned steps", plan.rules.len())));
    };
    let order = &plan.order;
    let i = order[k];
    let before = state.a.iter().filter(|a| **a).count();
    match rule {
        StepRule::Keep => {}
        StepRule::OffloadIn { window_end, boundary_prob } => {
            check_probability(boundary_prob)?;
            if !state.a[i] {
                if let Some(pos) = (k + 1..=window_end).find(|pos| state.a[order[*pos]]) {
                    if pos < window_end || rng.random::<f64>() < boundary_prob {
                        swap(state, order[pos], i);
                    }
                }
            }
        }
        StepRule::OffloadOut { window_end, prob } => {
            check_probability(prob)?;
            if state.a[i] {
                if let Some(pos) = (k + 1..=window_end).find(|pos| !state.a[order[*pos]]) {
                    if rng.random::<f64>() < prob {
                        swap(state, i, order[pos]);
                    }
                }
            }
        }
    }
    if state.a.iter().filter(|a| **a).count() != before {
        return Err(Error::Invariant { slot: 0, detail: format!("step {k} changed the number of assigned tasks") });
    }
    state.step += 1;
    state.expect.clone_from(&plan.expect_trace[state.step]);
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain { what: "swap probability", value: p })
    }
}

fn swap(state: &mut StepState, from: usize, to: usize) {
    state.a[from] = false;
    state.a[to] = true;
    state.holder[to] = state.holder[from].take();
}

/// Drop rule per station followed by all planned steps.
pub fn run_known_rate_slot<R: Rng + ?Sized>(arrivals: &[bool], lambda: &[f64], sol: &PkSolution, plan: &OffloadPlan, rng: &mut R) -> Result<SlotAssignment> {
    let n = arrivals.len();
    if lambda.len() != n || sol.y_star.len() != n {
        return Err(Error::Contract("arrival, rate and plan dimensions differ".into()));
    }
    let mut dropped = vec![false; n];
    for m in 0..n {
        dropped[m] = drop_rule(arrivals[m], lambda[m], sol.y_star[m], rng)?;
    }
    let accepted: Vec<bool> = arrivals.iter().zip(&dropped).map(|(a, d)| *a && !d).collect();
    let mut state = StepState::new(&accepted, plan);
    for _ in 0..plan.rules.len() {
        known_rate_step(&mut state, plan, rng)?;
    }
    Ok(SlotAssignment { dropped, accepted, assignment: state.a, served_origin: state.holder })
}
