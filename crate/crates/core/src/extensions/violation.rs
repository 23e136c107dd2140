//! Edge and violation regions of the head-of-line waiting time.
//!
//! A slot is in the edge region when `H >= h_max`, and in the violation region for `T`
//! when `H >= h_max + T`. The conditional frequency `p(T)` of violation given edge is
//! expected to decay geometrically in `T`; the slope of `ln p(T)` is fitted.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationStats {
    pub h_max: u64,
    pub slots: u64,
    pub edge_slots: u64,
    pub p_e: f64,
    /// `(T, p(T))`; `None` when the edge region is never reached.
    pub p_v_given_e: Vec<(u64, Option<f64>)>,
    pub decay_slope: Option<f64>,
    pub decay_intercept: Option<f64>,
    pub r_squared: Option<f64>,
}

pub fn violation_stats(h_trace: &[u64], h_max: u64, t_values: &[u64]) -> ViolationStats {
    let mut acc = ViolationCounter::new(h_max, t_values);
    for h in h_trace {
        acc.push(*h);
    }
    acc.finish()
}

/// Streaming form of [`violation_stats`], for traces too long to keep.
#[derive(Debug, Clone)]
pub struct ViolationCounter {
    h_max: u64,
    t_values: Vec<u64>,
    slots: u64,
    edge: u64,
    over: Vec<u64>,
}

impl ViolationCounter {
    pub fn new(h_max: u64, t_values: &[u64]) -> Self {
        let mut t_values = t_values.to_vec();
        t_values.sort_unstable();
        t_values.dedup();
        ViolationCounter { h_max, over: vec![0; t_values.len()], t_values, slots: 0, edge: 0 }
    }

    pub fn push(&mut self, h: u64) {
        self.slots += 1;
        if h < self.h_max {
            return;
        }
        self.edge += 1;
        for (c, t) in self.over.iter_mut().zip(&self.t_values) {
            if h >= self.h_max + t {
                *c += 1;
            }
        }
    }

    /// Pools counts of another station's trace.
    pub fn merge(&mut self, other: &ViolationCounter) {
        self.slots += other.slots;
        self.edge += other.edge;
        for (a, b) in self.over.iter_mut().zip(&other.over) {
            *a += b;
        }
    }

    pub fn finish(&self) -> ViolationStats {
        let p_e = if self.slots == 0 { 0.0 } else { self.edge as f64 / self.slots as f64 };
        let p: Vec<(u64, Option<f64>)> =
            self.t_values.iter().zip(&self.over).map(|(t, c)| (*t, (self.edge > 0).then(|| *c as f64 / self.edge as f64))).collect();
        for w in p.windows(2) {
            if let (Some(a), Some(b)) = (w[0].1, w[1].1) {
                assert!(b <= a, "violation frequency increased from T={} to T={}", w[0].0, w[1].0);
            }
        }
        let points: Vec<(f64, f64)> = p.iter().filter_map(|(t, v)| v.filter(|x| *x > 0.0).map(|x| (*t as f64, x.ln()))).collect();
        let fit = (points.len() >= 2).then(|| least_squares(&points));
        ViolationStats {
            h_max: self.h_max,
            slots: self.slots,
            edge_slots: self.edge,
            p_e,
            p_v_given_e: p,
            decay_slope: fit.map(|f| f.0),
            decay_intercept: fit.map(|f| f.1),
            r_squared: fit.map(|f| f.2),
        }
    }
}

/// Slope, intercept and coefficient of determination of `y ~ a x + b`.
fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}
