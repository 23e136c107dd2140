//! The static program for known arrival rates: choose accepted throughputs `y` and
//! service levels `mu` that maximise total utility under the energy caps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StationConfig;

const BISECTION_ROUNDS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkSolution {
    /// Accepted throughput per station, `0 <= y <= lambda`.
    pub y_star: Vec<f64>,
    /// Service level per station, `0 <= mu <= cap`.
    pub mu_star: Vec<f64>,
    pub z_star: f64,
}

impl PkSolution {
    pub fn throughput(&self) -> f64 {
        self.y_star.iter().sum()
    }
}

/// Maximise `sum g_n(y_n)` subject to `y_n <= lambda_n`, `mu_n <= cap_n` and
/// `sum y = sum mu`.
///
/// Accepted throughput is water-filled on the common marginal utility. Ties go to the
/// lowest index. Service levels are water-filled against the caps, giving the most
/// balanced feasible `mu`.
pub fn solve_pk(stations: &[StationConfig], lambda: &[f64]) -> Result<PkSolution> {
    if stations.len() != lambda.len() {
        return Err(Error::Config(format!("{} stations but {} arrival rates", stations.len(), lambda.len())));
    }
    for s in stations {
        s.validate()?;
    }
    if let Some(bad) = lambda.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Domain { what: "arrival rate", value: *bad });
    }
    let caps: Vec<f64> = stations.iter().map(|s| s.service_cap().max(0.0)).collect();
    let demand: f64 = lambda.iter().sum();
    let supply: f64 = caps.iter().sum();

    let y_star = if demand <= supply { lambda.to_vec() } else { fill_throughput(stations, lambda, supply) };
    let budget: f64 = y_star.iter().sum();
    let mu_star = water_fill(&caps, budget);
    let z_star = stations.iter().zip(&y_star).map(|(s, y)| s.utility.eval(*y)).sum();
    Ok(PkSolution { y_star, mu_star, z_star })
}

fn fill_throughput(stations: &[StationConfig], lambda: &[f64], budget: f64) -> Vec<f64> {
    let level = |theta: f64| -> (Vec<f64>, Vec<f64>) {
        stations
            .iter()
            .zip(lambda)
            .map(|(s, l)| {
                let (lo, hi) = s.utility.demand_at(theta);
                (lo.min(*l), hi.min(*l))
            })
            .unzip()
    };
    let top = stations.iter().map(|s| s.utility.nu()).fold(0.0, f64::max) + 1.0;
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..BISECTION_ROUNDS {
        let mid = 0.5 * (lo + hi);
        let (low, high) = level(mid);
        if low.iter().sum::<f64>() > budget {
            lo = mid;
        } else if high.iter().sum::<f64>() < budget {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
            break;
        }
    }
    let (mut y, _) = level(hi);
    let (_, room) = level(lo);
    let mut rest = budget - y.iter().sum::<f64>();
    for (yn, r) in y.iter_mut().zip(&room) {
        if rest <= 0.0 {
            break;
        }
        let add = (r - *yn).max(0.0).min(rest);
        *yn += add;
        rest -= add;
    }
    y
}

/// `min(cap_n, level)` with the level chosen so the entries sum to `budget`.
fn water_fill(caps: &[f64], budget: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..caps.len()).collect();
    idx.sort_by(|a, b| caps[*a].total_cmp(&caps[*b]));
    let mut out = vec![0.0; caps.len()];
    let mut rest = budget;
    for (k, &n) in idx.iter().enumerate() {
        let share = rest / (caps.len() - k) as f64;
        if caps[n] <= share {
            out[n] = caps[n];
            rest -= caps[n];
        } else {
            for &m in &idx[k..] {
                out[m] = share;
            }
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilitySpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn station(budget: f64, utility: UtilitySpec) -> StationConfig {
        // cap = (budget - 0.01) / 0.164
        StationConfig { id: 0, position: (0.0, 0.0), cpu_rate: 2e7, e_static: 0.01, e_active: 0.174, e_budget: budget, utility }
    }

    fn half_cap(utility: UtilitySpec) -> StationConfig {
        station(0.01 + 0.5 * 0.164, utility)
    }

    #[test]
    fn two_station_example() {
        let lin = UtilitySpec::Linear { slope: 1.0 };
        let sol = solve_pk(&[half_cap(lin.clone()), half_cap(lin)], &[0.8, 0.2]).unwrap();
        assert_abs_diff_eq!(sol.y_star[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y_star[1], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.mu_star[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.mu_star[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z_star, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_arrivals() {
        let lin = UtilitySpec::Linear { slope: 1.0 };
        let sol = solve_pk(&[half_cap(lin.clone()), half_cap(lin)], &[0.0, 0.0]).unwrap();
        assert_eq!(sol.y_star, vec![0.0, 0.0]);
        assert_eq!(sol.mu_star, vec![0.0, 0.0]);
        assert_eq!(sol.z_star, 0.0);
    }

    #[test]
    fn symmetric_log_instance() {
        let log = UtilitySpec::Log { scale: 1.0 };
        let sol = solve_pk(&[half_cap(log.clone()), half_cap(log)], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(sol.y_star[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.y_star[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn linear_budget_goes_to_steeper_slope_then_lowest_index() {
        let sol = solve_pk(
            &[half_cap(UtilitySpec::Linear { slope: 1.0 }), half_cap(UtilitySpec::Linear { slope: 2.0 }), half_cap(UtilitySpec::Linear { slope: 1.0 })],
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        assert_abs_diff_eq!(sol.y_star[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y_star[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y_star[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_station_is_a_configuration_error() {
        let bad = station(0.005, UtilitySpec::default());
        assert!(matches!(solve_pk(&[bad], &[0.5]), Err(Error::Config(_))));
        assert!(solve_pk(&[half_cap(UtilitySpec::default())], &[1.5]).is_err());
    }

    #[test]
    fn water_fill_balances() {
        let out = water_fill(&[0.2, 0.9, 0.9], 1.0);
        assert_abs_diff_eq!(out[0], 0.2);
        assert_abs_diff_eq!(out[1], 0.4);
        assert_abs_diff_eq!(out[2], 0.4);
    }

    fn arb_utility() -> impl Strategy<Value = UtilitySpec> {
        prop_oneof![
            (0.1..3.0f64).prop_map(|slope| UtilitySpec::Linear { slope }),
            (0.1..3.0f64).prop_map(|scale| UtilitySpec::Log { scale }),
            (0.5..3.0f64, 0.0..1.0f64, 0.1..0.9f64).prop_map(|(s0, ratio, x)| UtilitySpec::PiecewiseLinearConcave {
                breakpoints: vec![(0.0, 0.0), (x, s0 * x), (1.0, s0 * x + s0 * ratio * (1.0 - x))]
            }),
        ]
    }

    proptest! {
        /// Feasible, and no grid point of the two-station program does better.
        #[test]
        fn two_station_grid_oracle(
            u0 in arb_utility(), u1 in arb_utility(),
            l0 in 0.0..=1.0f64, l1 in 0.0..=1.0f64,
            c0 in 0.0..=1.0f64, c1 in 0.0..=1.0f64,
        ) {
            let st = [station(0.01 + c0 * 0.164, u0.clone()), station(0.01 + c1 * 0.164, u1.clone())];
            let sol = solve_pk(&st, &[l0, l1]).unwrap();
            let caps = [st[0].service_cap(), st[1].service_cap()];
            let budget = (l0 + l1).min(caps[0] + caps[1]);
            prop_assert!((sol.y_star.iter().sum::<f64>() - budget).abs() < 1e-9);
            prop_assert!((sol.mu_star.iter().sum::<f64>() - budget).abs() < 1e-9);
            for n in 0..2 {
                prop_assert!(sol.y_star[n] <= [l0, l1][n] + 1e-12 && sol.y_star[n] >= -1e-12);
                prop_assert!(sol.mu_star[n] <= caps[n] + 1e-12 && sol.mu_star[n] >= -1e-12);
            }
            let steps = 400;
            let mut best = f64::MIN;
            for k in 0..=steps {
                let y0 = l0 * k as f64 / steps as f64;
                let y1 = (budget - y0).clamp(0.0, l1);
                if y0 + y1 <= budget + 1e-12 {
                    best = best.max(u0.eval(y0) + u1.eval(y1));
                }
            }
            prop_assert!(sol.z_star >= best - 1e-9, "z*={} grid={}", sol.z_star, best);
        }
    }
}
