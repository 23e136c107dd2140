//! Concave throughput utilities and their extension to `[-1, inf)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SLOPE_TOL: f64 = 1e-12;

/// Utility `g_n` of a base station's time-average throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    /// `g(y) = slope * y`.
    Linear { slope: f64 },
    /// `g(y) = scale * ln(1 + y)`.
    Log { scale: f64 },
    /// Linear interpolation through `(x, g(x))` points. The first point must be at
    /// `x = 0`, the last at `x = 1`, and segment slopes must be non-increasing.
    PiecewiseLinearConcave { breakpoints: Vec<(f64, f64)> },
}

impl Default for UtilitySpec {
    fn default() -> Self {
        UtilitySpec::Linear { slope: 1.0 }
    }
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            UtilitySpec::Linear { slope } => {
                if !slope.is_finite() || *slope < 0.0 {
                    return Err(Error::Config(format!("linear utility slope {slope} must be finite and >= 0")));
                }
            }
            UtilitySpec::Log { scale } => {
                if !scale.is_finite() || *scale < 0.0 {
                    return Err(Error::Config(format!("log utility scale {scale} must be finite and >= 0")));
                }
            }
            UtilitySpec::PiecewiseLinearConcave { breakpoints } => {
                if breakpoints.len() < 2 {
                    return Err(Error::Config("piecewise utility needs at least two breakpoints".into()));
                }
                let first = breakpoints[0].0;
                let last = breakpoints[breakpoints.len() - 1].0;
                if first != 0.0 || last != 1.0 {
                    return Err(Error::Config("piecewise utility breakpoints must span [0, 1]".into()));
                }
                let slopes = self.segment_slopes();
                for w in breakpoints.windows(2) {
                    if !(w[1].0 > w[0].0) || !w[1].1.is_finite() {
                        return Err(Error::Config("piecewise utility breakpoints must be strictly increasing in x".into()));
                    }
                }
                for w in slopes.windows(2) {
                    if w[1] > w[0] + SLOPE_TOL {
                        return Err(Error::Config("piecewise utility slopes must be non-increasing".into()));
                    }
                }
                if slopes.iter().any(|s| *s < -SLOPE_TOL) {
                    return Err(Error::Config("piecewise utility must be non-decreasing".into()));
                }
            }
        }
        Ok(())
    }

    fn segment_slopes(&self) -> Vec<f64> {
        match self {
            UtilitySpec::PiecewiseLinearConcave { breakpoints } => breakpoints.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect(),
            UtilitySpec::Linear { slope } => vec![*slope],
            UtilitySpec::Log { .. } => Vec::new(),
        }
    }

    /// Bound `nu` on the right derivative of `g` over `[0, 1]`.
    pub fn nu(&self) -> f64 {
        match self {
            UtilitySpec::Linear { slope } => *slope,
            UtilitySpec::Log { scale } => *scale,
            UtilitySpec::PiecewiseLinearConcave { .. } => self.segment_slopes()[0].max(0.0),
        }
    }

    /// `g(y)` for `y >= 0`. Beyond 1 the natural continuation is used (last slope for
    /// piecewise utilities); metrics evaluate throughput measured in tasks per slot.
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            UtilitySpec::Linear { slope } => slope * y,
            UtilitySpec::Log { scale } => scale * y.ln_1p(),
            UtilitySpec::PiecewiseLinearConcave { breakpoints } => {
                let n = breakpoints.len();
                if y <= breakpoints[0].0 {
                    return breakpoints[0].1;
                }
                for w in breakpoints.windows(2) {
                    if y <= w[1].0 {
                        let t = (y - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                let (x0, g0) = breakpoints[n - 2];
                let (x1, g1) = breakpoints[n - 1];
                g1 + (y - x1) * (g1 - g0) / (x1 - x0)
            }
        }
    }

    /// Amount of `y` in `[0, 1]` on which the derivative is strictly above / at least `theta`.
    ///
    /// Returns `(low, high)`; the two differ only where `g` has a flat-derivative segment
    /// at exactly `theta`.
    pub(crate) fn demand_at(&self, theta: f64) -> (f64, f64) {
        match self {
            UtilitySpec::Linear { slope } => {
                if *slope > theta {
                    (1.0, 1.0)
                } else if *slope < theta {
                    (0.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            UtilitySpec::Log { scale } => {
                // g'(y) = scale / (1 + y)
                let y = if theta <= 0.0 { 1.0 } else { (scale / theta - 1.0).clamp(0.0, 1.0) };
                (y, y)
            }
            UtilitySpec::PiecewiseLinearConcave { breakpoints } => {
                let slopes = self.segment_slopes();
                let mut low = 0.0;
                let mut high = 0.0;
                for (k, s) in slopes.iter().enumerate() {
                    let len = breakpoints[k + 1].0 - breakpoints[k].0;
                    if *s > theta {
                        low += len;
                    }
                    if *s >= theta {
                        high += len;
                    }
                }
                (low, high)
            }
        }
    }

    /// Largest maximiser of `v * g_hat(gamma) - z * gamma` over `gamma` in `[-1, 1]`.
    pub(crate) fn argmax_penalised(&self, v: f64, z: f64) -> f64 {
        match self {
            UtilitySpec::Log { scale } => {
                if z > v * scale {
                    -1.0
                } else if z <= 0.0 {
                    1.0
                } else {
                    (v * scale / z - 1.0).clamp(0.0, 1.0)
                }
            }
            UtilitySpec::Linear { .. } | UtilitySpec::PiecewiseLinearConcave { .. } => {
                let xs: Vec<f64> = match self {
                    UtilitySpec::PiecewiseLinearConcave { breakpoints } => breakpoints.iter().map(|p| p.0).collect(),
                    _ => vec![0.0, 1.0],
                };
                let slopes = self.segment_slopes();
                let mut best = None;
                for (k, s) in slopes.iter().enumerate() {
                    if v * s - z >= 0.0 {
                        best = Some(xs[k + 1]);
                    }
                }
                best.unwrap_or(-1.0)
            }
        }
    }
}

/// Concave extension `g_hat(y) = g([y]_0^1) + nu * min(y, 0)` on `[-1, inf)`.
pub fn g_hat_eval(utility: &UtilitySpec, y: f64) -> Result<f64> {
    if !(y >= -1.0) {
        return Err(Error::Domain { what: "g_hat", value: y });
    }
    Ok(utility.eval(y.clamp(0.0, 1.0)) + utility.nu() * y.min(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn g_hat_examples() {
        let lin = UtilitySpec::Linear { slope: 1.0 };
        assert_abs_diff_eq!(g_hat_eval(&lin, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(g_hat_eval(&lin, -0.5).unwrap(), -0.5);
        let log = UtilitySpec::Log { scale: 1.0 };
        // definition evaluated by hand: g(min(1.5, 1)) + 1 * min(1.5, 0) = ln 2
        assert_abs_diff_eq!(g_hat_eval(&log, 1.5).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(g_hat_eval(&log, 1.5).unwrap(), 0.6931, epsilon = 1e-4);
    }

    #[test]
    fn g_hat_rejects_below_minus_one() {
        let lin = UtilitySpec::Linear { slope: 1.0 };
        assert!(matches!(g_hat_eval(&lin, -1.5), Err(Error::Domain { .. })));
        assert!(g_hat_eval(&lin, f64::NAN).is_err());
    }

    #[test]
    fn piecewise_validation() {
        let ok = UtilitySpec::PiecewiseLinearConcave { breakpoints: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.25)] };
        ok.validate().unwrap();
        assert_abs_diff_eq!(ok.nu(), 2.0);
        assert_abs_diff_eq!(ok.eval(0.75), 1.125);
        let convex = UtilitySpec::PiecewiseLinearConcave { breakpoints: vec![(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)] };
        assert!(convex.validate().is_err());
        let short = UtilitySpec::PiecewiseLinearConcave { breakpoints: vec![(0.0, 0.0), (0.5, 1.0)] };
        assert!(short.validate().is_err());
        assert!(UtilitySpec::Linear { slope: -1.0 }.validate().is_err());
    }

    #[test]
    fn penalised_argmax_matches_grid_search() {
        let cases = [
            (UtilitySpec::Linear { slope: 1.0 }, 10.0, 15.0),
            (UtilitySpec::Linear { slope: 1.0 }, 10.0, 3.0),
            (UtilitySpec::Log { scale: 1.0 }, 10.0, 8.0),
            (UtilitySpec::Log { scale: 2.0 }, 5.0, 30.0),
            (UtilitySpec::PiecewiseLinearConcave { breakpoints: vec![(0.0, 0.0), (0.4, 0.8), (1.0, 1.1)] }, 10.0, 4.0),
        ];
        for (u, v, z) in cases {
            let got = u.argmax_penalised(v, z);
            let f = |g: f64| v * g_hat_eval(&u, g).unwrap() - z * g;
            let best = (0..=2000).map(|k| -1.0 + k as f64 * 1e-3).map(f).fold(f64::MIN, f64::max);
            assert!(f(got) >= best - 1e-9, "{u:?} v={v} z={z}: got {got}");
        }
    }

    fn arb_utility() -> impl Strategy<Value = UtilitySpec> {
        prop_oneof![
            (0.0..5.0f64).prop_map(|slope| UtilitySpec::Linear { slope }),
            (0.0..5.0f64).prop_map(|scale| UtilitySpec::Log { scale }),
            (0.0..3.0f64, 0.0..1.0f64, 0.05..0.95f64).prop_map(|(s0, ratio, x)| {
                let s1 = s0 * ratio;
                UtilitySpec::PiecewiseLinearConcave { breakpoints: vec![(0.0, 0.0), (x, s0 * x), (1.0, s0 * x + s1 * (1.0 - x))] }
            }),
        ]
    }

    proptest! {
        #[test]
        fn g_hat_is_non_decreasing(u in arb_utility(), a in -1.0..3.0f64, b in -1.0..3.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(g_hat_eval(&u, lo).unwrap() <= g_hat_eval(&u, hi).unwrap() + 1e-12);
        }

        #[test]
        fn g_hat_agrees_with_g_on_unit_interval(u in arb_utility(), y in 0.0..=1.0f64) {
            prop_assert!((g_hat_eval(&u, y).unwrap() - u.eval(y)).abs() <= 1e-15);
        }

        #[test]
        fn g_hat_is_concave(u in arb_utility(), a in -1.0..3.0f64, b in -1.0..3.0f64, t in 0.0..=1.0f64) {
            let mid = t * a + (1.0 - t) * b;
            let lhs = g_hat_eval(&u, mid).unwrap();
            let rhs = t * g_hat_eval(&u, a).unwrap() + (1.0 - t) * g_hat_eval(&u, b).unwrap();
            prop_assert!(lhs >= rhs - 1e-9);
        }
    }
}
