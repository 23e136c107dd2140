//! Base stations, inter-station topology and the per-slot energy model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::UtilitySpec;

/// Per-BS parameters. Energies are joules per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub id: usize,
    /// (latitude, longitude) in decimal degrees.
    pub position: (f64, f64),
    /// CPU cycles available per slot.
    pub cpu_rate: f64,
    pub e_static: f64,
    pub e_active: f64,
    /// Time-average energy allowance per slot.
    pub e_budget: f64,
    pub utility: UtilitySpec,
}

impl StationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cpu_rate > 0.0) {
            return Err(Error::Config(format!("station {}: cpu_rate must be positive", self.id)));
        }
        if !(self.e_static < self.e_active) {
            return Err(Error::Config(format!("station {}: e_static ({}) must be below e_active ({})", self.id, self.e_static, self.e_active)));
        }
        if !(self.e_static <= self.e_budget) {
            return Err(Error::Config(format!("station {}: e_budget ({}) below e_static ({}) can never be met", self.id, self.e_budget, self.e_static)));
        }
        self.utility.validate()
    }

    /// Largest sustainable fraction of busy slots, `(E - e0) / (e1 - e0)`, capped at 1.
    pub fn service_cap(&self) -> f64 {
        ((self.e_budget - self.e_static) / (self.e_active - self.e_static)).min(1.0)
    }
}

/// `e1` when the station computes in the slot, `e0` otherwise.
pub fn energy_of_slot(cfg: &StationConfig, busy: bool) -> f64 {
    if busy {
        cfg.e_active
    } else {
        cfg.e_static
    }
}

/// Helper for the service-level identity: the long-run fraction of busy slots implied by
/// an average per-slot energy.
pub fn busy_fraction_from_energy(cfg: &StationConfig, mean_energy: f64) -> f64 {
    (mean_energy - cfg.e_static) / (cfg.e_active - cfg.e_static)
}

/// One-way trip time for a distance in meters, or `None` when the pair is too far apart
/// to cooperate. Boundaries are closed on the right: `[0,300]`, `(300,600]`, `(600,900]`
/// map to 3, 4 and 5 ms, rescaled to the slot length.
pub fn delta_from_distance(dist_m: f64, slot_ms: f64) -> Result<Option<u32>> {
    if !(dist_m >= 0.0) {
        return Err(Error::Domain { what: "inter-station distance", value: dist_m });
    }
    if !(slot_ms > 0.0) {
        return Err(Error::Domain { what: "slot length", value: slot_ms });
    }
    let ms = if dist_m <= 300.0 {
        3.0
    } else if dist_m <= 600.0 {
        4.0
    } else if dist_m <= 900.0 {
        5.0
    } else {
        return Ok(None);
    };
    Ok(Some((ms / slot_ms).ceil() as u32))
}

/// Great-circle distance in meters between two (lat, lon) points in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    const EARTH_RADIUS_M: f64 = 6_371_008.8;
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

/// Trip times and permitted offloading pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n_stations: usize,
    /// `delta[m][n]`: one-way trip time in slots.
    pub delta: Vec<Vec<u32>>,
    pub peer_mask: Vec<Vec<bool>>,
    pub delta_max: u32,
}

impl Topology {
    pub fn new(delta: Vec<Vec<u32>>, peer_mask: Vec<Vec<bool>>) -> Result<Self> {
        let n = delta.len();
        if peer_mask.len() != n || delta.iter().any(|r| r.len() != n) || peer_mask.iter().any(|r| r.len() != n) {
            return Err(Error::Config("topology matrices must be square and of equal size".into()));
        }
        let mut delta_max = 0;
        for m in 0..n {
            if !peer_mask[m][m] || delta[m][m] != 0 {
                return Err(Error::Config(format!("station {m} must be its own peer with zero trip time")));
            }
            for k in 0..n {
                if peer_mask[m][k] != peer_mask[k][m] {
                    return Err(Error::Config(format!("peer mask not symmetric at ({m},{k})")));
                }
                if peer_mask[m][k] {
                    if delta[m][k] != delta[k][m] {
                        return Err(Error::Config(format!("trip time not symmetric at ({m},{k})")));
                    }
                    delta_max = delta_max.max(delta[m][k]);
                }
            }
        }
        Ok(Topology { n_stations: n, delta, peer_mask, delta_max })
    }

    /// Every pair may cooperate with the same trip time.
    pub fn complete(n: usize, delta: u32) -> Self {
        let d = (0..n).map(|m| (0..n).map(|k| if m == k { 0 } else { delta }).collect()).collect();
        let mask = vec![vec![true; n]; n];
        Topology { n_stations: n, delta: d, peer_mask: mask, delta_max: if n > 1 { delta } else { 0 } }
    }

    /// Trip times from station positions via [`delta_from_distance`].
    pub fn from_positions(positions: &[(f64, f64)], slot_ms: f64) -> Result<Self> {
        let n = positions.len();
        let mut delta = vec![vec![0u32; n]; n];
        let mut mask = vec![vec![false; n]; n];
        for m in 0..n {
            mask[m][m] = true;
            for k in (m + 1)..n {
                if let Some(d) = delta_from_distance(haversine_m(positions[m], positions[k]), slot_ms)? {
                    delta[m][k] = d;
                    delta[k][m] = d;
                    mask[m][k] = true;
                    mask[k][m] = true;
                }
            }
        }
        Topology::new(delta, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station(e0: f64, e1: f64, budget: f64) -> StationConfig {
        StationConfig { id: 0, position: (0.0, 0.0), cpu_rate: 2e7, e_static: e0, e_active: e1, e_budget: budget, utility: UtilitySpec::default() }
    }

    #[test]
    fn delta_table() {
        assert_eq!(delta_from_distance(250.0, 1.0).unwrap(), Some(3));
        assert_eq!(delta_from_distance(300.0, 1.0).unwrap(), Some(3));
        assert_eq!(delta_from_distance(300.5, 1.0).unwrap(), Some(4));
        assert_eq!(delta_from_distance(600.0, 1.0).unwrap(), Some(4));
        assert_eq!(delta_from_distance(900.0, 1.0).unwrap(), Some(5));
        assert_eq!(delta_from_distance(950.0, 1.0).unwrap(), None);
        assert_eq!(delta_from_distance(250.0, 0.5).unwrap(), Some(6));
        assert!(delta_from_distance(-1.0, 1.0).is_err());
    }

    #[test]
    fn energy_examples() {
        // 10 Wh per hour over a 1 ms slot, plus 8.2 nJ x 2e7 cycles when busy.
        let e1: f64 = 0.01 + 8.2e-9 * 2e7;
        assert!((e1 - 0.174).abs() < 1e-12);
        let s = station(0.01, e1, 0.05);
        assert_eq!(energy_of_slot(&s, false), 0.01);
        assert_eq!(energy_of_slot(&s, true), e1);
        let flat = StationConfig { e_active: 0.02, ..station(0.02, 0.03, 0.05) };
        assert_eq!(energy_of_slot(&flat, true), energy_of_slot(&flat, false));
    }

    #[test]
    fn service_cap_matches_mean_energy_of_traces() {
        let s = station(0.01, 0.174, 0.05);
        let cap = s.service_cap();
        // a periodic trace that is busy on a fraction `cap` of slots spends exactly E on average
        let slots = 1_000_000usize;
        let busy = (cap * slots as f64).round() as usize;
        let total: f64 = (0..slots).map(|t| energy_of_slot(&s, t < busy)).sum();
        let mean = total / slots as f64;
        assert!((mean - s.e_budget).abs() < 1e-6);
        assert!((busy_fraction_from_energy(&s, mean) - cap).abs() < 1e-6);
    }

    #[test]
    fn station_validation() {
        assert!(station(0.01, 0.174, 0.05).validate().is_ok());
        assert!(station(0.2, 0.174, 0.25).validate().is_err());
        assert!(station(0.01, 0.174, 0.005).validate().is_err());
    }

    #[test]
    fn topology_from_positions() {
        // ~250 m apart along a meridian
        let a = (-37.8160, 144.9600);
        let b = (-37.8160 - 250.0 / 111_195.0, 144.9600);
        let far = (-37.8160 + 1200.0 / 111_195.0, 144.9600);
        let t = Topology::from_positions(&[a, b, far], 1.0).unwrap();
        assert_eq!(t.delta[0][1], 3);
        assert_eq!(t.delta[1][0], 3);
        assert!(!t.peer_mask[0][2]);
        assert_eq!(t.delta_max, 3);
    }
}
