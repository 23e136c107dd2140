//! Station and user-group locations.
//!
//! CSV with header `id,kind,lat,lon`; `kind` is `bs` or `user` in any letter case and
//! coordinates are WGS-84 decimal degrees. Rows outside the bounding box are skipped.
//!
//! Synthetic layouts place stations uniformly in the box. Each user group picks a
//! station uniformly at random and sits at a uniform point of the disc of radius
//! [`CLUSTER_RADIUS_M`] around it, clipped to the box, so every group has a station in
//! reach of the default 100 m attach radius.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CLUSTER_RADIUS_M: f64 = 80.0;
const METERS_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox { lat_min: -37.818166, lat_max: -37.814257, lon_min: 144.958295, lon_max: 144.966824 }
    }
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationKind {
    Bs,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub kind: LocationKind,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocationSet {
    pub stations: Vec<(f64, f64)>,
    pub groups: Vec<(f64, f64)>,
}

pub fn location_set(rows: &[Location]) -> LocationSet {
    let mut set = LocationSet::default();
    for r in rows {
        match r.kind {
            LocationKind::Bs => set.stations.push((r.lat, r.lon)),
            LocationKind::User => set.groups.push((r.lat, r.lon)),
        }
    }
    set
}

pub fn load_locations(path: &Path, bbox: &BoundingBox) -> Result<LocationSet, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    parse_locations(file, path, bbox)
}

pub fn parse_locations<R: Read>(reader: R, path: &Path, bbox: &BoundingBox) -> Result<LocationSet, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let bad = |line: u64, msg: String| CliError::Dataset { path: path.to_path_buf(), line, msg };
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_ascii_lowercase).collect();
    if header != ["id", "kind", "lat", "lon"] {
        return Err(bad(1, format!("expected header id,kind,lat,lon, found {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let kind = match record[1].to_ascii_lowercase().as_str() {
            "bs" => LocationKind::Bs,
            "user" => LocationKind::User,
            other => return Err(bad(line, format!("unknown kind `{other}`, expected bs or user"))),
        };
        let coord = |i: usize, name: &str| record[i].parse::<f64>().map_err(|_| bad(line, format!("{name} `{}` is not a number", &record[i])));
        let (lat, lon) = (coord(2, "lat")?, coord(3, "lon")?);
        if bbox.contains(lat, lon) {
            rows.push(Location { id: record[0].to_string(), kind, lat, lon });
        }
    }
    let set = location_set(&rows);
    if set.stations.is_empty() {
        return Err(CliError::Layout("no stations in bounding box".into()));
    }
    Ok(set)
}

pub fn write_locations<W: Write>(rows: &[Location], writer: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::Io { path: "<output>".into(), source: e })?;
    Ok(())
}

/// A reproducible layout with `n_stations` stations and `n_groups` clustered user groups.
pub fn generate_locations(seed: u64, n_stations: usize, n_groups: usize, bbox: &BoundingBox) -> Vec<Location> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_stations + n_groups);
    for i in 0..n_stations {
        let lat = rng.random_range(bbox.lat_min..=bbox.lat_max);
        let lon = rng.random_range(bbox.lon_min..=bbox.lon_max);
        rows.push(Location { id: format!("bs{i}"), kind: LocationKind::Bs, lat, lon });
    }
    for i in 0..n_groups {
        let (lat0, lon0) = {
            let s = &rows[rng.random_range(0..n_stations)];
            (s.lat, s.lon)
        };
        let r = CLUSTER_RADIUS_M * rng.random::<f64>().sqrt();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let lat = (lat0 + r * angle.sin() / METERS_PER_DEGREE).clamp(bbox.lat_min, bbox.lat_max);
        let lon = (lon0 + r * angle.cos() / (METERS_PER_DEGREE * lat0.to_radians().cos())).clamp(bbox.lon_min, bbox.lon_max);
        rows.push(Location { id: format!("user{i}"), kind: LocationKind::User, lat, lon });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use mec_core::model::{delta_from_distance, haversine_m};
    use mec_core::Topology;

    fn parse(text: &str) -> Result<LocationSet, CliError> {
        parse_locations(text.as_bytes(), Path::new("test.csv"), &BoundingBox::default())
    }

    #[test]
    fn mixed_case_kinds_are_accepted() {
        let set = parse("id,kind,lat,lon\na,Bs,-37.816,144.96\nb,USER,-37.816,144.961\n").unwrap();
        assert_eq!(set.stations.len(), 1);
        assert_eq!(set.groups.len(), 1);
    }

    #[test]
    fn empty_after_filtering() {
        let err = parse("id,kind,lat,lon\na,bs,0,0\n").unwrap_err();
        assert_eq!(err.to_string(), "no stations in bounding box");
    }

    #[test]
    fn malformed_rows_report_their_line() {
        match parse("id,kind,lat,lon\na,bs,-37.816,144.96\nb,bs,north,144.96\n") {
            Err(CliError::Dataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("id,kind,lat,lon\na,tower,-37.816,144.96\n") {
            Err(CliError::Dataset { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("tower"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stations_250_m_apart_are_three_slots_apart() {
        // 250 m due north
        let a = (-37.8170, 144.9600);
        let b = (a.0 + 250.0 / 111_194.93, a.1);
        let d = haversine_m(a, b);
        assert!((d - 250.0).abs() < 0.5, "{d}");
        assert_eq!(delta_from_distance(d, 1.0).unwrap(), Some(3));
        let topo = Topology::from_positions(&[a, b], 1.0).unwrap();
        assert_eq!(topo.delta, vec![vec![0, 3], vec![3, 0]]);
    }

    #[test]
    fn generated_layout_is_reproducible_and_reachable() {
        let bbox = BoundingBox::default();
        let rows = generate_locations(7, 36, 126, &bbox);
        assert_eq!(rows, generate_locations(7, 36, 126, &bbox));
        let set = location_set(&rows);
        assert_eq!((set.stations.len(), set.groups.len()), (36, 126));
        for g in &set.groups {
            assert!(bbox.contains(g.0, g.1));
            assert!(set.stations.iter().any(|s| haversine_m(*s, *g) <= 100.0));
        }
        let mut buf = Vec::new();
        write_locations(&rows, &mut buf).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), set);
    }
}
