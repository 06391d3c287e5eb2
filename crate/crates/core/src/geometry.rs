//! Walker constellations on circular orbits, inter-satellite visibility and
//! ground-cluster service assignment.
//!
//! Positions are geocentric inertial, in kilometres. Ground clusters rotate
//! with the Earth, so the satellite serving a given cluster changes between
//! communication rounds even though the constellation itself is periodic.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Mean spherical Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Standard gravitational parameter of the Earth.
pub const MU_EARTH_KM3_S2: f64 = 398_600.441_8;
/// Sidereal rotation period of the Earth.
pub const SIDEREAL_DAY_S: f64 = 86_164.0;
/// Geostationary altitude above the mean radius.
pub const GEO_ALTITUDE_KM: f64 = 35_786.0;
/// Earth-fixed longitudes of the GEO relays (three, evenly spaced on the equator).
pub const GEO_LONGITUDES_DEG: [f64; 3] = [0.0, 120.0, 240.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid constellation: {0}")]
    InvalidSpec(String),
    #[error("propagation time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("cluster aggregation weights sum to {0}, expected 1")]
    WeightSum(f64),
}

/// Walker pattern: Star spreads ascending nodes over 180°, Delta over 360°.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkerPattern {
    Star,
    Delta,
}

impl WalkerPattern {
    pub fn node_spread_deg(self) -> f64 {
        match self {
            WalkerPattern::Star => 180.0,
            WalkerPattern::Delta => 360.0,
        }
    }
}

impl fmt::Display for WalkerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalkerPattern::Star => f.write_str("Walker-Star"),
            WalkerPattern::Delta => f.write_str("Walker-Delta"),
        }
    }
}

/// One circular-orbit shell in Walker T/P/F notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec<T> {
    pub num_orbits: u32,
    pub sats_per_orbit: u32,
    pub altitude_km: T,
    pub inclination_deg: T,
    pub phasing_factor: u32,
    pub pattern: WalkerPattern,
}

impl<T: Real> ConstellationSpec<T> {
    /// Builds a `total/planes/phasing` Walker shell.
    pub fn walker(
        total_sats: u32,
        num_orbits: u32,
        phasing_factor: u32,
        altitude_km: T,
        inclination_deg: T,
        pattern: WalkerPattern,
    ) -> Result<Self, GeometryError> {
        if num_orbits == 0 || total_sats == 0 {
            return Err(GeometryError::InvalidSpec(
                "satellite and orbit counts must be positive".into(),
            ));
        }
        if !total_sats.is_multiple_of(num_orbits) {
            return Err(GeometryError::InvalidSpec(format!(
                "{total_sats} satellites cannot be split evenly over {num_orbits} orbits"
            )));
        }
        let spec = Self {
            num_orbits,
            sats_per_orbit: total_sats / num_orbits,
            altitude_km,
            inclination_deg,
            phasing_factor,
            pattern,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.num_orbits == 0 || self.sats_per_orbit == 0 {
            return Err(GeometryError::InvalidSpec(
                "satellite and orbit counts must be positive".into(),
            ));
        }
        if !(self.altitude_km > T::zero()) || !self.altitude_km.is_finite() {
            return Err(GeometryError::InvalidSpec(format!(
                "altitude_km must be positive, got {}",
                self.altitude_km
            )));
        }
        let inc = self.inclination_deg;
        if !(inc >= T::zero() && inc <= T::lit(180.0)) {
            return Err(GeometryError::InvalidSpec(format!(
                "inclination_deg must lie in [0, 180], got {inc}"
            )));
        }
        if self.phasing_factor >= self.num_orbits {
            return Err(GeometryError::InvalidSpec(format!(
                "phasing_factor must be below num_orbits ({}), got {}",
                self.num_orbits, self.phasing_factor
            )));
        }
        Ok(())
    }

    pub fn total_sats(&self) -> usize {
        self.num_orbits as usize * self.sats_per_orbit as usize
    }

    /// Geocentric orbit radius `R_E + h`.
    pub fn orbit_radius_km(&self) -> T {
        T::lit(EARTH_RADIUS_KM) + self.altitude_km
    }

    pub fn orbital_period_s(&self) -> T {
        let a = self.orbit_radius_km();
        T::lit(2.0 * PI) * (a * a * a / T::lit(MU_EARTH_KM3_S2)).sqrt()
    }

    /// Dense index of a satellite; ephemerides are emitted in this order.
    pub fn index_of(&self, id: SatId) -> usize {
        id.orbit as usize * self.sats_per_orbit as usize + id.slot as usize
    }

    pub fn id_at(&self, index: usize) -> SatId {
        let s = self.sats_per_orbit as usize;
        SatId {
            orbit: (index / s) as u32,
            slot: (index % s) as u32,
        }
    }

    /// Short `T/P/F Pattern` label, e.g. `80/4/1 Walker-Delta`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{} {}",
            self.total_sats(),
            self.num_orbits,
            self.phasing_factor,
            self.pattern
        )
    }
}

/// Satellite identity `(orbit, slot)`; ordering is lexicographic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatId {
    pub orbit: u32,
    pub slot: u32,
}

impl fmt::Display for SatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}.{}", self.orbit, self.slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ephemeris<T> {
    pub id: SatId,
    pub position_km: [T; 3],
    pub epoch_s: T,
}

/// Positions of every satellite at `t` seconds after the scenario start.
///
/// Uses `Rz(node) · Rx(inclination) · (r cos u, r sin u, 0)` where `u` is the
/// argument of latitude. Satellites in a plane are evenly spaced in `u`; plane
/// `n` carries an extra phase of `360° · F · n / T`.
pub fn propagate<T: Real>(spec: &ConstellationSpec<T>, t: T) -> Result<Vec<Ephemeris<T>>, GeometryError> {
    spec.validate()?;
    if t < T::zero() {
        return Err(GeometryError::NegativeTime(t.as_f64()));
    }
    let two_pi = T::lit(2.0 * PI);
    let r = spec.orbit_radius_km();
    let mean_motion = (T::lit(MU_EARTH_KM3_S2) / (r * r * r)).sqrt();
    let planes = T::from_u32(spec.num_orbits).unwrap();
    let per_plane = T::from_u32(spec.sats_per_orbit).unwrap();
    let total = planes * per_plane;
    let spread = T::lit(spec.pattern.node_spread_deg().to_radians());
    let inc = spec.inclination_deg.to_radians();
    let (sin_i, cos_i) = inc.sin_cos();
    let phase_step = two_pi * T::from_u32(spec.phasing_factor).unwrap() / total;

    let mut out = Vec::with_capacity(spec.total_sats());
    for n in 0..spec.num_orbits {
        let nf = T::from_u32(n).unwrap();
        let node = spread * nf / planes;
        let (sin_o, cos_o) = node.sin_cos();
        for k in 0..spec.sats_per_orbit {
            let kf = T::from_u32(k).unwrap();
            let u = two_pi * kf / per_plane + phase_step * nf + mean_motion * t;
            let (sin_u, cos_u) = u.sin_cos();
            let x = r * (cos_o * cos_u - sin_o * cos_i * sin_u);
            let y = r * (sin_o * cos_u + cos_o * cos_i * sin_u);
            let z = r * sin_i * sin_u;
            out.push(Ephemeris {
                id: SatId { orbit: n, slot: k },
                position_km: [x, y, z],
                epoch_s: t,
            });
        }
    }
    Ok(out)
}

/// Maximum line-of-sight range `2·√((R_E + h)² − R_E²)` grazing the Earth surface.
pub fn comm_radius<T: Real>(altitude_km: T) -> T {
    let re = T::lit(EARTH_RADIUS_KM);
    let r = re + altitude_km;
    T::lit(2.0) * (r * r - re * re).max(T::zero()).sqrt()
}

pub fn distance_km<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn ring_adjacent(i: u32, j: u32, ring: u32) -> bool {
    let d = i.abs_diff(j);
    d == 1 || (ring > 1 && d == ring - 1)
}

/// Closest satellite of `orbit` within the communication range of `from`;
/// ties resolve to the lower slot.
pub fn nearest_in_orbit<T: Real>(
    from: &Ephemeris<T>,
    orbit: u32,
    constellation: &[Ephemeris<T>],
    spec: &ConstellationSpec<T>,
) -> Option<usize> {
    let range = comm_radius(spec.altitude_km);
    let s = spec.sats_per_orbit as usize;
    let start = orbit as usize * s;
    let mut best: Option<(usize, T)> = None;
    for (idx, e) in constellation.iter().enumerate().skip(start).take(s) {
        let d = distance_km(&from.position_km, &e.position_km);
        if d > range {
            continue;
        }
        match best {
            Some((_, bd)) if bd <= d => {}
            _ => best = Some((idx, d)),
        }
    }
    best.map(|(i, _)| i)
}

/// ISL feasibility between two distinct satellites of the same snapshot.
///
/// Same orbit: only ring neighbours. Different orbits: within both
/// communication radii and `b` is the nearest in-range satellite of its
/// orbit as seen from `a`.
pub fn isl_feasible<T: Real>(
    a: &Ephemeris<T>,
    b: &Ephemeris<T>,
    constellation: &[Ephemeris<T>],
    spec: &ConstellationSpec<T>,
) -> bool {
    if a.id == b.id {
        return false;
    }
    if a.id.orbit == b.id.orbit {
        return ring_adjacent(a.id.slot, b.id.slot, spec.sats_per_orbit);
    }
    if !within_range(a, b, spec) {
        return false;
    }
    nearest_in_orbit(a, b.id.orbit, constellation, spec) == Some(spec.index_of(b.id))
}

/// Distance predicate alone (symmetric).
pub fn within_range<T: Real>(a: &Ephemeris<T>, b: &Ephemeris<T>, spec: &ConstellationSpec<T>) -> bool {
    // single shell: both comm radii coincide
    distance_km(&a.position_km, &b.position_km) <= comm_radius(spec.altitude_km)
}

/// Unordered feasible ISL pairs `(i, j)`, `i < j`, by dense index, sorted.
///
/// A pair is kept when the link is feasible from either endpoint; links are
/// bidirectional.
pub fn feasible_links<T: Real>(constellation: &[Ephemeris<T>], spec: &ConstellationSpec<T>) -> Vec<(usize, usize)> {
    let s = spec.sats_per_orbit;
    let mut links = std::collections::BTreeSet::new();
    for (i, e) in constellation.iter().enumerate() {
        if s > 1 {
            let next = SatId {
                orbit: e.id.orbit,
                slot: (e.id.slot + 1) % s,
            };
            let j = spec.index_of(next);
            if i != j {
                links.insert((i.min(j), i.max(j)));
            }
        }
        for orbit in 0..spec.num_orbits {
            if orbit == e.id.orbit {
                continue;
            }
            if let Some(j) = nearest_in_orbit(e, orbit, constellation, spec) {
                links.insert((i.min(j), i.max(j)));
            }
        }
    }
    links.into_iter().collect()
}

/// Ground coverage cell (a logical location) holding one or more devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundCluster<T> {
    pub id: usize,
    pub lat_deg: T,
    pub lon_deg: T,
    /// Aggregation weight of each device in the cluster.
    pub device_weights: Vec<T>,
}

impl<T: Real> GroundCluster<T> {
    /// Inertial unit vector of the cluster's surface point at `t`.
    pub fn direction_at(&self, t: T, earth_rotation: bool) -> [T; 3] {
        let lat = self.lat_deg.to_radians();
        let lon = if earth_rotation {
            self.lon_deg.to_radians() + T::lit(2.0 * PI / SIDEREAL_DAY_S) * t
        } else {
            self.lon_deg.to_radians()
        };
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        [cl * co, cl * so, sl]
    }
}

/// Checks that device weights over all clusters sum to one (within 1e-12).
pub fn validate_cluster_weights<T: Real>(clusters: &[GroundCluster<T>]) -> Result<(), GeometryError> {
    let total: f64 = clusters
        .iter()
        .flat_map(|c| c.device_weights.iter())
        .map(|w| w.as_f64())
        .sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(GeometryError::WeightSum(total));
    }
    Ok(())
}

/// Seeded clusters, one device each, uniformly spread in latitude band [-60°, 70°].
pub fn random_clusters<T: Real, R: Rng>(count: usize, rng: &mut R) -> Vec<GroundCluster<T>> {
    let w = 1.0 / count as f64;
    (0..count)
        .map(|id| {
            // area-uniform in the band
            let (s0, s1) = ((-60f64).to_radians().sin(), 70f64.to_radians().sin());
            let lat = rng.gen_range(s0..s1).asin().to_degrees();
            let lon = rng.gen_range(-180.0..180.0);
            GroundCluster {
                id,
                lat_deg: T::lit(lat),
                lon_deg: T::lit(lon),
                device_weights: vec![T::lit(w)],
            }
        })
        .collect()
}

/// Satellite whose sub-satellite point is closest (great-circle) to the
/// cluster at the ephemerides' epoch; ties go to the lowest `(orbit, slot)`.
pub fn serving_satellite<T: Real>(
    cluster: &GroundCluster<T>,
    constellation: &[Ephemeris<T>],
    earth_rotation: bool,
) -> Option<SatId> {
    let first = constellation.first()?;
    let g = cluster.direction_at(first.epoch_s, earth_rotation);
    let mut best: Option<(SatId, T)> = None;
    for e in constellation {
        let p = e.position_km;
        let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        // larger cosine = smaller central angle
        let cos = (g[0] * p[0] + g[1] * p[1] + g[2] * p[2]) / norm;
        match best {
            Some((id, bc)) if bc > cos || (bc == cos && id < e.id) => {}
            _ => best = Some((e.id, cos)),
        }
    }
    best.map(|(id, _)| id)
}

/// Inertial positions of the GEO relays at `t`.
pub fn geo_positions<T: Real>(t: T) -> [[T; 3]; 3] {
    let r = T::lit(EARTH_RADIUS_KM + GEO_ALTITUDE_KM);
    let rot = T::lit(2.0 * PI / SIDEREAL_DAY_S) * t;
    GEO_LONGITUDES_DEG.map(|lon| {
        let a = T::lit(lon.to_radians()) + rot;
        [r * a.cos(), r * a.sin(), T::zero()]
    })
}

/// Slant range from a LEO position to the closest GEO relay.
pub fn geo_slant_range_km<T: Real>(position_km: &[T; 3], t: T) -> T {
    geo_positions(t)
        .iter()
        .map(|g| distance_km(position_km, g))
        .fold(T::infinity(), T::min)
}

/// Writes `t_s,orbit,slot,x_km,y_km,z_km` rows.
pub fn write_ephemeris_csv<T: Real, W: Write>(out: W, rows: &[Ephemeris<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "orbit", "slot", "x_km", "y_km", "z_km"])?;
    for e in rows {
        w.write_record(&[
            e.epoch_s.to_string(),
            e.id.orbit.to_string(),
            e.id.slot.to_string(),
            e.position_km[0].to_string(),
            e.position_km[1].to_string(),
            e.position_km[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
