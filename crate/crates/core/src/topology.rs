//! Per-slot topology snapshots with per-frame link weights.
//!
//! A snapshot fixes the edge set at the slot start; weights (energy, outage)
//! are re-evaluated at the midpoint of each frame. All LEO satellites share
//! one GEO sink node, reachable from every LEO.

use std::io::Write;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{self, ChannelError, LinkParams};
use crate::geometry::{self, ConstellationSpec, GeometryError, SatId};
use crate::routing::{Digraph, OrbitLayout};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("expected {expected} transmit powers, got {got}")]
    PowerCount { expected: usize, got: usize },
    #[error("rho must lie in [0, 1], got {0}")]
    Rho(f64),
    #[error("invalid time structure: {0}")]
    Time(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Leo(SatId),
    Geo,
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeKind::Leo(id) => id.fmt(f),
            NodeKind::Geo => f.write_str("GEO"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    IntraOrbit,
    InterOrbit,
    /// LEO to the GEO sink.
    Uplink,
}

impl LinkKind {
    pub fn is_isl(self) -> bool {
        !matches!(self, LinkKind::Uplink)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Link {
    pub src: usize,
    pub dst: usize,
    pub kind: LinkKind,
}

/// Period `P` split into `M` slots of `U` frames each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeStructure {
    pub period_s: f64,
    pub slots_per_period: u32,
    pub frames_per_slot: u32,
}

impl TimeStructure {
    pub fn new(period_s: f64, slots_per_period: u32, frames_per_slot: u32) -> Result<Self, TopologyError> {
        if !(period_s > 0.0) || slots_per_period == 0 || frames_per_slot == 0 {
            return Err(TopologyError::Time(format!(
                "period {period_s} s, {slots_per_period} slots, {frames_per_slot} frames"
            )));
        }
        Ok(Self {
            period_s,
            slots_per_period,
            frames_per_slot,
        })
    }

    /// Picks `M = round(P / slot_len)` so the slot length is as close to the
    /// requested one as the period allows.
    pub fn from_slot_length(period_s: f64, slot_len_s: f64, frames_per_slot: u32) -> Result<Self, TopologyError> {
        if !(slot_len_s > 0.0) {
            return Err(TopologyError::Time(format!("slot length {slot_len_s} s")));
        }
        let m = (period_s / slot_len_s).round().max(1.0) as u32;
        Self::new(period_s, m, frames_per_slot)
    }

    pub fn slot_len_s(&self) -> f64 {
        self.period_s / self.slots_per_period as f64
    }

    pub fn frame_len_s(&self) -> f64 {
        self.slot_len_s() / self.frames_per_slot as f64
    }

    pub fn slot_start_s(&self, slot: u32) -> f64 {
        slot as f64 * self.slot_len_s()
    }

    /// Midpoint of frame `u` in a slot starting at `slot_start`.
    pub fn frame_mid_s(&self, slot_start: f64, frame: u32) -> f64 {
        slot_start + (frame as f64 + 0.5) * self.frame_len_s()
    }
}

/// Link quantities of every edge in one frame, indexed like `SnapshotGraph::links`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameWeights<T> {
    pub distance_km: Vec<T>,
    pub energy_j: Vec<T>,
    pub outage_prob: Vec<T>,
    /// Routing weight: energy, or the outage-adjusted mix after [`SnapshotGraph::robust_weights`].
    pub weight: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGraph<T> {
    pub slot_index: u32,
    pub t_start_s: T,
    pub nodes: Vec<NodeKind>,
    pub links: Vec<Link>,
    pub frames: Vec<FrameWeights<T>>,
}

/// Per-satellite transmit powers drawn uniformly from the configured range.
pub fn draw_transmit_powers<T: Real, R: Rng>(count: usize, params: &LinkParams<T>, rng: &mut R) -> Vec<T> {
    let (lo, hi) = (params.p_t_min_w.as_f64(), params.p_t_max_w.as_f64());
    (0..count)
        .map(|_| T::lit(if hi > lo { rng.gen_range(lo..hi) } else { lo }))
        .collect()
}

/// Snapshot of slot `slot_index` starting at `t_slot_start`.
///
/// Edges come from ISL feasibility at `t_slot_start` (both directions per
/// link) plus an uplink from every LEO to GEO. Frame weights are the
/// per-frame transmission energy at the frame midpoint. Uplinks carry zero
/// outage probability.
pub fn build_snapshot<T: Real>(
    spec: &ConstellationSpec<T>,
    params: &LinkParams<T>,
    powers_w: &[T],
    time: &TimeStructure,
    slot_index: u32,
    t_slot_start: T,
) -> Result<SnapshotGraph<T>, TopologyError> {
    params.validate()?;
    let n_leo = spec.total_sats();
    if powers_w.len() != n_leo {
        return Err(TopologyError::PowerCount {
            expected: n_leo,
            got: powers_w.len(),
        });
    }
    let eph = geometry::propagate(spec, t_slot_start)?;
    let geo = n_leo;
    let mut nodes: Vec<NodeKind> = eph.iter().map(|e| NodeKind::Leo(e.id)).collect();
    nodes.push(NodeKind::Geo);

    let mut links = Vec::new();
    for (i, j) in geometry::feasible_links(&eph, spec) {
        let kind = if eph[i].id.orbit == eph[j].id.orbit {
            LinkKind::IntraOrbit
        } else {
            LinkKind::InterOrbit
        };
        links.push(Link { src: i, dst: j, kind });
        links.push(Link { src: j, dst: i, kind });
    }
    for i in 0..n_leo {
        links.push(Link {
            src: i,
            dst: geo,
            kind: LinkKind::Uplink,
        });
    }
    links.sort_by_key(|l| (l.src, l.dst));

    let sigma2 = channel::noise_power(params);
    let mut frames = Vec::with_capacity(time.frames_per_slot as usize);
    let mut feasible = vec![true; links.len()];
    for u in 0..time.frames_per_slot {
        let t = T::lit(time.frame_mid_s(t_slot_start.as_f64(), u));
        let pos = geometry::propagate(spec, t)?;
        let mut fw = FrameWeights {
            distance_km: Vec::with_capacity(links.len()),
            energy_j: Vec::with_capacity(links.len()),
            outage_prob: Vec::with_capacity(links.len()),
            weight: Vec::new(),
        };
        for (k, l) in links.iter().enumerate() {
            let p_t = powers_w[l.src];
            let d = match l.kind {
                LinkKind::Uplink => geometry::geo_slant_range_km(&pos[l.src].position_km, t),
                _ => geometry::distance_km(&pos[l.src].position_km, &pos[l.dst].position_km),
            };
            let p_r = channel::received_power(p_t, d, params)?;
            let rate = channel::achievable_rate(p_r, sigma2, params);
            let energy = match channel::frame_energy(p_t, rate, params) {
                Ok(e) if e.is_finite() => e,
                _ => {
                    feasible[k] = false;
                    T::infinity()
                }
            };
            let outage = match l.kind {
                LinkKind::Uplink => T::zero(),
                _ => channel::outage_probability(p_t, d, params)?,
            };
            fw.distance_km.push(d);
            fw.energy_j.push(energy);
            fw.outage_prob.push(outage);
        }
        fw.weight = fw.energy_j.clone();
        frames.push(fw);
    }

    let mut snap = SnapshotGraph {
        slot_index,
        t_start_s: t_slot_start,
        nodes,
        links,
        frames,
    };
    if feasible.iter().any(|f| !f) {
        snap = snap.retain_links(|k| feasible[k]);
    }
    Ok(snap)
}

impl<T: Real> SnapshotGraph<T> {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn geo_index(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_of(&self, id: SatId) -> Option<usize> {
        self.nodes.binary_search(&NodeKind::Leo(id)).ok()
    }

    fn retain_links(self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.links.len()).filter(|&k| keep(k)).collect();
        let pick = |v: &Vec<T>| idx.iter().map(|&k| v[k]).collect::<Vec<T>>();
        let frames = self
            .frames
            .iter()
            .map(|f| FrameWeights {
                distance_km: pick(&f.distance_km),
                energy_j: pick(&f.energy_j),
                outage_prob: pick(&f.outage_prob),
                weight: pick(&f.weight),
            })
            .collect();
        Self {
            links: idx.iter().map(|&k| self.links[k]).collect(),
            frames,
            ..self
        }
    }

    /// Routing digraph of frame `u`; edge `k` is `links[k]`.
    pub fn frame_graph(&self, frame: usize) -> Digraph<T> {
        let w = &self.frames[frame].weight;
        Digraph::from_edges(
            self.nodes.len(),
            self.links.iter().zip(w).map(|(l, &w)| (l.src, l.dst, w)),
        )
    }

    /// Same as [`Self::frame_graph`] but weighted by energy regardless of re-weighting.
    pub fn energy_graph(&self, frame: usize) -> Digraph<T> {
        let w = &self.frames[frame].energy_j;
        Digraph::from_edges(
            self.nodes.len(),
            self.links.iter().zip(w).map(|(l, &w)| (l.src, l.dst, w)),
        )
    }

    /// Mixes energy with the log-survival penalty:
    /// `ρ·w + (1-ρ)·ln(1/(1-P_out))`.
    ///
    /// Links in certain outage (`P_out = 1` in any frame) are removed; their
    /// count is returned with the new graph.
    pub fn robust_weights(&self, rho: T) -> Result<(Self, usize), TopologyError> {
        if !(rho >= T::zero() && rho <= T::one()) {
            return Err(TopologyError::Rho(rho.as_f64()));
        }
        let dead: Vec<bool> = (0..self.links.len())
            .map(|k| self.frames.iter().any(|f| f.outage_prob[k] >= T::one()))
            .collect();
        let dropped = dead.iter().filter(|d| **d).count();
        let mut out = self.clone();
        for f in &mut out.frames {
            for k in 0..f.weight.len() {
                let penalty = -(-f.outage_prob[k]).ln_1p();
                f.weight[k] = rho * f.energy_j[k] + (T::one() - rho) * penalty;
            }
        }
        if dropped > 0 {
            out = out.retain_links(|k| !dead[k]);
        }
        Ok((out, dropped))
    }

    /// Ring order of each orbit plus the GEO sink, for the intra-orbit baseline.
    pub fn orbit_layout(&self) -> OrbitLayout {
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Leo(id) = n {
                let o = id.orbit as usize;
                if orbits.len() <= o {
                    orbits.resize(o + 1, Vec::new());
                }
                orbits[o].push(i);
            }
        }
        OrbitLayout {
            orbits,
            geo: self.geo_index(),
        }
    }

    /// Index of the link `src -> dst`.
    pub fn link_index(&self, src: usize, dst: usize) -> Option<usize> {
        self.links.binary_search_by_key(&(src, dst), |l| (l.src, l.dst)).ok()
    }
}

fn node_columns(n: NodeKind) -> (String, String) {
    match n {
        NodeKind::Leo(id) => (id.orbit.to_string(), id.slot.to_string()),
        NodeKind::Geo => ("geo".into(), String::new()),
    }
}

/// Writes the edge list of each snapshot and frame as CSV.
pub fn write_snapshot_csv<T: Real, W: Write>(out: W, snapshots: &[SnapshotGraph<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot",
        "frame",
        "src_orbit",
        "src_slot",
        "dst_orbit",
        "dst_slot",
        "distance_km",
        "weight_j",
        "outage_prob",
    ])?;
    for s in snapshots {
        for (u, f) in s.frames.iter().enumerate() {
            for (k, l) in s.links.iter().enumerate() {
                let (so, ss) = node_columns(s.nodes[l.src]);
                let (dso, dss) = node_columns(s.nodes[l.dst]);
                w.write_record(&[
                    s.slot_index.to_string(),
                    u.to_string(),
                    so,
                    ss,
                    dso,
                    dss,
                    f.distance_km[k].to_string(),
                    format!("{:e}", f.weight[k].as_f64()),
                    f.outage_prob[k].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WalkerPattern;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ConstellationSpec<f64>, LinkParams<f64>, Vec<f64>, TimeStructure) {
        let spec = ConstellationSpec::walker(80, 4, 1, 500.0, 45.0, WalkerPattern::Delta).unwrap();
        let params = LinkParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let powers = draw_transmit_powers(80, &params, &mut rng);
        let time = TimeStructure::from_slot_length(spec.orbital_period_s(), 250.0, 25).unwrap();
        (spec, params, powers, time)
    }

    #[test]
    fn time_structure_exact() {
        let t = TimeStructure::from_slot_length(5677.0, 250.0, 25).unwrap();
        assert_eq!(t.slots_per_period, 23);
        assert_eq!(t.slot_len_s(), 5677.0 / 23.0);
        assert_eq!(t.frame_len_s(), t.slot_len_s() / 25.0);
        assert!(TimeStructure::new(0.0, 1, 1).is_err());
    }

    #[test]
    fn ring_and_uplinks() {
        let (spec, params, powers, time) = setup();
        let g = build_snapshot(&spec, &params, &powers, &time, 0, 0.0).unwrap();
        assert_eq!(g.nodes.len(), 81);
        for v in 0..80 {
            let intra = g
                .links
                .iter()
                .filter(|l| l.src == v && l.kind == LinkKind::IntraOrbit)
                .count();
            assert_eq!(intra, 2);
            assert!(g.link_index(v, g.geo_index()).is_some());
        }
        assert!(g.links.iter().all(|l| l.src != l.dst));
        for f in &g.frames {
            assert!(f.weight.iter().all(|w| w.is_finite() && *w > 0.0));
        }
    }

    #[test]
    fn frame_weights_follow_midpoint_geometry() {
        let (spec, params, powers, time) = setup();
        let t0 = 3.0 * time.slot_len_s();
        let g = build_snapshot(&spec, &params, &powers, &time, 3, t0).unwrap();
        let k = g
            .links
            .iter()
            .position(|l| l.kind == LinkKind::InterOrbit)
            .expect("inter-orbit link");
        let l = g.links[k];
        for u in [0u32, 24] {
            let eph = geometry::propagate(&spec, time.frame_mid_s(t0, u)).unwrap();
            let d = geometry::distance_km(&eph[l.src].position_km, &eph[l.dst].position_km);
            assert!((g.frames[u as usize].distance_km[k] - d).abs() < 1e-9);
        }
        assert_ne!(g.frames[0].energy_j[k], g.frames[24].energy_j[k]);
    }

    #[test]
    fn robust_weight_limits() {
        let (spec, params, powers, time) = setup();
        let g = build_snapshot(&spec, &params, &powers, &time, 0, 0.0).unwrap();
        let (same, dropped) = g.robust_weights(1.0).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(same.frames[0].weight, g.frames[0].energy_j);
        let (pure, _) = g.robust_weights(0.0).unwrap();
        for (k, w) in pure.frames[0].weight.iter().enumerate() {
            let p = pure.frames[0].outage_prob[k];
            assert!((w - (1.0 / (1.0 - p)).ln()).abs() < 1e-12);
            if p == 0.0 {
                assert_eq!(*w, 0.0);
            }
        }
        let (mix, _) = g.robust_weights(0.3).unwrap();
        let k = g.link_index(0, g.geo_index()).unwrap();
        assert!((mix.frames[2].weight[k] - 0.3 * g.frames[2].energy_j[k]).abs() < 1e-15);
        assert!(g.robust_weights(1.5).is_err());
    }

    #[test]
    fn certain_outage_links_dropped() {
        let (spec, mut params, powers, time) = setup();
        params.snr_th_db = -60.0;
        let g = build_snapshot(&spec, &params, &powers, &time, 0, 0.0).unwrap();
        let (r, dropped) = g.robust_weights(0.5).unwrap();
        assert!(dropped > 0);
        assert_eq!(r.links.len(), g.links.len() - dropped);
        // uplinks never drop
        assert_eq!(r.links.iter().filter(|l| l.kind == LinkKind::Uplink).count(), 80);
    }

    #[test]
    fn csv_export() {
        let (spec, params, powers, mut time) = setup();
        time.frames_per_slot = 2;
        let mut p = params.clone();
        p.frames_per_slot = 2;
        let g = build_snapshot(&spec, &p, &powers, &time, 0, 0.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, std::slice::from_ref(&g)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * g.links.len());
        assert!(text.contains(",geo,,"));
    }
}
