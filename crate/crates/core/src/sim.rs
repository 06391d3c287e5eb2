//! Multi-round aggregation-routing scenarios.
//!
//! Each round maps the ground clusters to their serving satellites, builds
//! the slot snapshot, solves the routing problem in every frame, realizes
//! link outages with retransmission and accumulates energy and outage
//! statistics. All randomness is drawn from generators keyed by the run
//! seed and the position of the draw, so runs are reproducible and algorithms
//! compared on the same seed see the same channel realizations.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, LinkParams};
use crate::geometry::{self, ConstellationSpec, GroundCluster, WalkerPattern};
use crate::hierfl::{self, synthetic_tasks, DeviceId, ModelVector, RoundRoute, SyntheticSpec, TrainingTrace};
use crate::rng::keyed_rng;
use crate::routing::{self, RoutingError, TreeEdge};
use crate::topology::{self, LinkKind, SnapshotGraph, TimeStructure, TopologyError};

// stream tags for keyed generators
const STREAM_POWER: u64 = 1;
const STREAM_CLUSTERS: u64 = 2;
const STREAM_ROOT: u64 = 3;
const STREAM_ORBIT_ROOT: u64 = 4;
const STREAM_OUTAGE: u64 = 5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid scenario: {field}: {message}")]
    Invalid { field: String, message: String },
}

/// Aggregation-routing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Taeer,
    DMerge,
    OrbitGreedy,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Taeer, Algorithm::DMerge, Algorithm::OrbitGreedy];

    pub fn key(self) -> &'static str {
        match self {
            Algorithm::Taeer => "taeer",
            Algorithm::DMerge => "d-merge",
            Algorithm::OrbitGreedy => "orbit-greedy",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Taeer => "TAEER",
            Algorithm::DMerge => "D-Merge",
            Algorithm::OrbitGreedy => "Orbit-Greedy",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.key() == norm || a.key().replace('-', "") == norm)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected taeer, d-merge or orbit-greedy)"))
    }
}

/// How the root is picked among the round's terminals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootRule {
    /// Terminal with the cheapest GEO uplink in the first frame.
    #[default]
    CheapestUplink,
    /// Uniformly random terminal, drawn from the round's keyed stream.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Target slot length; the period is split into `round(P / Δp)` slots.
    pub slot_length_s: f64,
    /// Slot used by round 0; round `t` uses slot `(first_slot + t) mod M`.
    pub first_slot: u64,
    /// Rotate ground clusters and GEO relays with the Earth.
    pub earth_rotation: bool,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            slot_length_s: 250.0,
            first_slot: 0,
            earth_rotation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Number of seeded clusters (one device each) when `sites` is empty.
    pub count: usize,
    /// Seed for cluster placement; defaults to the simulation seed.
    pub seed: Option<u64>,
    /// Explicit clusters; overrides `count`.
    pub sites: Vec<GroundCluster<f64>>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            count: 41,
            seed: None,
            sites: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub rounds: usize,
    /// Energy/outage trade-off `ρ ∈ [0, 1]`; 1 routes on energy alone.
    pub rho: f64,
    pub seed: u64,
    /// Realize outages and retransmissions; when false every frame succeeds first time.
    pub sample_outage: bool,
    /// Attempts per frame transmission before the round is declared failed.
    pub max_attempts: u32,
    pub root: RootRule,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            rounds: 300,
            rho: 0.1,
            seed: 42,
            sample_outage: true,
            max_attempts: 100,
            root: RootRule::CheapestUplink,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub constellation: ConstellationSpec<f64>,
    #[serde(default)]
    pub link: LinkParams<f64>,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub clusters: ClusterConfig,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

impl ScenarioConfig {
    /// 80/4/1 Walker-Delta at 500 km, 45°, with the default link and run settings.
    pub fn walker_delta_80() -> Self {
        Self::with_constellation(
            ConstellationSpec::walker(80, 4, 1, 500.0, 45.0, WalkerPattern::Delta).expect("valid preset"),
        )
    }

    /// 80/4/1 Walker-Star at 700 km, 99.5°, with the default link and run settings.
    pub fn walker_star_80() -> Self {
        Self::with_constellation(
            ConstellationSpec::walker(80, 4, 1, 700.0, 99.5, WalkerPattern::Star).expect("valid preset"),
        )
    }

    pub fn with_constellation(constellation: ConstellationSpec<f64>) -> Self {
        Self {
            constellation,
            link: LinkParams::default(),
            time: TimeConfig::default(),
            clusters: ClusterConfig::default(),
            algorithms: default_algorithms(),
            simulation: SimulationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |field: &str, message: String| SimError::Invalid {
            field: field.to_string(),
            message,
        };
        self.constellation
            .validate()
            .map_err(|e| invalid("constellation", e.to_string()))?;
        self.link.validate().map_err(|e| match e {
            channel::ChannelError::InvalidParam { field, message } => invalid(&format!("link.{field}"), message),
            other => invalid("link", other.to_string()),
        })?;
        let rho = self.simulation.rho;
        if !(0.0..=1.0).contains(&rho) {
            return Err(invalid("simulation.rho", format!("must lie in [0, 1], got {rho}")));
        }
        if !(self.time.slot_length_s > 0.0) || !self.time.slot_length_s.is_finite() {
            return Err(invalid(
                "time.slot_length_s",
                format!("must be finite and > 0, got {}", self.time.slot_length_s),
            ));
        }
        if self.simulation.max_attempts == 0 {
            return Err(invalid("simulation.max_attempts", "must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms", "at least one algorithm is required".into()));
        }
        if self.clusters.sites.is_empty() {
            if self.clusters.count == 0 {
                return Err(invalid("clusters.count", "at least one cluster is required".into()));
            }
        } else {
            geometry::validate_cluster_weights(&self.clusters.sites)
                .map_err(|e| invalid("clusters.sites", e.to_string()))?;
        }
        Ok(())
    }

    pub fn time_structure(&self) -> Result<TimeStructure, SimError> {
        Ok(TimeStructure::from_slot_length(
            self.constellation.orbital_period_s(),
            self.time.slot_length_s,
            self.link.frames_per_slot,
        )?)
    }

    /// Explicit sites, or seeded ones.
    pub fn ground_clusters(&self) -> Vec<GroundCluster<f64>> {
        if !self.clusters.sites.is_empty() {
            return self.clusters.sites.clone();
        }
        let seed = self.clusters.seed.unwrap_or(self.simulation.seed);
        geometry::random_clusters(self.clusters.count, &mut keyed_rng(seed, &[STREAM_CLUSTERS]))
    }

    /// Per-satellite transmit powers for this run's seed.
    pub fn transmit_powers(&self) -> Vec<f64> {
        topology::draw_transmit_powers(
            self.constellation.total_sats(),
            &self.link,
            &mut keyed_rng(self.simulation.seed, &[STREAM_POWER]),
        )
    }
}

/// Everything shared by the algorithms within one round.
#[derive(Debug, Clone)]
pub struct RoundContext {
    pub round: usize,
    pub slot: u64,
    pub t_start_s: f64,
    /// Serving satellites, ascending and deduplicated.
    pub terminals: Vec<usize>,
    /// Serving satellite of each ground cluster.
    pub serving: Vec<usize>,
    pub root: usize,
    /// Energy-weighted snapshot.
    pub snapshot: SnapshotGraph<f64>,
    /// Snapshot re-weighted for `ρ` (links in certain outage removed).
    pub routed: SnapshotGraph<f64>,
}

/// One used link in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transmission {
    pub frame: usize,
    pub src: usize,
    pub dst: usize,
    pub kind: LinkKind,
    pub energy_j: f64,
    pub outage_prob: f64,
    pub attempts: u32,
}

impl Transmission {
    pub fn total_energy_j(&self) -> f64 {
        self.attempts as f64 * self.energy_j
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundStatus {
    Ok,
    /// No route from some terminal to the root.
    Unroutable,
    /// A frame exhausted its retransmission budget.
    RetryLimit,
}

impl fmt::Display for RoundStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundStatus::Ok => "ok",
            RoundStatus::Unroutable => "unroutable",
            RoundStatus::RetryLimit => "retry-limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub status: RoundStatus,
    pub transmissions: Vec<Transmission>,
}

/// Per-round summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub slot: u64,
    pub algorithm: Algorithm,
    pub status: RoundStatus,
    pub terminals: usize,
    pub root: usize,
    /// Energy of every used link-frame sent once.
    pub tree_energy_j: f64,
    /// Extra energy spent on retransmissions.
    pub retransmission_energy_j: f64,
    /// ISL link-frames used (first attempts).
    pub isl_transmissions: usize,
    /// Failed ISL attempts.
    pub outage_events: u64,
    /// Sum of analytic outage probabilities over used ISL link-frames.
    pub outage_prob_sum: f64,
}

impl RoundRecord {
    pub fn total_energy_j(&self) -> f64 {
        self.tree_energy_j + self.retransmission_energy_j
    }

    fn from_outcome(ctx: &RoundContext, algorithm: Algorithm, outcome: &RoundOutcome) -> Self {
        let mut rec = RoundRecord {
            round: ctx.round,
            slot: ctx.slot,
            algorithm,
            status: outcome.status.clone(),
            terminals: ctx.terminals.len(),
            root: ctx.root,
            tree_energy_j: 0.0,
            retransmission_energy_j: 0.0,
            isl_transmissions: 0,
            outage_events: 0,
            outage_prob_sum: 0.0,
        };
        for t in &outcome.transmissions {
            rec.tree_energy_j += t.energy_j;
            rec.retransmission_energy_j += (t.attempts.saturating_sub(1)) as f64 * t.energy_j;
            if t.kind.is_isl() {
                rec.isl_transmissions += 1;
                rec.outage_events += t.attempts.saturating_sub(1) as u64;
                rec.outage_prob_sum += t.outage_prob;
            }
        }
        rec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub algorithm: Algorithm,
    pub rho: f64,
    pub constellation: String,
    /// Mean total energy per completed round (one round occupies one slot).
    pub avg_energy_per_slot_j: f64,
    /// Mean analytic outage probability per used ISL link-frame, percent.
    pub avg_outage_pct: f64,
    /// Failed attempts over all ISL attempts, percent.
    pub empirical_outage_pct: f64,
    pub rounds: usize,
    pub completed_rounds: usize,
    #[serde(skip)]
    pub records: Vec<RoundRecord>,
}

impl RunMetrics {
    /// Aggregates completed rounds of `records`.
    pub fn from_records(algorithm: Algorithm, rho: f64, constellation: String, records: Vec<RoundRecord>) -> Self {
        let done: Vec<&RoundRecord> = records.iter().filter(|r| r.status == RoundStatus::Ok).collect();
        let n = done.len();
        let energy: f64 = done.iter().map(|r| r.total_energy_j()).sum();
        let isl: usize = done.iter().map(|r| r.isl_transmissions).sum();
        let p_sum: f64 = done.iter().map(|r| r.outage_prob_sum).sum();
        let events: u64 = done.iter().map(|r| r.outage_events).sum();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Self {
            algorithm,
            rho,
            constellation,
            avg_energy_per_slot_j: ratio(energy, n as f64),
            avg_outage_pct: 100.0 * ratio(p_sum, isl as f64),
            empirical_outage_pct: 100.0 * ratio(events as f64, isl as f64 + events as f64),
            rounds: records.len(),
            completed_rounds: n,
            records,
        }
    }
}

/// Serving satellite of each cluster at `t`.
pub fn serving_at(
    spec: &ConstellationSpec<f64>,
    clusters: &[GroundCluster<f64>],
    t: f64,
    earth_rotation: bool,
) -> Result<Vec<usize>, SimError> {
    let eph = geometry::propagate(spec, t).map_err(TopologyError::from)?;
    Ok(clusters
        .iter()
        .map(|c| {
            let id = geometry::serving_satellite(c, &eph, earth_rotation).expect("constellation is non-empty");
            spec.index_of(id)
        })
        .collect())
}

/// Serving satellites of the clusters at `t`, ascending and deduplicated.
pub fn terminals_at(
    spec: &ConstellationSpec<f64>,
    clusters: &[GroundCluster<f64>],
    t: f64,
    earth_rotation: bool,
) -> Result<Vec<usize>, SimError> {
    let set: BTreeSet<usize> = serving_at(spec, clusters, t, earth_rotation)?.into_iter().collect();
    Ok(set.into_iter().collect())
}

/// Precomputed per-run state.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub time: TimeStructure,
    pub clusters: Vec<GroundCluster<f64>>,
    pub powers_w: Vec<f64>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            time: config.time_structure()?,
            clusters: config.ground_clusters(),
            powers_w: config.transmit_powers(),
            config,
        })
    }

    /// Snapshot, terminals and root of `round`.
    pub fn round_context(&self, round: usize) -> Result<RoundContext, SimError> {
        let cfg = &self.config;
        let m = self.time.slots_per_period as u64;
        let abs_slot = cfg.time.first_slot + round as u64;
        // propagation repeats every period, so the absolute epoch lands on slot
        // `abs_slot mod M` while Earth-fixed objects keep moving
        let t0 = abs_slot as f64 * self.time.slot_len_s();
        let serving = serving_at(&cfg.constellation, &self.clusters, t0, cfg.time.earth_rotation)?;
        let terminals: Vec<usize> = serving.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let snapshot = topology::build_snapshot(
            &cfg.constellation,
            &cfg.link,
            &self.powers_w,
            &self.time,
            (abs_slot % m) as u32,
            t0,
        )?;
        let routed = if cfg.simulation.rho < 1.0 {
            snapshot.robust_weights(cfg.simulation.rho)?.0
        } else {
            snapshot.clone()
        };
        let root = match cfg.simulation.root {
            RootRule::CheapestUplink => {
                let geo = snapshot.geo_index();
                let cost = |v: usize| {
                    snapshot
                        .link_index(v, geo)
                        .map_or(f64::INFINITY, |k| snapshot.frames[0].energy_j[k])
                };
                *terminals
                    .iter()
                    .min_by(|a, b| cost(**a).total_cmp(&cost(**b)).then(a.cmp(b)))
                    .expect("at least one cluster")
            }
            RootRule::Random => {
                let mut rng = keyed_rng(cfg.simulation.seed, &[STREAM_ROOT, round as u64]);
                terminals[rng.gen_range(0..terminals.len())]
            }
        };
        Ok(RoundContext {
            round,
            slot: abs_slot % m,
            t_start_s: t0,
            terminals,
            serving,
            root,
            snapshot,
            routed,
        })
    }

    /// Links used by `algorithm` in `frame`, as indices into the returned snapshot.
    fn route_frame<'a>(
        &self,
        ctx: &'a RoundContext,
        algorithm: Algorithm,
        frame: usize,
    ) -> Result<(&'a SnapshotGraph<f64>, Vec<usize>), RoutingError> {
        let uplink = |snap: &SnapshotGraph<f64>| {
            snap.link_index(ctx.root, snap.geo_index())
                .ok_or(RoutingError::MissingEdge(ctx.root, snap.geo_index()))
        };
        let links = |edges: &[TreeEdge<f64>]| edges.iter().map(|e| e.edge).collect::<Vec<_>>();
        match algorithm {
            Algorithm::Taeer => {
                let g = ctx.routed.frame_graph(frame);
                let tree = routing::taeer(&g, &ctx.terminals, ctx.root)?;
                let mut used = links(&tree.edges);
                used.push(uplink(&ctx.routed)?);
                Ok((&ctx.routed, used))
            }
            Algorithm::DMerge => {
                let g = ctx.routed.frame_graph(frame);
                let union = routing::d_merge(&g, &ctx.terminals, ctx.root)?;
                let mut used = links(&union.edges);
                used.push(uplink(&ctx.routed)?);
                Ok((&ctx.routed, used))
            }
            Algorithm::OrbitGreedy => {
                let g = ctx.snapshot.energy_graph(frame);
                let mut rng = keyed_rng(
                    self.config.simulation.seed,
                    &[STREAM_ORBIT_ROOT, ctx.round as u64, frame as u64],
                );
                let forest = routing::orbit_greedy(&g, &ctx.snapshot.orbit_layout(), &ctx.terminals, &mut rng)?;
                Ok((&ctx.snapshot, links(&forest.edges)))
            }
        }
    }

    /// Attempts needed for one transmission; `None` if the budget runs out.
    fn sample_attempts(&self, ctx: &RoundContext, frame: usize, snap: &SnapshotGraph<f64>, k: usize) -> Option<u32> {
        let sim = &self.config.simulation;
        let link = snap.links[k];
        if !sim.sample_outage || !link.kind.is_isl() {
            return Some(1);
        }
        let params = &self.config.link;
        let d = snap.frames[frame].distance_km[k];
        let gamma0 = channel::outage_threshold(self.powers_w[link.src], d, params).ok()?;
        let mut rng = keyed_rng(
            sim.seed,
            &[
                STREAM_OUTAGE,
                ctx.round as u64,
                frame as u64,
                link.src as u64,
                link.dst as u64,
            ],
        );
        channel::attempts_until_success(gamma0, params, sim.max_attempts, &mut rng)
    }

    /// First-frame route of `algorithm` as an in-tree rooted at GEO, uplinks
    /// included. Where a route gives a node several next hops (a merged path
    /// union), the lowest-indexed link is kept.
    pub fn aggregation_tree(
        &self,
        ctx: &RoundContext,
        algorithm: Algorithm,
    ) -> Result<Vec<TreeEdge<f64>>, RoutingError> {
        let (snap, mut used) = self.route_frame(ctx, algorithm, 0)?;
        used.sort_unstable();
        let mut seen = BTreeSet::new();
        Ok(used
            .into_iter()
            .filter(|&k| seen.insert(snap.links[k].src))
            .map(|k| TreeEdge {
                child: snap.links[k].src,
                parent: snap.links[k].dst,
                edge: k,
                weight: snap.frames[0].energy_j[k],
            })
            .collect())
    }

    /// Routes every frame of the round and realizes outages.
    pub fn simulate_round(&self, ctx: &RoundContext, algorithm: Algorithm) -> RoundOutcome {
        let mut transmissions = Vec::new();
        for u in 0..ctx.snapshot.frame_count() {
            let (snap, used) = match self.route_frame(ctx, algorithm, u) {
                Ok(r) => r,
                Err(_) => {
                    return RoundOutcome {
                        status: RoundStatus::Unroutable,
                        transmissions,
                    }
                }
            };
            for k in used {
                let l = snap.links[k];
                let f = &snap.frames[u];
                let Some(attempts) = self.sample_attempts(ctx, u, snap, k) else {
                    return RoundOutcome {
                        status: RoundStatus::RetryLimit,
                        transmissions,
                    };
                };
                transmissions.push(Transmission {
                    frame: u,
                    src: l.src,
                    dst: l.dst,
                    kind: l.kind,
                    energy_j: f.energy_j[k],
                    outage_prob: f.outage_prob[k],
                    attempts,
                });
            }
        }
        RoundOutcome {
            status: RoundStatus::Ok,
            transmissions,
        }
    }
}

/// Runs every configured algorithm on identical rounds and seeds.
pub fn compare_algorithms(cfg: &ScenarioConfig) -> Result<Vec<RunMetrics>, SimError> {
    let scenario = Scenario::new(cfg.clone())?;
    let mut algorithms = cfg.algorithms.clone();
    algorithms.dedup();
    let mut records: Vec<Vec<RoundRecord>> = vec![Vec::new(); algorithms.len()];
    for round in 0..cfg.simulation.rounds {
        let ctx = scenario.round_context(round)?;
        for (a, alg) in algorithms.iter().enumerate() {
            let outcome = scenario.simulate_round(&ctx, *alg);
            records[a].push(RoundRecord::from_outcome(&ctx, *alg, &outcome));
        }
    }
    let label = cfg.constellation.label();
    Ok(algorithms
        .into_iter()
        .zip(records)
        .map(|(alg, recs)| RunMetrics::from_records(alg, cfg.simulation.rho, label.clone(), recs))
        .collect())
}

/// Runs the first configured algorithm.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    let mut single = cfg.clone();
    single.algorithms.truncate(1);
    Ok(compare_algorithms(&single)?.remove(0))
}

pub fn write_metrics_json<W: Write>(out: W, metrics: &[RunMetrics]) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, metrics)
}

pub fn write_rounds_csv<W: Write>(out: W, metrics: &[RunMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "round",
        "slot",
        "algorithm",
        "status",
        "terminals",
        "root",
        "tree_energy_j",
        "retransmission_energy_j",
        "total_energy_j",
        "isl_transmissions",
        "outage_events",
        "mean_outage_prob",
    ])?;
    for m in metrics {
        for r in &m.records {
            let mean_p = if r.isl_transmissions > 0 {
                r.outage_prob_sum / r.isl_transmissions as f64
            } else {
                0.0
            };
            w.write_record(&[
                r.round.to_string(),
                r.slot.to_string(),
                r.algorithm.key().to_string(),
                r.status.to_string(),
                r.terminals.to_string(),
                r.root.to_string(),
                r.tree_energy_j.to_string(),
                r.retransmission_energy_j.to_string(),
                r.total_energy_j().to_string(),
                r.isl_transmissions.to_string(),
                r.outage_events.to_string(),
                mean_p.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Hierarchical training driven by the scenario's routing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    /// Routing scheme whose trees aggregate the model and whose energy is charged.
    pub algorithm: Algorithm,
    /// Smoothness constant for the learning-rate check; estimated from the data when absent.
    pub smoothness: Option<f64>,
    /// Gradient-dissimilarity constant for the learning-rate check.
    pub alpha: f64,
    pub synthetic: SyntheticSpec,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 300,
            algorithm: Algorithm::Taeer,
            smoothness: None,
            alpha: 0.0,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |field: &str, message: String| SimError::Invalid {
            field: field.to_string(),
            message,
        };
        let s = &self.synthetic;
        if s.dim == 0 {
            return Err(invalid("training.synthetic.dim", "must be at least 1".into()));
        }
        if s.samples_per_device == 0 {
            return Err(invalid(
                "training.synthetic.samples_per_device",
                "must be at least 1".into(),
            ));
        }
        if s.local_steps == 0 {
            return Err(invalid("training.synthetic.local_steps", "must be at least 1".into()));
        }
        if !(s.learning_rate >= 0.0) || !s.learning_rate.is_finite() {
            return Err(invalid(
                "training.synthetic.learning_rate",
                format!("must be finite and >= 0, got {}", s.learning_rate),
            ));
        }
        if s.batch_size == Some(0) {
            return Err(invalid("training.synthetic.batch_size", "must be at least 1".into()));
        }
        if !(s.noise_std >= 0.0) || !(s.heterogeneity >= 0.0) {
            return Err(invalid(
                "training.synthetic",
                "noise_std and heterogeneity must be >= 0".into(),
            ));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid("training.alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if let Some(l) = self.smoothness {
            if !(l > 0.0) {
                return Err(invalid("training.smoothness", format!("must be > 0, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub trace: TrainingTrace<f64>,
    /// Set when the learning rate exceeds the convergence bound.
    pub warning: Option<String>,
}

/// Trains on one synthetic task per ground device, aggregating along the
/// first-frame route of each round and charging the round's simulated energy.
pub fn run_training_scenario(cfg: &ScenarioConfig, training: &TrainingConfig) -> Result<TrainingRun, SimError> {
    training.validate()?;
    let scenario = Scenario::new(cfg.clone())?;
    let mut devices = Vec::new();
    let mut cluster_of = Vec::new();
    for (ci, c) in scenario.clusters.iter().enumerate() {
        for (j, &w) in c.device_weights.iter().enumerate() {
            devices.push((
                DeviceId {
                    cluster: c.id,
                    device: j,
                },
                w,
            ));
            cluster_of.push(ci);
        }
    }
    let tasks = synthetic_tasks(&training.synthetic, &devices, cfg.simulation.seed);
    let smoothness = training
        .smoothness
        .unwrap_or_else(|| hierfl::federation_smoothness(&tasks));
    let warning = hierfl::check_learning_rate(
        training.synthetic.learning_rate,
        smoothness,
        training.synthetic.local_steps,
        training.alpha,
    );
    let algorithm = training.algorithm;
    let route = |round: usize| -> Result<RoundRoute<f64>, String> {
        let ctx = scenario.round_context(round).map_err(|e| e.to_string())?;
        let edges = scenario.aggregation_tree(&ctx, algorithm).map_err(|e| e.to_string())?;
        let outcome = scenario.simulate_round(&ctx, algorithm);
        if outcome.status != RoundStatus::Ok {
            return Err(format!("round {round} ended with status {}", outcome.status));
        }
        Ok(RoundRoute {
            root: ctx.snapshot.geo_index(),
            edges,
            terminals: cluster_of.iter().map(|&c| ctx.serving[c]).collect(),
            energy_j: outcome.transmissions.iter().map(|t| t.total_energy_j()).sum(),
        })
    };
    let init = ModelVector::zeros(training.synthetic.dim);
    let trace = hierfl::run_training(&tasks, init, training.rounds, cfg.simulation.seed, route).map_err(|e| {
        SimError::Invalid {
            field: "training".into(),
            message: e.to_string(),
        }
    })?;
    Ok(TrainingRun { trace, warning })
}
