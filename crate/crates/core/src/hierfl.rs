//! Hierarchical federated averaging on synthetic least-squares tasks.
//!
//! Devices run local mini-batch SGD from the global model and send their
//! model differences to the serving satellite; the satellite network sums
//! the weighted differences along the routing tree and the root applies
//! `x ← x + Σ λ Δx`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::keyed_rng;
use crate::routing::TreeEdge;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierflError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid task {device}: {message}")]
    InvalidTask { device: DeviceId, message: String },
    #[error("terminal {0} is not covered by the aggregation tree")]
    MissingTerminal(usize),
    #[error("node {0} has several parents in the aggregation tree")]
    NotATree(usize),
    #[error("aggregation tree does not reach root {root} from node {node}")]
    Detached { node: usize, root: usize },
    #[error("routing failed in round {round}: {message}")]
    Routing { round: usize, message: String },
    #[error("invalid training config: {0}")]
    Config(String),
}

/// Device `j` of ground cluster `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId {
    pub cluster: usize,
    pub device: usize,
}

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "D{}.{}", self.cluster, self.device)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector<T>(pub Vec<T>);

impl<T: Real> ModelVector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: T, other: &Self) {
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x += a * *y;
        }
    }

    pub fn norm(&self) -> T {
        self.0.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    fn check_dim(&self, dim: usize) -> Result<(), HierflError> {
        if self.dim() != dim {
            return Err(HierflError::Dimension {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// A device's least-squares problem `f(x) = ½‖Ax − b‖²` and its SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTask<T> {
    pub device_id: DeviceId,
    /// Sample rows of `A`.
    pub features: Vec<Vec<T>>,
    pub targets: Vec<T>,
    /// Aggregation weight `λ`.
    pub weight: T,
    pub local_steps: usize,
    pub learning_rate: T,
    /// Mini-batch size; `None` or a value ≥ the sample count means full batch.
    pub batch_size: Option<usize>,
}

impl<T: Real> LocalTask<T> {
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |r| r.len())
    }

    pub fn samples(&self) -> usize {
        self.features.len()
    }

    pub fn validate(&self) -> Result<(), HierflError> {
        let fail = |message: String| HierflError::InvalidTask {
            device: self.device_id,
            message,
        };
        if self.local_steps == 0 {
            return Err(fail("local_steps must be at least 1".into()));
        }
        if !(self.learning_rate >= T::zero()) || !self.learning_rate.is_finite() {
            return Err(fail(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight >= T::zero()) {
            return Err(fail(format!("weight must be non-negative, got {}", self.weight)));
        }
        if self.features.is_empty() || self.features.len() != self.targets.len() {
            return Err(fail(
                "features and targets must be non-empty and of equal length".into(),
            ));
        }
        let d = self.dim();
        if self.features.iter().any(|r| r.len() != d) {
            return Err(fail("ragged feature rows".into()));
        }
        if self.batch_size == Some(0) {
            return Err(fail("batch_size must be positive".into()));
        }
        Ok(())
    }

    fn residual(&self, row: usize, x: &[T]) -> T {
        let r = &self.features[row];
        r.iter().zip(x).map(|(a, b)| *a * *b).sum::<T>() - self.targets[row]
    }

    pub fn loss(&self, x: &ModelVector<T>) -> T {
        let half = T::lit(0.5);
        (0..self.samples()).map(|i| self.residual(i, &x.0).powi(2)).sum::<T>() * half
    }

    /// Full gradient `Aᵀ(Ax − b)`.
    pub fn gradient(&self, x: &ModelVector<T>) -> ModelVector<T> {
        let rows: Vec<usize> = (0..self.samples()).collect();
        self.batch_gradient(x, &rows, T::one())
    }

    fn batch_gradient(&self, x: &ModelVector<T>, rows: &[usize], scale: T) -> ModelVector<T> {
        let mut g = ModelVector::zeros(x.dim());
        for &i in rows {
            let r = self.residual(i, &x.0) * scale;
            for (gk, a) in g.0.iter_mut().zip(&self.features[i]) {
                *gk += r * *a;
            }
        }
        g
    }

    /// Largest eigenvalue of `AᵀA` by power iteration (the smoothness constant).
    pub fn smoothness(&self) -> T {
        let d = self.dim();
        let mut v = ModelVector(vec![T::one(); d]);
        let mut lambda = T::zero();
        for _ in 0..200 {
            let mut w = ModelVector::<T>::zeros(d);
            for row in &self.features {
                let p: T = row.iter().zip(&v.0).map(|(a, b)| *a * *b).sum();
                for (wk, a) in w.0.iter_mut().zip(row) {
                    *wk += p * *a;
                }
            }
            let n = w.norm();
            if n == T::zero() {
                return T::zero();
            }
            lambda = n / v.norm();
            v = ModelVector(w.0.iter().map(|x| *x / n).collect());
        }
        lambda
    }
}

/// Runs `E` steps of mini-batch SGD from `global` and returns `x^{E} − x^{0}`.
///
/// Mini-batches are drawn without replacement and the batch gradient is
/// scaled by `n/|B|` so it is an unbiased estimate of the full gradient.
pub fn local_update<T: Real, R: Rng>(
    task: &LocalTask<T>,
    global: &ModelVector<T>,
    rng: &mut R,
) -> Result<ModelVector<T>, HierflError> {
    task.validate()?;
    global.check_dim(task.dim())?;
    let n = task.samples();
    let batch = task.batch_size.unwrap_or(n).min(n);
    let scale = T::lit(n as f64 / batch as f64);
    let mut x = global.clone();
    for _ in 0..task.local_steps {
        let g = if batch == n {
            task.gradient(&x)
        } else {
            let rows = index::sample(rng, n, batch).into_vec();
            task.batch_gradient(&x, &rows, scale)
        };
        x.axpy(-task.learning_rate, &g);
    }
    let mut delta = x;
    delta.axpy(-T::one(), global);
    Ok(delta)
}

/// A device's weighted difference attached to the satellite that received it.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution<T> {
    pub device_id: DeviceId,
    pub terminal: usize,
    pub weight: T,
    pub delta: ModelVector<T>,
}

/// `Σ λ Δx` in ascending device order: the reference for [`tree_aggregate`].
pub fn flat_aggregate<T: Real>(dim: usize, contributions: &[Contribution<T>]) -> Result<ModelVector<T>, HierflError> {
    let mut sorted: Vec<&Contribution<T>> = contributions.iter().collect();
    sorted.sort_by_key(|c| c.device_id);
    let mut acc = ModelVector::zeros(dim);
    for c in sorted {
        c.delta.check_dim(dim)?;
        acc.axpy(c.weight, &c.delta);
    }
    Ok(acc)
}

/// Sums weighted differences bottom-up along the tree rooted at `root`.
///
/// Each node adds its own devices (ascending id) and then the partial sums of
/// its children (ascending child id) and forwards the result to its parent.
/// Every contribution's terminal must be the root or a node on `edges`.
pub fn tree_aggregate<T: Real, W>(
    root: usize,
    edges: &[TreeEdge<W>],
    dim: usize,
    contributions: &[Contribution<T>],
) -> Result<ModelVector<T>, HierflError> {
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut children: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for e in edges {
        if parent.insert(e.child, e.parent).is_some_and(|p| p != e.parent) {
            return Err(HierflError::NotATree(e.child));
        }
        children.entry(e.parent).or_default().insert(e.child);
    }
    let mut nodes: BTreeSet<usize> = parent.keys().copied().collect();
    nodes.insert(root);
    for &v in &nodes {
        let mut cur = v;
        let mut steps = 0;
        while cur != root {
            cur = *parent.get(&cur).ok_or(HierflError::Detached { node: v, root })?;
            steps += 1;
            if steps > parent.len() {
                return Err(HierflError::Detached { node: v, root });
            }
        }
    }
    let mut local: BTreeMap<usize, Vec<&Contribution<T>>> = BTreeMap::new();
    for c in contributions {
        if !nodes.contains(&c.terminal) {
            return Err(HierflError::MissingTerminal(c.terminal));
        }
        c.delta.check_dim(dim)?;
        local.entry(c.terminal).or_default().push(c);
    }
    for list in local.values_mut() {
        list.sort_by_key(|c| c.device_id);
    }

    // explicit post-order so deep trees do not recurse
    let mut partial: BTreeMap<usize, ModelVector<T>> = BTreeMap::new();
    let mut stack = vec![(root, false)];
    while let Some((v, expanded)) = stack.pop() {
        let kids = children.get(&v);
        if !expanded {
            stack.push((v, true));
            for &c in kids.into_iter().flatten().rev() {
                stack.push((c, false));
            }
            continue;
        }
        let mut acc = ModelVector::zeros(dim);
        for c in local.get(&v).into_iter().flatten() {
            acc.axpy(c.weight, &c.delta);
        }
        for c in kids.into_iter().flatten() {
            let p = partial.remove(c).expect("child processed before parent");
            acc.axpy(T::one(), &p);
        }
        partial.insert(v, acc);
    }
    Ok(partial.remove(&root).expect("root processed"))
}

/// `min{1/(2LE), 1/(L·√(2E(E−1)(2α+1)))}`; the second term is absent for `E = 1`.
pub fn learning_rate_bound<T: Real>(smoothness: T, local_steps: usize, alpha: T) -> T {
    let e = T::lit(local_steps as f64);
    let two = T::lit(2.0);
    let first = T::one() / (two * smoothness * e);
    if local_steps <= 1 {
        return first;
    }
    let second = T::one() / (smoothness * (two * e * (e - T::one()) * (two * alpha + T::one())).sqrt());
    first.min(second)
}

/// Warning text when `eta` exceeds the learning-rate bound.
pub fn check_learning_rate<T: Real>(eta: T, smoothness: T, local_steps: usize, alpha: T) -> Option<String> {
    let bound = learning_rate_bound(smoothness, local_steps, alpha);
    (eta > bound).then(|| {
        format!("learning_rate {eta} exceeds the convergence bound {bound} (L = {smoothness}, E = {local_steps}, alpha = {alpha})")
    })
}

/// Synthetic least-squares federation with tunable heterogeneity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub samples_per_device: usize,
    pub noise_std: f64,
    /// Spread of device optima around the shared optimum (gradient dissimilarity).
    pub heterogeneity: f64,
    pub local_steps: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 10,
            samples_per_device: 64,
            noise_std: 0.1,
            heterogeneity: 0.0,
            local_steps: 5,
            learning_rate: 0.001,
            batch_size: Some(32),
        }
    }
}

/// One task per `(device, weight)`; features are standard normal scaled by
/// `1/√d`, targets come from the device optimum plus Gaussian noise.
pub fn synthetic_tasks<T: Real>(spec: &SyntheticSpec, devices: &[(DeviceId, T)], seed: u64) -> Vec<LocalTask<T>> {
    let mut rng = keyed_rng(seed, &[0x5eed]);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let shared: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng)).collect();
    let scale = 1.0 / (spec.dim.max(1) as f64).sqrt();
    devices
        .iter()
        .map(|&(device_id, weight)| {
            let opt: Vec<f64> = shared
                .iter()
                .map(|s| s + spec.heterogeneity * normal(&mut rng))
                .collect();
            let mut features = Vec::with_capacity(spec.samples_per_device);
            let mut targets = Vec::with_capacity(spec.samples_per_device);
            for _ in 0..spec.samples_per_device {
                let row: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng) * scale).collect();
                let y = row.iter().zip(&opt).map(|(a, b)| a * b).sum::<f64>() + spec.noise_std * normal(&mut rng);
                features.push(row.into_iter().map(T::lit).collect());
                targets.push(T::lit(y));
            }
            LocalTask {
                device_id,
                features,
                targets,
                weight,
                local_steps: spec.local_steps,
                learning_rate: T::lit(spec.learning_rate),
                batch_size: spec.batch_size,
            }
        })
        .collect()
}

/// Global objective `Σ λ f(x)`.
pub fn global_loss<T: Real>(tasks: &[LocalTask<T>], x: &ModelVector<T>) -> T {
    tasks.iter().map(|t| t.weight * t.loss(x)).sum()
}

/// Global gradient `Σ λ ∇f(x)`.
pub fn global_gradient<T: Real>(tasks: &[LocalTask<T>], x: &ModelVector<T>) -> ModelVector<T> {
    let mut g = ModelVector::zeros(x.dim());
    for t in tasks {
        g.axpy(t.weight, &t.gradient(x));
    }
    g
}

/// Smoothness constant of the federation: the largest device constant.
pub fn federation_smoothness<T: Real>(tasks: &[LocalTask<T>]) -> T {
    tasks.iter().map(|t| t.smoothness()).fold(T::zero(), T::max)
}

/// Aggregation route chosen for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRoute<T> {
    pub root: usize,
    pub edges: Vec<TreeEdge<T>>,
    /// Serving satellite of each task, indexed like the task list.
    pub terminals: Vec<usize>,
    /// Communication energy spent on the round.
    pub energy_j: T,
}

impl<T: Real> RoundRoute<T> {
    /// Every device served directly by the root; costs nothing.
    pub fn star(devices: usize) -> Self {
        Self {
            root: 0,
            edges: Vec::new(),
            terminals: vec![0; devices],
            energy_j: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainingRecord<T> {
    pub round: usize,
    pub global_loss: T,
    pub grad_norm: T,
    pub cumulative_energy_j: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum TrainingOutcome {
    Completed,
    /// The global loss became non-finite or exceeded the divergence limit.
    Diverged {
        round: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace<T> {
    /// Round 0 is the initial model; round `t` is after `t` global updates.
    pub records: Vec<TrainingRecord<T>>,
    pub outcome: TrainingOutcome,
    pub model: ModelVector<T>,
}

/// Loss above `DIVERGENCE_FACTOR × initial loss` aborts training.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Runs `rounds` global rounds from `init`.
///
/// `route(round)` supplies the aggregation tree and the round's energy. Local
/// updates draw from generators keyed by `(seed, round, task index)`.
pub fn run_training<T: Real, F>(
    tasks: &[LocalTask<T>],
    init: ModelVector<T>,
    rounds: usize,
    seed: u64,
    mut route: F,
) -> Result<TrainingTrace<T>, HierflError>
where
    F: FnMut(usize) -> Result<RoundRoute<T>, String>,
{
    let dim = init.dim();
    for t in tasks {
        t.validate()?;
        init.check_dim(t.dim())?;
    }
    let mut x = init;
    let l0 = global_loss(tasks, &x);
    let limit = l0.abs().max(T::one()) * T::lit(DIVERGENCE_FACTOR);
    let mut energy = T::zero();
    let mut records = vec![TrainingRecord {
        round: 0,
        global_loss: l0,
        grad_norm: global_gradient(tasks, &x).norm(),
        cumulative_energy_j: energy,
    }];
    let mut outcome = TrainingOutcome::Completed;
    for round in 1..=rounds {
        let plan = route(round - 1).map_err(|message| HierflError::Routing {
            round: round - 1,
            message,
        })?;
        if plan.terminals.len() != tasks.len() {
            return Err(HierflError::Dimension {
                expected: tasks.len(),
                got: plan.terminals.len(),
            });
        }
        let mut contributions = Vec::with_capacity(tasks.len());
        for (k, task) in tasks.iter().enumerate() {
            let mut rng = keyed_rng(seed, &[round as u64, k as u64]);
            contributions.push(Contribution {
                device_id: task.device_id,
                terminal: plan.terminals[k],
                weight: task.weight,
                delta: local_update(task, &x, &mut rng)?,
            });
        }
        let update = tree_aggregate(plan.root, &plan.edges, dim, &contributions)?;
        x.axpy(T::one(), &update);
        energy += plan.energy_j;
        let loss = global_loss(tasks, &x);
        records.push(TrainingRecord {
            round,
            global_loss: loss,
            grad_norm: global_gradient(tasks, &x).norm(),
            cumulative_energy_j: energy,
        });
        if !loss.is_finite() || loss > limit || !x.is_finite() {
            outcome = TrainingOutcome::Diverged { round };
            break;
        }
    }
    Ok(TrainingTrace {
        records,
        outcome,
        model: x,
    })
}

pub fn write_loss_trace_csv<T: Real, W: Write>(out: W, records: &[TrainingRecord<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "global_loss", "grad_norm", "cumulative_energy_j"])?;
    for r in records {
        w.write_record(&[
            r.round.to_string(),
            r.global_loss.to_string(),
            r.grad_norm.to_string(),
            r.cumulative_energy_j.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
