//! Reference implementations used as test oracles.
//!
//! Each oracle is written independently of the library code it checks and
//! favours obviousness over speed.

#![allow(dead_code)]

use rand::Rng;
use sgin_core::routing::Digraph;
use sgin_core::Weight;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GAUSS_W: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its distance from the embedded 7-point Gauss rule.
fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_W[7] * fc;
    let mut g = GAUSS_W[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let pair = f(c - x) + f(c + x);
        k += KRONROD_W[i] * pair;
        if i % 2 == 1 {
            g += GAUSS_W[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` on `[a, b]`: the
/// interval with the largest error estimate is bisected until the summed
/// estimate drops below `tol` or 2000 intervals are in use.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (v, e) = gauss_kronrod(f, a, b);
    let mut parts = vec![(a, b, v, e)];
    while parts.len() < 2000 {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= tol {
            break;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(f, lo, mid);
        let (v2, e2) = gauss_kronrod(f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

/// Minimum-cost spanning in-arborescence towards `root` by enumerating one
/// outgoing edge per non-root node. `None` if no arborescence exists.
pub fn brute_force_msa<W: Weight>(g: &Digraph<W>, root: usize) -> Option<W> {
    let n = g.node_count();
    let mut choices: Vec<Vec<(usize, W)>> = vec![Vec::new(); n];
    for e in g.edges() {
        if e.src != root && e.src != e.dst {
            choices[e.src].push((e.dst, e.weight));
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    let mut parent = vec![usize::MAX; n];
    let mut best: Option<W> = None;

    fn reaches_root(parent: &[usize], v: usize, root: usize) -> bool {
        let mut cur = v;
        for _ in 0..parent.len() {
            if cur == root {
                return true;
            }
            cur = parent[cur];
            if cur == usize::MAX {
                // unassigned ancestor: cannot decide yet, treat as fine
                return true;
            }
        }
        cur == root
    }

    #[allow(clippy::too_many_arguments)]
    fn go<W: Weight>(
        i: usize,
        nodes: &[usize],
        choices: &[Vec<(usize, W)>],
        parent: &mut Vec<usize>,
        cost: W,
        root: usize,
        best: &mut Option<W>,
    ) {
        if i == nodes.len() {
            if best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
            return;
        }
        let v = nodes[i];
        for &(p, w) in &choices[v] {
            parent[v] = p;
            if reaches_root(parent, v, root) {
                go(i + 1, nodes, choices, parent, cost + w, root, best);
            }
            parent[v] = usize::MAX;
        }
    }

    go(0, &nodes, &choices, &mut parent, W::zero(), root, &mut best);
    best
}

/// Single-target shortest distances (to `target`) by Bellman-Ford relaxation.
pub fn bellman_ford_to<W: Weight>(g: &Digraph<W>, target: usize) -> Vec<Option<W>> {
    let n = g.node_count();
    let mut dist: Vec<Option<W>> = vec![None; n];
    dist[target] = Some(W::zero());
    for _ in 0..n {
        let mut changed = false;
        for e in g.edges() {
            if let Some(dd) = dist[e.dst] {
                let cand = dd + e.weight;
                if dist[e.src].is_none_or(|cur| cand < cur) {
                    dist[e.src] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Random digraph on `n` nodes: each ordered pair present with probability
/// `p`, integer weights in `1..=max_w`. With `spanning`, a random in-tree
/// towards node 0 is added so a spanning arborescence exists.
pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, p: f64, max_w: i64, spanning: bool) -> Digraph<i64> {
    let mut g = Digraph::new(n);
    let mut present = vec![vec![false; n]; n];
    if spanning {
        for (v, row) in present.iter_mut().enumerate().skip(1) {
            row[rng.gen_range(0..v)] = true;
        }
    }
    for (u, row) in present.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            if u != v && rng.gen_bool(p) {
                *cell = true;
            }
        }
    }
    for (u, row) in present.iter().enumerate() {
        for (v, &on) in row.iter().enumerate() {
            if on {
                g.add_edge(u, v, rng.gen_range(1..=max_w));
            }
        }
    }
    g
}

/// `Σ λ_k x_k` evaluated left to right in the given order.
pub fn flat_sum(items: &[(f64, Vec<f64>)], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for (w, x) in items {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += w * v;
        }
    }
    acc
}

/// Least-squares task `(λ, A, b)` of the objective `λ ½‖A x − b‖²`.
pub type LeastSquares = (f64, Vec<Vec<f64>>, Vec<f64>);

/// One step of gradient descent on `Σ λ ½‖A x − b‖²`, written with explicit loops.
pub fn centralized_gd_step(x: &[f64], tasks: &[LeastSquares], eta: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for (lambda, a, b) in tasks {
        for (row, y) in a.iter().zip(b) {
            let r: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - y;
            for k in 0..x.len() {
                grad[k] += lambda * r * row[k];
            }
        }
    }
    x.iter().zip(&grad).map(|(v, g)| v - eta * g).collect()
}

/// Mean and standard error of the number of Bernoulli(1 − p) trials to
/// first success: `1/(1 − p)` and `√p/(1 − p)/√n`.
pub fn geometric_mean_and_se(p: f64, n: usize) -> (f64, f64) {
    let mean = 1.0 / (1.0 - p);
    let sd = p.sqrt() / (1.0 - p);
    (mean, sd / (n as f64).sqrt())
}
