//! Aggregation routing on a weighted digraph.
//!
//! Edges point in the direction data flows, so an aggregation tree is an
//! in-arborescence: every non-root node has exactly one outgoing tree edge and
//! the root has none. Node ids are dense indices; ties are always broken
//! toward the smaller id so results are reproducible.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::{cmp_weight, Weight};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("no path to the root from nodes {0:?}")]
    Unreachable(Vec<usize>),
    #[error("nodes {0:?} cannot reach the root; no spanning arborescence exists")]
    Stranded(Vec<usize>),
    #[error("root {0} must be one of the terminals")]
    RootNotTerminal(usize),
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
    #[error("terminal set is empty")]
    EmptyTerminals,
    #[error("exact search limited to {limit} nodes, graph has {nodes}")]
    TooLarge { nodes: usize, limit: usize },
    #[error("required edge {0} -> {1} is missing")]
    MissingEdge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiEdge<W> {
    pub src: usize,
    pub dst: usize,
    pub weight: W,
}

/// Directed multigraph with adjacency lists in insertion order.
#[derive(Debug, Clone)]
pub struct Digraph<W> {
    edges: Vec<DiEdge<W>>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl<W: Weight> Digraph<W> {
    pub fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            out_adj: vec![Vec::new(); nodes],
            in_adj: vec![Vec::new(); nodes],
            lookup: HashMap::new(),
        }
    }

    pub fn from_edges(nodes: usize, edges: impl IntoIterator<Item = (usize, usize, W)>) -> Self {
        let mut g = Self::new(nodes);
        for (s, d, w) in edges {
            g.add_edge(s, d, w);
        }
        g
    }

    /// Adds `src -> dst` and returns its index.
    pub fn add_edge(&mut self, src: usize, dst: usize, weight: W) -> usize {
        assert!(
            src < self.node_count() && dst < self.node_count(),
            "edge endpoint out of range"
        );
        let idx = self.edges.len();
        self.edges.push(DiEdge { src, dst, weight });
        self.out_adj[src].push(idx);
        self.in_adj[dst].push(idx);
        self.lookup.entry((src, dst)).or_insert(idx);
        idx
    }

    pub fn node_count(&self) -> usize {
        self.out_adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[DiEdge<W>] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &DiEdge<W> {
        &self.edges[idx]
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    /// First inserted edge `src -> dst`.
    pub fn find_edge(&self, src: usize, dst: usize) -> Option<usize> {
        self.lookup.get(&(src, dst)).copied()
    }

    /// Nodes that can reach `target` along directed edges, as a mask.
    pub fn reaches(&self, target: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        seen[target] = true;
        let mut stack = vec![target];
        while let Some(v) = stack.pop() {
            for &e in &self.in_adj[v] {
                let u = self.edges[e].src;
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Same topology with weights transformed.
    pub fn map_weights<V: Weight>(&self, mut f: impl FnMut(usize, &DiEdge<W>) -> V) -> Digraph<V> {
        let mut g = Digraph::new(self.node_count());
        for (i, e) in self.edges.iter().enumerate() {
            g.add_edge(e.src, e.dst, f(i, e));
        }
        g
    }
}

/// Directed path with its edge indices and total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<W> {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub cost: W,
}

#[derive(Debug, Clone, Copy)]
struct HeapItem<W> {
    cost: W,
    node: usize,
}

impl<W: Weight> PartialEq for HeapItem<W> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<W: Weight> Eq for HeapItem<W> {}
impl<W: Weight> PartialOrd for HeapItem<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<W: Weight> Ord for HeapItem<W> {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_weight(&self.cost, &other.cost).then(self.node.cmp(&other.node))
    }
}

/// Minimum-weight path `source -> target`, `None` when unreachable.
///
/// Requires non-negative weights. Among equal-cost alternatives the
/// predecessor with the smaller id wins, then the earlier edge.
pub fn dijkstra<W: Weight>(g: &Digraph<W>, source: usize, target: usize) -> Option<Path<W>> {
    let n = g.node_count();
    if source >= n || target >= n {
        return None;
    }
    let mut dist: Vec<Option<W>> = vec![None; n];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = Some(W::zero());
    heap.push(Reverse(HeapItem {
        cost: W::zero(),
        node: source,
    }));
    while let Some(Reverse(HeapItem { cost, node: u })) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == target {
            break;
        }
        for &e in g.out_edges(u) {
            let edge = g.edge(e);
            let v = edge.dst;
            if done[v] {
                continue;
            }
            let nd = cost + edge.weight;
            let better = match dist[v] {
                None => true,
                Some(d) => match cmp_weight(&nd, &d) {
                    Ordering::Less => true,
                    Ordering::Equal => pred[v].is_none_or(|(p, _)| u < p),
                    Ordering::Greater => false,
                },
            };
            if better {
                dist[v] = Some(nd);
                pred[v] = Some((u, e));
                heap.push(Reverse(HeapItem { cost: nd, node: v }));
            }
        }
    }
    let cost = dist[target]?;
    let mut nodes = vec![target];
    let mut edges = Vec::new();
    let mut v = target;
    while v != source {
        let (p, e) = pred[v]?;
        edges.push(e);
        nodes.push(p);
        v = p;
    }
    nodes.reverse();
    edges.reverse();
    Some(Path { nodes, edges, cost })
}

/// Shortest path from every non-root terminal to the root.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathSet<W> {
    pub root: usize,
    pub paths: BTreeMap<usize, Path<W>>,
}

impl<W: Weight> ShortestPathSet<W> {
    /// Runs one Dijkstra per terminal; reports every unreachable terminal.
    pub fn compute(g: &Digraph<W>, terminals: &[usize], root: usize) -> Result<Self, RoutingError> {
        check_terminals(g, terminals, root)?;
        let mut paths = BTreeMap::new();
        let mut missing = Vec::new();
        for &t in terminals.iter().collect::<BTreeSet<_>>() {
            if t == root {
                continue;
            }
            match dijkstra(g, t, root) {
                Some(p) => {
                    paths.insert(t, p);
                }
                None => missing.push(t),
            }
        }
        if !missing.is_empty() {
            return Err(RoutingError::Unreachable(missing));
        }
        Ok(Self { root, paths })
    }
}

fn check_terminals<W: Weight>(g: &Digraph<W>, terminals: &[usize], root: usize) -> Result<(), RoutingError> {
    if terminals.is_empty() {
        return Err(RoutingError::EmptyTerminals);
    }
    if let Some(&bad) = terminals
        .iter()
        .chain(std::iter::once(&root))
        .find(|&&v| v >= g.node_count())
    {
        return Err(RoutingError::UnknownNode(bad));
    }
    if !terminals.contains(&root) {
        return Err(RoutingError::RootNotTerminal(root));
    }
    Ok(())
}

/// A graph re-indexed onto a subset of a parent graph's nodes and edges.
///
/// Local node order follows parent order, so id tie-breaks carry over.
#[derive(Debug, Clone)]
pub struct Subgraph<W> {
    pub graph: Digraph<W>,
    /// Local node -> parent node.
    pub nodes: Vec<usize>,
    /// Local edge -> parent edge.
    pub edges: Vec<usize>,
}

impl<W: Weight> Subgraph<W> {
    /// Induced on `nodes`, or restricted to `edges` when given.
    fn build(parent: &Digraph<W>, nodes: BTreeSet<usize>, edges: Option<BTreeSet<usize>>) -> Self {
        let nodes: Vec<usize> = nodes.into_iter().collect();
        let mut local = HashMap::with_capacity(nodes.len());
        for (i, &v) in nodes.iter().enumerate() {
            local.insert(v, i);
        }
        let candidate: Vec<usize> = match edges {
            Some(set) => set.into_iter().collect(),
            None => (0..parent.edge_count()).collect(),
        };
        let mut graph = Digraph::new(nodes.len());
        let mut kept = Vec::new();
        for e in candidate {
            let edge = parent.edge(e);
            if let (Some(&s), Some(&d)) = (local.get(&edge.src), local.get(&edge.dst)) {
                graph.add_edge(s, d, edge.weight);
                kept.push(e);
            }
        }
        Self {
            graph,
            nodes,
            edges: kept,
        }
    }

    pub fn induced(parent: &Digraph<W>, nodes: impl IntoIterator<Item = usize>) -> Self {
        Self::build(parent, nodes.into_iter().collect(), None)
    }

    pub fn local_of(&self, parent_node: usize) -> Option<usize> {
        self.nodes.binary_search(&parent_node).ok()
    }
}

/// Union of all shortest-path nodes (plus the root) and their edges, deduplicated.
pub fn build_substitute_graph<W: Weight>(g: &Digraph<W>, paths: &ShortestPathSet<W>) -> Subgraph<W> {
    let mut nodes = BTreeSet::from([paths.root]);
    let mut edges = BTreeSet::new();
    for p in paths.paths.values() {
        nodes.extend(p.nodes.iter().copied());
        edges.extend(p.edges.iter().copied());
    }
    Subgraph::build(g, nodes, Some(edges))
}

/// One edge of a routing result, in data-flow orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeEdge<W> {
    pub child: usize,
    pub parent: usize,
    /// Edge index in the graph the result was computed on.
    pub edge: usize,
    pub weight: W,
}

/// Rooted in-tree; edges sorted by child id.
#[derive(Debug, Clone, PartialEq)]
pub struct Arborescence<W> {
    pub root: usize,
    pub edges: Vec<TreeEdge<W>>,
    pub total_cost: W,
}

impl<W: Weight> Arborescence<W> {
    pub fn empty(root: usize) -> Self {
        Self {
            root,
            edges: Vec::new(),
            total_cost: W::zero(),
        }
    }

    fn from_edges(root: usize, mut edges: Vec<TreeEdge<W>>) -> Self {
        edges.sort_by_key(|e| (e.child, e.parent, e.edge));
        let total_cost = edges.iter().fold(W::zero(), |acc, e| acc + e.weight);
        Self {
            root,
            edges,
            total_cost,
        }
    }

    /// Root plus every node appearing on an edge, ascending.
    pub fn nodes(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::from([self.root]);
        for e in &self.edges {
            s.insert(e.child);
            s.insert(e.parent);
        }
        s
    }

    pub fn parent_of(&self, v: usize) -> Option<usize> {
        self.edges
            .binary_search_by_key(&v, |e| e.child)
            .ok()
            .map(|i| self.edges[i].parent)
    }

    /// Nodes ordered so every child precedes its parent; the root is last.
    pub fn bottom_up_order(&self) -> Vec<usize> {
        let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
        for v in self.nodes() {
            let mut d = 0;
            let mut cur = v;
            while let Some(p) = self.parent_of(cur) {
                d += 1;
                cur = p;
                if d > self.edges.len() {
                    break;
                }
            }
            depth.insert(v, d);
        }
        let mut order: Vec<usize> = depth.keys().copied().collect();
        order.sort_by_key(|v| (Reverse(depth[v]), *v));
        order
    }

    /// Verifies the arborescence invariants against `terminals`.
    pub fn check(&self, terminals: &[usize]) -> Result<(), String> {
        let mut out_deg: BTreeMap<usize, usize> = BTreeMap::new();
        let mut has_child: BTreeSet<usize> = BTreeSet::new();
        for e in &self.edges {
            if e.child == self.root {
                return Err(format!("root {} has an outgoing edge", self.root));
            }
            *out_deg.entry(e.child).or_default() += 1;
            has_child.insert(e.parent);
        }
        if let Some((v, _)) = out_deg.iter().find(|(_, &d)| d != 1) {
            return Err(format!("node {v} has more than one outgoing edge"));
        }
        for v in self.nodes() {
            let mut cur = v;
            let mut steps = 0;
            while cur != self.root {
                cur = self
                    .parent_of(cur)
                    .ok_or_else(|| format!("node {v} does not reach the root"))?;
                steps += 1;
                if steps > self.edges.len() {
                    return Err(format!("cycle through node {v}"));
                }
            }
        }
        let nodes = self.nodes();
        if let Some(t) = terminals.iter().find(|t| !nodes.contains(t)) {
            return Err(format!("terminal {t} not covered"));
        }
        for v in &nodes {
            if *v != self.root && !has_child.contains(v) && !terminals.contains(v) {
                return Err(format!("leaf {v} is not a terminal"));
            }
        }
        Ok(())
    }
}

/// Minimum spanning arborescence (min-incoming-edge orientation) over
/// `n` nodes; returns chosen edge indices or `None` if some node has no
/// admissible incoming edge.
fn msa_min_incoming<W: Weight>(n: usize, edges: &[(usize, usize, W)], root: usize) -> Option<Vec<usize>> {
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (i, &(u, v, w)) in edges.iter().enumerate() {
        if u == v || v == root {
            continue;
        }
        let replace = match best[v] {
            None => true,
            Some(b) => {
                let (bu, _, bw) = edges[b];
                match cmp_weight(&w, &bw) {
                    Ordering::Less => true,
                    Ordering::Equal => u < bu,
                    Ordering::Greater => false,
                }
            }
        };
        if replace {
            best[v] = Some(i);
        }
    }
    if (0..n).any(|v| v != root && best[v].is_none()) {
        return None;
    }
    let pred = |v: usize| edges[best[v].unwrap()].0;

    // cycles of the best-incoming functional graph
    let mut mark = vec![usize::MAX; n];
    let mut cycle_of = vec![usize::MAX; n];
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        let mut v = s;
        while v != root && mark[v] == usize::MAX {
            mark[v] = s;
            v = pred(v);
        }
        if v != root && mark[v] == s && cycle_of[v] == usize::MAX {
            let mut cyc = vec![v];
            cycle_of[v] = cycles.len();
            let mut x = pred(v);
            while x != v {
                cycle_of[x] = cycles.len();
                cyc.push(x);
                x = pred(x);
            }
            cycles.push(cyc);
        }
    }
    if cycles.is_empty() {
        return Some((0..n).filter(|&v| v != root).map(|v| best[v].unwrap()).collect());
    }

    // contract each cycle to one node, keeping ascending order of first member
    let mut new_id = vec![usize::MAX; n];
    let mut cycle_id = vec![usize::MAX; cycles.len()];
    let mut next = 0;
    for v in 0..n {
        let c = cycle_of[v];
        if c == usize::MAX {
            new_id[v] = next;
            next += 1;
        } else {
            if cycle_id[c] == usize::MAX {
                cycle_id[c] = next;
                next += 1;
            }
            new_id[v] = cycle_id[c];
        }
    }
    let mut contracted = Vec::new();
    let mut origin = Vec::new();
    for (i, &(u, v, w)) in edges.iter().enumerate() {
        let (nu, nv) = (new_id[u], new_id[v]);
        if nu == nv {
            continue;
        }
        let w2 = if cycle_of[v] != usize::MAX {
            w - edges[best[v].unwrap()].2
        } else {
            w
        };
        contracted.push((nu, nv, w2));
        origin.push(i);
    }
    let chosen = msa_min_incoming(next, &contracted, new_id[root])?;
    let mut result: Vec<usize> = chosen.iter().map(|&i| origin[i]).collect();
    for cyc in &cycles {
        let entry = result
            .iter()
            .map(|&i| edges[i].1)
            .find(|v| cyc.contains(v))
            .expect("contracted cycle receives one incoming edge");
        result.extend(cyc.iter().filter(|&&x| x != entry).map(|&x| best[x].unwrap()));
    }
    Some(result)
}

/// Exact minimum spanning arborescence of `g` directed toward `root`.
///
/// Edges are reversed so the classic min-incoming-edge contraction applies,
/// and the result is reversed back into data-flow orientation.
pub fn chu_liu_edmonds<W: Weight>(g: &Digraph<W>, root: usize) -> Result<Arborescence<W>, RoutingError> {
    if root >= g.node_count() {
        return Err(RoutingError::UnknownNode(root));
    }
    let reach = g.reaches(root);
    let stranded: Vec<usize> = (0..g.node_count()).filter(|&v| !reach[v]).collect();
    if !stranded.is_empty() {
        return Err(RoutingError::Stranded(stranded));
    }
    let reversed: Vec<(usize, usize, W)> = g.edges().iter().map(|e| (e.dst, e.src, e.weight)).collect();
    let chosen = msa_min_incoming(g.node_count(), &reversed, root).ok_or_else(|| RoutingError::Stranded(Vec::new()))?;
    let edges = chosen
        .into_iter()
        .map(|i| {
            let e = g.edge(i);
            TreeEdge {
                child: e.src,
                parent: e.dst,
                edge: i,
                weight: e.weight,
            }
        })
        .collect();
    Ok(Arborescence::from_edges(root, edges))
}

/// Repeatedly drops non-terminal leaves until none remain.
pub fn prune_to_terminals<W: Weight>(tree: &Arborescence<W>, terminals: &[usize]) -> Arborescence<W> {
    let keep: BTreeSet<usize> = terminals.iter().copied().chain(std::iter::once(tree.root)).collect();
    let mut edges = tree.edges.clone();
    loop {
        let parents: BTreeSet<usize> = edges.iter().map(|e| e.parent).collect();
        let before = edges.len();
        edges.retain(|e| parents.contains(&e.child) || keep.contains(&e.child));
        if edges.len() == before {
            break;
        }
    }
    Arborescence::from_edges(tree.root, edges)
}

fn lift<W: Weight>(sub: &Subgraph<W>, tree: &Arborescence<W>) -> Arborescence<W> {
    let edges = tree
        .edges
        .iter()
        .map(|e| TreeEdge {
            child: sub.nodes[e.child],
            parent: sub.nodes[e.parent],
            edge: sub.edges[e.edge],
            weight: e.weight,
        })
        .collect();
    Arborescence::from_edges(sub.nodes[tree.root], edges)
}

/// TAEER given precomputed shortest paths: MSA of the substitute graph, pruned.
pub fn taeer_from_paths<W: Weight>(
    g: &Digraph<W>,
    paths: &ShortestPathSet<W>,
    terminals: &[usize],
) -> Result<Arborescence<W>, RoutingError> {
    let sub = build_substitute_graph(g, paths);
    let local_root = sub.local_of(paths.root).expect("root is in the substitute graph");
    let msa = chu_liu_edmonds(&sub.graph, local_root)?;
    Ok(prune_to_terminals(&lift(&sub, &msa), terminals))
}

/// Topology-aware energy-efficient routing: shortest paths, substitute graph,
/// Chu-Liu-Edmonds, pruning.
pub fn taeer<W: Weight>(g: &Digraph<W>, terminals: &[usize], root: usize) -> Result<Arborescence<W>, RoutingError> {
    let paths = ShortestPathSet::compute(g, terminals, root)?;
    taeer_from_paths(g, &paths, terminals)
}

/// Union of shortest paths; a node may keep several outgoing edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PathUnion<W> {
    pub root: usize,
    pub edges: Vec<TreeEdge<W>>,
    pub total_cost: W,
}

pub fn d_merge_from_paths<W: Weight>(g: &Digraph<W>, paths: &ShortestPathSet<W>) -> PathUnion<W> {
    let used: BTreeSet<usize> = paths.paths.values().flat_map(|p| p.edges.iter().copied()).collect();
    let edges: Vec<TreeEdge<W>> = used
        .into_iter()
        .map(|i| {
            let e = g.edge(i);
            TreeEdge {
                child: e.src,
                parent: e.dst,
                edge: i,
                weight: e.weight,
            }
        })
        .collect();
    let total_cost = edges.iter().fold(W::zero(), |a, e| a + e.weight);
    PathUnion {
        root: paths.root,
        edges,
        total_cost,
    }
}

/// Merge of per-terminal shortest paths, each shared edge counted once.
pub fn d_merge<W: Weight>(g: &Digraph<W>, terminals: &[usize], root: usize) -> Result<PathUnion<W>, RoutingError> {
    let paths = ShortestPathSet::compute(g, terminals, root)?;
    Ok(d_merge_from_paths(g, &paths))
}

/// Ring structure used by the intra-orbit baseline.
#[derive(Debug, Clone)]
pub struct OrbitLayout {
    /// Node ids of each orbit in ring (slot) order.
    pub orbits: Vec<Vec<usize>>,
    /// The GEO sink.
    pub geo: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitArc {
    pub orbit: usize,
    /// Arc nodes in ring order; both ends are terminals.
    pub nodes: Vec<usize>,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitForest<W> {
    pub arcs: Vec<OrbitArc>,
    /// Ring edges followed by one uplink per arc root.
    pub edges: Vec<TreeEdge<W>>,
    pub total_cost: W,
}

/// Shortest ring arc covering `positions` (sorted, distinct) on a ring of
/// `len`, as a start position and node count. The arc skips the largest gap;
/// ties pick the earliest gap.
fn minimal_arc(positions: &[usize], len: usize) -> (usize, usize) {
    let k = positions.len();
    let mut best_gap = 0;
    let mut best_after = 0;
    for i in 0..k {
        let a = positions[i];
        let b = positions[(i + 1) % k];
        let gap = if k == 1 { len } else { (b + len - a) % len };
        if gap > best_gap {
            best_gap = gap;
            best_after = (i + 1) % k;
        }
    }
    (positions[best_after], len - best_gap + 1)
}

/// Intra-orbit baseline: per orbit, the minimal ring arc spanning its
/// terminals, a random root on the arc, ring routing to that root and one
/// uplink from the root to GEO.
pub fn orbit_greedy<W: Weight, R: Rng>(
    g: &Digraph<W>,
    layout: &OrbitLayout,
    terminals: &[usize],
    rng: &mut R,
) -> Result<OrbitForest<W>, RoutingError> {
    if terminals.is_empty() {
        return Err(RoutingError::EmptyTerminals);
    }
    let mut place: HashMap<usize, (usize, usize)> = HashMap::new();
    for (o, ring) in layout.orbits.iter().enumerate() {
        for (pos, &v) in ring.iter().enumerate() {
            place.insert(v, (o, pos));
        }
    }
    let mut by_orbit: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for t in terminals {
        let &(o, pos) = place.get(t).ok_or(RoutingError::UnknownNode(*t))?;
        by_orbit.entry(o).or_default().insert(pos);
    }
    let edge_to = |u: usize, v: usize| -> Result<TreeEdge<W>, RoutingError> {
        let i = g.find_edge(u, v).ok_or(RoutingError::MissingEdge(u, v))?;
        Ok(TreeEdge {
            child: u,
            parent: v,
            edge: i,
            weight: g.edge(i).weight,
        })
    };
    let mut arcs = Vec::new();
    let mut edges = Vec::new();
    let mut uplinks = Vec::new();
    for (o, positions) in by_orbit {
        let ring = &layout.orbits[o];
        let pos: Vec<usize> = positions.into_iter().collect();
        let (start, count) = minimal_arc(&pos, ring.len());
        let nodes: Vec<usize> = (0..count).map(|i| ring[(start + i) % ring.len()]).collect();
        let r = rng.gen_range(0..count);
        for i in 0..r {
            edges.push(edge_to(nodes[i], nodes[i + 1])?);
        }
        for i in (r + 1..count).rev() {
            edges.push(edge_to(nodes[i], nodes[i - 1])?);
        }
        uplinks.push(edge_to(nodes[r], layout.geo)?);
        arcs.push(OrbitArc {
            orbit: o,
            root: nodes[r],
            nodes,
        });
    }
    edges.extend(uplinks);
    let total_cost = edges.iter().fold(W::zero(), |a, e| a + e.weight);
    Ok(OrbitForest {
        arcs,
        edges,
        total_cost,
    })
}

/// Largest graph accepted by [`exact_dst_oracle`].
pub const EXACT_DST_NODE_LIMIT: usize = 12;

/// Optimal directed Steiner tree cost by enumerating Steiner node subsets and
/// taking the MSA of each induced subgraph.
pub fn exact_dst_oracle<W: Weight>(g: &Digraph<W>, terminals: &[usize], root: usize) -> Result<W, RoutingError> {
    let n = g.node_count();
    if n > EXACT_DST_NODE_LIMIT {
        return Err(RoutingError::TooLarge {
            nodes: n,
            limit: EXACT_DST_NODE_LIMIT,
        });
    }
    check_terminals(g, terminals, root)?;
    let required: BTreeSet<usize> = terminals.iter().copied().collect();
    let optional: Vec<usize> = (0..n).filter(|v| !required.contains(v)).collect();
    let mut best: Option<W> = None;
    for mask in 0u32..(1 << optional.len()) {
        let mut nodes = required.clone();
        nodes.extend(
            optional
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &v)| v),
        );
        let sub = Subgraph::induced(g, nodes);
        let local_root = sub.local_of(root).unwrap();
        if let Ok(tree) = chu_liu_edmonds(&sub.graph, local_root) {
            if best.is_none_or(|b| cmp_weight(&tree.total_cost, &b) == Ordering::Less) {
                best = Some(tree.total_cost);
            }
        }
    }
    best.ok_or_else(|| {
        let reach = g.reaches(root);
        RoutingError::Unreachable(terminals.iter().copied().filter(|&t| !reach[t]).collect())
    })
}
