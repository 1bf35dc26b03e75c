//! Street network: free-flow shortest paths computed once, and per-cluster
//! travel-time factors driven by a network fundamental diagram (NFD).
//!
//! Routes never change after preprocessing. Congestion only stretches time:
//! a path's current travel time is `Σ_c (free-flow seconds in cluster c) · ψ_c`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub cluster: u32,
    /// Demand zone; only nodes with a zone are traveler access points.
    pub zone: Option<u32>,
    /// Transit stop matched to this node.
    pub pt_stop: Option<u32>,
    /// Walking distance to `pt_stop`, meters.
    #[serde(default)]
    pub pt_access_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub length_m: f64,
    pub speed_mps: f64,
    pub cluster: u32,
    pub lanes: f64,
}

impl Edge {
    pub fn free_flow_time(&self) -> f64 {
        self.length_m / self.speed_mps
    }
}

const NONE: u32 = u32::MAX;
/// Relative slack used to recognize equal-length alternatives.
const TIE: f64 = 1e-9;

/// Directed graph with nodes indexed in ascending id order.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: BTreeMap<u32, usize>,
    /// Outgoing edge indices per node, sorted by (target index, edge id).
    out: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    edge_from: Vec<usize>,
    edge_to: Vec<usize>,
    edge_cluster: Vec<usize>,
    clusters: Vec<u32>,
}

impl Graph {
    /// Builds the graph; edges must reference known nodes and have positive length,
    /// speed and lane count.
    pub fn new(mut nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        let mut errs = Vec::new();
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                errs.push(format!("duplicate node id {}", n.id));
            }
        }
        let mut cluster_set: BTreeMap<u32, ()> = nodes.iter().map(|n| (n.cluster, ())).collect();
        for e in &edges {
            cluster_set.insert(e.cluster, ());
            for (end, id) in [("from", e.from), ("to", e.to)] {
                if !index.contains_key(&id) {
                    errs.push(format!("edge {} references unknown {end} node {id}", e.id));
                }
            }
            if !(e.length_m > 0.0 && e.length_m.is_finite()) {
                errs.push(format!("edge {} must have positive length", e.id));
            }
            if !(e.speed_mps > 0.0 && e.speed_mps.is_finite()) {
                errs.push(format!("edge {} must have positive free-flow speed", e.id));
            }
            if !(e.lanes > 0.0 && e.lanes.is_finite()) {
                errs.push(format!("edge {} must have a positive lane count", e.id));
            }
        }
        let mut seen = BTreeMap::new();
        for e in &edges {
            if seen.insert(e.id, ()).is_some() {
                errs.push(format!("duplicate edge id {}", e.id));
            }
        }
        if nodes.is_empty() {
            errs.push("network has no nodes".into());
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let clusters: Vec<u32> = cluster_set.into_keys().collect();
        let cluster_index = |c: u32| clusters.binary_search(&c).expect("collected above");
        let n = nodes.len();
        let edge_from: Vec<usize> = edges.iter().map(|e| index[&e.from]).collect();
        let edge_to: Vec<usize> = edges.iter().map(|e| index[&e.to]).collect();
        let edge_cluster: Vec<usize> = edges.iter().map(|e| cluster_index(e.cluster)).collect();
        let mut out = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for k in 0..edges.len() {
            out[edge_from[k]].push(k);
            incoming[edge_to[k]].push(k);
        }
        for list in &mut out {
            list.sort_by_key(|&k| (edge_to[k], edges[k].id));
        }
        Ok(Self { nodes, edges, index, out, incoming, edge_from, edge_to, edge_cluster, clusters })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn edge_target(&self, k: usize) -> usize {
        self.edge_to[k]
    }

    /// Index of the edge's cluster in [`clusters`](Self::clusters).
    pub fn edge_cluster(&self, k: usize) -> usize {
        self.edge_cluster[k]
    }

    /// Sorted cluster ids; positions in this list are the cluster indices.
    pub fn clusters(&self) -> &[u32] {
        &self.clusters
    }

    pub fn cluster_index(&self, id: u32) -> Option<usize> {
        self.clusters.binary_search(&id).ok()
    }

    /// Lane-kilometers per cluster index.
    pub fn lane_km(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.clusters.len()];
        for (k, e) in self.edges.iter().enumerate() {
            v[self.edge_cluster[k]] += e.length_m * e.lanes / 1000.0;
        }
        v
    }

    /// Free-flow seconds from every node to `target` (reverse Dijkstra).
    fn times_to(&self, target: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[target] = 0.0;
        heap.push(HeapItem(0.0, target));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &k in &self.incoming[u] {
                let v = self.edge_from[k];
                let nd = d + self.edges[k].free_flow_time();
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs free-flow shortest paths with per-cluster splits.
///
/// Among equally short paths the lexicographically smallest node sequence wins:
/// each hop goes to the smallest-id neighbor that still lies on a shortest path.
#[derive(Debug, Clone)]
pub struct PathTable {
    n: usize,
    clusters: usize,
    time: Vec<f64>,
    dist: Vec<f64>,
    next_edge: Vec<u32>,
    time_split: Vec<f64>,
    dist_split: Vec<f64>,
}

impl PathTable {
    pub fn build(graph: &Graph) -> Self {
        let n = graph.node_count();
        let c = graph.clusters().len();
        let mut table = Self {
            n,
            clusters: c,
            time: vec![f64::INFINITY; n * n],
            dist: vec![f64::INFINITY; n * n],
            next_edge: vec![NONE; n * n],
            time_split: vec![0.0; n * n * c],
            dist_split: vec![0.0; n * n * c],
        };
        for t in 0..n {
            let to_t = graph.times_to(t);
            let mut order: Vec<usize> = (0..n).filter(|&s| to_t[s].is_finite()).collect();
            order.sort_by(|&a, &b| to_t[a].total_cmp(&to_t[b]).then(a.cmp(&b)));
            for s in order {
                let p = s * n + t;
                if s == t {
                    table.time[p] = 0.0;
                    table.dist[p] = 0.0;
                    continue;
                }
                let hop = graph.out[s].iter().copied().find(|&k| {
                    let u = graph.edge_to[k];
                    let via = graph.edges[k].free_flow_time() + to_t[u];
                    to_t[u] < to_t[s] && via <= to_t[s] * (1.0 + TIE)
                });
                let Some(k) = hop else { continue };
                let u = graph.edge_to[k];
                let q = u * n + t;
                let e = &graph.edges[k];
                let ec = graph.edge_cluster[k];
                table.next_edge[p] = k as u32;
                table.time[p] = e.free_flow_time() + table.time[q];
                table.dist[p] = e.length_m + table.dist[q];
                for j in 0..c {
                    table.time_split[p * c + j] = table.time_split[q * c + j];
                    table.dist_split[p * c + j] = table.dist_split[q * c + j];
                }
                table.time_split[p * c + ec] += e.free_flow_time();
                table.dist_split[p * c + ec] += e.length_m;
            }
        }
        table
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn reachable(&self, o: usize, d: usize) -> bool {
        o == d || self.next_edge[o * self.n + d] != NONE
    }

    fn check(&self, graph: &Graph, o: usize, d: usize) -> Result<usize> {
        if self.reachable(o, d) {
            Ok(o * self.n + d)
        } else {
            Err(Error::Unreachable { from: graph.node(o).id, to: graph.node(d).id })
        }
    }

    /// Free-flow seconds; `INFINITY` when unreachable.
    pub fn free_flow_time(&self, o: usize, d: usize) -> f64 {
        self.time[o * self.n + d]
    }

    /// Meters along the stored path; `INFINITY` when unreachable.
    pub fn distance(&self, o: usize, d: usize) -> f64 {
        self.dist[o * self.n + d]
    }

    pub fn time_split(&self, o: usize, d: usize) -> &[f64] {
        let p = (o * self.n + d) * self.clusters;
        &self.time_split[p..p + self.clusters]
    }

    pub fn distance_split(&self, o: usize, d: usize) -> &[f64] {
        let p = (o * self.n + d) * self.clusters;
        &self.dist_split[p..p + self.clusters]
    }

    /// First edge of the path from `o` to `d`.
    pub fn next_edge(&self, o: usize, d: usize) -> Option<usize> {
        let k = self.next_edge[o * self.n + d];
        (k != NONE).then_some(k as usize)
    }

    /// Current travel time: free-flow seconds per cluster scaled by that cluster's factor.
    pub fn travel_time(&self, graph: &Graph, o: usize, d: usize, factors: &[f64]) -> Result<f64> {
        self.check(graph, o, d)?;
        Ok(scaled_time(self.time_split(o, d), factors))
    }

    /// Meters driven inside `cluster` (an index into [`Graph::clusters`]).
    pub fn cluster_distance(&self, graph: &Graph, o: usize, d: usize, cluster: usize) -> Result<f64> {
        self.check(graph, o, d)?;
        Ok(self.distance_split(o, d)[cluster])
    }

    /// Node indices along the stored path, both ends included.
    pub fn path(&self, graph: &Graph, o: usize, d: usize) -> Result<Vec<usize>> {
        self.check(graph, o, d)?;
        let mut nodes = vec![o];
        let mut at = o;
        while at != d {
            let k = self.next_edge(at, d).expect("reachable pair has a next hop");
            at = graph.edge_target(k);
            nodes.push(at);
        }
        Ok(nodes)
    }
}

pub fn scaled_time(split: &[f64], factors: &[f64]) -> f64 {
    split.iter().zip(factors).map(|(t, f)| t * f).sum()
}

/// Piecewise-linear NFD: flow (veh/h/lane) against density (veh/lane-km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nfd {
    density: Vec<f64>,
    flow: Vec<f64>,
}

impl Nfd {
    pub fn new(density: Vec<f64>, flow: Vec<f64>) -> std::result::Result<Self, String> {
        if density.len() != flow.len() || density.len() < 2 {
            return Err("needs at least two (density, flow) rows".into());
        }
        if density.iter().chain(&flow).any(|v| !v.is_finite() || *v < 0.0) {
            return Err("densities and flows must be finite and nonnegative".into());
        }
        if density.windows(2).any(|w| w[1] <= w[0]) {
            return Err("densities must be strictly increasing".into());
        }
        let nfd = Self { density, flow };
        if !(nfd.free_flow_speed() > 0.0) {
            return Err("the first positive-density row must carry positive flow".into());
        }
        Ok(nfd)
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.density.iter().copied().zip(self.flow.iter().copied())
    }

    /// Flow at density `k`, clamped to the table ends.
    pub fn flow_at(&self, k: f64) -> f64 {
        let d = &self.density;
        if k <= d[0] {
            return self.flow[0];
        }
        if k >= d[d.len() - 1] {
            return self.flow[d.len() - 1];
        }
        let i = d.partition_point(|x| *x <= k) - 1;
        let w = (k - d[i]) / (d[i + 1] - d[i]);
        self.flow[i] * (1.0 - w) + self.flow[i + 1] * w
    }

    /// Slope `q/k` of the first row with positive density, km/h.
    pub fn free_flow_speed(&self) -> f64 {
        match self.density.iter().position(|k| *k > 0.0) {
            Some(0) => self.flow[0] / self.density[0],
            Some(i) => (self.flow[i] - self.flow[i - 1]) / (self.density[i] - self.density[i - 1]),
            None => 0.0,
        }
    }
}

/// Raw travel-time factor `v1 (k/q + 1/v2)` clamped to `[1, max]`.
///
/// At zero density `k/q` takes its limit `1 / free-flow speed`; positive density
/// with zero flow (gridlock) gives `max`.
pub fn travel_time_factor(k: f64, q: f64, free_flow_speed: f64, v1: f64, inv_v2: f64, max: f64) -> f64 {
    let pace = if k <= 0.0 {
        1.0 / free_flow_speed
    } else if q > 0.0 {
        k / q
    } else {
        return max;
    };
    (v1 * (pace + inv_v2)).clamp(1.0, max)
}

/// Congestion state of one network cluster.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub id: u32,
    pub lane_km: f64,
    nfd: Nfd,
    v1: f64,
    inv_v2: f64,
    max_factor: f64,
    window: usize,
    background: BTreeMap<u32, f64>,
    history: VecDeque<f64>,
    /// veh/lane-km
    pub density: f64,
    /// veh/h/lane
    pub flow: f64,
    pub raw_factor: f64,
    /// Moving average of the last `window` raw factors (1 before any update).
    pub factor: f64,
}

impl ClusterState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        lane_km: f64,
        nfd: Nfd,
        v1: Option<f64>,
        v2: Option<f64>,
        max_factor: f64,
        window: usize,
        background: BTreeMap<u32, f64>,
    ) -> Self {
        let v1 = v1.unwrap_or_else(|| nfd.free_flow_speed());
        Self {
            id,
            lane_km,
            nfd,
            v1,
            inv_v2: v2.map_or(0.0, |v| 1.0 / v),
            max_factor,
            window: window.max(1),
            background,
            history: VecDeque::new(),
            density: 0.0,
            flow: 0.0,
            raw_factor: 1.0,
            factor: 1.0,
        }
    }

    pub fn background_at(&self, time: f64) -> f64 {
        let hour = (time / 3600.0).floor().max(0.0) as u32;
        self.background.get(&hour).copied().unwrap_or(0.0)
    }

    /// Sets density from `vehicles` driving in the cluster (fractional counts allowed)
    /// plus the background density at `time`, then pushes a new raw factor.
    pub fn update(&mut self, vehicles: f64, time: f64) {
        let own = if self.lane_km > 0.0 { vehicles / self.lane_km } else { 0.0 };
        self.density = own + self.background_at(time);
        self.flow = self.nfd.flow_at(self.density);
        self.raw_factor =
            travel_time_factor(self.density, self.flow, self.nfd.free_flow_speed(), self.v1, self.inv_v2, self.max_factor);
        self.push_raw(self.raw_factor);
    }

    /// Appends a raw factor to the moving-average window.
    pub fn push_raw(&mut self, raw: f64) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(raw);
        self.factor = self.history.iter().sum::<f64>() / self.history.len() as f64;
    }
}
