//! Lazy query phase: connect start and goal, search with A*, collision-check
//! only the edges of the proposed path, invalidate and repeat.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::collision::{edge_in_collision, state_in_collision, CollisionVerdict};
use crate::error::{Error, Result};
use crate::metrics::{dist_image, dist_joint, MetricKind, NodeView};
use crate::roadmap::{nearest_in_row, Edge, Roadmap, DEFAULT_K};
use crate::scalar::Real;
use crate::types::{ImageState, JointConfig, PathMetrics, PlannedPath, Scene};

/// Cheapest path found by [`astar`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<T> {
    pub nodes: Vec<usize>,
    pub cost: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open<T> {
    f: T,
    hops: usize,
    node: usize,
    g: T,
}

impl<T: Real> Eq for Open<T> {}

impl<T: Real> Ord for Open<T> {
    // BinaryHeap is a max-heap: reverse so the smallest (f, hops, node) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}

impl<T: Real> PartialOrd for Open<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over an adjacency list of `(neighbour, cost)` with non-negative costs.
///
/// Nodes are reopened whenever a cheaper route appears, so any admissible
/// heuristic yields the optimal cost even if rounding makes it slightly
/// inconsistent. Equal-cost routes prefer fewer hops, then the smaller
/// predecessor index.
pub fn astar<T: Real>(
    adjacency: &[Vec<(usize, T)>],
    from: usize,
    to: usize,
    heuristic: impl Fn(usize) -> T,
) -> Option<SearchResult<T>> {
    search(
        adjacency.len(),
        from,
        to,
        |node, visit| {
            for &(next, cost) in &adjacency[node] {
                visit(next, cost, 0);
            }
        },
        heuristic,
    )
    .map(|(nodes, _, cost)| SearchResult { nodes, cost })
}

/// Core of [`astar`]. `neighbours(node, visit)` calls `visit(next, cost, label)`
/// for every usable edge; labels of the chosen edges are returned with the path.
fn search<T: Real>(
    n: usize,
    from: usize,
    to: usize,
    neighbours: impl Fn(usize, &mut dyn FnMut(usize, T, usize)),
    heuristic: impl Fn(usize) -> T,
) -> Option<(Vec<usize>, Vec<usize>, T)> {
    if from >= n || to >= n {
        return None;
    }
    if from == to {
        return Some((vec![from], Vec::new(), T::zero()));
    }
    let mut g = vec![T::infinity(); n];
    let mut hops = vec![usize::MAX; n];
    let mut parent = vec![(usize::MAX, usize::MAX); n];
    let mut open = BinaryHeap::new();
    g[from] = T::zero();
    hops[from] = 0;
    open.push(Open {
        f: heuristic(from),
        hops: 0,
        node: from,
        g: T::zero(),
    });
    while let Some(Open { node, g: gn, hops: hn, .. }) = open.pop() {
        if gn > g[node] || (gn == g[node] && hn > hops[node]) {
            continue;
        }
        if node == to {
            break;
        }
        neighbours(node, &mut |next, cost, label| {
            let cand = gn + cost;
            let ch = hn + 1;
            let better = cand < g[next]
                || (cand == g[next] && (ch < hops[next] || (ch == hops[next] && node < parent[next].0)));
            if better {
                g[next] = cand;
                hops[next] = ch;
                parent[next] = (node, label);
                open.push(Open {
                    f: cand + heuristic(next),
                    hops: ch,
                    node: next,
                    g: cand,
                });
            }
        });
    }
    if !g[to].is_finite() {
        return None;
    }
    let mut nodes = vec![to];
    let mut labels = Vec::new();
    let mut cur = to;
    while cur != from {
        let (prev, label) = parent[cur];
        labels.push(label);
        cur = prev;
        nodes.push(cur);
    }
    nodes.reverse();
    labels.reverse();
    Some((nodes, labels, g[to]))
}

/// Session-local view of a roadmap: extra query nodes, extra edges and
/// private copies of the validity flags. The roadmap itself is never modified.
#[derive(Debug, Clone)]
pub struct QueryGraph<'r, T> {
    base: &'r Roadmap<T>,
    extra_states: Vec<ImageState<T>>,
    extra_joints: Vec<Option<JointConfig<T>>>,
    edges: Vec<Edge<T>>,
}

impl<'r, T: Real> QueryGraph<'r, T> {
    pub fn new(base: &'r Roadmap<T>) -> Self {
        Self {
            base,
            extra_states: Vec::new(),
            extra_joints: Vec::new(),
            edges: base.edges.clone(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.base.node_count() + self.extra_states.len()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn state(&self, i: usize) -> &ImageState<T> {
        let n = self.base.node_count();
        if i < n {
            &self.base.nodes[i]
        } else {
            &self.extra_states[i - n]
        }
    }

    pub fn joints(&self, i: usize) -> Option<&JointConfig<T>> {
        let n = self.base.node_count();
        if i < n {
            self.base.joint_configs.as_ref().map(|q| &q[i])
        } else {
            self.extra_joints[i - n].as_ref()
        }
    }

    pub fn view(&self, i: usize) -> NodeView<'_, T> {
        NodeView {
            state: self.state(i),
            joints: self.joints(i),
        }
    }

    /// Adds `state` as a new node joined to its `k` nearest existing nodes
    /// (fewer if the graph is smaller). Returns the new node's index.
    pub fn connect_endpoint(
        &mut self,
        state: ImageState<T>,
        joints: Option<JointConfig<T>>,
        metric: &MetricKind<T>,
        k: usize,
    ) -> Result<usize> {
        let existing = self.node_count();
        if existing == 0 {
            return Err(Error::InvalidArgument("cannot connect to an empty roadmap".into()));
        }
        let row = {
            let source = NodeView {
                state: &state,
                joints: joints.as_ref(),
            };
            let targets: Vec<NodeView<'_, T>> = (0..existing).map(|i| self.view(i)).collect();
            metric
                .cross_distances(std::slice::from_ref(&source), &targets)?
                .pop()
                .expect("one source row")
        };
        let id = existing;
        for (j, d) in nearest_in_row(&row, None, k.min(existing)) {
            self.edges.push(Edge {
                a: j,
                b: id,
                cost: d.max(T::zero()),
                checked: false,
                valid: true,
            });
        }
        self.extra_states.push(state);
        self.extra_joints.push(joints);
        Ok(id)
    }

    /// Incident `(neighbour, edge index)` lists over all edges.
    fn incidence(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.a].push((e.b, i));
            adj[e.b].push((e.a, i));
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    /// Neighbours for the start and goal connections.
    pub k: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasibleReason {
    StartInCollision,
    GoalInCollision,
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub iterations: usize,
    pub edges_checked: usize,
    pub edges_invalidated: usize,
    /// Hops of the first A* proposal (zero if none).
    pub first_proposal_hops: usize,
    pub seconds: f64,
    /// `(edge index, valid)` for every roadmap edge checked by this query.
    pub roadmap_edge_updates: Vec<(usize, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum QueryOutcome<T> {
    Found {
        path: PlannedPath<T>,
        stats: QueryStats,
    },
    Infeasible {
        reason: InfeasibleReason,
        stats: QueryStats,
    },
}

impl<T: Real> QueryOutcome<T> {
    pub fn path(&self) -> Option<&PlannedPath<T>> {
        match self {
            QueryOutcome::Found { path, .. } => Some(path),
            QueryOutcome::Infeasible { .. } => None,
        }
    }

    pub fn stats(&self) -> &QueryStats {
        match self {
            QueryOutcome::Found { stats, .. } | QueryOutcome::Infeasible { stats, .. } => stats,
        }
    }
}

/// A query endpoint; `joints` is oracle data needed only by the joint-space metric
/// and by path statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint<T> {
    pub state: ImageState<T>,
    pub joints: Option<JointConfig<T>>,
}

/// Lazy repair loop. Each round A* proposes a path over edges not yet known
/// to collide; unchecked edges on it are checked in order until one collides.
/// Terminates because every failed round invalidates at least one edge.
pub fn query<T: Real>(
    roadmap: &Roadmap<T>,
    start: Endpoint<T>,
    goal: Endpoint<T>,
    scene: &Scene<T>,
    metric: &MetricKind<T>,
    cfg: &QueryConfig,
) -> Result<QueryOutcome<T>> {
    let started = Instant::now();
    if metric.tag() != roadmap.metric_tag {
        return Err(Error::InvalidArgument(format!(
            "roadmap was built with the {} metric, query uses {}",
            roadmap.metric_tag,
            metric.tag()
        )));
    }
    if let Some(first) = roadmap.nodes.first() {
        first.ensure_same_arity(&start.state)?;
        first.ensure_same_arity(&goal.state)?;
    }
    let mut stats = QueryStats {
        iterations: 0,
        edges_checked: 0,
        edges_invalidated: 0,
        first_proposal_hops: 0,
        seconds: 0.0,
        roadmap_edge_updates: Vec::new(),
    };
    let early = if state_in_collision(&start.state, scene) {
        Some(InfeasibleReason::StartInCollision)
    } else if state_in_collision(&goal.state, scene) {
        Some(InfeasibleReason::GoalInCollision)
    } else {
        None
    };
    if let Some(reason) = early {
        stats.seconds = started.elapsed().as_secs_f64();
        return Ok(QueryOutcome::Infeasible { reason, stats });
    }

    let mut graph = QueryGraph::new(roadmap);
    let s = graph.connect_endpoint(start.state, start.joints, metric, cfg.k)?;
    let g = graph.connect_endpoint(goal.state, goal.joints, metric, cfg.k)?;
    let goal_state = graph.state(g).clone();
    let heuristic: Vec<T> = (0..graph.node_count())
        .map(|i| metric.heuristic(graph.state(i), &goal_state))
        .collect();
    let base_edges = roadmap.edges.len();
    let mut touched = BTreeMap::new();

    let incidence = graph.incidence();
    let result = loop {
        stats.iterations += 1;
        let edges = &graph.edges;
        let found = search(
            incidence.len(),
            s,
            g,
            |node, visit| {
                for &(next, e) in &incidence[node] {
                    if edges[e].valid {
                        visit(next, edges[e].cost, e);
                    }
                }
            },
            |i| heuristic[i],
        );
        let Some((nodes, path_edges, _)) = found else {
            break None;
        };
        if stats.iterations == 1 {
            stats.first_proposal_hops = nodes.len() - 1;
        }
        let mut blocked = false;
        for &e in &path_edges {
            if graph.edges[e].checked {
                continue;
            }
            let edge = graph.edges[e];
            let verdict = edge_in_collision(graph.state(edge.a), graph.state(edge.b), scene)?;
            let free = verdict == CollisionVerdict::Free;
            graph.edges[e].checked = true;
            graph.edges[e].valid = free;
            stats.edges_checked += 1;
            if e < base_edges {
                touched.insert(e, free);
            }
            if !free {
                stats.edges_invalidated += 1;
                blocked = true;
                break;
            }
        }
        if !blocked {
            break Some((nodes, path_edges));
        }
    };
    stats.roadmap_edge_updates = touched.into_iter().collect();
    stats.seconds = started.elapsed().as_secs_f64();

    let Some((nodes, path_edges)) = result else {
        return Ok(QueryOutcome::Infeasible {
            reason: InfeasibleReason::Disconnected,
            stats,
        });
    };
    let costs: Vec<T> = path_edges.iter().map(|&e| graph.edges[e].cost).collect();
    let total_cost = costs.iter().fold(T::zero(), |acc, &c| acc + c);
    let joint_configs = nodes
        .iter()
        .map(|&i| graph.joints(i).cloned())
        .collect::<Option<Vec<_>>>();
    let mut path = PlannedPath {
        metric_tag: metric.tag(),
        states: nodes.iter().map(|&i| graph.state(i).clone()).collect(),
        costs,
        total_cost,
        joint_configs,
        metrics: None,
    };
    drop_repeated_states(&mut path);
    path.metrics = Some(path_metrics(&path)?);
    Ok(QueryOutcome::Found { path, stats })
}

/// Removes zero-length hops (a query endpoint and its roadmap twin) so that
/// consecutive states are distinct. Costs of removed hops are dropped with them.
fn drop_repeated_states<T: Real>(path: &mut PlannedPath<T>) {
    let mut keep = vec![true; path.states.len()];
    for i in 1..path.states.len() {
        if path.states[i] == path.states[i - 1] {
            // keep the endpoint itself; drop its interior twin
            let drop = if i == path.states.len() - 1 { i - 1 } else { i };
            if drop == 0 {
                continue;
            }
            keep[drop] = false;
        }
    }
    if keep.iter().all(|&k| k) {
        return;
    }
    let mut states = Vec::new();
    let mut joints = path.joint_configs.as_ref().map(|_| Vec::new());
    let mut costs = Vec::new();
    let mut pending = T::zero();
    for (i, s) in path.states.iter().enumerate() {
        if i > 0 {
            pending = pending + path.costs[i - 1];
        }
        if !keep[i] {
            continue;
        }
        if i > 0 && !states.is_empty() {
            costs.push(pending);
        }
        pending = T::zero();
        states.push(s.clone());
        if let (Some(out), Some(src)) = (joints.as_mut(), path.joint_configs.as_ref()) {
            out.push(src[i].clone());
        }
    }
    path.states = states;
    path.joint_configs = joints;
    path.total_cost = costs.iter().fold(T::zero(), |acc, &c| acc + c);
    path.costs = costs;
}

/// Table-style statistics of a path; joint quantities need oracle configurations.
pub fn path_metrics<T: Real>(path: &PlannedPath<T>) -> Result<PathMetrics> {
    if path.states.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let hop_pixels = path
        .states
        .windows(2)
        .map(|w| dist_image(&w[0], &w[1]).map(|d| d.to_f64_lossy()))
        .collect::<Result<Vec<f64>>>()?;
    let total_pixels: f64 = hop_pixels.iter().sum();
    let hop_radians = path
        .joint_configs
        .as_ref()
        .map(|q| {
            q.windows(2)
                .map(|w| dist_joint(&w[0], &w[1]).map(|d| d.to_f64_lossy()))
                .collect::<Result<Vec<f64>>>()
        })
        .transpose()?;
    let total_radians = hop_radians.as_ref().map(|h| h.iter().sum::<f64>());
    let radians_per_1000px = total_radians
        .filter(|_| total_pixels > 0.0)
        .map(|r| r / total_pixels * 1000.0);
    Ok(PathMetrics {
        waypoints: path.states.len(),
        hop_pixels,
        total_pixels,
        hop_radians,
        total_radians,
        radians_per_1000px,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Keypoint, MetricTag};

    fn state(u: f64) -> ImageState<f64> {
        ImageState::new(vec![Keypoint::new(u, 10.0), Keypoint::new(u, 20.0)])
    }

    fn undirected(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b, c) in edges {
            adj[a].push((b, c));
            adj[b].push((a, c));
        }
        adj
    }

    #[test]
    fn same_endpoint_is_empty_path() {
        let adj = undirected(2, &[(0, 1, 1.0)]);
        let r = astar(&adj, 1, 1, |_| 0.0).unwrap();
        assert_eq!((r.nodes, r.cost), (vec![1], 0.0));
    }

    #[test]
    fn equal_cost_prefers_fewer_hops() {
        // 0-1-3 costs 2 in 2 hops; 0-2-4-3 costs 2 in 3 hops
        let adj = undirected(5, &[(0, 1, 1.0), (1, 3, 1.0), (0, 2, 0.5), (2, 4, 0.5), (4, 3, 1.0)]);
        assert_eq!(astar(&adj, 0, 3, |_| 0.0).unwrap().nodes, vec![0, 1, 3]);
    }

    #[test]
    fn unreachable_is_none() {
        let adj = undirected(3, &[(0, 1, 1.0)]);
        assert!(astar(&adj, 0, 2, |_| 0.0).is_none());
    }

    #[test]
    fn path_metrics_two_states() {
        let path = PlannedPath {
            metric_tag: MetricTag::ImageSpace,
            states: vec![state(0.0), state(3.0)],
            costs: vec![],
            total_cost: 0.0,
            joint_configs: Some(vec![
                JointConfig::new(vec![0.0, 0.0]),
                JointConfig::new(vec![0.3, 0.4]),
            ]),
            metrics: None,
        };
        let m = path_metrics(&path).unwrap();
        assert_eq!(m.waypoints, 2);
        // two keypoints each moved 3 px: sqrt(18)
        assert!((m.total_pixels - 18f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.hop_pixels, vec![m.total_pixels]);
        assert!((m.total_radians.unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 / 18f64.sqrt() * 1000.0;
        assert!((m.radians_per_1000px.unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn twin_hops_are_removed() {
        let mut path = PlannedPath {
            metric_tag: MetricTag::ImageSpace,
            states: vec![state(0.0), state(0.0), state(5.0), state(9.0), state(9.0)],
            costs: vec![0.0, 2.0, 3.0, 0.0],
            total_cost: 5.0,
            joint_configs: None,
            metrics: None,
        };
        drop_repeated_states(&mut path);
        assert_eq!(path.states, vec![state(0.0), state(5.0), state(9.0)]);
        assert_eq!(path.costs, vec![2.0, 3.0]);
        assert_eq!(path.total_cost, 5.0);
    }
}
