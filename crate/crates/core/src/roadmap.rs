//! Lazy probabilistic roadmap over image states.
//!
//! Nodes are recorded sweep frames; edges join each node to its `k` nearest
//! neighbours under the chosen metric. No collision checking happens here:
//! every edge starts unchecked and optimistically valid.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{dist_joint, MetricKind, NodeView};
use crate::scalar::Real;
use crate::sim::Frame;
use crate::types::{ImageState, JointConfig, MetricTag};

pub const DEFAULT_K: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Edge<T> {
    pub a: usize,
    pub b: usize,
    pub cost: T,
    pub checked: bool,
    pub valid: bool,
}

impl<T> Edge<T> {
    pub fn other(&self, n: usize) -> usize {
        if n == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A roadmap vertex before graph construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadmapNode<T> {
    pub frame_index: usize,
    pub state: ImageState<T>,
    pub joints: Option<JointConfig<T>>,
}

impl<T: Real> RoadmapNode<T> {
    pub fn view(&self) -> NodeView<'_, T> {
        NodeView {
            state: &self.state,
            joints: self.joints.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Roadmap<T> {
    pub metric_tag: MetricTag,
    pub k: usize,
    pub nodes: Vec<ImageState<T>>,
    /// Source dataset frame of each node; the node's stable identity.
    pub frame_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_configs: Option<Vec<JointConfig<T>>>,
    pub edges: Vec<Edge<T>>,
}

impl<T: Real> Roadmap<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn view(&self, i: usize) -> NodeView<'_, T> {
        NodeView {
            state: &self.nodes[i],
            joints: self.joint_configs.as_ref().map(|q| &q[i]),
        }
    }

    /// `(neighbour, edge index)` lists in edge order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.a].push((edge.b, e));
            adj[edge.b].push((edge.a, e));
        }
        adj
    }

    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut count = self.nodes.len();
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                parent[ra] = rb;
                count -= 1;
            }
        }
        count
    }

    /// Checks the structural invariants: simple undirected graph, positive
    /// costs, and unchecked edges still marked valid.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.frame_indices.len() != n {
            return Err(Error::Arity {
                expected: n,
                got: self.frame_indices.len(),
            });
        }
        if let Some(q) = &self.joint_configs {
            if q.len() != n {
                return Err(Error::Arity {
                    expected: n,
                    got: q.len(),
                });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let bad = if e.a >= n || e.b >= n {
                Some("endpoint out of range")
            } else if e.a == e.b {
                Some("self-edge")
            } else if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                Some("duplicate edge")
            } else if !(e.cost > T::zero()) {
                Some("non-positive cost")
            } else if !e.checked && !e.valid {
                Some("unchecked edge marked invalid")
            } else {
                None
            };
            if let Some(why) = bad {
                return Err(Error::InvalidArgument(format!("edge {i}: {why}")));
            }
        }
        Ok(())
    }

    /// Marks every edge unchecked and valid again.
    pub fn reset_validity(&mut self) {
        for e in &mut self.edges {
            e.checked = false;
            e.valid = true;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleStrategy {
    All,
    Uniform { seed: u64 },
}

/// Picks roadmap vertices from recorded frames; never synthesizes states.
pub fn sample_nodes<T: Real>(
    frames: &[Frame<T>],
    count: usize,
    strategy: SampleStrategy,
) -> Result<Vec<RoadmapNode<T>>> {
    if count > frames.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {count} nodes from a dataset of {} frames",
            frames.len()
        )));
    }
    let picked: Vec<usize> = match strategy {
        SampleStrategy::All => (0..frames.len()).collect(),
        SampleStrategy::Uniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, frames.len(), count).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    Ok(picked
        .into_iter()
        .map(|i| RoadmapNode {
            frame_index: frames[i].frame_index,
            state: frames[i].image_state.clone(),
            joints: Some(frames[i].joint_config.clone()),
        })
        .collect())
}

fn by_distance_then_index<T: Real>(a: &(usize, T), b: &(usize, T)) -> Ordering {
    a.1.partial_cmp(&b.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// The `k` closest other entries of one distance row, ties broken by index.
pub fn nearest_in_row<T: Real>(row: &[T], skip: Option<usize>, k: usize) -> Vec<(usize, T)> {
    let mut cand: Vec<(usize, T)> = row
        .iter()
        .copied()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_index);
    cand
}

/// For every node, its `k` nearest other nodes as `(index, distance)`.
pub fn k_nearest<T: Real>(
    nodes: &[NodeView<'_, T>],
    metric: &MetricKind<T>,
    k: usize,
) -> Result<Vec<Vec<(usize, T)>>> {
    if k >= nodes.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be smaller than the node count {}",
            nodes.len()
        )));
    }
    let dist = metric.pairwise(nodes)?;
    Ok(dist
        .iter()
        .enumerate()
        .map(|(i, row)| nearest_in_row(row, Some(i), k))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub seconds: f64,
    pub edges: usize,
}

/// Union of k-NN edges, deduplicated as undirected, all unchecked.
/// `k` is clamped to `nodes.len() - 1`.
pub fn build<T: Real>(
    nodes: &[RoadmapNode<T>],
    metric: &MetricKind<T>,
    k: usize,
) -> Result<(Roadmap<T>, BuildStats)> {
    if nodes.len() < 2 {
        return Err(Error::InvalidArgument("a roadmap needs at least two nodes".into()));
    }
    let started = Instant::now();
    let views: Vec<NodeView<'_, T>> = nodes.iter().map(RoadmapNode::view).collect();
    let k_eff = k.min(nodes.len() - 1);
    let neighbours = k_nearest(&views, metric, k_eff)?;
    let mut unique: BTreeMap<(usize, usize), T> = BTreeMap::new();
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, d) in list {
            unique.entry((i.min(j), i.max(j))).or_insert(d);
        }
    }
    let edges: Vec<Edge<T>> = unique
        .into_iter()
        .map(|((a, b), cost)| Edge {
            a,
            b,
            cost: cost.max(T::epsilon()),
            checked: false,
            valid: true,
        })
        .collect();
    let joint_configs = nodes
        .iter()
        .map(|n| n.joints.clone())
        .collect::<Option<Vec<_>>>();
    let roadmap = Roadmap {
        metric_tag: metric.tag(),
        k: k_eff,
        nodes: nodes.iter().map(|n| n.state.clone()).collect(),
        frame_indices: nodes.iter().map(|n| n.frame_index).collect(),
        joint_configs,
        edges,
    };
    let stats = BuildStats {
        seconds: started.elapsed().as_secs_f64(),
        edges: roadmap.edges.len(),
    };
    Ok((roadmap, stats))
}

/// Summary of true joint displacement along roadmap edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementStats {
    pub displacements: Vec<f64>,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    /// Earth mover's distance to the reference (joint-space) edge distribution.
    pub wasserstein_to_reference: Option<f64>,
}

/// Per-edge ‖Δq‖ from the oracle configurations, with summary statistics.
pub fn edge_displacement_histogram<T: Real>(
    roadmap: &Roadmap<T>,
    reference: Option<&[f64]>,
) -> Result<DisplacementStats> {
    let q = roadmap
        .joint_configs
        .as_ref()
        .ok_or_else(|| Error::MissingOracle("roadmap carries no joint configurations".into()))?;
    let displacements = roadmap
        .edges
        .iter()
        .map(|e| dist_joint(&q[e.a], &q[e.b]).map(|d| d.to_f64_lossy()))
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = displacements.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(DisplacementStats {
        mean: mean(&displacements),
        p50: percentile_sorted(&sorted, 0.5),
        p95: percentile_sorted(&sorted, 0.95),
        wasserstein_to_reference: reference.map(|r| wasserstein1(&displacements, r)),
        displacements,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated percentile of sorted data, `p` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// 1-D Wasserstein-1 distance between two empirical distributions:
/// the integral of |F_a − F_b| over the merged support.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    all.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for w in all.windows(2) {
        let x = w[0];
        while ia < sa.len() && sa[ia] <= x {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= x {
            ib += 1;
        }
        total += (ia as f64 / na - ib as f64 / nb).abs() * (w[1] - w[0]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wasserstein_equal_sizes_is_mean_sorted_gap() {
        let a = [0.0, 1.0, 3.0];
        let b = [5.0, 2.0, 1.0];
        // sorted gaps |0-1| + |1-2| + |3-5| = 4, over 3
        assert!((wasserstein1(&a, &b) - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(wasserstein1(&a, &a), 0.0);
    }

    #[test]
    fn wasserstein_unequal_sizes_by_hand() {
        // F_a jumps to 1 at 0; F_b is 1/2 on [0, 2): area = 1/2 * 2
        assert!((wasserstein1(&[0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn percentiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&s, 0.5), 3.0);
        assert!((percentile_sorted(&s, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn nearest_in_row_breaks_ties_by_index() {
        let row = [0.0, 2.0, 1.0, 1.0, 5.0];
        assert_eq!(nearest_in_row(&row, Some(0), 2), vec![(2, 1.0), (3, 1.0)]);
    }
}
