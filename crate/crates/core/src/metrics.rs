//! The three edge-cost metrics behind one interface.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::mlp::Mlp;
use crate::scalar::Real;
use crate::types::{ImageState, JointConfig, MetricTag};

/// A roadmap vertex as seen by a metric: the image state plus, on the oracle
/// side only, the joint configuration it was recorded at.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeView<'a, T> {
    pub state: &'a ImageState<T>,
    pub joints: Option<&'a JointConfig<T>>,
}

/// Euclidean distance between flattened keypoint vectors, in pixels.
pub fn dist_image<T: Real>(a: &ImageState<T>, b: &ImageState<T>) -> Result<T> {
    a.ensure_same_arity(b)?;
    Ok(a.keypoints
        .iter()
        .zip(&b.keypoints)
        .map(|(p, q)| (p.u - q.u) * (p.u - q.u) + (p.v - q.v) * (p.v - q.v))
        .sum::<T>()
        .sqrt())
}

/// Euclidean joint-space distance, in radians.
pub fn dist_joint<T: Real>(a: &JointConfig<T>, b: &JointConfig<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Arity {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.q.iter()
        .zip(&b.q)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt())
}

/// Joint-displacement regressor used as a symmetric distance.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedMetric<T> {
    model: Mlp<T>,
}

impl<T: Real> LearnedMetric<T> {
    pub fn new(model: Mlp<T>) -> Result<Self> {
        if !model.is_finite() {
            return Err(Error::NonFiniteModel);
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &Mlp<T> {
        &self.model
    }

    /// `‖NN(a, b)‖`, not symmetrized.
    pub fn directed(&self, a: &ImageState<T>, b: &ImageState<T>) -> Result<T> {
        a.ensure_same_arity(b)?;
        let mut x = a.flatten();
        x.extend(b.flatten());
        Ok(norm(&self.model.forward(&x)?))
    }

    /// Average of both directions, so edge costs are undirected.
    pub fn distance(&self, a: &ImageState<T>, b: &ImageState<T>) -> Result<T> {
        Ok((self.directed(a, b)? + self.directed(b, a)?) / T::lit(2.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind<T> {
    ImageSpace,
    Learned(LearnedMetric<T>),
    /// Ground-truth joint displacement; needs oracle configurations on every node.
    JointSpace,
}

impl<T: Real> MetricKind<T> {
    pub fn tag(&self) -> MetricTag {
        match self {
            MetricKind::ImageSpace => MetricTag::ImageSpace,
            MetricKind::Learned(_) => MetricTag::Learned,
            MetricKind::JointSpace => MetricTag::JointSpace,
        }
    }

    pub fn distance(&self, a: &NodeView<'_, T>, b: &NodeView<'_, T>) -> Result<T> {
        match self {
            MetricKind::ImageSpace => dist_image(a.state, b.state),
            MetricKind::Learned(m) => m.distance(a.state, b.state),
            MetricKind::JointSpace => match (a.joints, b.joints) {
                (Some(qa), Some(qb)) => dist_joint(qa, qb),
                _ => Err(Error::MissingOracle(
                    "joint-space metric needs joint configurations on every node".into(),
                )),
            },
        }
    }

    /// Lower bound on the remaining cost to `goal`, for A*. Only the image
    /// metric has one; the others return zero.
    pub fn heuristic(&self, node: &ImageState<T>, goal: &ImageState<T>) -> T {
        match self {
            MetricKind::ImageSpace => dist_image(node, goal).unwrap_or_else(|_| T::zero()),
            _ => T::zero(),
        }
    }

    /// Distances from each `sources[i]` to every `targets[j]`, row by row in parallel.
    /// Entry `[i][j]` equals `distance(sources[i], targets[j])` exactly.
    pub fn cross_distances(
        &self,
        sources: &[NodeView<'_, T>],
        targets: &[NodeView<'_, T>],
    ) -> Result<Vec<Vec<T>>> {
        match self {
            MetricKind::Learned(m) => {
                let forward: Vec<Vec<T>> = sources
                    .par_iter()
                    .map(|a| {
                        targets
                            .iter()
                            .map(|b| m.directed(a.state, b.state))
                            .collect::<Result<Vec<T>>>()
                    })
                    .collect::<Result<_>>()?;
                let backward: Vec<Vec<T>> = sources
                    .par_iter()
                    .map(|a| {
                        targets
                            .iter()
                            .map(|b| m.directed(b.state, a.state))
                            .collect::<Result<Vec<T>>>()
                    })
                    .collect::<Result<_>>()?;
                Ok(forward
                    .into_iter()
                    .zip(backward)
                    .map(|(f, b)| {
                        f.into_iter()
                            .zip(b)
                            .map(|(x, y)| (x + y) / T::lit(2.0))
                            .collect()
                    })
                    .collect())
            }
            _ => sources
                .par_iter()
                .map(|a| {
                    targets
                        .iter()
                        .map(|b| self.distance(a, b))
                        .collect::<Result<Vec<T>>>()
                })
                .collect(),
        }
    }

    /// Symmetric all-pairs matrix over `nodes`.
    pub fn pairwise(&self, nodes: &[NodeView<'_, T>]) -> Result<Vec<Vec<T>>> {
        match self {
            MetricKind::Learned(m) => {
                let raw: Vec<Vec<T>> = nodes
                    .par_iter()
                    .map(|a| {
                        nodes
                            .iter()
                            .map(|b| m.directed(a.state, b.state))
                            .collect::<Result<Vec<T>>>()
                    })
                    .collect::<Result<_>>()?;
                let n = nodes.len();
                Ok((0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| (raw[i][j] + raw[j][i]) / T::lit(2.0))
                            .collect()
                    })
                    .collect())
            }
            _ => self.cross_distances(nodes, nodes),
        }
    }
}
