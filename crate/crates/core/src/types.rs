//! Shared domain types: keypoints, image states, joint configurations, camera,
//! scenes and planned paths, plus their validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// One pixel-space feature on the robot body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Keypoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Keypoint<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn dist(&self, other: &Self) -> T {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn lerp(&self, other: &Self, t: T) -> Self {
        Self::new(
            self.u + (other.u - self.u) * t,
            self.v + (other.v - self.v) * t,
        )
    }
}

impl<T> From<[T; 2]> for Keypoint<T> {
    fn from([u, v]: [T; 2]) -> Self {
        Self { u, v }
    }
}

impl<T> From<Keypoint<T>> for [T; 2] {
    fn from(k: Keypoint<T>) -> Self {
        [k.u, k.v]
    }
}

/// Image width and height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn contains<T: Real>(&self, k: &Keypoint<T>) -> bool {
        let w = T::lit(f64::from(self.width));
        let h = T::lit(f64::from(self.height));
        k.u >= T::zero() && k.u < w && k.v >= T::zero() && k.v < h
    }
}

impl From<[u32; 2]> for ImageSize {
    fn from([width, height]: [u32; 2]) -> Self {
        Self { width, height }
    }
}

impl From<ImageSize> for [u32; 2] {
    fn from(s: ImageSize) -> Self {
        [s.width, s.height]
    }
}

/// Ordered keypoints along the kinematic chain, base first. The planning state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ImageState<T> {
    pub keypoints: Vec<Keypoint<T>>,
}

impl<T: Real> ImageState<T> {
    pub fn new(keypoints: Vec<Keypoint<T>>) -> Self {
        Self { keypoints }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn end_effector(&self) -> Option<&Keypoint<T>> {
        self.keypoints.last()
    }

    /// `[u0, v0, u1, v1, ...]`.
    pub fn flatten(&self) -> Vec<T> {
        self.keypoints.iter().flat_map(|k| [k.u, k.v]).collect()
    }

    pub fn unflatten(flat: &[T]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::Arity {
                expected: flat.len() + 1,
                got: flat.len(),
            });
        }
        Ok(Self::new(
            flat.chunks_exact(2)
                .map(|c| Keypoint::new(c[0], c[1]))
                .collect(),
        ))
    }

    /// Keypoint-wise linear interpolation.
    pub fn lerp(&self, other: &Self, t: T) -> Self {
        Self::new(
            self.keypoints
                .iter()
                .zip(&other.keypoints)
                .map(|(a, b)| a.lerp(b, t))
                .collect(),
        )
    }

    pub fn ensure_same_arity(&self, other: &Self) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(Error::Arity {
                expected: self.len(),
                got: other.len(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    WrongArity { expected: usize, got: usize },
    NonFinite { index: usize },
    OutOfBounds { index: usize, u: f64, v: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::WrongArity { expected, got } => {
                write!(f, "wrong arity: expected {expected} keypoints, got {got}")
            }
            Violation::NonFinite { index } => write!(f, "keypoint {index} is not finite"),
            Violation::OutOfBounds { index, u, v } => {
                write!(f, "keypoint {index} at ({u}, {v}) is out of bounds")
            }
        }
    }
}

/// Every invariant an image state violates; empty when valid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_image_state<T: Real>(
    s: &ImageState<T>,
    bounds: ImageSize,
    expected_keypoints: usize,
) -> Verdict {
    let mut violations = Vec::new();
    if s.len() != expected_keypoints {
        violations.push(Violation::WrongArity {
            expected: expected_keypoints,
            got: s.len(),
        });
    }
    for (index, k) in s.keypoints.iter().enumerate() {
        if !k.is_finite() {
            violations.push(Violation::NonFinite { index });
        } else if !bounds.contains(k) {
            violations.push(Violation::OutOfBounds {
                index,
                u: k.u.to_f64_lossy(),
                v: k.v.to_f64_lossy(),
            });
        }
    }
    Verdict { violations }
}

/// Actuated joint angles in radians. Oracle-side only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct JointConfig<T> {
    pub q: Vec<T>,
}

impl<T: Real> JointConfig<T> {
    pub fn new(q: Vec<T>) -> Self {
        Self { q }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn delta_to(&self, other: &Self) -> Vec<T> {
        other.q.iter().zip(&self.q).map(|(&b, &a)| b - a).collect()
    }
}

/// Pinhole camera: intrinsics `K`, world-to-camera transform `T_cw`, image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct CameraModel<T> {
    pub intrinsics: Matrix<T>,
    pub extrinsics: Matrix<T>,
    pub image_size: ImageSize,
}

impl<T: Real> CameraModel<T> {
    /// Camera with principal point at the image center and identity-free
    /// extrinsics supplied by the caller.
    pub fn new(focal: T, image_size: ImageSize, extrinsics: Matrix<T>) -> Self {
        let cx = T::lit(f64::from(image_size.width) / 2.0);
        let cy = T::lit(f64::from(image_size.height) / 2.0);
        let z = T::zero();
        let o = T::one();
        Self {
            intrinsics: Matrix::from_rows(&[&[focal, z, cx], &[z, focal, cy], &[z, z, o]]),
            extrinsics,
            image_size,
        }
    }

    pub fn principal_point(&self) -> Keypoint<T> {
        Keypoint::new(self.intrinsics[(0, 2)], self.intrinsics[(1, 2)])
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let t = &self.extrinsics;
        if (k.rows, k.cols) != (3, 3) || (t.rows, t.cols) != (4, 4) {
            return Err(Error::InvalidArgument(
                "camera needs a 3x3 intrinsic and 4x4 extrinsic matrix".into(),
            ));
        }
        let upper = k[(1, 0)] == T::zero() && k[(2, 0)] == T::zero() && k[(2, 1)] == T::zero();
        if !upper || !(k[(0, 0)] > T::zero()) || !(k[(1, 1)] > T::zero()) {
            return Err(Error::InvalidArgument(
                "intrinsics must be upper-triangular with positive focal lengths".into(),
            ));
        }
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for r in 0..3 {
                    s = s + t[(r, i)] * t[(r, j)];
                }
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((s - target).abs());
            }
        }
        if worst > T::lit(1e-9) {
            return Err(Error::InvalidArgument(format!(
                "extrinsic rotation not orthonormal (deviation {worst})"
            )));
        }
        Ok(())
    }
}

/// Simple polygon in pixel coordinates; counterclockwise after [`Polygon::normalized`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Polygon<T> {
    pub vertices: Vec<Keypoint<T>>,
}

impl<T: Real> Polygon<T> {
    pub fn new(vertices: Vec<Keypoint<T>>) -> Self {
        Self { vertices }
    }

    /// Shoelace signed area; positive for counterclockwise in a y-up frame.
    pub fn signed_area(&self) -> T {
        let n = self.vertices.len();
        let mut s = T::zero();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            s = s + (a.u * b.v - b.u * a.v);
        }
        s / T::lit(2.0)
    }

    pub fn normalized(mut self) -> Self {
        if self.signed_area() < T::zero() {
            self.vertices.reverse();
        }
        self
    }

    pub fn edges(&self) -> impl Iterator<Item = (Keypoint<T>, Keypoint<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// True when no two non-adjacent edges touch.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in i + 1..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if crate::geometry::segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        self.signed_area().abs() > T::zero()
    }

    /// Regular polygon approximating a circle.
    pub fn circle(center: Keypoint<T>, radius: T, sides: usize) -> Self {
        let tau = T::lit(std::f64::consts::TAU);
        Self::new(
            (0..sides)
                .map(|i| {
                    let a = tau * T::from_count(i) / T::from_count(sides);
                    Keypoint::new(center.u + radius * a.cos(), center.v + radius * a.sin())
                })
                .collect(),
        )
    }

    pub fn rectangle(min: Keypoint<T>, max: Keypoint<T>) -> Self {
        Self::new(vec![
            min,
            Keypoint::new(max.u, min.v),
            max,
            Keypoint::new(min.u, max.v),
        ])
    }
}

/// Pixel-space obstacles with a shared safety margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Scene<T> {
    pub image_size: ImageSize,
    pub safety_margin: T,
    pub obstacles: Vec<Polygon<T>>,
}

impl<T: Real> Scene<T> {
    pub fn empty(image_size: ImageSize, safety_margin: T) -> Self {
        Self {
            image_size,
            safety_margin,
            obstacles: Vec::new(),
        }
    }

    /// Checks the invariants and orients every obstacle counterclockwise.
    pub fn normalized(self) -> Result<Self> {
        if !(self.safety_margin >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "safety margin must be >= 0, got {}",
                self.safety_margin
            )));
        }
        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for (i, p) in self.obstacles.into_iter().enumerate() {
            if p.vertices.len() < 3 || !p.vertices.iter().all(Keypoint::is_finite) {
                return Err(Error::InvalidArgument(format!(
                    "obstacle {i} needs at least 3 finite vertices"
                )));
            }
            if !p.is_simple() {
                return Err(Error::InvalidArgument(format!(
                    "obstacle {i} is not a simple polygon"
                )));
            }
            obstacles.push(p.normalized());
        }
        Ok(Self {
            obstacles,
            ..self
        })
    }
}

/// Which distance an artifact's costs were computed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricTag {
    JointSpace,
    Learned,
    ImageSpace,
}

impl MetricTag {
    pub const ALL: [MetricTag; 3] = [MetricTag::JointSpace, MetricTag::Learned, MetricTag::ImageSpace];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricTag::JointSpace => "joint-space",
            MetricTag::Learned => "learned",
            MetricTag::ImageSpace => "image-space",
        }
    }
}

impl std::fmt::Display for MetricTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint-space" | "joint" => Ok(MetricTag::JointSpace),
            "learned" => Ok(MetricTag::Learned),
            "image-space" | "image" => Ok(MetricTag::ImageSpace),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// Table-style path statistics. Joint quantities need oracle configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub waypoints: usize,
    pub hop_pixels: Vec<f64>,
    pub total_pixels: f64,
    pub hop_radians: Option<Vec<f64>>,
    pub total_radians: Option<f64>,
    pub radians_per_1000px: Option<f64>,
}

/// Waypoint sequence from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct PlannedPath<T> {
    pub metric_tag: MetricTag,
    pub states: Vec<ImageState<T>>,
    /// Per-hop edge cost under `metric_tag`.
    pub costs: Vec<T>,
    pub total_cost: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_configs: Option<Vec<JointConfig<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathMetrics>,
}

impl<T: Real> PlannedPath<T> {
    pub fn start(&self) -> Option<&ImageState<T>> {
        self.states.first()
    }

    pub fn goal(&self) -> Option<&ImageState<T>> {
        self.states.last()
    }

    pub fn hops(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}
