//! Ground-truth oracle: a planar serial arm viewed by a pinhole camera.
//!
//! Used offline to generate keypoint datasets and to verify planner and
//! controller output. Nothing at plan or control time reads joint state
//! through this module except the plant adapter, which only exposes images.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::types::{validate_image_state, CameraModel, ImageSize, ImageState, JointConfig, Keypoint};

/// A body point: `offset` meters along link `link` (link 0 is the fixed base link).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Anchor<T> {
    pub link: usize,
    pub offset: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct BasePose<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
    /// Height of the motion plane in world coordinates.
    pub z: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ArmModel<T> {
    /// `M + 1` lengths: the fixed base link followed by one link per joint.
    pub link_lengths: Vec<T>,
    pub base_pose: BasePose<T>,
    pub joint_limits: Vec<[T; 2]>,
    pub keypoint_anchors: Vec<Anchor<T>>,
}

impl<T: Real> ArmModel<T> {
    /// Three-joint planar arm standing upright at the world origin, with
    /// keypoints at the base, each joint and the tip.
    pub fn default_planar() -> Self {
        let l = |x: f64| T::lit(x);
        let link_lengths = vec![l(0.25), l(0.36), l(0.32), l(0.16)];
        let keypoint_anchors = default_anchors(&link_lengths);
        Self {
            link_lengths,
            base_pose: BasePose {
                x: T::zero(),
                y: T::zero(),
                theta: l(std::f64::consts::FRAC_PI_2),
                z: T::zero(),
            },
            joint_limits: vec![[l(-1.1), l(1.1)], [l(-2.0), l(0.3)], [l(-1.4), l(1.6)]],
            keypoint_anchors,
        }
    }

    pub fn joints(&self) -> usize {
        self.link_lengths.len() - 1
    }

    pub fn keypoints(&self) -> usize {
        self.keypoint_anchors.len()
    }

    pub fn joint_ranges(&self) -> Vec<T> {
        self.joint_limits.iter().map(|[lo, hi]| *hi - *lo).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.len() < 2 || self.link_lengths.iter().any(|&l| !(l > T::zero())) {
            return Err(Error::InvalidArgument(
                "arm needs at least two positive link lengths".into(),
            ));
        }
        if self.joint_limits.len() != self.joints() {
            return Err(Error::Arity {
                expected: self.joints(),
                got: self.joint_limits.len(),
            });
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::InvalidArgument("joint limit with min > max".into()));
        }
        let mut prev = (0usize, T::neg_infinity());
        for a in &self.keypoint_anchors {
            if a.link >= self.link_lengths.len()
                || a.offset < T::zero()
                || a.offset > self.link_lengths[a.link]
                || (a.link, a.offset) < prev
            {
                return Err(Error::InvalidArgument(
                    "keypoint anchors must lie on the links, ordered base to tip".into(),
                ));
            }
            prev = (a.link, a.offset);
        }
        let last = self.link_lengths.len() - 1;
        match self.keypoint_anchors.last() {
            Some(a) if a.link == last && a.offset == self.link_lengths[last] => Ok(()),
            _ => Err(Error::InvalidArgument(
                "keypoint anchors must include the end-effector tip".into(),
            )),
        }
    }

    pub fn check_limits(&self, q: &JointConfig<T>) -> Result<()> {
        if q.len() != self.joints() {
            return Err(Error::Arity {
                expected: self.joints(),
                got: q.len(),
            });
        }
        for (joint, (&value, [min, max])) in q.q.iter().zip(&self.joint_limits).enumerate() {
            if !(value >= *min && value <= *max) {
                return Err(Error::JointLimit {
                    joint,
                    value: value.to_f64_lossy(),
                    min: min.to_f64_lossy(),
                    max: max.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    /// Clamps each joint into its limits.
    pub fn clamp(&self, q: &JointConfig<T>) -> JointConfig<T> {
        JointConfig::new(
            q.q.iter()
                .zip(&self.joint_limits)
                .map(|(&v, [lo, hi])| v.max(*lo).min(*hi))
                .collect(),
        )
    }
}

/// Anchors at the base, every joint and the tip.
pub fn default_anchors<T: Real>(link_lengths: &[T]) -> Vec<Anchor<T>> {
    let mut anchors: Vec<Anchor<T>> = (0..link_lengths.len())
        .map(|link| Anchor {
            link,
            offset: T::zero(),
        })
        .collect();
    let last = link_lengths.len() - 1;
    anchors.push(Anchor {
        link: last,
        offset: link_lengths[last],
    });
    anchors
}

/// World points `[x, y, z]` of the keypoint anchors, base first.
pub fn forward_kinematics<T: Real>(arm: &ArmModel<T>, q: &JointConfig<T>) -> Result<Vec<[T; 3]>> {
    arm.check_limits(q)?;
    Ok(forward_kinematics_unchecked(arm, &q.q))
}

pub(crate) fn forward_kinematics_unchecked<T: Real>(arm: &ArmModel<T>, q: &[T]) -> Vec<[T; 3]> {
    let pose = arm.base_pose;
    // start point and heading of every link
    let mut starts = Vec::with_capacity(arm.link_lengths.len());
    let (mut x, mut y, mut heading) = (pose.x, pose.y, pose.theta);
    for (i, &len) in arm.link_lengths.iter().enumerate() {
        if i > 0 {
            heading = heading + q[i - 1];
        }
        starts.push((x, y, heading));
        x = x + len * heading.cos();
        y = y + len * heading.sin();
    }
    arm.keypoint_anchors
        .iter()
        .map(|a| {
            let (sx, sy, h) = starts[a.link];
            [sx + a.offset * h.cos(), sy + a.offset * h.sin(), pose.z]
        })
        .collect()
}

/// Pinhole projection `K · T_cw · x` with perspective division.
pub fn project<T: Real>(cam: &CameraModel<T>, world_points: &[[T; 3]]) -> Result<ImageState<T>> {
    let t = &cam.extrinsics;
    let k = &cam.intrinsics;
    let mut keypoints = Vec::with_capacity(world_points.len());
    for (index, p) in world_points.iter().enumerate() {
        let mut c = [T::zero(); 3];
        for (r, slot) in c.iter_mut().enumerate() {
            *slot = t[(r, 0)] * p[0] + t[(r, 1)] * p[1] + t[(r, 2)] * p[2] + t[(r, 3)];
        }
        if !(c[2] > T::zero()) {
            return Err(Error::Projection {
                index,
                depth: c[2].to_f64_lossy(),
            });
        }
        let h: Vec<T> = (0..3)
            .map(|r| k[(r, 0)] * c[0] + k[(r, 1)] * c[1] + k[(r, 2)] * c[2])
            .collect();
        keypoints.push(Keypoint::new(h[0] / h[2], h[1] / h[2]));
    }
    Ok(ImageState::new(keypoints))
}

/// Camera facing the arm plane head-on from 1.5 m, centred on the workspace.
pub fn default_camera<T: Real>() -> CameraModel<T> {
    let l = |x: f64| T::lit(x);
    let (z, o) = (T::zero(), T::one());
    // R = diag(1, -1, -1) keeps world +y pointing up in the image; camera centre (0, 0.45, 1.5).
    let extrinsics = Matrix::from_rows(&[
        &[o, z, z, z],
        &[z, -o, z, l(0.45)],
        &[z, z, -o, l(1.5)],
        &[z, z, z, o],
    ]);
    CameraModel::new(l(420.0), ImageSize::new(640, 480), extrinsics)
}

/// Image state of configuration `q`.
pub fn observe<T: Real>(arm: &ArmModel<T>, cam: &CameraModel<T>, q: &JointConfig<T>) -> Result<ImageState<T>> {
    project(cam, &forward_kinematics(arm, q)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SweepConfig<T> {
    /// Lattice points per joint.
    pub res: usize,
    /// Seconds per step.
    pub dt: T,
    /// Joint speed cap, rad/s.
    pub v_max: T,
    /// Camera frame rate, Hz.
    pub frame_rate: T,
}

impl<T: Real> Default for SweepConfig<T> {
    fn default() -> Self {
        Self {
            res: 15,
            dt: T::lit(0.1),
            v_max: T::lit(0.5),
            frame_rate: T::lit(10.0),
        }
    }
}

impl<T: Real> SweepConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.res == 0 || !(self.dt > T::zero()) || !(self.v_max > T::zero()) || !(self.frame_rate > T::zero()) {
            return Err(Error::InvalidArgument(
                "sweep res, dt, v_max and frame_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Joint speed that traverses `range` in `res` steps of `dt`, capped at `v_max`.
pub fn sweep_velocity<T: Real>(range: T, cfg: &SweepConfig<T>) -> T {
    (range / (T::from_count(cfg.res) * cfg.dt)).min(cfg.v_max)
}

/// One recorded camera frame of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Frame<T> {
    pub frame_index: usize,
    pub joint_config: JointConfig<T>,
    pub image_state: ImageState<T>,
    /// Velocity commanded from this frame to the next (zero on the last frame).
    pub joint_velocity: Vec<T>,
    /// Duration of that transition in seconds (zero on the last frame).
    pub dt: T,
}

/// Lattice digits of frame `f` in boustrophedon order: digit `i` runs backwards
/// whenever the number of completed passes of the enclosing digits is odd.
fn snake_digits(f: usize, res: usize, joints: usize) -> Vec<usize> {
    (0..joints)
        .map(|i| {
            let inner = res.pow((joints - 1 - i) as u32);
            let plain = (f / inner) % res;
            let passes = f / (inner * res);
            if passes % 2 == 1 {
                res - 1 - plain
            } else {
                plain
            }
        })
        .collect()
}

fn lattice_config<T: Real>(arm: &ArmModel<T>, digits: &[usize], res: usize) -> JointConfig<T> {
    let half = T::lit(0.5);
    JointConfig::new(
        digits
            .iter()
            .zip(&arm.joint_limits)
            .map(|(&d, [lo, hi])| *lo + (T::from_count(d) + half) * (*hi - *lo) / T::from_count(res))
            .collect(),
    )
}

/// Sweeps the joint box on a `res^M` lattice in snake order so that consecutive
/// frames differ by one step of one joint.
pub fn run_sweep<T: Real>(arm: &ArmModel<T>, cam: &CameraModel<T>, cfg: &SweepConfig<T>) -> Result<Vec<Frame<T>>> {
    arm.validate()?;
    cfg.validate()?;
    let joints = arm.joints();
    let total = cfg
        .res
        .checked_pow(joints as u32)
        .ok_or_else(|| Error::InvalidArgument("sweep lattice too large".into()))?;
    let ranges = arm.joint_ranges();
    let speeds: Vec<T> = ranges.iter().map(|&r| sweep_velocity(r, cfg)).collect();

    let observed: Vec<(JointConfig<T>, ImageState<T>)> = (0..total)
        .into_par_iter()
        .map(|f| {
            let q = lattice_config(arm, &snake_digits(f, cfg.res, joints), cfg.res);
            let s = observe(arm, cam, &q)?;
            let verdict = validate_image_state(&s, cam.image_size, arm.keypoints());
            if !verdict.is_valid() {
                return Err(Error::Visibility {
                    q: q.q.iter().map(|v| v.to_f64_lossy()).collect(),
                    reason: verdict
                        .violations
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
            Ok((q, s))
        })
        .collect::<Result<_>>()?;

    let mut frames = Vec::with_capacity(total);
    for (f, (q, s)) in observed.iter().enumerate() {
        let (joint_velocity, dt) = match observed.get(f + 1) {
            Some((next, _)) => {
                let step = q.delta_to(next);
                let j = step
                    .iter()
                    .position(|d| *d != T::zero())
                    .expect("consecutive lattice points differ");
                let speed = speeds[j];
                let duration = step[j].abs() / speed;
                let mut v = vec![T::zero(); joints];
                v[j] = step[j].signum() * speed;
                (v, duration)
            }
            None => (vec![T::zero(); joints], T::zero()),
        };
        frames.push(Frame {
            frame_index: f,
            joint_config: q.clone(),
            image_state: s.clone(),
            joint_velocity,
            dt,
        });
    }
    Ok(frames)
}

/// Integer pixel cells `(x, y)`; cell `(x, y)` covers `[x, x+1) × [y, y+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PixelRegion {
    pub pixels: BTreeSet<(i64, i64)>,
}

impl PixelRegion {
    pub fn contains(&self, x: i64, y: i64) -> bool {
        self.pixels.contains(&(x, y))
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Pixels whose cell lies within `thickness / 2` of the projected arm polyline.
pub fn occupied_pixels<T: Real>(
    arm: &ArmModel<T>,
    cam: &CameraModel<T>,
    q: &JointConfig<T>,
    thickness: T,
) -> Result<PixelRegion> {
    let s = observe(arm, cam, q)?;
    Ok(polyline_pixels(&s.keypoints, thickness))
}

pub fn polyline_pixels<T: Real>(points: &[Keypoint<T>], thickness: T) -> PixelRegion {
    let half = thickness / T::lit(2.0);
    let mut pixels = BTreeSet::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let to_i = |v: T| v.floor().to_i64().unwrap_or(0);
        let x0 = to_i(a.u.min(b.u) - half) - 1;
        let x1 = to_i(a.u.max(b.u) + half) + 1;
        let y0 = to_i(a.v.min(b.v) - half) - 1;
        let y1 = to_i(a.v.max(b.v) + half) + 1;
        for x in x0..=x1 {
            for y in y0..=y1 {
                let (fx, fy) = (T::lit(x as f64), T::lit(y as f64));
                let o = T::one();
                let cell = [
                    Keypoint::new(fx, fy),
                    Keypoint::new(fx + o, fy),
                    Keypoint::new(fx + o, fy + o),
                    Keypoint::new(fx, fy + o),
                ];
                if geometry::shape_distance(&[a, b], &cell) <= half {
                    pixels.insert((x, y));
                }
            }
        }
    }
    PixelRegion { pixels }
}
