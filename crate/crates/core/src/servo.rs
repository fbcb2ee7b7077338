//! Model-free adaptive visual servoing and the potential-field baseline.
//!
//! The controller only ever sees image states. Joint increments used for the
//! Jacobian fit come from integrating its own commands.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::collision::edge_in_collision;
use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_boundary, point_in_polygon};
use crate::linalg::{cholesky, cholesky_solve, norm, symmetric_eigenvalues, Matrix};
use crate::scalar::Real;
use crate::sim::{observe, ArmModel};
use crate::types::{CameraModel, ImageState, JointConfig, Keypoint, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ApfParams<T> {
    /// Attractive gain (dimensionless, multiplies pixel error).
    pub attraction: T,
    /// Repulsive gain of the 1/d potential (px³).
    pub repulsion: T,
    /// Influence radius ρ in pixels, measured from the inflated obstacle.
    pub influence: T,
    /// Step budget for a whole run.
    pub max_steps: usize,
}

impl<T: Real> Default for ApfParams<T> {
    fn default() -> Self {
        Self {
            attraction: T::one(),
            repulsion: T::lit(2.0e5),
            influence: T::lit(60.0),
            max_steps: 800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ServoConfig<T> {
    /// Gain λ (1/s).
    pub gain: T,
    /// Per-joint velocity limit (rad/s).
    pub v_sat: T,
    /// Estimation window length in samples.
    pub window: usize,
    /// Waypoint advance threshold (px).
    pub eps_wp: T,
    /// Final goal threshold (px).
    pub eps_goal: T,
    /// Excitation pulse amplitude (rad).
    pub excitation: T,
    pub max_steps_per_waypoint: usize,
    /// Control period (s).
    pub dt: T,
    /// Damping of the control pseudo-inverse.
    pub pinv_damping: T,
    /// Tikhonov damping of the Jacobian fit, applied to flagged windows only.
    pub ls_damping: T,
    /// Estimates whose squared singular value ratio falls below this are flagged.
    pub rank_tol: T,
    /// Command norm (rad/s) under which a step counts toward a stall.
    pub stall_speed: T,
    pub stall_steps: usize,
    pub apf: ApfParams<T>,
}

impl<T: Real> Default for ServoConfig<T> {
    fn default() -> Self {
        Self {
            gain: T::lit(2.0),
            v_sat: T::lit(0.5),
            window: 10,
            eps_wp: T::lit(15.0),
            eps_goal: T::lit(5.0),
            excitation: T::lit(0.02),
            max_steps_per_waypoint: 300,
            dt: T::lit(0.1),
            pinv_damping: T::lit(1e-6),
            ls_damping: T::lit(1e-9),
            rank_tol: T::lit(1e-8),
            stall_speed: T::lit(0.01),
            stall_steps: 20,
            apf: ApfParams::default(),
        }
    }
}

impl<T: Real> ServoConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gain", self.gain),
            ("v_sat", self.v_sat),
            ("eps_wp", self.eps_wp),
            ("eps_goal", self.eps_goal),
            ("excitation", self.excitation),
            ("dt", self.dt),
            ("pinv_damping", self.pinv_damping),
            ("ls_damping", self.ls_damping),
            ("rank_tol", self.rank_tol),
            ("stall_speed", self.stall_speed),
            ("apf.attraction", self.apf.attraction),
            ("apf.influence", self.apf.influence),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.apf.repulsion >= T::zero()) {
            return Err(Error::InvalidArgument("apf.repulsion must be non-negative".into()));
        }
        if self.window == 0 || self.max_steps_per_waypoint == 0 || self.stall_steps == 0 || self.apf.max_steps == 0 {
            return Err(Error::InvalidArgument("window and step counts must be positive".into()));
        }
        if self.eps_goal > self.eps_wp {
            return Err(Error::InvalidArgument(format!(
                "eps_goal ({}) exceeds eps_wp ({})",
                self.eps_goal, self.eps_wp
            )));
        }
        if self.excitation / self.dt > self.v_sat {
            return Err(Error::InvalidArgument(
                "excitation pulses would exceed v_sat; lower excitation or raise dt".into(),
            ));
        }
        Ok(())
    }
}

/// The only view of the robot the controller gets: command and look.
pub trait Plant<T: Real> {
    fn apply(&mut self, joint_velocity: &[T], dt: T) -> Result<()>;
    fn observe(&self) -> Result<ImageState<T>>;
    fn joints(&self) -> usize;
}

/// Simulated arm and camera. Joint limits act as hard stops.
#[derive(Debug, Clone)]
pub struct SimPlant<T> {
    arm: ArmModel<T>,
    camera: CameraModel<T>,
    q: JointConfig<T>,
    noise_std: T,
    rng: ChaCha8Rng,
}

impl<T: Real> SimPlant<T> {
    pub fn new(arm: ArmModel<T>, camera: CameraModel<T>, q0: JointConfig<T>) -> Result<Self> {
        arm.check_limits(&q0)?;
        Ok(Self {
            arm,
            camera,
            q: q0,
            noise_std: T::zero(),
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    /// Adds Gaussian actuation noise (rad/s standard deviation) to every command.
    pub fn with_noise(mut self, std: T, seed: u64) -> Self {
        self.noise_std = std;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    /// Ground truth for reporting; not part of [`Plant`].
    pub fn oracle_joints(&self) -> &JointConfig<T> {
        &self.q
    }
}

impl<T: Real> Plant<T> for SimPlant<T> {
    fn apply(&mut self, joint_velocity: &[T], dt: T) -> Result<()> {
        if joint_velocity.len() != self.q.len() {
            return Err(Error::Arity {
                expected: self.q.len(),
                got: joint_velocity.len(),
            });
        }
        let noise = self.noise_std;
        for (qi, &v) in self.q.q.iter_mut().zip(joint_velocity) {
            let n = if noise > T::zero() {
                noise * T::lit(StandardNormal.sample(&mut self.rng))
            } else {
                T::zero()
            };
            *qi = *qi + (v + n) * dt;
        }
        self.q = self.arm.clamp(&self.q);
        Ok(())
    }

    fn observe(&self) -> Result<ImageState<T>> {
        observe(&self.arm, &self.camera, &self.q).map_err(|e| Error::Plant(e.to_string()))
    }

    fn joints(&self) -> usize {
        self.q.len()
    }
}

/// Plant whose flattened features are `offset + J·q`.
#[derive(Debug, Clone)]
pub struct LinearPlant<T> {
    pub jacobian: Matrix<T>,
    pub offset: Vec<T>,
    q: Vec<T>,
}

impl<T: Real> LinearPlant<T> {
    pub fn new(jacobian: Matrix<T>, offset: Vec<T>, q0: Vec<T>) -> Self {
        assert_eq!(jacobian.rows, offset.len());
        assert_eq!(jacobian.cols, q0.len());
        Self { jacobian, offset, q: q0 }
    }
}

impl<T: Real> Plant<T> for LinearPlant<T> {
    fn apply(&mut self, joint_velocity: &[T], dt: T) -> Result<()> {
        for (qi, &v) in self.q.iter_mut().zip(joint_velocity) {
            *qi = *qi + v * dt;
        }
        Ok(())
    }

    fn observe(&self) -> Result<ImageState<T>> {
        let k = self.jacobian.mul_vec(&self.q);
        let flat: Vec<T> = k.iter().zip(&self.offset).map(|(&a, &b)| a + b).collect();
        ImageState::unflatten(&flat)
    }

    fn joints(&self) -> usize {
        self.q.len()
    }
}

/// Ring buffer of `(Δq, Δ𝕂)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationWindow<T> {
    capacity: usize,
    samples: VecDeque<(Vec<T>, Vec<T>)>,
}

impl<T: Real> EstimationWindow<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            samples: VecDeque::new(),
        }
    }

    pub fn push(&mut self, dq: Vec<T>, dk: Vec<T>) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((dq, dk));
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &(Vec<T>, Vec<T>)> {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub min_singular: f64,
    pub max_singular: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEstimate<T> {
    /// 2N × M, pixels per radian.
    pub j: Matrix<T>,
    pub samples: usize,
    pub conditioning: Conditioning,
    /// Set when the excitation does not span joint space; the caller must re-excite.
    pub rank_deficient: bool,
}

/// Least-squares fit of `Δ𝕂 ≈ J·Δq` over the samples through the normal
/// equations `ΔQᵀΔQ Jᵀ = ΔQᵀΔ𝕂`. A flagged window gets the damped system
/// `(ΔQᵀΔQ + μI) Jᵀ = ΔQᵀΔ𝕂` instead.
pub fn estimate_jacobian<'a, T: Real + 'a>(
    samples: impl IntoIterator<Item = &'a (Vec<T>, Vec<T>)>,
    damping: T,
    rank_tol: T,
) -> Result<JacobianEstimate<T>> {
    let samples: Vec<&(Vec<T>, Vec<T>)> = samples.into_iter().collect();
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("empty estimation window".into()));
    };
    let (m, f) = (first.0.len(), first.1.len());
    if samples.len() < m {
        return Err(Error::InvalidArgument(format!(
            "estimation window holds {} samples, needs at least {m}",
            samples.len()
        )));
    }
    let mut a: Matrix<T> = Matrix::zeros(m, m);
    let mut b: Matrix<T> = Matrix::zeros(m, f);
    for (dq, dk) in &samples {
        if dq.len() != m || dk.len() != f {
            return Err(Error::Arity {
                expected: m,
                got: dq.len(),
            });
        }
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = a[(i, j)] + dq[i] * dq[j];
            }
            for j in 0..f {
                b[(i, j)] = b[(i, j)] + dq[i] * dk[j];
            }
        }
    }
    let eig = symmetric_eigenvalues(&a);
    let lo = eig[0].max(T::zero());
    let hi = eig[m - 1].max(T::zero());
    let rank_deficient = !(hi > T::zero()) || lo < rank_tol * hi;
    let mut damped = a.clone();
    if rank_deficient {
        for i in 0..m {
            damped[(i, i)] = damped[(i, i)] + damping;
        }
    }
    let l = cholesky(&damped).ok_or_else(|| Error::InvalidArgument("estimation system is not positive definite".into()))?;
    let mut j = Matrix::zeros(f, m);
    for col in 0..f {
        let rhs: Vec<T> = (0..m).map(|i| b[(i, col)]).collect();
        let x = cholesky_solve(&l, &rhs);
        for (i, xi) in x.into_iter().enumerate() {
            j[(col, i)] = xi;
        }
    }
    Ok(JacobianEstimate {
        j,
        samples: samples.len(),
        conditioning: Conditioning {
            min_singular: lo.sqrt().to_f64_lossy(),
            max_singular: hi.sqrt().to_f64_lossy(),
        },
        rank_deficient,
    })
}

/// `J⁺x = (JᵀJ + μI)⁻¹Jᵀx`.
pub fn damped_pinv_apply<T: Real>(j: &Matrix<T>, x: &[T], damping: T) -> Vec<T> {
    let jt = j.transpose();
    let mut a = jt.matmul(j);
    for i in 0..a.rows {
        a[(i, i)] = a[(i, i)] + damping;
    }
    let rhs = jt.mul_vec(x);
    match cholesky(&a) {
        Some(l) => cholesky_solve(&l, &rhs),
        None => vec![T::zero(); j.cols],
    }
}

fn saturate<T: Real>(v: &mut [T], limit: T) {
    for x in v {
        *x = x.max(-limit).min(limit);
    }
}

fn feature_error<T: Real>(current: &ImageState<T>, target: &ImageState<T>) -> Vec<T> {
    current
        .flatten()
        .iter()
        .zip(target.flatten())
        .map(|(&c, t)| c - t)
        .collect()
}

/// `q̇ = −λ·J⁺(𝕂 − 𝕂*)`, clamped per joint to `±v_sat`.
pub fn servo_step<T: Real>(
    current: &ImageState<T>,
    target: &ImageState<T>,
    j: &Matrix<T>,
    cfg: &ServoConfig<T>,
) -> Vec<T> {
    let e = feature_error(current, target);
    drive(j, &e, cfg)
}

fn drive<T: Real>(j: &Matrix<T>, e: &[T], cfg: &ServoConfig<T>) -> Vec<T> {
    let mut qdot: Vec<T> = damped_pinv_apply(j, e, cfg.pinv_damping)
        .into_iter()
        .map(|x| -cfg.gain * x)
        .collect();
    saturate(&mut qdot, cfg.v_sat);
    qdot
}

/// Potential-field command: attraction of every keypoint to its goal plus
/// repulsion from obstacles closer than ρ, mapped through the same `J⁺`.
///
/// Repulsion acts at the keypoints and at interior points of every link; a
/// force at `(1−t)·k_i + t·k_{i+1}` is shared by the two keypoints with weights
/// `1−t` and `t`.
pub fn apf_step<T: Real>(
    current: &ImageState<T>,
    goal: &ImageState<T>,
    scene: &Scene<T>,
    j: &Matrix<T>,
    cfg: &ServoConfig<T>,
) -> Vec<T> {
    let p = &cfg.apf;
    let ks = &current.keypoints;
    let mut force: Vec<(T, T)> = ks
        .iter()
        .zip(&goal.keypoints)
        .map(|(k, g)| (p.attraction * (g.u - k.u), p.attraction * (g.v - k.v)))
        .collect();
    let mut push = |i: usize, w: T, (du, dv): (T, T)| {
        force[i].0 = force[i].0 + w * du;
        force[i].1 = force[i].1 + w * dv;
    };
    for poly in &scene.obstacles {
        for (i, k) in ks.iter().enumerate() {
            push(i, T::one(), repulsion(*k, &poly.vertices, scene.safety_margin, p));
        }
        for i in 0..ks.len().saturating_sub(1) {
            for t in LINK_SAMPLES {
                let t = T::lit(t);
                let f = repulsion(ks[i].lerp(&ks[i + 1], t), &poly.vertices, scene.safety_margin, p);
                push(i, T::one() - t, f);
                push(i + 1, t, f);
            }
        }
    }
    let pseudo_error: Vec<T> = force.iter().flat_map(|&(fu, fv)| [-fu, -fv]).collect();
    drive(j, &pseudo_error, cfg)
}

const LINK_SAMPLES: [f64; 3] = [0.25, 0.5, 0.75];

fn repulsion<T: Real>(k: Keypoint<T>, poly: &[Keypoint<T>], margin: T, p: &ApfParams<T>) -> (T, T) {
    let Some(c) = closest_point_on_boundary(k, poly) else {
        return (T::zero(), T::zero());
    };
    let inside = point_in_polygon(k, poly);
    let raw = k.dist(&c);
    let d = if inside { -raw } else { raw } - margin;
    if d >= p.influence {
        return (T::zero(), T::zero());
    }
    let floor = T::one();
    let d = d.max(floor);
    let mag = p.repulsion * (T::one() / d - T::one() / p.influence) / (d * d);
    let (mut du, mut dv) = (k.u - c.u, k.v - c.v);
    if inside {
        du = -du;
        dv = -dv;
    }
    let len = (du * du + dv * dv).sqrt();
    if len == T::zero() {
        return (T::zero(), T::zero());
    }
    (mag * du / len, mag * dv / len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Start,
    Probe,
    Servo,
}

/// One control step. `error_norm` is measured to the active waypoint,
/// `goal_error` and `ee_goal_error` to the final target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct LogEntry<T> {
    pub t: T,
    pub waypoint: usize,
    pub phase: Phase,
    pub image_state: ImageState<T>,
    pub command: Vec<T>,
    pub error_norm: T,
    pub goal_error: T,
    pub ee_goal_error: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum TrackVerdict {
    Converged,
    Stalled { waypoint: usize },
    Collided { waypoint: usize, step: usize },
    Aborted { reason: String },
}

impl TrackVerdict {
    pub fn is_converged(&self) -> bool {
        matches!(self, TrackVerdict::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Trajectory<T> {
    pub log: Vec<LogEntry<T>>,
    pub verdict: TrackVerdict,
    pub servo_steps: usize,
    pub probe_steps: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn response(&self) -> ResponseReport {
        let full: Vec<(f64, f64)> = self
            .log
            .iter()
            .map(|e| (e.t.to_f64_lossy(), e.goal_error.to_f64_lossy()))
            .collect();
        let ee: Vec<(f64, f64)> = self
            .log
            .iter()
            .map(|e| (e.t.to_f64_lossy(), e.ee_goal_error.to_f64_lossy()))
            .collect();
        ResponseReport {
            full: rise_settle_overshoot(&full),
            end_effector: rise_settle_overshoot(&ee),
        }
    }

    pub fn max_command(&self) -> T {
        self.log
            .iter()
            .flat_map(|e| e.command.iter())
            .fold(T::zero(), |m, &c| m.max(c.abs()))
    }
}

struct Runner<'a, T: Real, P: Plant<T>> {
    plant: &'a mut P,
    cfg: &'a ServoConfig<T>,
    collision_scene: Option<Scene<T>>,
    goal: ImageState<T>,
    window: EstimationWindow<T>,
    current: ImageState<T>,
    t: T,
    log: Vec<LogEntry<T>>,
    steps: usize,
    probe_steps: usize,
}

enum StepOutcome {
    Ok,
    Collided,
}

impl<'a, T: Real, P: Plant<T>> Runner<'a, T, P> {
    fn new(plant: &'a mut P, cfg: &'a ServoConfig<T>, scene: Option<&Scene<T>>, goal: ImageState<T>) -> Result<Self> {
        let current = plant.observe()?;
        current.ensure_same_arity(&goal)?;
        let collision_scene = scene.map(|s| Scene {
            safety_margin: T::zero(),
            ..s.clone()
        });
        let mut r = Self {
            plant,
            cfg,
            collision_scene,
            goal,
            window: EstimationWindow::new(cfg.window),
            current,
            t: T::zero(),
            log: Vec::new(),
            steps: 0,
            probe_steps: 0,
        };
        let m = r.plant.joints();
        r.record(0, Phase::Start, vec![T::zero(); m], None)?;
        Ok(r)
    }

    fn record(&mut self, waypoint: usize, phase: Phase, command: Vec<T>, target: Option<&ImageState<T>>) -> Result<()> {
        let error_norm = match target {
            Some(t) => norm(&feature_error(&self.current, t)),
            None => T::zero(),
        };
        let goal_error = norm(&feature_error(&self.current, &self.goal));
        let ee_goal_error = match (self.current.end_effector(), self.goal.end_effector()) {
            (Some(a), Some(b)) => a.dist(b),
            _ => T::zero(),
        };
        self.log.push(LogEntry {
            t: self.t,
            waypoint,
            phase,
            image_state: self.current.clone(),
            command,
            error_norm,
            goal_error,
            ee_goal_error,
        });
        Ok(())
    }

    fn apply(&mut self, waypoint: usize, phase: Phase, qdot: Vec<T>, target: &ImageState<T>) -> Result<StepOutcome> {
        self.plant.apply(&qdot, self.cfg.dt)?;
        let next = self.plant.observe()?;
        let dq: Vec<T> = qdot.iter().map(|&v| v * self.cfg.dt).collect();
        let dk = feature_error(&next, &self.current);
        self.window.push(dq, dk);
        let prev = std::mem::replace(&mut self.current, next);
        self.t = self.t + self.cfg.dt;
        match phase {
            Phase::Probe => self.probe_steps += 1,
            _ => self.steps += 1,
        }
        self.record(waypoint, phase, qdot, Some(target))?;
        if let Some(scene) = &self.collision_scene {
            if !edge_in_collision(&prev, &self.current, scene)?.is_free() {
                return Ok(StepOutcome::Collided);
            }
        }
        Ok(StepOutcome::Ok)
    }

    /// One `+a` and one `−a` pulse per joint; net displacement is zero.
    fn excite(&mut self, waypoint: usize, target: &ImageState<T>) -> Result<StepOutcome> {
        let m = self.plant.joints();
        let speed = self.cfg.excitation / self.cfg.dt;
        for joint in 0..m {
            for sign in [T::one(), -T::one()] {
                let mut qdot = vec![T::zero(); m];
                qdot[joint] = sign * speed;
                if let StepOutcome::Collided = self.apply(waypoint, Phase::Probe, qdot, target)? {
                    return Ok(StepOutcome::Collided);
                }
            }
        }
        Ok(StepOutcome::Ok)
    }

    fn estimate(&mut self, waypoint: usize, target: &ImageState<T>) -> Result<Option<Matrix<T>>> {
        for _ in 0..3 {
            let est = if self.window.len() >= self.plant.joints() {
                Some(estimate_jacobian(self.window.samples(), self.cfg.ls_damping, self.cfg.rank_tol)?)
            } else {
                None
            };
            match est {
                Some(e) if !e.rank_deficient => return Ok(Some(e.j)),
                _ => {
                    if let StepOutcome::Collided = self.excite(waypoint, target)? {
                        return Ok(None);
                    }
                }
            }
        }
        Err(Error::Plant("excitation does not produce a usable Jacobian".into()))
    }

    fn finish(self, verdict: TrackVerdict) -> Trajectory<T> {
        Trajectory {
            log: self.log,
            verdict,
            servo_steps: self.steps,
            probe_steps: self.probe_steps,
        }
    }
}

/// Tracks `waypoints` in order. Each waypoint starts from an empty window that is
/// seeded by excitation pulses. Collisions are judged against `scene` with zero
/// margin and only reported. Plant failures end the run with the partial log.
pub fn track_path<T: Real, P: Plant<T>>(
    waypoints: &[ImageState<T>],
    plant: &mut P,
    scene: Option<&Scene<T>>,
    cfg: &ServoConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let Some(goal) = waypoints.last().cloned() else {
        return Err(Error::InvalidArgument("path has no waypoints".into()));
    };
    let mut run = Runner::new(plant, cfg, scene, goal)?;
    let order: Vec<usize> = if waypoints.len() == 1 { vec![0] } else { (1..waypoints.len()).collect() };
    let last = waypoints.len() - 1;
    for w in order {
        let target = &waypoints[w];
        let eps = if w == last { cfg.eps_goal } else { cfg.eps_wp };
        run.window.clear();
        match run.excite(w, target) {
            Ok(StepOutcome::Ok) => {}
            Ok(StepOutcome::Collided) => {
                let step = run.steps + run.probe_steps;
                return Ok(run.finish(TrackVerdict::Collided { waypoint: w, step }));
            }
            Err(e) => return Ok(run.finish(TrackVerdict::Aborted { reason: e.to_string() })),
        }
        let mut used = 0;
        loop {
            if norm(&feature_error(&run.current, target)) <= eps {
                break;
            }
            if used >= cfg.max_steps_per_waypoint {
                return Ok(run.finish(TrackVerdict::Stalled { waypoint: w }));
            }
            let outcome = run.estimate(w, target).and_then(|j| match j {
                None => Ok(StepOutcome::Collided),
                Some(j) => {
                    let qdot = servo_step(&run.current, target, &j, cfg);
                    run.apply(w, Phase::Servo, qdot, target)
                }
            });
            match outcome {
                Ok(StepOutcome::Ok) => {}
                Ok(StepOutcome::Collided) => {
                    let step = run.steps + run.probe_steps;
                    return Ok(run.finish(TrackVerdict::Collided { waypoint: w, step }));
                }
                Err(e) => return Ok(run.finish(TrackVerdict::Aborted { reason: e.to_string() })),
            }
            used += 1;
        }
    }
    Ok(run.finish(TrackVerdict::Converged))
}

/// Potential-field run straight to `goal`. Stalls when the command norm stays
/// under `stall_speed` for `stall_steps` consecutive steps or the budget runs out.
pub fn run_apf<T: Real, P: Plant<T>>(
    goal: &ImageState<T>,
    plant: &mut P,
    scene: &Scene<T>,
    cfg: &ServoConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let mut run = Runner::new(plant, cfg, Some(scene), goal.clone())?;
    let mut quiet = 0;
    for _ in 0..cfg.apf.max_steps {
        if norm(&feature_error(&run.current, goal)) <= cfg.eps_goal {
            return Ok(run.finish(TrackVerdict::Converged));
        }
        let outcome = run.estimate(0, goal).and_then(|j| match j {
            None => Ok((StepOutcome::Collided, T::zero())),
            Some(j) => {
                let qdot = apf_step(&run.current, goal, scene, &j, cfg);
                let speed = norm(&qdot);
                run.apply(0, Phase::Servo, qdot, goal).map(|o| (o, speed))
            }
        });
        match outcome {
            Ok((StepOutcome::Ok, speed)) => {
                quiet = if speed < cfg.stall_speed { quiet + 1 } else { 0 };
                if quiet >= cfg.stall_steps {
                    return Ok(run.finish(TrackVerdict::Stalled { waypoint: 0 }));
                }
            }
            Ok((StepOutcome::Collided, _)) => {
                let step = run.steps + run.probe_steps;
                return Ok(run.finish(TrackVerdict::Collided { waypoint: 0, step }));
            }
            Err(e) => return Ok(run.finish(TrackVerdict::Aborted { reason: e.to_string() })),
        }
    }
    if norm(&feature_error(&run.current, goal)) <= cfg.eps_goal {
        return Ok(run.finish(TrackVerdict::Converged));
    }
    Ok(run.finish(TrackVerdict::Stalled { waypoint: 0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub rise_time: Option<f64>,
    pub settling_time: Option<f64>,
    pub overshoot_pct: Option<f64>,
    pub execution_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport {
    pub full: Response,
    pub end_effector: Response,
}

/// Step-response figures of `‖e(t)‖ / ‖e(0)‖` from `(t, ‖e‖)` samples.
///
/// Rise is the first time at or below 10 %, settling the first time after which
/// the signal stays at or below 2 %, overshoot the largest rebound above the
/// running minimum after rise, in percent of `‖e(0)‖`. Figures that the log
/// never reaches are `None`.
pub fn rise_settle_overshoot(samples: &[(f64, f64)]) -> Response {
    let Some(&(t0, e0)) = samples.first() else {
        return Response {
            rise_time: None,
            settling_time: None,
            overshoot_pct: None,
            execution_time: 0.0,
        };
    };
    let execution_time = samples.last().map(|s| s.0 - t0).unwrap_or(0.0);
    if e0 <= 0.0 {
        return Response {
            rise_time: Some(0.0),
            settling_time: Some(0.0),
            overshoot_pct: Some(0.0),
            execution_time,
        };
    }
    let rel: Vec<(f64, f64)> = samples.iter().map(|&(t, e)| (t - t0, e / e0)).collect();
    let rise_idx = rel.iter().position(|&(_, r)| r <= 0.1);
    let settling_time = match rel.iter().rposition(|&(_, r)| r > 0.02) {
        None => Some(0.0),
        Some(i) if i + 1 < rel.len() => Some(rel[i + 1].0),
        Some(_) => None,
    };
    let overshoot_pct = rise_idx.map(|i| {
        let mut low = rel[i].1;
        let mut worst = 0.0f64;
        for &(_, r) in &rel[i..] {
            low = low.min(r);
            worst = worst.max(r - low);
        }
        worst * 100.0
    });
    Response {
        rise_time: rise_idx.map(|i| rel[i].0),
        settling_time,
        overshoot_pct,
        execution_time,
    }
}
