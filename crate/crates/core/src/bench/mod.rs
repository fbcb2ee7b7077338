//! Experiment harness: runs the whole pipeline and the comparative studies.
//!
//! Everything written by [`write_outputs`] except `timings.json` depends only
//! on the configuration and seed.

mod report;
mod scenarios;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{oracle_edge_check, state_in_collision};
use crate::dataset::{augment_spans, consecutive_pairs, split, PairSample, DEFAULT_AUGMENT_FACTOR};
use crate::error::{Error, Result};
use crate::metrics::{LearnedMetric, MetricKind};
use crate::mlp::{evaluate, train, EvalReport, Mlp, MlpSpec, TrainConfig, TrainReport};
use crate::planner::{query, Endpoint, QueryConfig, QueryOutcome};
use crate::roadmap::{
    build, edge_displacement_histogram, mean, sample_nodes, BuildStats, DisplacementStats, Roadmap,
    SampleStrategy,
};
use crate::servo::{run_apf, track_path, ServoConfig, SimPlant, Trajectory};
use crate::sim::{default_camera, run_sweep, ArmModel, Frame, SweepConfig};
use crate::types::{CameraModel, MetricTag, PlannedPath, Scene};

pub use report::{write_outputs, ControlRow, QueryRow};
pub use scenarios::{fixture, fixture_names, random_scene, Fixture, Scenario, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteCounts {
    pub free: usize,
    pub single: usize,
    pub multi: usize,
    pub shelf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub sweep: SweepConfig<f64>,
    /// Augmented pairs per consecutive pair.
    pub augment_factor: usize,
    /// Longest augmentation window in frames; `None` spans the whole sweep.
    pub max_span: Option<usize>,
    pub train_fraction: f64,
    pub hidden: Vec<usize>,
    pub train: TrainConfig<f64>,
    pub nodes: usize,
    pub k: usize,
    pub queries: usize,
    pub soundness_scenes: usize,
    pub safety_margin: f64,
    pub oracle_steps: usize,
    pub oracle_samples: usize,
    pub suite: SuiteCounts,
    pub servo: ServoConfig<f64>,
    pub histogram_bins: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sweep: SweepConfig::default(),
            augment_factor: DEFAULT_AUGMENT_FACTOR,
            max_span: None,
            train_fraction: 0.8,
            hidden: vec![64, 64],
            train: TrainConfig {
                epochs: 150,
                ..TrainConfig::default()
            },
            nodes: 1000,
            k: 25,
            queries: 100,
            soundness_scenes: 60,
            safety_margin: 8.0,
            oracle_steps: 100,
            oracle_samples: 8,
            suite: SuiteCounts {
                free: 16,
                single: 10,
                multi: 4,
                shelf: 1,
            },
            servo: ServoConfig::default(),
            histogram_bins: 30,
        }
    }
}

impl BenchConfig {
    /// A few-second configuration for smoke and determinism runs.
    pub fn small() -> Self {
        Self {
            sweep: SweepConfig {
                res: 8,
                ..SweepConfig::default()
            },
            hidden: vec![32, 32],
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            nodes: 250,
            k: 15,
            queries: 20,
            soundness_scenes: 10,
            suite: SuiteCounts {
                free: 4,
                single: 3,
                multi: 2,
                shelf: 1,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        self.train.validate()?;
        self.servo.validate()?;
        if self.nodes < 2 || self.k == 0 {
            return Err(Error::InvalidArgument("nodes must be >= 2 and k > 0".into()));
        }
        if !(self.safety_margin >= 0.0) {
            return Err(Error::InvalidArgument("safety_margin must be >= 0".into()));
        }
        if self.oracle_steps == 0 || self.oracle_samples == 0 {
            return Err(Error::InvalidArgument("oracle sampling counts must be positive".into()));
        }
        Ok(())
    }

    /// Independent seed for a named pipeline stage.
    pub fn stage_seed(&self, stage: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(stage.wrapping_mul(0xBF58_476D_1CE4_E5B9))
    }
}

const STAGE_AUGMENT: u64 = 1;
const STAGE_SPLIT: u64 = 2;
const STAGE_INIT: u64 = 3;
const STAGE_SHUFFLE: u64 = 4;
const STAGE_NODES: u64 = 5;
const STAGE_QUERIES: u64 = 6;
const STAGE_SOUNDNESS: u64 = 7;
const STAGE_CONTROL: u64 = 8;

pub type Samples = Vec<(Vec<f64>, Vec<f64>)>;

/// Training and validation pairs.
pub type PairSplit = (Vec<PairSample<f64>>, Vec<PairSample<f64>>);

pub fn to_samples(pairs: &[PairSample<f64>]) -> Samples {
    pairs.iter().map(|p| (p.input(), p.dq.clone())).collect()
}

/// Consecutive pairs plus augmented windows, split into training and validation.
pub fn make_pairs(frames: &[Frame<f64>], cfg: &BenchConfig) -> Result<PairSplit> {
    let mut pairs = consecutive_pairs(frames)?;
    let span = cfg.max_span.unwrap_or(frames.len().saturating_sub(1));
    let extra = augment_spans(
        frames,
        span,
        cfg.augment_factor * pairs.len(),
        cfg.stage_seed(STAGE_AUGMENT),
    )?;
    pairs.extend(extra);
    split(&pairs, cfg.train_fraction, cfg.stage_seed(STAGE_SPLIT))
}

pub fn train_metric(
    train_set: &Samples,
    keypoints: usize,
    joints: usize,
    cfg: &BenchConfig,
) -> Result<(Mlp<f64>, TrainReport<f64>)> {
    let mut sizes = vec![4 * keypoints];
    sizes.extend(&cfg.hidden);
    sizes.push(joints);
    let spec = MlpSpec {
        layer_sizes: sizes,
        seed: cfg.stage_seed(STAGE_INIT),
        ..MlpSpec::displacement(keypoints, joints, 0)
    };
    let mut net = Mlp::new(spec)?;
    let tc = TrainConfig {
        seed: cfg.stage_seed(STAGE_SHUFFLE),
        ..cfg.train
    };
    let report = train(&mut net, train_set, &tc)?;
    Ok((net, report))
}

/// Metric in the fixed reporting order joint-space, learned, image-space.
pub fn metric_for(tag: MetricTag, model: &Mlp<f64>) -> Result<MetricKind<f64>> {
    Ok(match tag {
        MetricTag::JointSpace => MetricKind::JointSpace,
        MetricTag::Learned => MetricKind::Learned(LearnedMetric::new(model.clone())?),
        MetricTag::ImageSpace => MetricKind::ImageSpace,
    })
}

pub struct BuiltRoadmap {
    pub metric: MetricKind<f64>,
    pub roadmap: Roadmap<f64>,
    pub stats: BuildStats,
}

/// Trained model and the three roadmaps over one shared node sample.
pub struct Pipeline {
    pub config: BenchConfig,
    pub arm: ArmModel<f64>,
    pub camera: CameraModel<f64>,
    pub frames: Vec<Frame<f64>>,
    pub train_pairs: usize,
    pub validation_set: Samples,
    pub model: Mlp<f64>,
    pub train_report: TrainReport<f64>,
    pub validation: EvalReport<f64>,
    pub train_seconds: f64,
    pub roadmaps: Vec<BuiltRoadmap>,
}

impl Pipeline {
    pub fn run(cfg: &BenchConfig) -> Result<Self> {
        Self::run_with(cfg, None)
    }

    /// As [`Pipeline::run`], reusing an already trained metric network if given.
    pub fn run_with(cfg: &BenchConfig, pretrained: Option<(Mlp<f64>, TrainReport<f64>)>) -> Result<Self> {
        cfg.validate()?;
        let arm = ArmModel::default_planar();
        let camera = default_camera();
        let frames = run_sweep(&arm, &camera, &cfg.sweep)?;
        let (train_pairs, val_pairs) = make_pairs(&frames, cfg)?;
        let train_set = to_samples(&train_pairs);
        let validation_set = to_samples(&val_pairs);
        let started = Instant::now();
        let (model, train_report) = match pretrained {
            Some(m) => m,
            None => train_metric(&train_set, arm.keypoints(), arm.joints(), cfg)?,
        };
        let train_seconds = started.elapsed().as_secs_f64();
        let validation = evaluate(&model, &validation_set)?;
        let nodes = sample_nodes(
            &frames,
            cfg.nodes.min(frames.len()),
            SampleStrategy::Uniform {
                seed: cfg.stage_seed(STAGE_NODES),
            },
        )?;
        let roadmaps = MetricTag::ALL
            .iter()
            .map(|&tag| {
                let metric = metric_for(tag, &model)?;
                let (roadmap, stats) = build(&nodes, &metric, cfg.k)?;
                Ok(BuiltRoadmap { metric, roadmap, stats })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: cfg.clone(),
            arm,
            camera,
            frames,
            train_pairs: train_set.len(),
            validation_set,
            model,
            train_report,
            validation,
            train_seconds,
            roadmaps,
        })
    }

    pub fn roadmap(&self, tag: MetricTag) -> &BuiltRoadmap {
        self.roadmaps
            .iter()
            .find(|r| r.metric.tag() == tag)
            .expect("all three roadmaps are built")
    }

    pub fn endpoint(&self, frame: usize) -> Endpoint<f64> {
        Endpoint {
            state: self.frames[frame].image_state.clone(),
            joints: Some(self.frames[frame].joint_config.clone()),
        }
    }

    pub fn plan(&self, tag: MetricTag, start: usize, goal: usize, scene: &Scene<f64>) -> Result<QueryOutcome<f64>> {
        let r = self.roadmap(tag);
        query(
            &r.roadmap,
            self.endpoint(start),
            self.endpoint(goal),
            scene,
            &r.metric,
            &QueryConfig { k: self.config.k },
        )
    }

    pub fn empty_scene(&self) -> Scene<f64> {
        Scene::empty(self.camera.image_size, self.config.safety_margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: MetricTag,
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
    pub queries: usize,
    pub found: usize,
    pub mean_total_radians: f64,
    pub mean_total_pixels: f64,
    pub mean_pixels_per_hop: f64,
    pub mean_radians_per_hop: f64,
    pub mean_radians_per_1000px: f64,
    pub mean_waypoints: f64,
    pub edge_displacement_mean: f64,
    pub edge_displacement_p50: f64,
    pub edge_displacement_p95: f64,
    pub wasserstein_to_joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn expectation(name: &str, pass: bool, detail: String) -> Expectation {
    Expectation {
        name: name.to_string(),
        pass,
        detail,
    }
}

pub struct RoadmapBench {
    pub summaries: Vec<MetricSummary>,
    pub rows: Vec<QueryRow>,
    pub histograms: Vec<(MetricTag, DisplacementStats)>,
    pub query_seconds: Vec<(MetricTag, f64)>,
    pub expectations: Vec<Expectation>,
}

/// Random obstacle-free queries between dataset frames, path statistics and
/// edge-displacement histograms for every metric.
pub fn bench_roadmaps(p: &Pipeline) -> Result<RoadmapBench> {
    let cfg = &p.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed(STAGE_QUERIES));
    let n = p.frames.len();
    let pairs: Vec<(usize, usize)> = (0..cfg.queries)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let mut g = rng.gen_range(0..n - 1);
            if g >= s {
                g += 1;
            }
            (s, g)
        })
        .collect();
    let scene = p.empty_scene();
    let joint_hist = edge_displacement_histogram(&p.roadmap(MetricTag::JointSpace).roadmap, None)?;
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    let mut query_seconds = Vec::new();
    for r in &p.roadmaps {
        let tag = r.metric.tag();
        let outcomes = pairs
            .par_iter()
            .map(|&(s, g)| p.plan(tag, s, g, &scene))
            .collect::<Result<Vec<_>>>()?;
        let secs: Vec<f64> = outcomes.iter().map(|o| o.stats().seconds).collect();
        query_seconds.push((tag, mean(&secs)));
        let mut totals = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, (o, &(s, g))) in outcomes.iter().zip(&pairs).enumerate() {
            let m = o.path().and_then(|path| path.metrics.clone());
            if let Some(m) = &m {
                let hops = (m.waypoints.saturating_sub(1)).max(1) as f64;
                let rad = m.total_radians.unwrap_or(f64::NAN);
                totals.0.push(rad);
                totals.1.push(m.total_pixels);
                totals.2.push(m.total_pixels / hops);
                totals.3.push(rad / hops);
                if let Some(r) = m.radians_per_1000px {
                    totals.4.push(r);
                }
                totals.5.push(m.waypoints as f64);
            }
            rows.push(QueryRow {
                query: i,
                metric: tag.as_str().to_string(),
                start_frame: s,
                goal_frame: g,
                found: m.is_some(),
                waypoints: m.as_ref().map(|m| m.waypoints),
                total_pixels: m.as_ref().map(|m| m.total_pixels),
                total_radians: m.as_ref().and_then(|m| m.total_radians),
                edges_checked: o.stats().edges_checked,
            });
        }
        let hist = edge_displacement_histogram(&r.roadmap, Some(&joint_hist.displacements))?;
        summaries.push(MetricSummary {
            metric: tag,
            nodes: r.roadmap.node_count(),
            edges: r.roadmap.edges.len(),
            components: r.roadmap.connected_components(),
            queries: pairs.len(),
            found: totals.0.len(),
            mean_total_radians: mean(&totals.0),
            mean_total_pixels: mean(&totals.1),
            mean_pixels_per_hop: mean(&totals.2),
            mean_radians_per_hop: mean(&totals.3),
            mean_radians_per_1000px: mean(&totals.4),
            mean_waypoints: mean(&totals.5),
            edge_displacement_mean: hist.mean,
            edge_displacement_p50: hist.p50,
            edge_displacement_p95: hist.p95,
            wasserstein_to_joint: hist.wasserstein_to_reference.unwrap_or(f64::NAN),
        });
        histograms.push((tag, hist));
    }
    let get = |t: MetricTag| summaries.iter().find(|s| s.metric == t).expect("summary per metric");
    let (j, l, im) = (get(MetricTag::JointSpace), get(MetricTag::Learned), get(MetricTag::ImageSpace));
    let expectations = vec![
        expectation(
            "path-joint-distance-ordering",
            j.mean_total_radians <= l.mean_total_radians && l.mean_total_radians <= im.mean_total_radians,
            format!(
                "joint {:.4} <= learned {:.4} <= image {:.4}",
                j.mean_total_radians, l.mean_total_radians, im.mean_total_radians
            ),
        ),
        expectation(
            "learned-within-75pct-of-image",
            l.mean_total_radians <= 0.75 * im.mean_total_radians,
            format!("learned {:.4} <= 0.75 * {:.4}", l.mean_total_radians, im.mean_total_radians),
        ),
        expectation(
            "histogram-alignment",
            l.wasserstein_to_joint < im.wasserstein_to_joint,
            format!(
                "W1(learned, joint) {:.5} < W1(image, joint) {:.5}",
                l.wasserstein_to_joint, im.wasserstein_to_joint
            ),
        ),
        expectation(
            "image-fewer-pixels-per-hop",
            im.mean_pixels_per_hop < l.mean_pixels_per_hop,
            format!("image {:.3} px/hop < learned {:.3} px/hop", im.mean_pixels_per_hop, l.mean_pixels_per_hop),
        ),
    ];
    Ok(RoadmapBench {
        summaries,
        rows,
        histograms,
        query_seconds,
        expectations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub scenes: usize,
    pub queries: usize,
    pub paths: usize,
    pub hops_checked: usize,
    pub unsound_paths: usize,
    pub oracle_steps: usize,
}

/// Plans on random obstacle scenes with every metric and re-checks every
/// returned hop with the dense-sampling oracle.
pub fn bench_soundness(p: &Pipeline) -> Result<SoundnessReport> {
    let cfg = &p.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed(STAGE_SOUNDNESS));
    let mut jobs = Vec::new();
    for _ in 0..cfg.soundness_scenes {
        let job = loop {
            let scene = random_scene(&mut rng, p.camera.image_size, cfg.safety_margin)?;
            if let Ok((s, g)) = free_pair(&mut rng, &p.frames, &scene) {
                break (scene, s, g);
            }
        };
        jobs.push(job);
    }
    let results = jobs
        .par_iter()
        .map(|(scene, s, g)| {
            let mut paths = 0;
            let mut hops = 0;
            let mut unsound = 0;
            for tag in MetricTag::ALL {
                let outcome = p.plan(tag, *s, *g, scene)?;
                if let Some(path) = outcome.path() {
                    paths += 1;
                    let bad = path.states.windows(2).any(|w| {
                        hops += 1;
                        !oracle_edge_check(&w[0], &w[1], scene, cfg.oracle_steps, cfg.oracle_samples).is_free()
                    });
                    if bad {
                        unsound += 1;
                    }
                }
            }
            Ok((paths, hops, unsound))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SoundnessReport {
        scenes: jobs.len(),
        queries: jobs.len() * MetricTag::ALL.len(),
        paths: results.iter().map(|r| r.0).sum(),
        hops_checked: results.iter().map(|r| r.1).sum(),
        unsound_paths: results.iter().map(|r| r.2).sum(),
        oracle_steps: cfg.oracle_steps,
    })
}

/// Two distinct dataset frames whose states are clear of `scene`.
pub fn free_pair(rng: &mut ChaCha8Rng, frames: &[Frame<f64>], scene: &Scene<f64>) -> Result<(usize, usize)> {
    let n = frames.len();
    for _ in 0..1000 {
        let s = rng.gen_range(0..n);
        let g = rng.gen_range(0..n);
        if s != g
            && !state_in_collision(&frames[s].image_state, scene)
            && !state_in_collision(&frames[g].image_state, scene)
        {
            return Ok((s, g));
        }
    }
    Err(Error::InvalidArgument("scene leaves no free dataset frames".into()))
}

/// One executed (or attempted) control run.
pub struct ControlRun {
    pub row: ControlRow,
    pub path: Option<PlannedPath<f64>>,
    pub trajectory: Option<Trajectory<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSummary {
    pub suite: Suite,
    pub controller: String,
    pub metric: String,
    pub experiments: usize,
    pub planned: usize,
    /// Runs that reached the controller (every APF run; servo runs with a plan).
    pub attempted: usize,
    pub converged: usize,
    /// Converged runs over attempted runs; `None` when nothing was attempted.
    pub success_rate: Option<f64>,
    pub max_overshoot_pct: Option<f64>,
}

pub struct ControlBench {
    pub scenarios: Vec<Scenario>,
    pub runs: Vec<ControlRun>,
    pub summaries: Vec<ControlSummary>,
    pub expectations: Vec<Expectation>,
}

fn servo_run(p: &Pipeline, sc: &Scenario, tag: MetricTag) -> Result<ControlRun> {
    let outcome = p.plan(tag, sc.start_frame, sc.goal_frame, &sc.scene)?;
    let path = outcome.path().cloned();
    let trajectory = match &path {
        Some(path) => {
            let mut plant = SimPlant::new(
                p.arm.clone(),
                p.camera.clone(),
                p.frames[sc.start_frame].joint_config.clone(),
            )?;
            Some(track_path(&path.states, &mut plant, Some(&sc.scene), &p.config.servo)?)
        }
        None => None,
    };
    Ok(ControlRun {
        row: ControlRow::new(sc, "servo", tag.as_str(), path.as_ref(), trajectory.as_ref()),
        path,
        trajectory,
    })
}

fn apf_run(p: &Pipeline, sc: &Scenario) -> Result<ControlRun> {
    let mut plant = SimPlant::new(
        p.arm.clone(),
        p.camera.clone(),
        p.frames[sc.start_frame].joint_config.clone(),
    )?;
    let goal = &p.frames[sc.goal_frame].image_state;
    let trajectory = run_apf(goal, &mut plant, &sc.scene, &p.config.servo)?;
    Ok(ControlRun {
        row: ControlRow::new(sc, "apf", "none", None, Some(&trajectory)),
        path: None,
        trajectory: Some(trajectory),
    })
}

/// Servo tracking of every metric's plan over the scenario suite, plus APF on
/// the multi-obstacle scenes.
pub fn bench_control(p: &Pipeline) -> Result<ControlBench> {
    let scenarios = scenarios::control_suite(p, p.config.stage_seed(STAGE_CONTROL))?;
    let mut jobs: Vec<(usize, Option<MetricTag>)> = Vec::new();
    for (i, sc) in scenarios.iter().enumerate() {
        for tag in MetricTag::ALL {
            jobs.push((i, Some(tag)));
        }
        if sc.suite == Suite::Multi {
            jobs.push((i, None));
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(i, tag)| match tag {
            Some(tag) => servo_run(p, &scenarios[i], tag),
            None => apf_run(p, &scenarios[i]),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::new();
    for suite in Suite::ALL {
        let mut groups: Vec<(&str, String)> = MetricTag::ALL.iter().map(|t| ("servo", t.as_str().to_string())).collect();
        groups.push(("apf", "none".to_string()));
        for (controller, metric) in groups {
            let rows: Vec<&ControlRow> = runs
                .iter()
                .map(|r| &r.row)
                .filter(|r| r.suite == suite && r.controller == controller && r.metric == metric)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let planned = rows.iter().filter(|r| r.planned).count();
            let attempted = rows.iter().filter(|r| r.servo_steps.is_some()).count();
            let converged = rows.iter().filter(|r| r.success).count();
            let max_overshoot = rows
                .iter()
                .filter(|r| r.success)
                .filter_map(|r| r.overshoot_pct)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            summaries.push(ControlSummary {
                suite,
                controller: controller.to_string(),
                metric,
                experiments: rows.len(),
                planned,
                attempted,
                converged,
                success_rate: (attempted > 0).then(|| converged as f64 / attempted as f64),
                max_overshoot_pct: max_overshoot,
            });
        }
    }
    let expectations = control_expectations(&runs, &scenarios);
    Ok(ControlBench {
        scenarios,
        runs,
        summaries,
        expectations,
    })
}

/// Aggregate success rate of one controller/metric over all suites.
pub fn overall_rate(runs: &[ControlRun], controller: &str, metric: &str) -> (usize, usize) {
    let rows = runs
        .iter()
        .map(|r| &r.row)
        .filter(|r| r.controller == controller && r.metric == metric);
    let (mut planned, mut ok) = (0, 0);
    for r in rows {
        planned += r.planned as usize;
        ok += r.success as usize;
    }
    (ok, planned)
}

fn control_expectations(runs: &[ControlRun], scenarios: &[Scenario]) -> Vec<Expectation> {
    let (lok, lplan) = overall_rate(runs, "servo", "learned");
    let (iok, iplan) = overall_rate(runs, "servo", "image-space");
    let rate = |ok: usize, n: usize| if n == 0 { 0.0 } else { ok as f64 / n as f64 };
    let worst_overshoot = runs
        .iter()
        .filter(|r| r.row.success)
        .filter_map(|r| r.row.overshoot_pct)
        .fold(0.0f64, f64::max);
    let find = |name: &str, controller: &str, metric: &str| {
        runs.iter()
            .find(|r| r.row.scenario == name && r.row.controller == controller && r.row.metric == metric)
            .map(|r| &r.row)
    };
    let mut out = vec![
        expectation(
            "learned-control-success-100pct",
            lplan > 0 && lok == lplan,
            format!("learned {lok}/{lplan}"),
        ),
        expectation(
            "image-success-not-above-learned",
            rate(iok, iplan) <= rate(lok, lplan),
            format!("image {iok}/{iplan} vs learned {lok}/{lplan}"),
        ),
        expectation(
            "overshoot-within-5pct",
            worst_overshoot <= 5.0,
            format!("largest overshoot among successful runs {worst_overshoot:.3}%"),
        ),
    ];
    if let Some(trap) = scenarios.iter().find(|s| s.fixture.as_deref() == Some("twin-trap")) {
        let apf = find(&trap.name, "apf", "none");
        let learned = find(&trap.name, "servo", "learned");
        out.push(expectation(
            "apf-trapped-learned-converges",
            apf.is_some_and(|r| r.verdict == "stalled") && learned.is_some_and(|r| r.success),
            format!(
                "apf {}, learned {}",
                apf.map_or("missing", |r| r.verdict.as_str()),
                learned.map_or("missing", |r| r.verdict.as_str())
            ),
        ));
    }
    if let Some(tight) = scenarios.iter().find(|s| s.fixture.as_deref() == Some("tight")) {
        let image = find(&tight.name, "servo", "image-space");
        let learned = find(&tight.name, "servo", "learned");
        out.push(expectation(
            "tight-scene-image-fails-learned-succeeds",
            image.is_some_and(|r| !r.planned) && learned.is_some_and(|r| r.success),
            format!(
                "image planned {}, learned {}",
                image.is_some_and(|r| r.planned),
                learned.map_or("missing", |r| r.verdict.as_str())
            ),
        ));
    }
    let apf_multi: Vec<&ControlRow> = runs
        .iter()
        .map(|r| &r.row)
        .filter(|r| r.controller == "apf" && scenarios.iter().any(|s| s.name == r.scenario && s.fixture.as_deref() == Some("twin-trap")))
        .collect();
    out.push(expectation(
        "apf-fails-on-trap-scenes",
        !apf_multi.is_empty() && apf_multi.iter().all(|r| !r.success),
        format!(
            "apf successes on trap scenes: {}/{}",
            apf_multi.iter().filter(|r| r.success).count(),
            apf_multi.len()
        ),
    ));
    out
}

/// All benchmark results of one run.
pub struct BenchReport {
    pub roadmaps: RoadmapBench,
    pub soundness: SoundnessReport,
    pub control: ControlBench,
}

pub fn run_bench(p: &Pipeline) -> Result<BenchReport> {
    Ok(BenchReport {
        roadmaps: bench_roadmaps(p)?,
        soundness: bench_soundness(p)?,
        control: bench_control(p)?,
    })
}
