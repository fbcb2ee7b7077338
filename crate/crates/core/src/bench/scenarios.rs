use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{free_pair, Pipeline};
use crate::collision::{edge_in_collision, state_in_collision};
use crate::error::{Error, Result};
use crate::io::from_json_str;
use crate::metrics::dist_joint;
use crate::sim::Frame;
use crate::types::{ImageSize, JointConfig, Keypoint, MetricTag, Polygon, Scene};

const FIXTURES: &[(&str, &str)] = &[
    ("rectangle", include_str!("../../fixtures/rectangle.json")),
    ("triangle", include_str!("../../fixtures/triangle.json")),
    ("circle", include_str!("../../fixtures/circle.json")),
    ("twin-trap", include_str!("../../fixtures/twin-trap.json")),
    ("tight", include_str!("../../fixtures/tight.json")),
    ("pillars", include_str!("../../fixtures/pillars.json")),
    ("gate", include_str!("../../fixtures/gate.json")),
    ("shelf", include_str!("../../fixtures/shelf.json")),
];

/// An authored scene, optionally with fixed start and goal joint configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    pub scene: Scene<f64>,
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub goal: Option<Vec<f64>>,
}

pub fn fixture_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn fixture(name: &str) -> Result<Fixture> {
    let text = FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture {name:?}")))?;
    let mut f: Fixture = from_json_str(text)?;
    f.scene = f.scene.normalized()?;
    Ok(f)
}

/// 1–3 random rectangles, triangles or circles inside the arm's workspace.
pub fn random_scene(rng: &mut ChaCha8Rng, size: ImageSize, margin: f64) -> Result<Scene<f64>> {
    let mut scene = Scene::empty(size, margin);
    let count = rng.gen_range(1..=3);
    for _ in 0..count {
        let c = Keypoint::new(rng.gen_range(120.0..520.0), rng.gen_range(70.0..330.0));
        let r: f64 = rng.gen_range(12.0..40.0);
        let poly = match rng.gen_range(0..3) {
            0 => {
                let a: f64 = rng.gen_range(0.5..1.5);
                Polygon::rectangle(Keypoint::new(c.u - r * a, c.v - r / a), Keypoint::new(c.u + r * a, c.v + r / a))
            }
            1 => {
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                Polygon::new(
                    (0..3)
                        .map(|i| {
                            let t = phase + std::f64::consts::TAU * i as f64 / 3.0;
                            Keypoint::new(c.u + r * t.cos(), c.v + r * t.sin())
                        })
                        .collect(),
                )
            }
            _ => Polygon::circle(c, r, 16),
        };
        scene.obstacles.push(poly);
    }
    scene.normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Free,
    Single,
    Multi,
    Shelf,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Free, Suite::Single, Suite::Multi, Suite::Shelf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Free => "free",
            Suite::Single => "single",
            Suite::Multi => "multi",
            Suite::Shelf => "shelf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub suite: Suite,
    pub fixture: Option<String>,
    pub scene: Scene<f64>,
    pub start_frame: usize,
    pub goal_frame: usize,
}

fn nearest_frame(frames: &[Frame<f64>], q: &[f64]) -> Result<usize> {
    let target = JointConfig::new(q.to_vec());
    let mut best = (f64::INFINITY, 0);
    for (i, f) in frames.iter().enumerate() {
        let d = dist_joint(&f.joint_config, &target)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// Endpoints for an obstacle scene: fixed by the fixture (snapped to the
/// nearest dataset frame) or drawn until both are clear, the straight image-space
/// move between them is blocked, and the joint-space roadmap connects them.
fn endpoints(p: &Pipeline, f: &Fixture, rng: &mut ChaCha8Rng) -> Result<(usize, usize)> {
    if let (Some(s), Some(g)) = (&f.start, &f.goal) {
        let s = nearest_frame(&p.frames, s)?;
        let g = nearest_frame(&p.frames, g)?;
        for (what, i) in [("start", s), ("goal", g)] {
            if state_in_collision(&p.frames[i].image_state, &f.scene) {
                return Err(Error::InvalidArgument(format!(
                    "fixture {}: {what} state collides with the scene",
                    f.name
                )));
            }
        }
        return Ok((s, g));
    }
    for _ in 0..2000 {
        let (s, g) = free_pair(rng, &p.frames, &f.scene)?;
        let blocked = !edge_in_collision(&p.frames[s].image_state, &p.frames[g].image_state, &f.scene)?.is_free();
        if blocked && p.plan(MetricTag::JointSpace, s, g, &f.scene)?.path().is_some() {
            return Ok((s, g));
        }
    }
    Err(Error::InvalidArgument(format!(
        "fixture {}: no admissible start/goal pair found",
        f.name
    )))
}

pub(super) fn control_suite(p: &Pipeline, seed: u64) -> Result<Vec<Scenario>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = p.config.suite;
    let mut out = Vec::new();
    let empty = p.empty_scene();
    for i in 0..counts.free {
        let (s, g) = free_pair(&mut rng, &p.frames, &empty)?;
        out.push(Scenario {
            name: format!("free-{i:02}"),
            suite: Suite::Free,
            fixture: None,
            scene: empty.clone(),
            start_frame: s,
            goal_frame: g,
        });
    }
    let plan = [
        (Suite::Single, counts.single, &["rectangle", "triangle", "circle"][..]),
        (Suite::Multi, counts.multi, &["twin-trap", "tight", "pillars", "gate"][..]),
        (Suite::Shelf, counts.shelf, &["shelf"][..]),
    ];
    for (suite, count, names) in plan {
        for i in 0..count {
            let f = fixture(names[i % names.len()])?;
            let (s, g) = endpoints(p, &f, &mut rng)?;
            out.push(Scenario {
                name: format!("{}-{i:02}-{}", suite.as_str(), f.name),
                suite,
                fixture: Some(f.name.clone()),
                scene: f.scene,
                start_frame: s,
                goal_frame: g,
            });
        }
    }
    Ok(out)
}
