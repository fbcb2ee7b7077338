//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use kpplan::bench::{self, free_pair, random_scene, BenchConfig, Pipeline};
use kpplan::collision::edge_in_collision;
use kpplan::linalg::Matrix;
use kpplan::mlp::{Activation, Mlp, MlpSpec};
use kpplan::planner::astar;
use kpplan::servo::{track_path, LinearPlant, ServoConfig};
use kpplan::{ImageState, JointConfig, MetricTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn joint_norm(a: &JointConfig<f64>, b: &JointConfig<f64>) -> f64 {
    a.q.iter().zip(&b.q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean true joint distance of the planned obstacle-free paths, from the
/// waypoints' oracle configurations.
fn metric_ordering(p: &Pipeline) -> Check {
    let report = bench::bench_roadmaps(p).map_err(|e| e.to_string())?;
    let scene = p.empty_scene();
    let mut means = BTreeMap::new();
    for tag in MetricTag::ALL {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.metric == tag.as_str()).collect();
        let mut totals = Vec::new();
        for r in &rows {
            let out = p.plan(tag, r.start_frame, r.goal_frame, &scene).map_err(|e| e.to_string())?;
            let path = out.path().ok_or(format!("{tag}: query {} found no path", r.query))?;
            let q = path.joint_configs.as_ref().ok_or("path without joint configurations")?;
            totals.push(q.windows(2).map(|w| joint_norm(&w[0], &w[1])).sum::<f64>());
        }
        if totals.len() < 100 {
            return Err(format!("{tag}: only {} queries", totals.len()));
        }
        means.insert(tag, mean(&totals));
    }
    let (j, l, i) = (
        means[&MetricTag::JointSpace],
        means[&MetricTag::Learned],
        means[&MetricTag::ImageSpace],
    );
    ensure(
        j <= l && l <= i && l <= 0.75 * i,
        format!("joint {j:.4} <= learned {l:.4} <= image {i:.4}; learned/image = {:.3}", l / i),
    )
}

fn edge_displacements(p: &Pipeline, tag: MetricTag) -> Vec<f64> {
    let r = &p.roadmap(tag).roadmap;
    r.edges
        .iter()
        .map(|e| joint_norm(&p.frames[r.frame_indices[e.a]].joint_config, &p.frames[r.frame_indices[e.b]].joint_config))
        .collect()
}

fn histogram_alignment(p: &Pipeline) -> Check {
    let joint = edge_displacements(p, MetricTag::JointSpace);
    let learned = common::w1(&edge_displacements(p, MetricTag::Learned), &joint);
    let image = common::w1(&edge_displacements(p, MetricTag::ImageSpace), &joint);
    ensure(learned < image, format!("W1(learned, joint) {learned:.5} < W1(image, joint) {image:.5}"))
}

fn soundness(p: &Pipeline) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x50_0d);
    let size = p.camera.image_size;
    let jobs: Vec<_> = (0..60)
        .map(|_| loop {
            let scene = random_scene(&mut rng, size, p.config.safety_margin).unwrap();
            if let Ok((s, g)) = free_pair(&mut rng, &p.frames, &scene) {
                break (scene, s, g);
            }
        })
        .collect();
    let results: Vec<(usize, usize, usize)> = jobs
        .par_iter()
        .map(|(scene, s, g)| {
            let (mut paths, mut hops, mut bad) = (0, 0, 0);
            for tag in MetricTag::ALL {
                if let Some(path) = p.plan(tag, *s, *g, scene).unwrap().path() {
                    paths += 1;
                    hops += path.hops();
                    if path.states.windows(2).any(|w| common::geo_edge_hit(&w[0], &w[1], scene, 100)) {
                        bad += 1;
                    }
                }
            }
            (paths, hops, bad)
        })
        .collect();
    let paths: usize = results.iter().map(|r| r.0).sum();
    let hops: usize = results.iter().map(|r| r.1).sum();
    let bad: usize = results.iter().map(|r| r.2).sum();
    ensure(
        bad == 0 && paths > 0,
        format!("{} scenes, {paths} paths, {hops} hops re-checked at 100 steps, {bad} unsound", jobs.len()),
    )
}

fn astar_vs_dijkstra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0;
    for g in 0..200 {
        let (pts, edges) = common::random_geometric_graph(&mut rng);
        let n = pts.len();
        let adj = common::adjacency(n, &edges);
        let (s, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let h = |i: usize| ((pts[i][0] - pts[t][0]).powi(2) + (pts[i][1] - pts[t][1]).powi(2)).sqrt();
        let expected = common::dijkstra_cost(n, &edges, s, t);
        for (name, got) in [("image", astar(&adj, s, t, h)), ("zero", astar(&adj, s, t, |_| 0.0))] {
            let got = got.map(|r| r.cost);
            if got != expected {
                return Err(format!("graph {g} ({name} heuristic): A* {got:?} vs Dijkstra {expected:?}"));
            }
            compared += 1;
        }
    }
    Ok(format!("200 graphs, {compared} searches, costs identical"))
}

fn one_sidedness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let triples: Vec<_> = (0..10_000)
        .map(|_| {
            let scene = common::random_obstacle_scene(&mut rng);
            let (a, b) = common::random_motion(&mut rng);
            (scene, a, b)
        })
        .collect();
    let outcomes: Vec<(bool, bool)> = triples
        .par_iter()
        .map(|(scene, a, b)| {
            let free = edge_in_collision(a, b, scene).unwrap().is_free();
            (free, common::geo_edge_hit(a, b, scene, 100))
        })
        .collect();
    let false_free = outcomes.iter().filter(|(free, hit)| *free && *hit).count();
    let hits = outcomes.iter().filter(|(_, hit)| *hit).count();
    ensure(
        false_free == 0,
        format!("10000 triples, {hits} oracle hits, {false_free} reported free"),
    )
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for trial in 0..25 {
        let mut sizes = vec![rng.gen_range(1..7)];
        for _ in 0..rng.gen_range(1..4) {
            sizes.push(rng.gen_range(1..9));
        }
        sizes.push(rng.gen_range(1..4));
        let net = Mlp::<f64>::new(MlpSpec {
            layer_sizes: sizes.clone(),
            activation: Activation::Tanh,
            seed: trial,
        })
        .map_err(|e| e.to_string())?;
        let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..6)
            .map(|_| {
                (
                    (0..sizes[0]).map(|_| rng.gen_range(-1.5..1.5)).collect(),
                    (0..*sizes.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        worst = worst.max(common::max_gradient_error(&net, &batch, 1e-6));
    }
    ensure(worst <= 1e-4, format!("25 nets, max relative error {worst:.2e}"))
}

fn metric_quality(p: &Pipeline) -> Check {
    let data = &p.validation_set;
    let outputs = data[0].1.len();
    let preds: Vec<Vec<f64>> = data.iter().map(|(x, _)| p.model.forward(x).unwrap()).collect();
    let mut sq = 0.0;
    let mut r2 = Vec::new();
    for k in 0..outputs {
        let m = mean(&data.iter().map(|(_, y)| y[k]).collect::<Vec<_>>());
        let (mut res, mut tot) = (0.0, 0.0);
        for (pred, (_, y)) in preds.iter().zip(data) {
            res += (pred[k] - y[k]).powi(2);
            tot += (y[k] - m).powi(2);
        }
        sq += res;
        r2.push(1.0 - res / tot);
    }
    let rmse = (sq / (data.len() * outputs) as f64).sqrt();
    let r2 = mean(&r2);
    let epochs = p.train_report.loss_history.len();
    ensure(
        r2 >= 0.9 && rmse <= 0.1 && epochs <= 400 && p.config.train.learning_rate == 0.005 && p.config.train.batch_size == 32,
        format!("{} held-out pairs: R2 {r2:.4}, RMSE {rmse:.4} rad after {epochs} epochs", data.len()),
    )
}

/// Largest rebound above the running minimum after the error first drops to 10 %.
fn overshoot_pct(errors: &[f64]) -> Option<f64> {
    let e0 = errors[0];
    if e0 <= 0.0 {
        return Some(0.0);
    }
    let rise = errors.iter().position(|&e| e <= 0.1 * e0)?;
    let mut low = f64::INFINITY;
    let mut worst = 0.0f64;
    for &e in &errors[rise..] {
        low = low.min(e);
        worst = worst.max(e - low);
    }
    Some(100.0 * worst / e0)
}

fn control(control: &bench::ControlBench) -> Check {
    let mut rate = BTreeMap::new();
    for metric in ["learned", "image-space"] {
        let runs: Vec<_> = control
            .runs
            .iter()
            .filter(|r| r.row.controller == "servo" && r.row.metric == metric && r.path.is_some())
            .collect();
        let ok = runs
            .iter()
            .filter(|r| r.trajectory.as_ref().is_some_and(|t| t.verdict.is_converged()))
            .count();
        rate.insert(metric, (ok, runs.len()));
    }
    let mut worst = 0.0f64;
    for r in &control.runs {
        if let Some(t) = r.trajectory.as_ref().filter(|t| t.verdict.is_converged()) {
            let errors: Vec<f64> = t.log.iter().map(|e| e.goal_error).collect();
            worst = worst.max(overshoot_pct(&errors).unwrap_or(0.0));
        }
    }
    let (lok, ln) = rate["learned"];
    let (iok, i_n) = rate["image-space"];
    let frac = |ok: usize, n: usize| if n == 0 { 0.0 } else { ok as f64 / n as f64 };
    ensure(
        ln > 0 && lok == ln && frac(iok, i_n) <= frac(lok, ln) && worst <= 5.0,
        format!("learned {lok}/{ln}, image {iok}/{i_n}, worst overshoot {worst:.2}%"),
    )
}

fn jacobian() -> Check {
    let err = common::jacobian_recovery_error(9, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = ServoConfig::<f64>::default();
    let mut commands = 0;
    let mut over = 0;
    for _ in 0..20 {
        let (m, f) = (rng.gen_range(1..5), 2 * rng.gen_range(2..6));
        let j = common::random_matrix(&mut rng, f, m, 250.0);
        let offset: Vec<f64> = (0..f).map(|_| rng.gen_range(100.0..400.0)).collect();
        let target: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let waypoints: Vec<ImageState<f64>> = (1..=3)
            .map(|i| {
                let q: Vec<f64> = target.iter().map(|t| t * i as f64 / 3.0).collect();
                let k: Vec<f64> = common::apply(&j, &q).iter().zip(&offset).map(|(a, b)| a + b).collect();
                ImageState::unflatten(&k).unwrap()
            })
            .collect();
        let rows: Vec<&[f64]> = j.iter().map(Vec::as_slice).collect();
        let mut plant = LinearPlant::new(Matrix::from_rows(&rows), offset, vec![0.0; m]);
        let traj = track_path(&waypoints, &mut plant, None, &cfg).map_err(|e| e.to_string())?;
        for e in &traj.log {
            commands += e.command.len();
            over += e.command.iter().filter(|c| c.abs() > cfg.v_sat).count();
        }
    }
    ensure(
        err <= 1e-6 && over == 0,
        format!("200 plants, worst Frobenius error {err:.2e}; {commands} logged joint commands, {over} above saturation"),
    )
}

fn apf_trap(control: &bench::ControlBench) -> Check {
    let sc = control
        .scenarios
        .iter()
        .find(|s| s.fixture.as_deref() == Some("twin-trap"))
        .ok_or("no twin-trap scenario in the suite")?;
    let find = |controller: &str, metric: &str| {
        control
            .runs
            .iter()
            .find(|r| r.row.scenario == sc.name && r.row.controller == controller && r.row.metric == metric)
    };
    let apf = find("apf", "none").and_then(|r| r.trajectory.as_ref()).ok_or("apf run missing")?;
    let learned = find("servo", "learned").and_then(|r| r.trajectory.as_ref()).ok_or("learned run missing")?;
    let stalled = matches!(apf.verdict, kpplan::servo::TrackVerdict::Stalled { .. });
    let apf_final = apf.log.last().map_or(f64::NAN, |e| e.goal_error);
    ensure(
        stalled && learned.verdict.is_converged(),
        format!(
            "apf {:?} {apf_final:.1} px from goal; learned {:?} in {} steps",
            apf.verdict, learned.verdict, learned.servo_steps
        ),
    )
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let cfg = BenchConfig::small();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let p = Pipeline::run(&cfg).map_err(|e| e.to_string())?;
        let r = bench::run_bench(&p).map_err(|e| e.to_string())?;
        bench::write_outputs(d.path(), &p, &r).map_err(|e| e.to_string())?;
    }
    let mut a = files(dirs[0].path());
    let mut b = files(dirs[1].path());
    a.remove("timings.json");
    b.remove("timings.json");
    if a.keys().ne(b.keys()) {
        return Err("the two runs wrote different file sets".into());
    }
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    let bytes: usize = a.values().map(Vec::len).sum();
    ensure(
        differing.is_empty(),
        format!("{} files, {bytes} bytes compared, differing: {differing:?}", a.len()),
    )
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = started.elapsed();
        let result = match (result, budget) {
            (Ok(d), Some(b)) if elapsed > b => Err(format!("{d}; exceeded {:.0} s budget", b.as_secs_f64())),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if result.is_err() {
            self.failures += 1;
        }
        println!("[{tag}] {id:>2} {name}: {detail} ({:.1} s)", elapsed.as_secs_f64());
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let secs = |s: u64| Some(Duration::from_secs(s));
    let mut suite = Suite { failures: 0 };

    suite.run(4, "A* equals Dijkstra", secs(10), astar_vs_dijkstra);
    suite.run(5, "collision check is one-sided", mins(1), one_sidedness);
    suite.run(6, "MLP gradient check", secs(10), gradient_check);
    suite.run(9, "Jacobian recovery and saturation", secs(10), jacobian);

    let started = Instant::now();
    let pipeline = Pipeline::run(&BenchConfig::default());
    let build = started.elapsed();
    let pipeline = match pipeline {
        Ok(p) => Some(p),
        Err(e) => {
            println!("pipeline failed: {e}");
            None
        }
    };
    let p = pipeline.as_ref();
    let missing = || Err::<String, String>("pipeline unavailable".into());

    suite.run(7, "learned metric quality", None, || {
        let r = p.map_or_else(missing, metric_quality)?;
        ensure(build < Duration::from_secs(300), format!("{r}; pipeline built in {:.1} s", build.as_secs_f64()))
    });
    suite.run(1, "metric ordering", mins(2), || p.map_or_else(missing, metric_ordering));
    suite.run(2, "histogram alignment", mins(1), || p.map_or_else(missing, histogram_alignment));
    suite.run(3, "planner soundness", mins(2), || p.map_or_else(missing, soundness));

    let started = Instant::now();
    let bench = p.map(bench::bench_control);
    let control_time = started.elapsed();
    let bench = match bench {
        Some(Ok(b)) => Some(b),
        Some(Err(e)) => {
            println!("control bench failed: {e}");
            None
        }
        None => None,
    };
    suite.run(8, "control success ordering", None, || {
        let r = bench.as_ref().map_or_else(missing, control)?;
        ensure(
            control_time < Duration::from_secs(600),
            format!("{r}; suite ran in {:.1} s", control_time.as_secs_f64()),
        )
    });
    suite.run(10, "APF trapped where learned converges", mins(2), || bench.as_ref().map_or_else(missing, apf_trap));
    suite.run(11, "determinism", None, determinism);

    println!("{} of 11 criteria failed", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
