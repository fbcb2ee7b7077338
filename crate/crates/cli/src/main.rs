use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kpplan::bench::{self, make_pairs, metric_for, to_samples, BenchConfig, Pipeline};
use kpplan::dataset::PairSample;
use kpplan::io::{from_json_str, read_jsonl, read_text, write_json, write_jsonl, write_text};
use kpplan::mlp::{evaluate, Mlp};
use kpplan::planner::{query, Endpoint, QueryConfig, QueryOutcome};
use kpplan::render::{render_svg, Layers};
use kpplan::roadmap::{build, sample_nodes, Roadmap, SampleStrategy};
use kpplan::servo::{run_apf, track_path, LogEntry, SimPlant, Trajectory};
use kpplan::sim::{default_camera, observe, run_sweep, ArmModel, Frame};
use kpplan::{validate_image_state, ImageState, JointConfig, MetricTag, PlannedPath, Scene};

#[derive(Parser)]
#[command(name = "kpplan", version, about = "Image-space roadmap planning and visual servoing")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bench configuration file (JSON); missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "KPPLAN_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record the joint-lattice sweep as `frames.jsonl`.
    Sweep {
        /// Lattice points per joint.
        #[arg(long)]
        res: Option<usize>,
    },
    /// Consecutive plus augmented pairs, split into `train_pairs.jsonl` and `validation_pairs.jsonl`.
    MakePairs {
        #[arg(long)]
        frames: PathBuf,
    },
    /// Fit the displacement network; writes `model.json` and `training.json`.
    TrainMetric {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Build a lazy roadmap over sampled frames; writes `roadmap-<metric>.json`.
    BuildRoadmap {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, value_parser = parse_metric)]
        metric: MetricTag,
        /// Required for the learned metric.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Query a roadmap; writes `path.json` (or `query.json` when infeasible).
    Plan(PlanArgs),
    /// Track a planned path on the simulated arm; writes `servo-log.jsonl` and `servo.json`.
    Servo {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Initial joint angles when the path carries none (comma separated).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start_q: Option<Vec<f64>>,
    },
    /// Potential-field baseline between two dataset frames; writes `apf-log.jsonl` and `apf.json`.
    Apf {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        start_frame: usize,
        #[arg(long)]
        goal_frame: usize,
    },
    /// Full experiment harness: tables, histograms, logs and plots.
    Bench {
        /// Use the few-second smoke configuration as the base.
        #[arg(long)]
        small: bool,
        /// Exit 1 when any recorded expectation fails.
        #[arg(long)]
        strict: bool,
    },
    /// Render a roadmap, path, scene, fixture or trajectory log to SVG.
    Render {
        artifact: PathBuf,
        /// Scene drawn underneath.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Output file; defaults to `<out-dir>/<artifact stem>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    roadmap: PathBuf,
    /// Required when the roadmap was built with the learned metric.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Dataset holding the endpoint frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    start_frame: Option<usize>,
    #[arg(long)]
    goal_frame: Option<usize>,
    /// Start as a JSON image state; needs `--off-manifold`.
    #[arg(long)]
    start_state: Option<String>,
    /// Goal as a JSON image state; needs `--off-manifold`.
    #[arg(long)]
    goal_state: Option<String>,
    /// Accept endpoints that are not recorded dataset states.
    #[arg(long)]
    off_manifold: bool,
    /// Write edge checks back into the roadmap file.
    #[arg(long)]
    persist: bool,
    #[arg(long)]
    k: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type Outcome<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn runtime(e: kpplan::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn parse_metric(s: &str) -> Result<MetricTag, String> {
    s.parse::<MetricTag>().map_err(|e| e.to_string())
}

fn require(path: &Path) -> Outcome<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!("input file not found: {}", path.display())))
    }
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = read_text(require(path)?).map_err(runtime)?;
    from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<Vec<T>> {
    read_jsonl(require(path)?).map_err(|e| match e {
        kpplan::Error::Format(f) => usage(format!("{}: {f}", path.display())),
        other => runtime(other),
    })
}

fn load_config(cli: &Cli, base: BenchConfig) -> Outcome<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = read_text(require(path)?).map_err(runtime)?;
            let mut merged = serde_json::to_value(&base).expect("config serializes");
            let overrides: serde_json::Value =
                from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            merge(&mut merged, overrides);
            serde_json::from_value(merged).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn validated(cfg: BenchConfig) -> Outcome<BenchConfig> {
    cfg.validate().map_err(|e| usage(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome<()> {
    write_json(path, value).map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn save_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Outcome<()> {
    write_jsonl(path, items).map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_scene(path: Option<&PathBuf>, cfg: &BenchConfig) -> Outcome<Scene<f64>> {
    let scene = match path {
        Some(p) => load::<Scene<f64>>(p)?,
        None => Scene::empty(default_camera::<f64>().image_size, cfg.safety_margin),
    };
    scene.normalized().map_err(|e| usage(format!("invalid scene: {e}")))
}

fn load_model(path: Option<&PathBuf>, tag: MetricTag) -> Outcome<Option<Mlp<f64>>> {
    match (path, tag) {
        (Some(p), _) => Ok(Some(load(p)?)),
        (None, MetricTag::Learned) => Err(usage("the learned metric needs --model")),
        (None, _) => Ok(None),
    }
}

fn metric(tag: MetricTag, model: Option<Mlp<f64>>) -> Outcome<kpplan::metrics::MetricKind<f64>> {
    let model = match model {
        Some(m) => m,
        None => Mlp::zeroed(kpplan::mlp::MlpSpec::displacement(1, 1, 0)).map_err(runtime)?,
    };
    metric_for(tag, &model).map_err(|e| usage(format!("invalid model: {e}")))
}

fn frame_at(frames: &[Frame<f64>], i: usize) -> Outcome<&Frame<f64>> {
    frames
        .get(i)
        .ok_or_else(|| usage(format!("frame {i} out of range (dataset has {} frames)", frames.len())))
}

fn endpoint(
    args: &PlanArgs,
    frames: Option<&[Frame<f64>]>,
    frame: Option<usize>,
    state: Option<&String>,
    arity: usize,
    which: &str,
) -> Outcome<(Endpoint<f64>, bool)> {
    match (frame, state) {
        (Some(i), None) => {
            let frames = frames.ok_or_else(|| usage(format!("--{which}-frame needs --frames")))?;
            let f = frame_at(frames, i)?;
            Ok((
                Endpoint {
                    state: f.image_state.clone(),
                    joints: Some(f.joint_config.clone()),
                },
                false,
            ))
        }
        (None, Some(json)) => {
            if !args.off_manifold {
                return Err(usage(format!(
                    "--{which}-state is not a recorded dataset state; pass --off-manifold to plan from it anyway"
                )));
            }
            let state: ImageState<f64> =
                from_json_str(json).map_err(|e| usage(format!("--{which}-state: {e}")))?;
            let verdict = validate_image_state(&state, default_camera::<f64>().image_size, arity);
            if !verdict.is_valid() {
                return Err(usage(format!("--{which}-state is invalid: {:?}", verdict.violations)));
            }
            Ok((Endpoint { state, joints: None }, true))
        }
        _ => Err(usage(format!("give exactly one of --{which}-frame or --{which}-state"))),
    }
}

fn plan(cli: &Cli, args: &PlanArgs) -> Outcome<()> {
    let cfg = validated(load_config(cli, BenchConfig::default())?)?;
    let mut roadmap: Roadmap<f64> = load(&args.roadmap)?;
    roadmap
        .validate()
        .map_err(|e| usage(format!("{}: {e}", args.roadmap.display())))?;
    let model = load_model(args.model.as_ref(), roadmap.metric_tag)?;
    let metric = metric(roadmap.metric_tag, model)?;
    let scene = load_scene(args.scene.as_ref(), &cfg)?;
    let arity = roadmap.nodes.first().map_or(0, ImageState::len);
    let frames: Option<Vec<Frame<f64>>> = args.frames.as_deref().map(load_lines).transpose()?;
    let (start, s_off) = endpoint(args, frames.as_deref(), args.start_frame, args.start_state.as_ref(), arity, "start")?;
    let (goal, g_off) = endpoint(args, frames.as_deref(), args.goal_frame, args.goal_state.as_ref(), arity, "goal")?;
    if s_off || g_off {
        eprintln!("warning: off-manifold endpoint; the arm may not be able to reach it");
    }
    let qcfg = QueryConfig {
        k: args.k.unwrap_or(roadmap.k.max(1)),
    };
    let outcome = query(&roadmap, start, goal, &scene, &metric, &qcfg).map_err(runtime)?;
    if args.persist {
        for &(e, valid) in &outcome.stats().roadmap_edge_updates {
            roadmap.edges[e].checked = true;
            roadmap.edges[e].valid = valid;
        }
        save_json(&args.roadmap, &roadmap)?;
    }
    match &outcome {
        QueryOutcome::Found { path, stats } => {
            save_json(&cli.out_dir.join("path.json"), path)?;
            println!(
                "found {} waypoints, cost {:.6}, {} edges checked in {} iterations",
                path.states.len(),
                path.total_cost,
                stats.edges_checked,
                stats.iterations
            );
            Ok(())
        }
        QueryOutcome::Infeasible { reason, .. } => {
            save_json(&cli.out_dir.join("query.json"), &outcome)?;
            Err(Failure::Runtime(format!("no collision-free path: {reason:?}")))
        }
    }
}

fn report_trajectory(cli: &Cli, stem: &str, traj: &Trajectory<f64>) -> Outcome<()> {
    save_lines(&cli.out_dir.join(format!("{stem}-log.jsonl")), &traj.log)?;
    let summary = serde_json::json!({
        "verdict": &traj.verdict,
        "servo_steps": traj.servo_steps,
        "probe_steps": traj.probe_steps,
        "max_command": traj.max_command(),
        "response": traj.response(),
    });
    save_json(&cli.out_dir.join(format!("{stem}.json")), &summary)?;
    println!("verdict: {}", serde_json::to_string(&traj.verdict).expect("verdict serializes"));
    Ok(())
}

fn run(cli: &Cli) -> Outcome<()> {
    match &cli.command {
        Command::Sweep { res } => {
            let mut cfg = load_config(cli, BenchConfig::default())?;
            if let Some(r) = res {
                cfg.sweep.res = *r;
            }
            let cfg = validated(cfg)?;
            let frames = run_sweep(&ArmModel::default_planar(), &default_camera(), &cfg.sweep).map_err(runtime)?;
            save_lines(&cli.out_dir.join("frames.jsonl"), &frames)?;
            println!("{} frames", frames.len());
        }
        Command::MakePairs { frames } => {
            let cfg = validated(load_config(cli, BenchConfig::default())?)?;
            let frames: Vec<Frame<f64>> = load_lines(frames)?;
            let (train, val) = make_pairs(&frames, &cfg).map_err(runtime)?;
            save_lines(&cli.out_dir.join("train_pairs.jsonl"), &train)?;
            save_lines(&cli.out_dir.join("validation_pairs.jsonl"), &val)?;
        }
        Command::TrainMetric {
            pairs,
            validation,
            epochs,
        } => {
            let mut cfg = load_config(cli, BenchConfig::default())?;
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            let cfg = validated(cfg)?;
            let train: Vec<PairSample<f64>> = load_lines(pairs)?;
            let first = train.first().ok_or_else(|| usage(format!("{} holds no pairs", pairs.display())))?;
            let (n, m) = (first.k_start.len(), first.dq.len());
            let (model, report) = bench::train_metric(&to_samples(&train), n, m, &cfg).map_err(runtime)?;
            let eval = match validation {
                Some(v) => {
                    let val: Vec<PairSample<f64>> = load_lines(v)?;
                    Some(evaluate(&model, &to_samples(&val)).map_err(runtime)?)
                }
                None => None,
            };
            save_json(&cli.out_dir.join("model.json"), &model)?;
            save_json(
                &cli.out_dir.join("training.json"),
                &serde_json::json!({ "report": report, "validation": eval }),
            )?;
            println!("final loss {:.6}", report.final_loss);
        }
        Command::BuildRoadmap {
            frames,
            metric: tag,
            model,
            nodes,
            k,
        } => {
            let cfg = validated(load_config(cli, BenchConfig::default())?)?;
            let frames: Vec<Frame<f64>> = load_lines(frames)?;
            let model = load_model(model.as_ref(), *tag)?;
            let metric = metric(*tag, model)?;
            let count = nodes.unwrap_or(cfg.nodes).min(frames.len());
            let sampled = sample_nodes(&frames, count, SampleStrategy::Uniform { seed: cfg.seed }).map_err(runtime)?;
            let (roadmap, stats) = build(&sampled, &metric, k.unwrap_or(cfg.k)).map_err(runtime)?;
            save_json(&cli.out_dir.join(format!("roadmap-{tag}.json")), &roadmap)?;
            println!("{} nodes, {} edges in {:.3} s", roadmap.node_count(), stats.edges, stats.seconds);
        }
        Command::Plan(args) => plan(cli, args)?,
        Command::Servo { path, scene, start_q } => {
            let cfg = validated(load_config(cli, BenchConfig::default())?)?;
            let planned: PlannedPath<f64> = load(path)?;
            let scene = scene.as_ref().map(|s| load_scene(Some(s), &cfg)).transpose()?;
            let q0 = match (start_q, planned.joint_configs.as_ref().and_then(|j| j.first())) {
                (Some(q), _) => JointConfig::new(q.clone()),
                (None, Some(q)) => q.clone(),
                (None, None) => return Err(usage("the path carries no joint configurations; pass --start-q")),
            };
            let arm = ArmModel::default_planar();
            let camera = default_camera();
            let seen = observe(&arm, &camera, &q0).map_err(|e| usage(format!("--start-q: {e}")))?;
            if let Some(first) = planned.start() {
                let gap = kpplan::metrics::dist_image(&seen, first).map_err(|e| usage(e.to_string()))?;
                if gap > cfg.servo.eps_wp {
                    eprintln!("warning: arm starts {gap:.1} px from the path start");
                }
            }
            let mut plant = SimPlant::new(arm, camera, q0).map_err(|e| usage(format!("--start-q: {e}")))?;
            let traj = track_path(&planned.states, &mut plant, scene.as_ref(), &cfg.servo).map_err(runtime)?;
            report_trajectory(cli, "servo", &traj)?;
            if !traj.verdict.is_converged() {
                return Err(Failure::Runtime("tracking did not converge".into()));
            }
        }
        Command::Apf {
            frames,
            scene,
            start_frame,
            goal_frame,
        } => {
            let cfg = validated(load_config(cli, BenchConfig::default())?)?;
            let frames: Vec<Frame<f64>> = load_lines(frames)?;
            let scene = load_scene(Some(scene), &cfg)?;
            let start = frame_at(&frames, *start_frame)?;
            let goal = frame_at(&frames, *goal_frame)?;
            let mut plant = SimPlant::new(ArmModel::default_planar(), default_camera(), start.joint_config.clone())
                .map_err(runtime)?;
            let traj = run_apf(&goal.image_state, &mut plant, &scene, &cfg.servo).map_err(runtime)?;
            report_trajectory(cli, "apf", &traj)?;
        }
        Command::Bench { small, strict } => {
            let base = if *small { BenchConfig::small() } else { BenchConfig::default() };
            let cfg = validated(load_config(cli, base)?)?;
            let pipeline = Pipeline::run(&cfg).map_err(runtime)?;
            let report = bench::run_bench(&pipeline).map_err(runtime)?;
            bench::write_outputs(&cli.out_dir, &pipeline, &report).map_err(runtime)?;
            let summary: serde_json::Value = load(&cli.out_dir.join("summary.json"))?;
            let mut failed = 0;
            for e in summary["expectations"].as_array().into_iter().flatten() {
                let pass = e["pass"].as_bool().unwrap_or(false);
                failed += usize::from(!pass);
                println!(
                    "{} {}: {}",
                    if pass { "PASS" } else { "FAIL" },
                    e["name"].as_str().unwrap_or("?"),
                    e["detail"].as_str().unwrap_or("")
                );
            }
            println!("outputs in {}", cli.out_dir.display());
            if *strict && failed > 0 {
                return Err(Failure::Runtime(format!("{failed} expectation(s) failed")));
            }
        }
        Command::Render { artifact, scene, output } => {
            let cfg = load_config(cli, BenchConfig::default())?;
            let svg = render(artifact, scene.as_ref(), &cfg)?;
            let out = output.clone().unwrap_or_else(|| {
                let stem = artifact.file_stem().map_or("artifact".into(), |s| s.to_string_lossy().into_owned());
                cli.out_dir.join(format!("{stem}.svg"))
            });
            write_text(&out, &svg).map_err(runtime)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn render(artifact: &Path, scene: Option<&PathBuf>, cfg: &BenchConfig) -> Outcome<String> {
    let size = default_camera::<f64>().image_size;
    let text = read_text(require(artifact)?).map_err(runtime)?;
    let bad = |e: &dyn std::fmt::Display| usage(format!("{}: {e}", artifact.display()));
    let mut scene = scene.map(|s| load_scene(Some(s), cfg)).transpose()?;
    let value: Option<serde_json::Value> = serde_json::from_str(&text).ok();
    let key = |k: &str| value.as_ref().is_some_and(|v| v.get(k).is_some());
    let mut layers = Layers::new(size);
    let roadmap: Roadmap<f64>;
    let path: PlannedPath<f64>;
    let states: Vec<ImageState<f64>>;
    if key("edges") {
        roadmap = from_json_str(&text).map_err(|e| bad(&e))?;
        layers.roadmap = Some(&roadmap);
    } else if key("states") {
        path = from_json_str(&text).map_err(|e| bad(&e))?;
        layers.path = Some(&path);
    } else if key("obstacles") {
        scene = Some(from_json_str::<Scene<f64>>(&text).map_err(|e| bad(&e))?.normalized().map_err(|e| bad(&e))?);
    } else if key("scene") {
        let f: bench::Fixture = from_json_str(&text).map_err(|e| bad(&e))?;
        scene = Some(f.scene.normalized().map_err(|e| bad(&e))?);
    } else if let Ok(log) = kpplan::io::from_jsonl_str::<LogEntry<f64>>(&text) {
        if log.is_empty() {
            return Err(usage(format!("{}: empty trajectory log", artifact.display())));
        }
        states = log.into_iter().map(|e| e.image_state).collect();
        layers.trajectory = Some(&states);
    } else {
        return Err(usage(format!(
            "{}: unknown artifact type (expected roadmap, path, scene, fixture or trajectory log)",
            artifact.display()
        )));
    }
    if let Some(s) = &scene {
        layers.image_size = s.image_size;
    }
    layers.scene = scene.as_ref();
    Ok(render_svg(&layers))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
