use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BenchReport, Pipeline, Scenario, Suite};
use crate::error::{Error, Result};
use crate::io::{write_json, write_jsonl, write_text};
use crate::render::{render_histogram_svg, render_svg, Layers, Series};
use crate::servo::Trajectory;
use crate::types::{MetricTag, PlannedPath};

/// One row of `queries.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query: usize,
    pub metric: String,
    pub start_frame: usize,
    pub goal_frame: usize,
    pub found: bool,
    pub waypoints: Option<usize>,
    pub total_pixels: Option<f64>,
    pub total_radians: Option<f64>,
    pub edges_checked: usize,
}

/// One row of `report.csv`: a scenario run by one controller on one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub scenario: String,
    pub suite: Suite,
    pub controller: String,
    pub metric: String,
    pub start_frame: usize,
    pub goal_frame: usize,
    pub planned: bool,
    pub waypoints: Option<usize>,
    pub path_pixels: Option<f64>,
    pub path_radians: Option<f64>,
    pub verdict: String,
    pub success: bool,
    pub servo_steps: Option<usize>,
    pub probe_steps: Option<usize>,
    pub max_command: Option<f64>,
    pub final_error_px: Option<f64>,
    pub rise_s: Option<f64>,
    pub settle_s: Option<f64>,
    pub overshoot_pct: Option<f64>,
    pub execution_s: Option<f64>,
    pub ee_rise_s: Option<f64>,
    pub ee_settle_s: Option<f64>,
    pub ee_overshoot_pct: Option<f64>,
}

impl ControlRow {
    pub fn new(
        sc: &Scenario,
        controller: &str,
        metric: &str,
        path: Option<&PlannedPath<f64>>,
        traj: Option<&Trajectory<f64>>,
    ) -> Self {
        let m = path.and_then(|p| p.metrics.as_ref());
        let verdict = match (controller, path, traj) {
            ("servo", None, _) => "no-path".to_string(),
            (_, _, Some(t)) => serde_json::to_value(&t.verdict)
                .ok()
                .and_then(|v| v.get("verdict").and_then(|s| s.as_str()).map(str::to_string))
                .unwrap_or_default(),
            _ => "not-run".to_string(),
        };
        let response = traj.map(|t| t.response());
        Self {
            scenario: sc.name.clone(),
            suite: sc.suite,
            controller: controller.to_string(),
            metric: metric.to_string(),
            start_frame: sc.start_frame,
            goal_frame: sc.goal_frame,
            planned: path.is_some(),
            waypoints: m.map(|m| m.waypoints),
            path_pixels: m.map(|m| m.total_pixels),
            path_radians: m.and_then(|m| m.total_radians),
            success: traj.is_some_and(|t| t.verdict.is_converged()),
            verdict,
            servo_steps: traj.map(|t| t.servo_steps),
            probe_steps: traj.map(|t| t.probe_steps),
            max_command: traj.map(|t| t.max_command()),
            final_error_px: traj.and_then(|t| t.log.last()).map(|e| e.goal_error),
            rise_s: response.and_then(|r| r.full.rise_time),
            settle_s: response.and_then(|r| r.full.settling_time),
            overshoot_pct: response.and_then(|r| r.full.overshoot_pct),
            execution_s: response.map(|r| r.full.execution_time),
            ee_rise_s: response.and_then(|r| r.end_effector.rise_time),
            ee_settle_s: response.and_then(|r| r.end_effector.settling_time),
            ee_overshoot_pct: response.and_then(|r| r.end_effector.overshoot_pct),
        }
    }
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    write_text(path, &String::from_utf8_lossy(&bytes))
}

#[derive(Serialize)]
struct HistogramRow {
    bin_low: f64,
    bin_high: f64,
    joint_space: f64,
    learned: f64,
    image_space: f64,
}

fn color(tag: MetricTag) -> &'static str {
    match tag {
        MetricTag::JointSpace => "#2ca02c",
        MetricTag::Learned => "#1f77b4",
        MetricTag::ImageSpace => "#d62728",
    }
}

/// Writes every artifact of a bench run into `dir`.
///
/// `report.csv`, `queries.csv`, `histogram.csv`, `summary.json`, the SVGs and
/// everything under `logs/` and `paths/` are reproducible from the seed;
/// wall-clock measurements go to `timings.json` only.
pub fn write_outputs(dir: &Path, p: &Pipeline, r: &BenchReport) -> Result<()> {
    let rows: Vec<_> = r.control.runs.iter().map(|c| c.row.clone()).collect();
    write_csv(&dir.join("report.csv"), &rows)?;
    write_csv(&dir.join("queries.csv"), &r.roadmaps.rows)?;

    let series: Vec<(MetricTag, &[f64])> = r
        .roadmaps
        .histograms
        .iter()
        .map(|(t, h)| (*t, h.displacements.as_slice()))
        .collect();
    let svg_series: Vec<Series<'_>> = series
        .iter()
        .map(|(t, v)| Series {
            label: t.as_str(),
            color: color(*t),
            values: v,
        })
        .collect();
    let bins = p.config.histogram_bins;
    let edges = crate::render::histogram_edges(&svg_series, bins);
    let counts = |t: MetricTag| {
        series
            .iter()
            .find(|(x, _)| *x == t)
            .map(|(_, v)| crate::render::histogram_counts(v, &edges))
            .unwrap_or_else(|| vec![0.0; edges.len() - 1])
    };
    let (cj, cl, ci) = (
        counts(MetricTag::JointSpace),
        counts(MetricTag::Learned),
        counts(MetricTag::ImageSpace),
    );
    let hist_rows: Vec<HistogramRow> = (0..edges.len() - 1)
        .map(|i| HistogramRow {
            bin_low: edges[i],
            bin_high: edges[i + 1],
            joint_space: cj[i],
            learned: cl[i],
            image_space: ci[i],
        })
        .collect();
    write_csv(&dir.join("histogram.csv"), &hist_rows)?;
    write_text(
        &dir.join("histogram.svg"),
        &render_histogram_svg(
            "Joint displacement along roadmap edges",
            "edge joint displacement (rad)",
            &svg_series,
            bins,
        ),
    )?;

    for b in &p.roadmaps {
        let mut layers = Layers::new(p.camera.image_size);
        layers.roadmap = Some(&b.roadmap);
        write_text(
            &dir.join(format!("roadmap-{}.svg", b.metric.tag().as_str())),
            &render_svg(&layers),
        )?;
    }

    for run in &r.control.runs {
        let stem = format!("{}-{}-{}", run.row.scenario, run.row.controller, run.row.metric);
        if let Some(path) = &run.path {
            write_json(&dir.join("paths").join(format!("{stem}.json")), path)?;
        }
        if let Some(t) = &run.trajectory {
            write_jsonl(&dir.join("logs").join(format!("{stem}.jsonl")), &t.log)?;
            let sc = r
                .control
                .scenarios
                .iter()
                .find(|s| s.name == run.row.scenario)
                .expect("run belongs to a scenario");
            let states: Vec<_> = t.log.iter().map(|e| e.image_state.clone()).collect();
            let mut layers = Layers::new(p.camera.image_size);
            layers.scene = Some(&sc.scene);
            layers.path = run.path.as_ref();
            layers.trajectory = Some(&states);
            write_text(&dir.join("scenarios").join(format!("{stem}.svg")), &render_svg(&layers))?;
        }
    }
    write_json(&dir.join("scenarios.json"), &r.control.scenarios)?;

    let mut expectations = r.roadmaps.expectations.clone();
    expectations.extend(r.control.expectations.iter().cloned());
    expectations.push(super::expectation(
        "planner-soundness",
        r.soundness.unsound_paths == 0,
        format!(
            "{} of {} returned paths failed the dense oracle",
            r.soundness.unsound_paths, r.soundness.paths
        ),
    ));
    let summary = json!({
        "seed": p.config.seed,
        "config": &p.config,
        "dataset": {
            "frames": p.frames.len(),
            "train_pairs": p.train_pairs,
            "validation_pairs": p.validation_set.len(),
        },
        "training": {
            "epochs": p.train_report.loss_history.len(),
            "initial_loss": p.train_report.initial_loss,
            "final_loss": p.train_report.final_loss,
        },
        "validation": &p.validation,
        "roadmaps": &r.roadmaps.summaries,
        "soundness": &r.soundness,
        "control": &r.control.summaries,
        "expectations": expectations,
    });
    write_json(&dir.join("summary.json"), &summary)?;

    let build = |t: MetricTag| p.roadmap(t).stats.seconds;
    let timings = json!({
        "train_seconds": p.train_seconds,
        "build_seconds": MetricTag::ALL.iter().map(|t| (t.as_str(), build(*t))).collect::<std::collections::BTreeMap<_, _>>(),
        "mean_query_seconds": r.roadmaps.query_seconds.iter().map(|(t, s)| (t.as_str(), *s)).collect::<std::collections::BTreeMap<_, _>>(),
        "learned_build_slower_than_image": build(MetricTag::Learned) > build(MetricTag::ImageSpace),
    });
    write_json(&dir.join("timings.json"), &timings)?;
    Ok(())
}
