mod common;

use kpplan::linalg::Matrix;
use kpplan::servo::{estimate_jacobian, track_path, LinearPlant, Phase, ServoConfig, SimPlant};
use kpplan::sim::{default_camera, observe, ArmModel};
use kpplan::{ImageState, JointConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noiseless_linear_plants_are_recovered_exactly() {
    let err = common::jacobian_recovery_error(5, 100);
    assert!(err <= 1e-6, "worst Frobenius error {err}");
}

#[test]
fn collinear_excitation_is_flagged() {
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (1..6)
        .map(|i| {
            let s = i as f64 * 0.01;
            (vec![s, 2.0 * s], vec![s, s, s, s])
        })
        .collect();
    let cfg = ServoConfig::<f64>::default();
    assert!(estimate_jacobian(&samples, cfg.ls_damping, cfg.rank_tol).unwrap().rank_deficient);
}

fn linear_case(seed: u64) -> (LinearPlant<f64>, Vec<ImageState<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, f) = (3, 10);
    let j = common::random_matrix(&mut rng, f, m, 200.0);
    let offset: Vec<f64> = (0..f).map(|_| rng.gen_range(100.0..400.0)).collect();
    let rows: Vec<&[f64]> = j.iter().map(Vec::as_slice).collect();
    let q0 = vec![0.0; m];
    let target: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let waypoints = (1..=4)
        .map(|i| {
            let q: Vec<f64> = target.iter().map(|t| t * i as f64 / 4.0).collect();
            let k: Vec<f64> = common::apply(&j, &q).iter().zip(&offset).map(|(a, b)| a + b).collect();
            ImageState::unflatten(&k).unwrap()
        })
        .collect();
    (LinearPlant::new(Matrix::from_rows(&rows), offset, q0), waypoints)
}

#[test]
fn linear_plant_tracking_converges_within_saturation() {
    let cfg = ServoConfig::<f64>::default();
    for seed in 0..10 {
        let (mut plant, waypoints) = linear_case(seed);
        let traj = track_path(&waypoints, &mut plant, None, &cfg).unwrap();
        assert!(traj.verdict.is_converged(), "seed {seed}: {:?}", traj.verdict);
        for e in &traj.log {
            assert!(e.command.iter().all(|c| c.abs() <= cfg.v_sat), "seed {seed}: {:?}", e.command);
        }
        assert!(traj.log.last().unwrap().goal_error <= cfg.eps_goal);
    }
}

#[test]
fn each_waypoint_window_starts_with_one_probe_pair_per_joint() {
    let cfg = ServoConfig::<f64>::default();
    let (mut plant, waypoints) = linear_case(3);
    let traj = track_path(&waypoints, &mut plant, None, &cfg).unwrap();
    let probes = traj.log.iter().filter(|e| e.phase == Phase::Probe).count();
    assert_eq!(probes, traj.probe_steps);
    assert!(probes >= 2 * 3 && probes % (2 * 3) == 0);
}

#[test]
fn arm_tracks_a_two_waypoint_path() {
    let arm = ArmModel::default_planar();
    let cam = default_camera();
    let q0 = JointConfig::new(vec![0.2, -0.6, 0.4]);
    let q1 = JointConfig::new(vec![0.35, -0.8, 0.6]);
    let q2 = JointConfig::<f64>::new(vec![0.5, -1.0, 0.8]);
    let path: Vec<_> = [&q0, &q1, &q2].iter().map(|q| observe(&arm, &cam, q).unwrap()).collect();
    let mut plant = SimPlant::new(arm, cam, q0).unwrap();
    let cfg = ServoConfig::default();
    let traj = track_path(&path, &mut plant, None, &cfg).unwrap();
    assert!(traj.verdict.is_converged(), "{:?}", traj.verdict);
    let q = plant.oracle_joints();
    let gap: f64 = q.q.iter().zip(&q2.q).map(|(a, b): (&f64, &f64)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(gap < 0.05, "joint gap {gap}");
}
