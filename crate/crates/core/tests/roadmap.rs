mod common;

use kpplan::io::{from_json_str, to_json_string};
use kpplan::metrics::{dist_image, MetricKind};
use kpplan::roadmap::{build, k_nearest, sample_nodes, Roadmap, RoadmapNode, SampleStrategy};
use kpplan::sim::{default_camera, run_sweep, ArmModel, Frame, SweepConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frames() -> Vec<Frame<f64>> {
    run_sweep(&ArmModel::default_planar(), &default_camera(), &SweepConfig { res: 5, ..SweepConfig::default() }).unwrap()
}

#[test]
fn knn_matches_brute_force() {
    let f = frames();
    let nodes = sample_nodes(&f, 60, SampleStrategy::Uniform { seed: 1 }).unwrap();
    let views: Vec<_> = nodes.iter().map(RoadmapNode::view).collect();
    let got = k_nearest(&views, &MetricKind::ImageSpace, 7).unwrap();
    for (i, list) in got.iter().enumerate() {
        let mut all: Vec<(f64, usize)> = (0..nodes.len())
            .filter(|&j| j != i)
            .map(|j| (dist_image(&nodes[i].state, &nodes[j].state).unwrap(), j))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = all[..7].iter().map(|p| p.1).collect();
        let ids: Vec<usize> = list.iter().map(|p| p.0).collect();
        assert_eq!(ids, expected, "node {i}");
    }
}

#[test]
fn built_edges_are_unchecked_positive_and_unique() {
    let f = frames();
    let nodes = sample_nodes(&f, 80, SampleStrategy::Uniform { seed: 2 }).unwrap();
    let (r, stats) = build(&nodes, &MetricKind::JointSpace, 6).unwrap();
    assert_eq!(stats.edges, r.edges.len());
    let mut seen = std::collections::BTreeSet::new();
    for e in &r.edges {
        assert!(e.a < e.b && !e.checked && e.valid && e.cost > 0.0);
        assert!(seen.insert((e.a, e.b)));
    }
    let mut degree = vec![0; r.node_count()];
    for e in &r.edges {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    assert!(degree.iter().all(|&d| d >= 6));
    r.validate().unwrap();
}

#[test]
fn k_is_clamped_to_node_count() {
    let f = frames();
    let nodes = sample_nodes(&f, 4, SampleStrategy::Uniform { seed: 2 }).unwrap();
    let (r, _) = build(&nodes, &MetricKind::ImageSpace, 25).unwrap();
    assert_eq!(r.k, 3);
    assert_eq!(r.edges.len(), 6);
}

#[test]
fn roadmap_json_round_trip_is_exact() {
    let f = frames();
    let nodes = sample_nodes(&f, 50, SampleStrategy::Uniform { seed: 4 }).unwrap();
    let (mut r, _) = build(&nodes, &MetricKind::ImageSpace, 5).unwrap();
    r.edges[3].checked = true;
    r.edges[3].valid = false;
    let text = to_json_string(&r);
    let back: Roadmap<f64> = from_json_str(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(to_json_string(&back), text);
}

#[test]
fn wasserstein_matches_cdf_area() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    use rand::Rng;
    for _ in 0..50 {
        let a: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(0.0..3.0)).collect();
        let b: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(0.5..2.0)).collect();
        let got = kpplan::roadmap::wasserstein1(&a, &b);
        assert!((got - common::w1(&a, &b)).abs() < 1e-9, "{got} vs {}", common::w1(&a, &b));
    }
}

proptest! {
    #[test]
    fn sampling_picks_distinct_sorted_frames(count in 2usize..100, seed in any::<u64>()) {
        let f = frames();
        let nodes = sample_nodes(&f, count, SampleStrategy::Uniform { seed }).unwrap();
        prop_assert_eq!(nodes.len(), count);
        prop_assert!(nodes.windows(2).all(|w| w[0].frame_index < w[1].frame_index));
        for n in &nodes {
            prop_assert_eq!(&n.state, &f[n.frame_index].image_state);
        }
    }
}
