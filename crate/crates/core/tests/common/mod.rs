//! Reference implementations shared by the integration tests. None of them
//! call into the library's own geometry, search or training code.

#![allow(dead_code)]

use geo::{Distance, Euclidean};
use kpplan::mlp::Mlp;
use kpplan::{ImageState, Keypoint, Scene};
use petgraph::graph::{NodeIndex, UnGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Edges = Vec<(usize, usize, f64)>;

/// Shortest-path cost by petgraph's Dijkstra.
pub fn dijkstra_cost(n: usize, edges: &[(usize, usize, f64)], from: usize, to: usize) -> Option<f64> {
    let mut g = UnGraph::<(), f64>::new_undirected();
    let ids: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for &(a, b, w) in edges {
        g.add_edge(ids[a], ids[b], w);
    }
    let dist = petgraph::algo::dijkstra(&g, ids[from], Some(ids[to]), |e| *e.weight());
    dist.get(&ids[to]).copied()
}

pub fn adjacency(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    adj
}

/// Random points in the plane with edges weighted by stretched Euclidean
/// length, so straight-line distance is an admissible heuristic.
pub fn random_geometric_graph(rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Edges) {
    let n = rng.gen_range(2..25);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)])
        .collect();
    let p = rng.gen_range(0.1..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                let d = ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt();
                edges.push((a, b, d * rng.gen_range(1.0..2.0) + 1e-3));
            }
        }
    }
    (pts, edges)
}

fn geo_polygon(vertices: &[Keypoint<f64>]) -> geo::Polygon<f64> {
    let ring: Vec<geo::Coord<f64>> = vertices.iter().map(|k| geo::coord! { x: k.u, y: k.v }).collect();
    geo::Polygon::new(geo::LineString::from(ring), vec![])
}

/// Dense-sampling collision oracle on top of `geo`: interpolates the motion at
/// `steps + 1` instants and reports a hit when any arm link comes within the
/// safety margin of an obstacle.
pub fn geo_edge_hit(a: &ImageState<f64>, b: &ImageState<f64>, scene: &Scene<f64>, steps: usize) -> bool {
    let polys: Vec<geo::Polygon<f64>> = scene.obstacles.iter().map(|p| geo_polygon(&p.vertices)).collect();
    (0..=steps).any(|i| {
        let t = i as f64 / steps as f64;
        let pts: Vec<(f64, f64)> = a
            .keypoints
            .iter()
            .zip(&b.keypoints)
            .map(|(p, q)| (p.u + (q.u - p.u) * t, p.v + (q.v - p.v) * t))
            .collect();
        pts.windows(2).any(|w| {
            let line = geo::Line::new(geo::coord! { x: w[0].0, y: w[0].1 }, geo::coord! { x: w[1].0, y: w[1].1 });
            polys.iter().any(|poly| Euclidean.distance(&line, poly) <= scene.safety_margin)
        })
    })
}

/// Mean squared error computed directly from forward passes.
pub fn loss(net: &Mlp<f64>, batch: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for (x, y) in batch {
        let out = net.forward(x).unwrap();
        for (o, t) in out.iter().zip(y) {
            sum += (o - t) * (o - t);
            count += 1;
        }
    }
    sum / count as f64
}

/// Largest relative error between analytic gradients and central differences.
pub fn max_gradient_error(net: &Mlp<f64>, batch: &[(Vec<f64>, Vec<f64>)], h: f64) -> f64 {
    let analytic = net.backward(batch).unwrap();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut compare = |a: f64, num: f64| {
        let scale = a.abs().max(num.abs()).max(1e-6);
        worst = worst.max((a - num).abs() / scale);
    };
    for li in 0..net.layers.len() {
        for i in 0..net.layers[li].weights.data.len() {
            let w0 = net.layers[li].weights.data[i];
            probe.layers[li].weights.data[i] = w0 + h;
            let up = loss(&probe, batch);
            probe.layers[li].weights.data[i] = w0 - h;
            let down = loss(&probe, batch);
            probe.layers[li].weights.data[i] = w0;
            compare(analytic.layers[li].weights.data[i], (up - down) / (2.0 * h));
        }
        for i in 0..net.layers[li].bias.len() {
            let b0 = net.layers[li].bias[i];
            probe.layers[li].bias[i] = b0 + h;
            let up = loss(&probe, batch);
            probe.layers[li].bias[i] = b0 - h;
            let down = loss(&probe, batch);
            probe.layers[li].bias[i] = b0;
            compare(analytic.layers[li].bias[i], (up - down) / (2.0 * h));
        }
    }
    worst
}

/// A chain of `n` keypoints wandering from a random base.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> ImageState<f64> {
    let mut p = (rng.gen_range(50.0..590.0), rng.gen_range(50.0..430.0));
    let mut pts = vec![Keypoint::new(p.0, p.1)];
    for _ in 1..n {
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = rng.gen_range(10.0..80.0);
        p = ((p.0 + len * ang.cos()).clamp(0.0, 639.0), (p.1 + len * ang.sin()).clamp(0.0, 479.0));
        pts.push(Keypoint::new(p.0, p.1));
    }
    ImageState::new(pts)
}

/// Wasserstein-1 distance between two empirical distributions: the area
/// between their CDFs.
pub fn w1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = a.iter().chain(&b).copied().collect();
    xs.sort_by(f64::total_cmp);
    let cdf = |v: &[f64], x: f64| v.partition_point(|&y| y <= x) as f64 / v.len() as f64;
    xs.windows(2)
        .map(|w| (cdf(&a, w[0]) - cdf(&b, w[0])).abs() * (w[1] - w[0]))
        .sum()
}

/// Star-shaped simple polygon: sorted angles, random radii.
pub fn random_polygon(rng: &mut ChaCha8Rng) -> kpplan::Polygon<f64> {
    let c = (rng.gen_range(60.0..580.0), rng.gen_range(60.0..420.0));
    let n = rng.gen_range(3..9);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let verts = angles
        .iter()
        .map(|a| {
            let r = rng.gen_range(5.0..60.0);
            Keypoint::new(c.0 + r * a.cos(), c.1 + r * a.sin())
        })
        .collect();
    kpplan::Polygon::new(verts)
}

/// Random scene of 1–3 star-shaped obstacles and a margin up to 20 px.
pub fn random_obstacle_scene(rng: &mut ChaCha8Rng) -> Scene<f64> {
    loop {
        let mut scene = Scene::empty(kpplan::ImageSize { width: 640, height: 480 }, rng.gen_range(0.0..20.0));
        for _ in 0..rng.gen_range(1..4) {
            scene.obstacles.push(random_polygon(rng));
        }
        if let Ok(s) = scene.normalized() {
            return s;
        }
    }
}

/// A start state and a nearby goal state of the same arity.
pub fn random_motion(rng: &mut ChaCha8Rng) -> (ImageState<f64>, ImageState<f64>) {
    let n = rng.gen_range(2..6);
    let a = random_state(rng, n);
    let reach = rng.gen_range(0.0..150.0);
    let b = ImageState::new(
        a.keypoints
            .iter()
            .map(|k| {
                Keypoint::new(
                    (k.u + rng.gen_range(-reach..=reach)).clamp(0.0, 639.0),
                    (k.v + rng.gen_range(-reach..=reach)).clamp(0.0, 479.0),
                )
            })
            .collect(),
    );
    (a, b)
}

/// Random `rows × cols` matrix with entries in ±`scale`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect()
}

pub fn apply(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Frobenius norm of `a − b`.
pub fn frobenius_gap(a: &[Vec<f64>], b: &kpplan::linalg::Matrix<f64>) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            s += (v - b[(i, j)]).powi(2);
        }
    }
    s.sqrt()
}

/// Worst Frobenius error of the windowed least-squares estimate over `trials`
/// noiseless random linear plants.
pub fn jacobian_recovery_error(seed: u64, trials: usize) -> f64 {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = kpplan::servo::ServoConfig::<f64>::default();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let m = rng.gen_range(1..6);
        let f = 2 * rng.gen_range(1..7);
        let j = random_matrix(&mut rng, f, m, 300.0);
        let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.window.max(m))
            .map(|_| {
                let dq: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.05..0.05)).collect();
                let dk = apply(&j, &dq);
                (dq, dk)
            })
            .collect();
        let est = kpplan::servo::estimate_jacobian(&samples, cfg.ls_damping, cfg.rank_tol).unwrap();
        assert!(!est.rank_deficient);
        worst = worst.max(frobenius_gap(&j, &est.j));
    }
    worst
}
