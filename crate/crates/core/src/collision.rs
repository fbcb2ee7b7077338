//! Model-free collision checking in image space.
//!
//! Motion between two image states sweeps one quadrilateral per consecutive
//! keypoint pair. Each quad is replaced by its convex hull and tested against
//! every obstacle polygon inflated by the scene's safety margin (a closed
//! distance test, equivalent to Minkowski expansion by a disc).

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{bounding_box, convex_hull, shape_distance};
use crate::scalar::Real;
use crate::types::{ImageState, Keypoint, Polygon, Scene};

static QUERIES: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of edge and state collision queries.
pub fn query_count() -> u64 {
    QUERIES.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum CollisionVerdict {
    Free,
    Hit { quad: usize, obstacle: usize },
}

impl CollisionVerdict {
    pub fn is_free(&self) -> bool {
        matches!(self, CollisionVerdict::Free)
    }
}

/// Convex hulls of `[a_i, a_{i+1}, b_{i+1}, b_i]` for each consecutive pair.
pub fn swept_quads<T: Real>(a: &ImageState<T>, b: &ImageState<T>) -> Result<Vec<Vec<Keypoint<T>>>> {
    a.ensure_same_arity(b)?;
    Ok((0..a.len().saturating_sub(1))
        .map(|i| {
            convex_hull(&[
                a.keypoints[i],
                a.keypoints[i + 1],
                b.keypoints[i + 1],
                b.keypoints[i],
            ])
        })
        .collect())
}

fn boxes_within<T: Real>(a: &[Keypoint<T>], b: &[Keypoint<T>], margin: T) -> bool {
    match (bounding_box(a), bounding_box(b)) {
        (Some((alo, ahi)), Some((blo, bhi))) => {
            alo.u <= bhi.u + margin
                && blo.u <= ahi.u + margin
                && alo.v <= bhi.v + margin
                && blo.v <= ahi.v + margin
        }
        _ => false,
    }
}

fn hits<T: Real>(shape: &[Keypoint<T>], obstacle: &Polygon<T>, margin: T) -> bool {
    boxes_within(shape, &obstacle.vertices, margin)
        && shape_distance(shape, &obstacle.vertices) <= margin
}

/// First `(quad, obstacle)` pair, in index order, closer than the safety margin.
pub fn edge_in_collision<T: Real>(
    a: &ImageState<T>,
    b: &ImageState<T>,
    scene: &Scene<T>,
) -> Result<CollisionVerdict> {
    QUERIES.fetch_add(1, Ordering::Relaxed);
    for (quad, hull) in swept_quads(a, b)?.iter().enumerate() {
        for (obstacle, poly) in scene.obstacles.iter().enumerate() {
            if hits(hull, poly, scene.safety_margin) {
                return Ok(CollisionVerdict::Hit { quad, obstacle });
            }
        }
    }
    Ok(CollisionVerdict::Free)
}

/// Whether the arm polyline of `s` comes within the safety margin of any obstacle.
pub fn state_in_collision<T: Real>(s: &ImageState<T>, scene: &Scene<T>) -> bool {
    QUERIES.fetch_add(1, Ordering::Relaxed);
    let polyline_hit = |margin: T| {
        s.keypoints.windows(2).any(|seg| {
            scene
                .obstacles
                .iter()
                .any(|poly| hits(&[seg[0], seg[1]], poly, margin))
        })
    };
    if s.len() == 1 {
        return scene
            .obstacles
            .iter()
            .any(|poly| hits(&s.keypoints, poly, scene.safety_margin));
    }
    polyline_hit(scene.safety_margin)
}

/// Smallest distance from the arm polyline to any obstacle (infinite with no obstacles).
pub fn clearance<T: Real>(s: &ImageState<T>, scene: &Scene<T>) -> T {
    let mut best = T::infinity();
    for seg in s.keypoints.windows(2) {
        for poly in &scene.obstacles {
            best = best.min(shape_distance(&[seg[0], seg[1]], &poly.vertices));
        }
    }
    best
}

/// Dense-sampling reference check, used only to validate the hull test.
///
/// Interpolates the two states at `steps + 1` evenly spaced instants, samples
/// `samples_per_segment` points on every arm segment and reports a hit when a
/// sample lies within the margin of an obstacle. Point-to-polygon distance is
/// computed here from scratch, independently of [`crate::geometry`].
pub fn oracle_edge_check<T: Real>(
    a: &ImageState<T>,
    b: &ImageState<T>,
    scene: &Scene<T>,
    steps: usize,
    samples_per_segment: usize,
) -> CollisionVerdict {
    let steps = steps.max(1);
    let samples = samples_per_segment.max(2);
    for k in 0..=steps {
        let t = T::from_count(k) / T::from_count(steps);
        let s = a.lerp(b, t);
        for (quad, seg) in s.keypoints.windows(2).enumerate() {
            for m in 0..samples {
                let f = T::from_count(m) / T::from_count(samples - 1);
                let p = seg[0].lerp(&seg[1], f);
                for (obstacle, poly) in scene.obstacles.iter().enumerate() {
                    if reference_point_distance(p, &poly.vertices) <= scene.safety_margin {
                        return CollisionVerdict::Hit { quad, obstacle };
                    }
                }
            }
        }
    }
    CollisionVerdict::Free
}

fn reference_point_distance<T: Real>(p: Keypoint<T>, poly: &[Keypoint<T>]) -> T {
    let n = poly.len();
    let mut inside = false;
    let mut best = T::infinity();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.v > p.v) != (b.v > p.v) && p.u < a.u + (p.v - a.v) * (b.u - a.u) / (b.v - a.v) {
            inside = !inside;
        }
        let (du, dv) = (b.u - a.u, b.v - a.v);
        let len2 = du * du + dv * dv;
        let t = if len2 > T::zero() {
            (((p.u - a.u) * du + (p.v - a.v) * dv) / len2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        let (cu, cv) = (a.u + t * du - p.u, a.v + t * dv - p.v);
        best = best.min((cu * cu + cv * cv).sqrt());
    }
    if inside {
        T::zero()
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point_in_polygon, polygon_area};
    use crate::types::ImageSize;

    fn k(u: f64, v: f64) -> Keypoint<f64> {
        Keypoint::new(u, v)
    }

    fn arm(points: &[(f64, f64)]) -> ImageState<f64> {
        ImageState::new(points.iter().map(|&(u, v)| k(u, v)).collect())
    }

    fn scene(margin: f64, obstacles: Vec<Polygon<f64>>) -> Scene<f64> {
        Scene {
            image_size: ImageSize::new(640, 480),
            safety_margin: margin,
            obstacles,
        }
        .normalized()
        .unwrap()
    }

    fn straight() -> ImageState<f64> {
        arm(&[(100., 400.), (150., 400.), (200., 400.), (250., 400.), (300., 400.)])
    }

    #[test]
    fn five_keypoints_make_four_quads() {
        let a = straight();
        let mut b = a.clone();
        b.keypoints.iter_mut().for_each(|p| p.v -= 30.0);
        let quads = swept_quads(&a, &b).unwrap();
        assert_eq!(quads.len(), 4);
        for (i, q) in quads.iter().enumerate() {
            assert!(polygon_area(q) >= 0.0);
            for g in [a.keypoints[i], a.keypoints[i + 1], b.keypoints[i], b.keypoints[i + 1]] {
                assert!(point_in_polygon(g, q));
            }
        }
    }

    #[test]
    fn zero_motion_collapses_to_segments() {
        let a = straight();
        for (i, q) in swept_quads(&a, &a).unwrap().iter().enumerate() {
            assert_eq!(q, &vec![a.keypoints[i], a.keypoints[i + 1]]);
        }
    }

    #[test]
    fn distant_obstacle_is_free() {
        let s = scene(10.0, vec![Polygon::rectangle(k(500., 50.), k(600., 100.))]);
        let a = straight();
        let mut b = a.clone();
        b.keypoints[4] = k(300., 350.);
        assert_eq!(edge_in_collision(&a, &b, &s).unwrap(), CollisionVerdict::Free);
    }

    #[test]
    fn obstacle_vertex_inside_quad_hits() {
        let a = straight();
        let mut b = a.clone();
        b.keypoints.iter_mut().for_each(|p| p.v -= 100.0);
        let tri = Polygon::new(vec![k(175., 350.), k(400., 100.), k(450., 120.)]);
        let s = scene(0.0, vec![tri]);
        assert_eq!(
            edge_in_collision(&a, &b, &s).unwrap(),
            CollisionVerdict::Hit { quad: 1, obstacle: 0 }
        );
    }

    #[test]
    fn tangent_at_margin_is_closed() {
        // obstacle edge sits exactly 10 px below the arm line
        let s = scene(10.0, vec![Polygon::rectangle(k(120., 410.), k(180., 450.))]);
        let a = straight();
        assert!(!edge_in_collision(&a, &a, &s).unwrap().is_free());
        assert!(state_in_collision(&a, &s));
        assert!(!oracle_edge_check(&a, &a, &s, 2, 200).is_free());
        let looser = scene(9.999, vec![Polygon::rectangle(k(120., 410.), k(180., 450.))]);
        assert!(edge_in_collision(&a, &a, &looser).unwrap().is_free());
        assert!(!state_in_collision(&a, &looser));
    }

    #[test]
    fn keypoint_inside_obstacle_is_state_collision() {
        let s = scene(0.0, vec![Polygon::circle(k(300., 400.), 5.0, 16)]);
        assert!(state_in_collision(&straight(), &s));
        let far = scene(5.0, vec![Polygon::circle(k(300., 100.), 5.0, 16)]);
        assert!(!state_in_collision(&straight(), &far));
    }

    #[test]
    fn zero_margin_disjoint_is_free_under_both() {
        let a = straight();
        let mut b = a.clone();
        b.keypoints[4] = k(300., 380.);
        let s = scene(0.0, vec![Polygon::rectangle(k(400., 300.), k(450., 350.))]);
        assert!(edge_in_collision(&a, &b, &s).unwrap().is_free());
        assert!(oracle_edge_check(&a, &b, &s, 100, 50).is_free());
    }

    #[test]
    fn edge_check_is_symmetric() {
        let a = straight();
        let b = arm(&[(100., 400.), (150., 380.), (190., 340.), (220., 290.), (230., 240.)]);
        let s = scene(5.0, vec![Polygon::rectangle(k(210., 330.), k(260., 360.))]);
        assert_eq!(
            edge_in_collision(&a, &b, &s).unwrap(),
            edge_in_collision(&b, &a, &s).unwrap()
        );
    }
}
