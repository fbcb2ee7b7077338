//! Planar predicates and distances over pixel coordinates.
//!
//! A vertex list of length 1 is a point, length 2 a segment, and length ≥ 3 a
//! closed polygon (interior included).

use crate::scalar::Real;
use crate::types::Keypoint;

/// Orientation tolerance in pixels².
pub const ORIENT_EPS: f64 = 1e-9;

#[inline]
pub fn cross<T: Real>(o: Keypoint<T>, a: Keypoint<T>, b: Keypoint<T>) -> T {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

/// -1, 0 or 1 with a fixed epsilon band around zero.
#[inline]
pub fn orientation<T: Real>(o: Keypoint<T>, a: Keypoint<T>, b: Keypoint<T>) -> i8 {
    let c = cross(o, a, b);
    let eps = T::lit(ORIENT_EPS);
    if c > eps {
        1
    } else if c < -eps {
        -1
    } else {
        0
    }
}

#[inline]
fn on_segment_box<T: Real>(p: Keypoint<T>, a: Keypoint<T>, b: Keypoint<T>) -> bool {
    p.u >= a.u.min(b.u) && p.u <= a.u.max(b.u) && p.v >= a.v.min(b.v) && p.v <= a.v.max(b.v)
}

/// Closed segment intersection test (touching counts).
pub fn segments_intersect<T: Real>(
    a: Keypoint<T>,
    b: Keypoint<T>,
    c: Keypoint<T>,
    d: Keypoint<T>,
) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    (o1 * o2 < 0 && o3 * o4 < 0)
        || (o1 == 0 && on_segment_box(c, a, b))
        || (o2 == 0 && on_segment_box(d, a, b))
        || (o3 == 0 && on_segment_box(a, c, d))
        || (o4 == 0 && on_segment_box(b, c, d))
}

/// Point of segment `ab` nearest to `p`.
pub fn closest_point_on_segment<T: Real>(p: Keypoint<T>, a: Keypoint<T>, b: Keypoint<T>) -> Keypoint<T> {
    let du = b.u - a.u;
    let dv = b.v - a.v;
    let len2 = du * du + dv * dv;
    if len2 == T::zero() {
        return a;
    }
    let t = (((p.u - a.u) * du + (p.v - a.v) * dv) / len2)
        .max(T::zero())
        .min(T::one());
    Keypoint::new(a.u + t * du, a.v + t * dv)
}

pub fn point_segment_distance<T: Real>(p: Keypoint<T>, a: Keypoint<T>, b: Keypoint<T>) -> T {
    p.dist(&closest_point_on_segment(p, a, b))
}

/// Point on the boundary of `poly` nearest to `p`.
pub fn closest_point_on_boundary<T: Real>(p: Keypoint<T>, poly: &[Keypoint<T>]) -> Option<Keypoint<T>> {
    let n = poly.len();
    (0..n)
        .map(|i| closest_point_on_segment(p, poly[i], poly[(i + 1) % n]))
        .min_by(|x, y| p.dist(x).partial_cmp(&p.dist(y)).unwrap_or(std::cmp::Ordering::Equal))
}

pub fn segment_segment_distance<T: Real>(
    a: Keypoint<T>,
    b: Keypoint<T>,
    c: Keypoint<T>,
    d: Keypoint<T>,
) -> T {
    if segments_intersect(a, b, c, d) {
        return T::zero();
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Closed point-in-polygon test; boundary points are inside.
pub fn point_in_polygon<T: Real>(p: Keypoint<T>, poly: &[Keypoint<T>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if orientation(a, b, p) == 0 && on_segment_box(p, a, b) {
            return true;
        }
        if (a.v > p.v) != (b.v > p.v) {
            let x = a.u + (p.v - a.v) * (b.u - a.u) / (b.v - a.v);
            if p.u < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn shape_edges<T: Real>(s: &[Keypoint<T>]) -> Vec<(Keypoint<T>, Keypoint<T>)> {
    match s.len() {
        0 => Vec::new(),
        1 => vec![(s[0], s[0])],
        2 => vec![(s[0], s[1])],
        n => (0..n).map(|i| (s[i], s[(i + 1) % n])).collect(),
    }
}

/// Euclidean distance between two shapes; zero when they overlap or touch.
pub fn shape_distance<T: Real>(a: &[Keypoint<T>], b: &[Keypoint<T>]) -> T {
    if a.is_empty() || b.is_empty() {
        return T::infinity();
    }
    if point_in_polygon(a[0], b) || point_in_polygon(b[0], a) {
        return T::zero();
    }
    let ea = shape_edges(a);
    let eb = shape_edges(b);
    let mut best = T::infinity();
    for &(p, q) in &ea {
        for &(r, s) in &eb {
            let d = segment_segment_distance(p, q, r, s);
            if d < best {
                best = d;
                if best == T::zero() {
                    return best;
                }
            }
        }
    }
    best
}

/// Distance from a point to a shape (zero inside a polygon).
pub fn point_shape_distance<T: Real>(p: Keypoint<T>, shape: &[Keypoint<T>]) -> T {
    shape_distance(&[p], shape)
}

/// Convex hull by monotone chain: counterclockwise (positive signed area),
/// collinear points dropped. Degenerate input yields 1 or 2 vertices.
pub fn convex_hull<T: Real>(points: &[Keypoint<T>]) -> Vec<Keypoint<T>> {
    let mut pts: Vec<Keypoint<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.u.partial_cmp(&b.u)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.v.partial_cmp(&b.v).unwrap_or(std::cmp::Ordering::Equal))
    });
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Keypoint<T>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orientation(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Keypoint<T>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orientation(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 2 {
        // All points collinear within tolerance: keep the extreme pair.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    lower
}

pub fn polygon_area<T: Real>(poly: &[Keypoint<T>]) -> T {
    if poly.len() < 3 {
        return T::zero();
    }
    let n = poly.len();
    let mut s = T::zero();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s = s + (a.u * b.v - b.u * a.v);
    }
    s / T::lit(2.0)
}

/// Axis-aligned bounding box `(min, max)`.
pub fn bounding_box<T: Real>(points: &[Keypoint<T>]) -> Option<(Keypoint<T>, Keypoint<T>)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| {
        (
            Keypoint::new(lo.u.min(p.u), lo.v.min(p.v)),
            Keypoint::new(hi.u.max(p.u), hi.v.max(p.v)),
        )
    }))
}
