//! Planar convex geometry in mm.

use super::StabilityError;

pub type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// A convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Accepts vertices that already form a counterclockwise convex
    /// polygon with at least 3 corners.
    pub fn new(vertices: Vec<Point>) -> Result<Self, StabilityError> {
        let n = vertices.len();
        if n < 3 {
            return Err(StabilityError::DegenerateHull);
        }
        for i in 0..n {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if a == b || cross(a, b, c) < 0.0 {
                return Err(StabilityError::NotConvex);
            }
        }
        let p = Polygon { vertices };
        if p.area() <= 0.0 {
            return Err(StabilityError::DegenerateHull);
        }
        Ok(p)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Inside or on the boundary.
    pub fn contains(&self, p: Point) -> bool {
        let scale = self
            .vertices
            .iter()
            .fold(1.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
        let tol = 1e-12 * scale * scale;
        self.edges().all(|(a, b)| cross(a, b, p) >= -tol)
    }

    /// Distance to the nearest boundary point, positive inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let d = self
            .edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        if self.contains(p) {
            d
        } else {
            -d
        }
    }

    pub fn centroid(&self) -> Point {
        let mut c = [0.0, 0.0];
        let mut a2 = 0.0;
        for (p, q) in self.edges() {
            let w = p[0] * q[1] - q[0] * p[1];
            a2 += w;
            c[0] += (p[0] + q[0]) * w;
            c[1] += (p[1] + q[1]) * w;
        }
        [c[0] / (3.0 * a2), c[1] / (3.0 * a2)]
    }
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice / 2.0
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Andrew's monotone chain. Collinear boundary points are dropped.
pub fn convex_hull(points: &[Point]) -> Result<Polygon, StabilityError> {
    let mut pts: Vec<Point> = points.to_vec();
    if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(StabilityError::NonFinite);
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Err(StabilityError::DegenerateHull);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(StabilityError::DegenerateHull);
    }
    Ok(Polygon { vertices: hull })
}

/// Sutherland-Hodgman clip of `subject` against convex `clip`.
fn clip_convex(subject: &[Point], clip: &Polygon) -> Vec<Point> {
    let mut out = subject.to_vec();
    for (a, b) in clip.edges() {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    out.push(intersect(prev, cur, a, b));
                }
                out.push(cur);
            } else if prev_in {
                out.push(intersect(prev, cur, a, b));
            }
        }
    }
    out
}

/// Intersection of segment `p q` with the infinite line through `a b`.
fn intersect(p: Point, q: Point, a: Point, b: Point) -> Point {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    shoelace(&clip_convex(&a.vertices, b)).max(0.0)
}

/// Intersection over union of two convex polygons.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        Polygon::new(vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s]]).unwrap()
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.4, 0.6], [0.5, 0.0]];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices().len(), 4);
        assert_eq!(h.area(), 1.0);
        let again = convex_hull(h.vertices()).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn degenerate_hulls() {
        assert!(matches!(
            convex_hull(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(StabilityError::DegenerateHull)
        ));
        let line = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(matches!(convex_hull(&line), Err(StabilityError::DegenerateHull)));
        let dup = [[0.0, 0.0]; 5];
        assert!(matches!(convex_hull(&dup), Err(StabilityError::DegenerateHull)));
    }

    #[test]
    fn random_points_lie_in_their_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point> = (0..50)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let h = convex_hull(&pts).unwrap();
        // Signed-area oracle: every point is left of or on every edge.
        for p in &pts {
            for (a, b) in h.edges() {
                assert!(cross(a, b, *p) >= -1e-12);
            }
        }
        let again = convex_hull(h.vertices()).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn iou_examples() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(polygon_iou(&a, &a), 1.0);
        let b = square(0.5, 0.0, 1.0);
        assert_abs_diff_eq!(polygon_iou(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
        let c = square(3.0, 3.0, 1.0);
        assert_eq!(polygon_iou(&a, &c), 0.0);
        let inner = square(0.25, 0.25, 0.5);
        assert_abs_diff_eq!(polygon_iou(&a, &inner), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn signed_distance_examples() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(a.signed_distance([0.5, 0.5]), 0.5);
        assert_eq!(a.signed_distance([1.0, 0.3]), 0.0);
        assert_eq!(a.signed_distance([2.0, 0.5]), -1.0);
        // Brute force over densely sampled boundary points.
        let p = [2.0, 0.5];
        let mut best = f64::INFINITY;
        for (u, v) in a.edges() {
            for i in 0..=10_000 {
                let t = i as f64 / 10_000.0;
                let q = [u[0] + t * (v[0] - u[0]), u[1] + t * (v[1] - u[1])];
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        assert_abs_diff_eq!(-a.signed_distance(p), best, epsilon = 1e-6);
    }

    #[test]
    fn polygon_validation() {
        assert!(Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert_eq!(square(0.0, 0.0, 2.0).centroid(), [1.0, 1.0]);
    }

    fn polygon_strategy() -> impl Strategy<Value = Polygon> {
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..12).prop_filter_map("degenerate", |pts| {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            convex_hull(&pts).ok().filter(|h| h.area() > 1e-3)
        })
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in polygon_strategy(), b in polygon_strategy()) {
            let ab = polygon_iou(&a, &b);
            let ba = polygon_iou(&b, &a);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((polygon_iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn boundary_distance_is_lipschitz(
            a in polygon_strategy(),
            p in (-8.0f64..8.0, -8.0f64..8.0),
            d in (-1.0f64..1.0, -1.0f64..1.0),
        ) {
            let p = [p.0, p.1];
            let q = [p[0] + d.0, p[1] + d.1];
            let step = (d.0 * d.0 + d.1 * d.1).sqrt();
            let diff = (a.signed_distance(p).abs() - a.signed_distance(q).abs()).abs();
            prop_assert!(diff <= step + 1e-9);
        }
    }
}
