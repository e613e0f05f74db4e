//! Planar convex hulls (Andrew's monotone chain) with tolerant containment.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len_sq).clamp(0.0, 1.0) };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// Convex polygon, counter-clockwise, without repeated or collinear
/// vertices. One vertex is a point hull, two a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexHull {
    pub vertices: Vec<Point>,
}

impl ConvexHull {
    pub fn new(points: &[Point]) -> ConvexHull {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        if pts.len() <= 2 {
            return ConvexHull { vertices: pts };
        }
        let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
        for pass in [pts.clone(), pts.iter().rev().copied().collect()] {
            let start = hull.len();
            for p in pass {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        if hull.len() < 3 {
            // all input collinear: keep the two extreme points
            hull = vec![pts[0], pts[pts.len() - 1]];
        }
        ConvexHull { vertices: hull }
    }

    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        0.5 * (0..n).map(|i| cross([0.0, 0.0], self.vertices[i], self.vertices[(i + 1) % n])).sum::<f64>()
    }

    /// Distance from `p` to the hull boundary (or to the point/segment).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let v = &self.vertices;
        match v.len() {
            0 => f64::INFINITY,
            1 => dist_to_segment(p, v[0], v[0]),
            n => (0..n).map(|i| dist_to_segment(p, v[i], v[(i + 1) % n])).fold(f64::INFINITY, f64::min),
        }
    }

    /// Inside the polygon, or within `eps` of its boundary.
    pub fn contains(&self, p: Point, eps: f64) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        if !self.is_degenerate() {
            let n = self.vertices.len();
            let inside = (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], p) >= 0.0);
            if inside {
                return true;
            }
        }
        self.boundary_distance(p) <= eps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn square_with_interior_and_collinear_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0], [0.0, 0.5]];
        let h = ConvexHull::new(&pts);
        assert_eq!(h.vertices, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(h.area(), 1.0);
        assert!(h.contains([0.5, 0.5], 0.0));
        assert!(h.contains([1.0, 0.3], 0.0));
        assert!(!h.contains([1.2, 0.5], 0.1));
        assert!(h.contains([1.05, 0.5], 0.1));
    }

    #[test]
    fn degenerate_hulls() {
        let point = ConvexHull::new(&[[2.0, 3.0], [2.0, 3.0]]);
        assert_eq!(point.vertices, vec![[2.0, 3.0]]);
        assert!(point.contains([2.0, 3.0], 0.0));
        assert!(point.contains([2.3, 3.0], 0.5));
        assert!(!point.contains([2.6, 3.0], 0.5));

        let seg = ConvexHull::new(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(seg.vertices, vec![[0.0, 0.0], [2.0, 2.0]]);
        assert!(seg.contains([1.5, 1.5], 0.0));
        assert!(!seg.contains([1.5, 0.5], 0.5));

        assert!(!ConvexHull::new(&[]).contains([0.0, 0.0], 1.0));
    }

    #[test]
    fn hull_contains_all_inputs_and_is_convex() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let pts: Vec<Point> = (0..30).map(|_| [rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)]).collect();
            let h = ConvexHull::new(&pts);
            assert!(pts.iter().all(|&p| h.contains(p, 1e-12)));
            let n = h.vertices.len();
            for i in 0..n {
                assert!(cross(h.vertices[i], h.vertices[(i + 1) % n], h.vertices[(i + 2) % n]) > 0.0);
            }
            assert!(h.area() > 0.0);
        }
    }
}
