//! Convex polygons in the plane, the two-dimensional counterpart of
//! [`super::polytope::ConvexPolytope`]. Edge `k` joins vertex `k` to `k + 1`.

use serde::Serialize;

use super::polytope::{FaceLabel, MERGE_TOL};
use super::quadrature::{gauss_legendre_unit, points_for_degree, TriangleRule};
use crate::cost::Vec2;

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConvexPolygon {
    /// Counter-clockwise.
    pub vertices: Vec<Vec2>,
    pub labels: Vec<FaceLabel>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Polygon from counter-clockwise vertices.
    pub fn new(vertices: Vec<Vec2>, label: FaceLabel) -> Self {
        let labels = vec![label; vertices.len()];
        Self { vertices, labels }
    }

    pub fn rectangle(lo: Vec2, hi: Vec2, label: FaceLabel) -> Self {
        Self::new(
            vec![lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)],
            label,
        )
    }

    fn scale(&self) -> f64 {
        self.vertices.iter().fold(1.0f64, |m, v| m.max(v.amax()))
    }

    /// `self ∩ {n . p <= d}`; the cut edge carries `label`.
    pub fn clip(&self, n: Vec2, d: f64, label: FaceLabel) -> Self {
        let norm = n.norm();
        if self.is_empty() || norm == 0.0 {
            return if norm == 0.0 && d < 0.0 { Self::empty() } else { self.clone() };
        }
        let (n, d) = (n / norm, d / norm);
        let eps = MERGE_TOL * self.scale();
        let dist: Vec<f64> = self.vertices.iter().map(|v| n.dot(v) - d).collect();
        let side: Vec<i8> = dist
            .iter()
            .map(|&s| if s < -eps { -1 } else if s > eps { 1 } else { 0 })
            .collect();
        if !side.iter().any(|&s| s > 0) {
            return self.clone();
        }
        if !side.iter().any(|&s| s < 0) {
            return Self::empty();
        }
        let m = self.vertices.len();
        let mut vertices = Vec::with_capacity(m + 2);
        let mut labels = Vec::with_capacity(m + 2);
        for k in 0..m {
            let kn = (k + 1) % m;
            let (a, b) = (self.vertices[k], self.vertices[kn]);
            if side[k] <= 0 {
                vertices.push(a);
                // Leaving through the plane: the edge from here runs along the cut.
                labels.push(if side[kn] > 0 && side[k] == 0 { label } else { self.labels[k] });
            }
            if side[k] * side[kn] < 0 {
                let t = dist[k] / (dist[k] - dist[kn]);
                vertices.push(a + (b - a) * t);
                labels.push(if side[k] < 0 { label } else { self.labels[k] });
            }
        }
        let out = Self { vertices, labels };
        if out.area() <= 0.0 {
            return Self::empty();
        }
        out
    }

    pub fn area(&self) -> f64 {
        let m = self.vertices.len();
        if m < 3 {
            return 0.0;
        }
        let o = self.vertices[0];
        (1..m - 1)
            .map(|k| {
                let a = self.vertices[k] - o;
                let b = self.vertices[k + 1] - o;
                0.5 * (a.x * b.y - a.y * b.x)
            })
            .sum()
    }

    pub fn centroid(&self) -> Option<Vec2> {
        let m = self.vertices.len();
        if m < 3 {
            return None;
        }
        let o = self.vertices[0];
        let mut area = 0.0;
        let mut mom = Vec2::zeros();
        for k in 1..m - 1 {
            let (a, b) = (self.vertices[k], self.vertices[k + 1]);
            let ar = 0.5 * ((a - o).x * (b - o).y - (a - o).y * (b - o).x);
            area += ar;
            mom += ar * (o + a + b) / 3.0;
        }
        (area > 0.0).then(|| mom / area)
    }

    pub fn edge_length(&self, k: usize) -> f64 {
        let m = self.vertices.len();
        (self.vertices[(k + 1) % m] - self.vertices[k]).norm()
    }

    pub fn contains(&self, p: &Vec2, tol: f64) -> bool {
        let m = self.vertices.len();
        (0..m).all(|k| {
            let a = self.vertices[k];
            let e = self.vertices[(k + 1) % m] - a;
            let len = e.norm();
            len == 0.0 || (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / len >= -tol
        })
    }

    pub fn integrate<const K: usize>(&self, degree: usize, integrand: impl Fn(&Vec2) -> [f64; K]) -> [f64; K] {
        let rule = TriangleRule::collapsed(points_for_degree(degree));
        let mut acc = [0.0; K];
        let m = self.vertices.len();
        if m < 3 {
            return acc;
        }
        let o = self.vertices[0];
        for k in 1..m - 1 {
            let (a, b) = (self.vertices[k], self.vertices[k + 1]);
            let ar = 0.5 * ((a - o).x * (b - o).y - (a - o).y * (b - o).x);
            for (l, w) in rule.bary.iter().zip(&rule.weights) {
                let v = integrand(&(l[0] * o + l[1] * a + l[2] * b));
                for j in 0..K {
                    acc[j] += ar * w * v[j];
                }
            }
        }
        acc
    }

    pub fn integrate_edge<const K: usize>(
        &self,
        k: usize,
        degree: usize,
        integrand: impl Fn(&Vec2) -> [f64; K],
    ) -> [f64; K] {
        let (s, w) = gauss_legendre_unit(points_for_degree(degree));
        let m = self.vertices.len();
        let (a, b) = (self.vertices[k], self.vertices[(k + 1) % m]);
        let len = (b - a).norm();
        let mut acc = [0.0; K];
        for (si, wi) in s.iter().zip(&w) {
            let v = integrand(&(a + (b - a) * *si));
            for j in 0..K {
                acc[j] += len * wi * v[j];
            }
        }
        acc
    }
}
