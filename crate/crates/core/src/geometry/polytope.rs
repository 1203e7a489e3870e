//! Bounded convex polytopes in R^3 stored as a face list over a shared vertex
//! array. Every face keeps the plane that produced it, so the H- and
//! V-representations stay in sync through clipping.

use serde::Serialize;

use super::quadrature::{points_for_degree, SplitRule, TetRule, TriangleRule};
use crate::model::Vec3;

/// Relative tolerance used to classify vertices against a cutting plane and
/// to merge coincident vertices.
pub const MERGE_TOL: f64 = 1e-10;

/// Where a face came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FaceLabel {
    /// Boundary of the fluid domain.
    Domain,
    /// Shared with the cell of seed `j`.
    Bisector(usize),
    /// Zero level set of the local dual potential.
    Positivity,
    /// Artificial bounding box.
    Bounding,
}

/// A planar face `normal . p = offset` with its vertex ring, counter-clockwise
/// when seen from outside.
#[derive(Clone, Debug)]
pub struct Face {
    pub label: FaceLabel,
    pub normal: Vec3,
    pub offset: f64,
    pub ring: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ConvexPolytope {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Face>,
}

/// A tetrahedron of a fan decomposition. `base` is the face triangle,
/// `apex` the fan centre.
#[derive(Clone, Copy, Debug)]
pub struct Tet {
    pub apex: Vec3,
    pub base: [Vec3; 3],
    pub volume: f64,
    pub face: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PolytopeExport {
    pub vertices: Vec<[f64; 3]>,
    pub facets: Vec<Vec<usize>>,
}

impl ConvexPolytope {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.len() < 4
    }

    /// Axis-aligned box with all faces carrying `label`.
    pub fn cuboid(lo: Vec3, hi: Vec3, label: FaceLabel) -> Self {
        let v = |i: usize| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        };
        let vertices: Vec<Vec3> = (0..8).map(v).collect();
        let face = |n: Vec3, d: f64, ring: [usize; 4]| Face { label, normal: n, offset: d, ring: ring.to_vec() };
        let faces = vec![
            face(-Vec3::x(), -lo.x, [0, 4, 6, 2]),
            face(Vec3::x(), hi.x, [1, 3, 7, 5]),
            face(-Vec3::y(), -lo.y, [0, 1, 5, 4]),
            face(Vec3::y(), hi.y, [2, 6, 7, 3]),
            face(-Vec3::z(), -lo.z, [0, 2, 3, 1]),
            face(Vec3::z(), hi.z, [4, 5, 7, 6]),
        ];
        Self { vertices, faces }
    }

    /// Tetrahedron from four affinely independent points.
    pub fn simplex(points: [Vec3; 4], label: FaceLabel) -> Self {
        let mut poly = Self::cuboid(
            points.iter().fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p)),
            points.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p)),
            FaceLabel::Bounding,
        );
        let centre = points.iter().sum::<Vec3>() / 4.0;
        for skip in 0..4 {
            let tri: Vec<Vec3> = (0..4).filter(|&k| k != skip).map(|k| points[k]).collect();
            let mut n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
            if n.dot(&(centre - tri[0])) > 0.0 {
                n = -n;
            }
            poly = poly.clip(n, n.dot(&tri[0]), label);
        }
        poly
    }

    /// Intersection of half-spaces `n . p <= d` inside the box `[lo, hi]`.
    pub fn from_halfspaces(halfspaces: &[(Vec3, f64)], lo: Vec3, hi: Vec3, label: FaceLabel) -> Self {
        let mut poly = Self::cuboid(lo, hi, FaceLabel::Bounding);
        for (n, d) in halfspaces {
            poly = poly.clip(*n, *d, label);
            if poly.is_empty() {
                break;
            }
        }
        poly
    }

    fn scale(&self) -> f64 {
        self.vertices.iter().fold(1.0f64, |m, v| m.max(v.amax()))
    }

    /// `self ∩ {n . p <= d}`. The new face (if any) carries `label`.
    pub fn clip(&self, n: Vec3, d: f64, label: FaceLabel) -> Self {
        let norm = n.norm();
        if self.is_empty() || norm == 0.0 {
            return if norm == 0.0 && d < 0.0 { Self::empty() } else { self.clone() };
        }
        let (n, d) = (n / norm, d / norm);
        let eps = MERGE_TOL * self.scale();
        let dist: Vec<f64> = self.vertices.iter().map(|v| n.dot(v) - d).collect();
        // -1 inside, 0 on the plane, 1 outside
        let side: Vec<i8> = dist
            .iter()
            .map(|&s| if s < -eps { -1 } else if s > eps { 1 } else { 0 })
            .collect();
        if !side.iter().any(|&s| s > 0) {
            let mut out = self.clone();
            // A bounding face lying in the plane now belongs to the new constraint.
            for f in &mut out.faces {
                if f.label == FaceLabel::Bounding && f.normal.dot(&n) > 1.0 - 1e-12 && f.ring.iter().all(|&i| side[i] == 0) {
                    f.label = label;
                }
            }
            return out;
        }
        if !side.iter().any(|&s| s < 0) {
            return Self::empty();
        }

        let mut vertices: Vec<Vec3> = Vec::with_capacity(self.vertices.len() + 8);
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut on_plane: Vec<usize> = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if side[i] <= 0 {
                remap[i] = vertices.len();
                if side[i] == 0 {
                    on_plane.push(vertices.len());
                }
                vertices.push(*v);
            }
        }
        let mut edge_cache: Vec<((usize, usize), usize)> = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for face in &self.faces {
            let m = face.ring.len();
            let mut ring = Vec::with_capacity(m + 1);
            let mut all_on = true;
            for k in 0..m {
                let a = face.ring[k];
                let b = face.ring[(k + 1) % m];
                if side[a] <= 0 {
                    ring.push(remap[a]);
                }
                if side[a] != 0 {
                    all_on = false;
                }
                if side[a] * side[b] < 0 {
                    let key = (a.min(b), a.max(b));
                    let idx = match edge_cache.iter().find(|(k2, _)| *k2 == key) {
                        Some(&(_, idx)) => idx,
                        None => {
                            let (pa, pb) = (self.vertices[a], self.vertices[b]);
                            let t = dist[a] / (dist[a] - dist[b]);
                            let idx = vertices.len();
                            vertices.push(pa + (pb - pa) * t);
                            on_plane.push(idx);
                            edge_cache.push((key, idx));
                            idx
                        }
                    };
                    ring.push(idx);
                }
            }
            if all_on {
                // The face already lies in the cutting plane and will be rebuilt below.
                continue;
            }
            ring.dedup();
            if ring.len() > 1 && ring[0] == *ring.last().unwrap() {
                ring.pop();
            }
            if ring.len() >= 3 {
                faces.push(Face { ring, ..face.clone() });
            }
        }

        on_plane.sort_unstable();
        on_plane.dedup();
        if on_plane.len() >= 3 {
            let centre = on_plane.iter().map(|&i| vertices[i]).sum::<Vec3>() / on_plane.len() as f64;
            let u = any_orthogonal(&n);
            let v = n.cross(&u);
            let mut keyed: Vec<(f64, usize)> = on_plane
                .iter()
                .map(|&i| {
                    let r = vertices[i] - centre;
                    (r.dot(&v).atan2(r.dot(&u)), i)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let ring: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
            faces.push(Face { label, normal: n, offset: d, ring });
        }

        let mut out = Self { vertices, faces };
        out.compact();
        if out.is_empty() {
            return Self::empty();
        }
        out
    }

    /// Drops unreferenced vertices.
    fn compact(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in &f.ring {
                used[i] = true;
            }
        }
        if used.iter().all(|&u| u) {
            return;
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = vertices.len();
                vertices.push(*v);
            }
        }
        for f in &mut self.faces {
            for i in &mut f.ring {
                *i = remap[*i];
            }
        }
        self.vertices = vertices;
    }

    /// Mean of the vertices; an interior point of any non-degenerate polytope.
    pub fn vertex_mean(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len().max(1) as f64
    }

    pub fn face_centre(&self, f: usize) -> Vec3 {
        let ring = &self.faces[f].ring;
        ring.iter().map(|&i| self.vertices[i]).sum::<Vec3>() / ring.len() as f64
    }

    /// Fan decomposition: each face is split into triangles around its vertex
    /// mean and each triangle is joined to the polytope's vertex mean.
    pub fn tetrahedra(&self) -> Vec<Tet> {
        if self.is_empty() {
            return vec![];
        }
        let apex = self.vertex_mean();
        let mut out = Vec::new();
        for (fi, face) in self.faces.iter().enumerate() {
            let fc = self.face_centre(fi);
            let m = face.ring.len();
            for k in 0..m {
                let a = self.vertices[face.ring[k]];
                let b = self.vertices[face.ring[(k + 1) % m]];
                let vol = (fc - apex).dot(&(a - apex).cross(&(b - apex))) / 6.0;
                if vol > 0.0 {
                    out.push(Tet { apex, base: [fc, a, b], volume: vol, face: fi });
                }
            }
        }
        out
    }

    /// `(volume, centroid)`; the centroid is `None` for empty polytopes.
    pub fn measure(&self) -> (f64, Option<Vec3>) {
        let mut vol = 0.0;
        let mut moment = Vec3::zeros();
        for t in self.tetrahedra() {
            vol += t.volume;
            moment += t.volume * (t.apex + t.base[0] + t.base[1] + t.base[2]) / 4.0;
        }
        if vol > 0.0 {
            (vol, Some(moment / vol))
        } else {
            (0.0, None)
        }
    }

    pub fn volume(&self) -> f64 {
        self.measure().0
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let fc = self.face_centre(f);
        let ring = &self.faces[f].ring;
        let m = ring.len();
        (0..m)
            .map(|k| {
                let a = self.vertices[ring[k]] - fc;
                let b = self.vertices[ring[(k + 1) % m]] - fc;
                0.5 * a.cross(&b).norm()
            })
            .sum()
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.faces.iter().all(|f| f.normal.dot(p) - f.offset <= tol)
    }

    /// Integrates `integrand` against Lebesgue measure with a rule exact to `degree`.
    pub fn integrate<const K: usize>(&self, degree: usize, integrand: impl Fn(&Vec3) -> [f64; K]) -> [f64; K] {
        let rule = TetRule::collapsed(points_for_degree(degree));
        let mut acc = [0.0; K];
        for t in self.tetrahedra() {
            for (l, w) in rule.bary.iter().zip(&rule.weights) {
                let p = l[0] * t.apex + l[1] * t.base[0] + l[2] * t.base[1] + l[3] * t.base[2];
                let v = integrand(&p);
                for k in 0..K {
                    acc[k] += t.volume * w * v[k];
                }
            }
        }
        acc
    }

    /// Surface integral over face `f` with a rule exact to `degree`.
    pub fn integrate_face<const K: usize>(
        &self,
        f: usize,
        degree: usize,
        integrand: impl Fn(&Vec3) -> [f64; K],
    ) -> [f64; K] {
        let rule = TriangleRule::collapsed(points_for_degree(degree));
        let fc = self.face_centre(f);
        let ring = &self.faces[f].ring;
        let m = ring.len();
        let mut acc = [0.0; K];
        for k in 0..m {
            let a = self.vertices[ring[k]];
            let b = self.vertices[ring[(k + 1) % m]];
            let area = 0.5 * (a - fc).cross(&(b - fc)).norm();
            if area == 0.0 {
                continue;
            }
            for (l, w) in rule.bary.iter().zip(&rule.weights) {
                let v = integrand(&(l[0] * fc + l[1] * a + l[2] * b));
                for j in 0..K {
                    acc[j] += area * w * v[j];
                }
            }
        }
        acc
    }

    pub fn export(&self) -> PolytopeExport {
        PolytopeExport {
            vertices: self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            facets: self.faces.iter().map(|f| f.ring.clone()).collect(),
        }
    }

    /// Same combinatorics with every vertex mapped through `map`.
    pub fn export_mapped(&self, map: impl Fn(&Vec3) -> Vec3) -> PolytopeExport {
        let mut e = self.export();
        for v in &mut e.vertices {
            let m = map(&Vec3::new(v[0], v[1], v[2]));
            *v = [m.x, m.y, m.z];
        }
        e
    }
}

fn any_orthogonal(n: &Vec3) -> Vec3 {
    let a = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (a - n * n.dot(&a)).normalize()
}

/// Weighted integration of `t^beta * phi` where `t` is affine and nonnegative
/// on the polytope. Each fan simplex is integrated with a split rule chosen by
/// which of its vertices lie on `{t = 0}`, so the rules stay exact for
/// polynomial `phi` even though `t^beta` is not smooth there.
#[derive(Clone, Debug)]
pub struct WeightedRules {
    pub beta: f64,
    tet: TetRule,
    tri: TriangleRule,
    /// Indexed by the number of zero vertices, 1..=3.
    tet_split: Vec<SplitRule>,
    /// Indexed by the number of zero vertices, 1..=2.
    tri_split: Vec<SplitRule>,
}

impl WeightedRules {
    pub fn new(degree: usize, beta: f64) -> Self {
        let n = points_for_degree(degree);
        // The non-polynomial factor (mu . t)^beta is smooth but needs extra points.
        let ns = if beta.fract() == 0.0 { n + beta as usize / 2 } else { n + 2 };
        Self {
            beta,
            tet: TetRule::collapsed(if beta == 0.0 { n } else { ns }),
            tri: TriangleRule::collapsed(if beta == 0.0 { n } else { ns }),
            tet_split: (1..=3).map(|m| SplitRule::new(4 - m, m, ns, beta)).collect(),
            tri_split: (1..=2).map(|m| SplitRule::new(3 - m, m, ns, beta)).collect(),
        }
    }

    fn weight(&self, t: f64) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else if t <= 0.0 {
            0.0
        } else {
            t.powf(self.beta)
        }
    }

    /// Integrates over one simplex given by `verts` with measure `measure`.
    fn simplex<const K: usize, const V: usize>(
        &self,
        verts: [Vec3; V],
        measure: f64,
        t: &impl Fn(&Vec3) -> f64,
        t_tol: f64,
        phi: &impl Fn(&Vec3, f64) -> [f64; K],
        acc: &mut [f64; K],
    ) {
        let tv: [f64; V] = std::array::from_fn(|k| t(&verts[k]));
        let zero: Vec<usize> = (0..V).filter(|&k| tv[k] <= t_tol).collect();
        let pos: Vec<usize> = (0..V).filter(|&k| tv[k] > t_tol).collect();
        if pos.is_empty() {
            return;
        }
        if self.beta == 0.0 || zero.is_empty() {
            let (bary, weights): (Vec<&[f64]>, &[f64]) = if V == 4 {
                (self.tet.bary.iter().map(|b| &b[..]).collect(), &self.tet.weights)
            } else {
                (self.tri.bary.iter().map(|b| &b[..]).collect(), &self.tri.weights)
            };
            for (l, w) in bary.iter().zip(weights) {
                let p: Vec3 = (0..V).map(|k| l[k] * verts[k]).sum();
                let tp: f64 = (0..V).map(|k| l[k] * tv[k]).sum::<f64>().max(0.0);
                let ww = measure * w * self.weight(tp);
                if ww == 0.0 {
                    continue;
                }
                let v = phi(&p, tp);
                for j in 0..K {
                    acc[j] += ww * v[j];
                }
            }
            return;
        }
        let rule = if V == 4 { &self.tet_split[zero.len() - 1] } else { &self.tri_split[zero.len() - 1] };
        for q in 0..rule.weights.len() {
            let s = rule.s[q];
            let mut p = Vec3::zeros();
            let mut inner = 0.0;
            for (a, &k) in pos.iter().enumerate() {
                p += s * rule.mu[q][a] * verts[k];
                inner += rule.mu[q][a] * tv[k];
            }
            for (a, &k) in zero.iter().enumerate() {
                p += (1.0 - s) * rule.nu[q][a] * verts[k];
            }
            let v = phi(&p, s * inner);
            let ww = measure * rule.weights[q] * inner.powf(self.beta);
            for j in 0..K {
                acc[j] += ww * v[j];
            }
        }
    }

    /// `int_P t^beta phi dp`. `t_tol` decides when a vertex counts as lying on `{t = 0}`.
    pub fn volume<const K: usize>(
        &self,
        poly: &ConvexPolytope,
        t: impl Fn(&Vec3) -> f64,
        t_tol: f64,
        phi: impl Fn(&Vec3, f64) -> [f64; K],
        acc: &mut [f64; K],
    ) {
        for tet in poly.tetrahedra() {
            let verts = [tet.apex, tet.base[0], tet.base[1], tet.base[2]];
            self.simplex(verts, tet.volume, &t, t_tol, &phi, acc);
        }
    }

    /// `int_F t^beta phi dH^2` over face `f`.
    pub fn face<const K: usize>(
        &self,
        poly: &ConvexPolytope,
        f: usize,
        t: impl Fn(&Vec3) -> f64,
        t_tol: f64,
        phi: impl Fn(&Vec3, f64) -> [f64; K],
        acc: &mut [f64; K],
    ) {
        let fc = poly.face_centre(f);
        let ring = &poly.faces[f].ring;
        let m = ring.len();
        for k in 0..m {
            let a = poly.vertices[ring[k]];
            let b = poly.vertices[ring[(k + 1) % m]];
            let area = 0.5 * (a - fc).cross(&(b - fc)).norm();
            if area > 0.0 {
                self.simplex([fc, a, b], area, &t, t_tol, &phi, acc);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> ConvexPolytope {
        ConvexPolytope::cuboid(Vec3::zeros(), Vec3::repeat(1.0), FaceLabel::Domain)
    }

    fn check_valid(p: &ConvexPolytope) {
        for v in &p.vertices {
            assert!(p.contains(v, 1e-9));
        }
        for (fi, f) in p.faces.iter().enumerate() {
            for &i in &f.ring {
                assert!((f.normal.dot(&p.vertices[i]) - f.offset).abs() < 1e-9, "non-planar face");
            }
            // Outward orientation: ring normal agrees with the plane normal.
            let c = p.face_centre(fi);
            let m = f.ring.len();
            let mut area_vec = Vec3::zeros();
            for k in 0..m {
                area_vec += (p.vertices[f.ring[k]] - c).cross(&(p.vertices[f.ring[(k + 1) % m]] - c));
            }
            assert!(area_vec.dot(&f.normal) > 0.0, "face {fi} misoriented");
        }
        // Each vertex is on at least three faces.
        for i in 0..p.vertices.len() {
            let count = p.faces.iter().filter(|f| f.ring.contains(&i)).count();
            assert!(count >= 3, "vertex {i} on {count} faces");
        }
    }

    #[test]
    fn cube_measures() {
        let c = unit_cube();
        check_valid(&c);
        let (v, centroid) = c.measure();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((centroid.unwrap() - Vec3::repeat(0.5)).norm() < 1e-15);
    }

    #[test]
    fn simplex_measures() {
        let s = ConvexPolytope::simplex([Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()], FaceLabel::Domain);
        check_valid(&s);
        assert_eq!(s.vertices.len(), 4);
        let (v, c) = s.measure();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        assert!((c.unwrap() - Vec3::repeat(0.25)).norm() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        let c = unit_cube();
        let half = c.clip(Vec3::x(), 0.5, FaceLabel::Bisector(1));
        check_valid(&half);
        assert_eq!(half.vertices.len(), 8);
        assert!((half.volume() - 0.5).abs() < 1e-15);
        assert!(half.faces.iter().any(|f| f.label == FaceLabel::Bisector(1)));
        let same = c.clip(Vec3::x(), 2.0, FaceLabel::Positivity);
        assert!((same.volume() - 1.0).abs() < 1e-15);
        assert_eq!(same.faces.len(), 6);
        assert!(c.clip(Vec3::x(), -1.0, FaceLabel::Positivity).is_empty());
        assert_eq!(c.clip(Vec3::x(), -1.0, FaceLabel::Positivity).volume(), 0.0);
    }

    #[test]
    fn clip_through_vertices_and_on_faces() {
        let c = unit_cube();
        // Plane through the diagonal x + y = 1 passes through cube edges.
        let p = c.clip(Vec3::new(1.0, 1.0, 0.0), 1.0, FaceLabel::Positivity);
        check_valid(&p);
        assert!((p.volume() - 0.5).abs() < 1e-14);
        assert_eq!(p.vertices.len(), 6);
        // Clipping along an existing face plane is a no-op.
        let q = c.clip(Vec3::x(), 1.0, FaceLabel::Positivity);
        assert_eq!(q.faces.len(), 6);
        // Corner cut through three vertices.
        let r = c.clip(Vec3::new(1.0, 1.0, 1.0), 1.0, FaceLabel::Positivity);
        check_valid(&r);
        assert!((r.volume() - 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(r.vertices.len(), 4);
    }

    #[test]
    fn clipping_is_idempotent() {
        let c = unit_cube();
        let n = Vec3::new(0.3, -0.7, 0.2);
        let once = c.clip(n, 0.1, FaceLabel::Positivity);
        let twice = once.clip(n, 0.1, FaceLabel::Positivity);
        assert!((once.volume() - twice.volume()).abs() < 1e-15);
        assert_eq!(once.vertices.len(), twice.vertices.len());
    }

    #[test]
    fn clipped_volume_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut poly = unit_cube();
        let planes: Vec<(Vec3, f64)> = (0..4)
            .map(|_| {
                let n = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (n, n.dot(&Vec3::repeat(0.5)) + rng.gen_range(0.0..0.3))
            })
            .collect();
        for (n, d) in &planes {
            poly = poly.clip(*n, *d, FaceLabel::Positivity);
        }
        check_valid(&poly);
        let samples = 1_000_000;
        let hits = (0..samples)
            .filter(|_| {
                let p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                planes.iter().all(|(n, d)| n.dot(&p) <= *d)
            })
            .count() as f64;
        let frac = hits / samples as f64;
        let sigma = (frac * (1.0 - frac) / samples as f64).sqrt();
        assert!((poly.volume() - frac).abs() < 3.0 * sigma, "{} vs {}", poly.volume(), frac);
        let c = poly.measure().1.unwrap();
        assert!(poly.contains(&c, 0.0));
    }

    #[test]
    fn integrals_over_cube_and_face() {
        let c = unit_cube();
        for degree in 0..6 {
            assert!((c.integrate(degree, |_| [1.0])[0] - 1.0).abs() < 1e-14);
        }
        assert!((c.integrate(1, |p| [p.x])[0] - 0.5).abs() < 1e-14);
        assert!((c.integrate(4, |p| [p.x * p.x * p.y * p.z * p.z])[0] - 1.0 / 18.0).abs() < 1e-14);
        let bottom = c.faces.iter().position(|f| f.normal == -Vec3::z()).unwrap();
        assert!((c.face_area(bottom) - 1.0).abs() < 1e-15);
        assert!((c.integrate_face(bottom, 1, |p| [p.x])[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn affine_face_integral_matches_vertex_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let pts: Vec<Vec3> = (0..4)
                .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            let s = ConvexPolytope::simplex([pts[0], pts[1], pts[2], pts[3]], FaceLabel::Domain);
            let a = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            for f in 0..s.faces.len() {
                let ring: Vec<Vec3> = s.faces[f].ring.iter().map(|&i| s.vertices[i]).collect();
                let avg = ring.iter().map(|p| a.dot(p)).sum::<f64>() / 3.0;
                let val = s.integrate_face(f, 1, |p| [a.dot(p)])[0];
                assert!((val - avg * s.face_area(f)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn weighted_power_over_tetrahedron_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = ConvexPolytope::simplex(
            [Vec3::zeros(), Vec3::new(1.0, 0.1, 0.0), Vec3::new(0.2, 0.9, 0.1), Vec3::new(0.1, 0.2, 1.0)],
            FaceLabel::Domain,
        );
        let a = Vec3::new(0.8, -0.5, 0.6);
        let b = -0.2;
        let beta = 2.5;
        // Clip away the negative part so the integrand is smooth.
        let pos = s.clip(-a, b, FaceLabel::Positivity);
        let rules = WeightedRules::new(4, beta - 2.0);
        let mut acc = [0.0];
        rules.volume(&pos, |p| a.dot(p) + b, 1e-12, |_, t| [t * t], &mut acc);
        let n = 2_000_000;
        let vol = s.volume();
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut cnt = 0;
        while cnt < n {
            let p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            if !s.contains(&p, 0.0) {
                continue;
            }
            cnt += 1;
            let v = (a.dot(&p) + b).max(0.0).powf(beta);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let sd = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        let mc = mean * vol;
        assert!((acc[0] - mc).abs() < 4.0 * sd * vol + 1e-12, "{} vs {}", acc[0], mc);
        assert!((acc[0] - mc).abs() < 1e-4);
    }

    #[test]
    fn weighted_rule_is_exact_for_integer_powers() {
        let s = ConvexPolytope::simplex(
            [Vec3::zeros(), Vec3::new(1.0, 0.1, 0.0), Vec3::new(0.2, 0.9, 0.1), Vec3::new(0.1, 0.2, 1.0)],
            FaceLabel::Domain,
        );
        let a = Vec3::new(0.8, -0.5, 0.6);
        let b = -0.2;
        let pos = s.clip(-a, b, FaceLabel::Positivity);
        let plain = pos.integrate(6, |p| [(a.dot(p) + b).powi(3) * p.x]);
        for beta in [0.0, 1.0, 2.0] {
            let rules = WeightedRules::new(4, beta);
            let mut acc = [0.0];
            rules.volume(&pos, |p| a.dot(p) + b, 1e-12, |p, t| [t.powi(3 - beta as i32) * p.x], &mut acc);
            assert!((acc[0] - plain[0]).abs() < 1e-15, "beta {beta}: {} vs {}", acc[0], plain[0]);
        }
    }

    #[test]
    fn fractional_weight_converges_on_cone() {
        // Over the reference tetrahedron with t = 1 - x - y - z (zero on the far face),
        // int t^beta = 6 / ((beta+1)(beta+2)(beta+3)) * (1/6).
        let s = ConvexPolytope::simplex([Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()], FaceLabel::Domain);
        for beta in [0.5, 1.5, 2.5] {
            let rules = WeightedRules::new(4, beta);
            let mut acc = [0.0];
            rules.volume(&s, |p| 1.0 - p.x - p.y - p.z, 1e-12, |_, _| [1.0], &mut acc);
            let exact = 1.0 / ((beta + 1.0) * (beta + 2.0) * (beta + 3.0));
            assert!((acc[0] - exact).abs() < 1e-6 * exact, "beta {beta}: {} vs {exact}", acc[0]);
        }
    }
}
