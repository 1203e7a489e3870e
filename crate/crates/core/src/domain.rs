//! Fluid domains. A domain is described physically (boxes) or directly in the
//! convexifying coordinates `p` (polytopes). Internally every domain exposes
//! its `p`-space pieces, physical bounding box and enclosing radius.

use serde::{Deserialize, Serialize};

use crate::cost::{phi, phi_2d, phi_2d_inverse, phi_inverse, Vec2};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, ConvexPolytope, FaceLabel};
use crate::model::{PhysicalConstants, Vec3};

/// User-facing description of a three-dimensional fluid domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DomainSpec {
    /// Axis-aligned physical box.
    Box { lo: [f64; 3], hi: [f64; 3] },
    /// Convex polytope `{p : n . p <= d}` in convexifying coordinates.
    PhiPolytope { halfspaces: Vec<([f64; 3], f64)> },
    /// Convex hull of four points in convexifying coordinates.
    PhiSimplex { vertices: [[f64; 3]; 4] },
    /// A physical box whose curved image in convexifying coordinates is
    /// replaced by `2 k^2` convex prisms. Top and bottom faces interpolate the
    /// exact surfaces at the nodes of a `k x k` grid; the volume is exact.
    PolygonalBox { lo: [f64; 3], hi: [f64; 3], k: usize },
}

/// Half-space `n . p <= d`.
pub type HalfSpace = (Vec3, f64);

#[derive(Clone, Debug)]
pub struct PhysicalDomain {
    pub spec: DomainSpec,
    constants: PhysicalConstants,
    /// Convex pieces in `p`-coordinates covering the domain; empty for `Box`.
    pub pieces: Vec<ConvexPolytope>,
    pub p_lo: Vec3,
    pub p_hi: Vec3,
    pub x_lo: Vec3,
    pub x_hi: Vec3,
    pub volume: f64,
    pub centroid: Vec3,
    pub bounding_radius: f64,
    grid_k: usize,
}

const FAR: f64 = 1e6;

fn vertex_bounds(poly: &ConvexPolytope) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in &poly.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (lo, hi)
}

impl PhysicalDomain {
    pub fn new(spec: DomainSpec, k: &PhysicalConstants) -> Result<Self> {
        match &spec {
            DomainSpec::Box { lo, hi } => {
                let (lo, hi) = (Vec3::from(*lo), Vec3::from(*hi));
                check_box(&lo, &hi)?;
                let (p_lo, p_hi) = box_p_bounds(&lo, &hi, k);
                let volume = (hi - lo).product();
                Ok(Self {
                    spec: spec.clone(),
                    constants: *k,
                    pieces: vec![],
                    p_lo,
                    p_hi,
                    x_lo: lo,
                    x_hi: hi,
                    volume,
                    centroid: (lo + hi) / 2.0,
                    bounding_radius: corner_radius(&lo, &hi),
                    grid_k: 0,
                })
            }
            DomainSpec::PhiPolytope { halfspaces } => {
                let hs: Vec<HalfSpace> = halfspaces.iter().map(|(n, d)| (Vec3::from(*n), *d)).collect();
                let mut poly = ConvexPolytope::from_halfspaces(&hs, Vec3::repeat(-FAR), Vec3::repeat(FAR), FaceLabel::Domain);
                if !poly.is_empty() && poly.faces.iter().all(|f| f.label != FaceLabel::Bounding) {
                    // Vertices cut from the huge box lose digits; redo the clipping in a tight box.
                    let (lo, hi) = vertex_bounds(&poly);
                    let pad = Vec3::repeat(1e-3 * (hi - lo).amax().max(1e-12));
                    poly = ConvexPolytope::from_halfspaces(&hs, lo - pad, hi + pad, FaceLabel::Domain);
                }
                Self::from_pieces(spec.clone(), vec![poly], k)
            }
            DomainSpec::PhiSimplex { vertices } => {
                let v = vertices.map(Vec3::from);
                let poly = ConvexPolytope::simplex(v, FaceLabel::Domain);
                Self::from_pieces(spec.clone(), vec![poly], k)
            }
            DomainSpec::PolygonalBox { lo, hi, k: n } => {
                let (lo, hi) = (Vec3::from(*lo), Vec3::from(*hi));
                check_box(&lo, &hi)?;
                if *n == 0 {
                    return Err(Error::Domain("polygonal box needs k >= 1".into()));
                }
                let n = *n;
                let pieces = polygonal_box_pieces(&lo, &hi, n, k);
                let mut d = Self::from_pieces(spec.clone(), pieces, k)?;
                d.grid_k = n;
                Ok(d)
            }
        }
    }

    /// Box `[-a, a] x [-b, b] x [0, h]`.
    pub fn centred_box(a: f64, b: f64, h: f64, k: &PhysicalConstants) -> Result<Self> {
        Self::new(DomainSpec::Box { lo: [-a, -b, 0.0], hi: [a, b, h] }, k)
    }

    fn from_pieces(spec: DomainSpec, pieces: Vec<ConvexPolytope>, k: &PhysicalConstants) -> Result<Self> {
        if pieces.iter().any(|p| p.is_empty()) {
            return Err(Error::Domain("domain polytope is empty or has no interior".into()));
        }
        if pieces.iter().any(|p| p.faces.iter().any(|f| f.label == FaceLabel::Bounding)) {
            return Err(Error::Domain("domain polytope is unbounded".into()));
        }
        let mut p_lo = Vec3::repeat(f64::INFINITY);
        let mut p_hi = Vec3::repeat(f64::NEG_INFINITY);
        for piece in &pieces {
            let (lo, hi) = vertex_bounds(piece);
            p_lo = p_lo.inf(&lo);
            p_hi = p_hi.sup(&hi);
        }
        let det = k.det_dphi();
        let mut vol_p = 0.0;
        let mut moment = Vec3::zeros();
        for piece in &pieces {
            let r = piece.integrate(2, |p| {
                let x = phi(p, k);
                [1.0, x.x, x.y, x.z]
            });
            vol_p += r[0];
            moment += Vec3::new(r[1], r[2], r[3]);
        }
        if !(vol_p > 0.0) {
            return Err(Error::Domain("domain has zero volume".into()));
        }
        let (x_lo, x_hi) = phi_box_image(&p_lo, &p_hi, k);
        Ok(Self {
            spec,
            constants: *k,
            pieces,
            p_lo,
            p_hi,
            x_lo,
            x_hi,
            volume: det * vol_p,
            centroid: moment / vol_p,
            bounding_radius: corner_radius(&x_lo, &x_hi),
            grid_k: 0,
        })
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn is_box(&self) -> bool {
        matches!(self.spec, DomainSpec::Box { .. })
    }

    /// Physical membership test.
    pub fn contains(&self, x: &Vec3) -> bool {
        match &self.spec {
            DomainSpec::Box { lo, hi } => (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a]),
            DomainSpec::PolygonalBox { lo, hi, .. } => {
                let p = phi_inverse(x, &self.constants);
                let n = self.grid_k;
                let fx = ((x.x - lo[0]) / (hi[0] - lo[0]) * n as f64).floor();
                let fy = ((x.y - lo[1]) / (hi[1] - lo[1]) * n as f64).floor();
                if !(fx >= 0.0 && fy >= 0.0 && x.x <= hi[0] && x.y <= hi[1]) {
                    return false;
                }
                let (ix, iy) = ((fx as usize).min(n - 1), (fy as usize).min(n - 1));
                let base = 2 * (iy * n + ix);
                self.pieces[base..base + 2].iter().any(|q| q.contains(&p, 1e-12))
            }
            _ => {
                let p = phi_inverse(x, &self.constants);
                self.pieces.iter().any(|q| q.contains(&p, 1e-12))
            }
        }
    }

    /// Indices of pieces whose `p`-bounding box meets `[lo, hi]`.
    pub fn pieces_near(&self, lo: &Vec3, hi: &Vec3) -> Vec<usize> {
        match &self.spec {
            DomainSpec::PolygonalBox { lo: xl, hi: xh, .. } => {
                let f2 = self.constants.f_cor * self.constants.f_cor;
                let n = self.grid_k as f64;
                let cell = |v: f64, a: usize| ((v / f2 - xl[a]) / (xh[a] - xl[a]) * n).floor();
                let rng = |a: usize| {
                    let l = cell(lo[a], a).max(0.0);
                    let h = cell(hi[a], a).min(n - 1.0);
                    (l as usize, h as usize, l <= h)
                };
                let (x0, x1, okx) = rng(0);
                let (y0, y1, oky) = rng(1);
                if !(okx && oky) {
                    return vec![];
                }
                let k = self.grid_k;
                let mut out = Vec::new();
                for iy in y0..=y1 {
                    for ix in x0..=x1 {
                        out.push(2 * (iy * k + ix));
                        out.push(2 * (iy * k + ix) + 1);
                    }
                }
                out
            }
            _ => (0..self.pieces.len()).collect(),
        }
    }

    /// True when the domain lies inside `R^2 x (delta, 1/delta)`.
    pub fn inside_geostrophic_slab(&self) -> bool {
        self.x_lo.z > self.constants.delta && self.x_hi.z < 1.0 / self.constants.delta
    }

    /// Vertices of the domain mapped to physical space (boxes: the corners).
    pub fn physical_vertices(&self) -> Vec<Vec3> {
        match &self.spec {
            DomainSpec::Box { lo, hi } => {
                let (lo, hi) = (Vec3::from(*lo), Vec3::from(*hi));
                ConvexPolytope::cuboid(lo, hi, FaceLabel::Domain).vertices
            }
            _ => self
                .pieces
                .iter()
                .flat_map(|p| p.vertices.iter().map(|v| phi(v, &self.constants)))
                .collect(),
        }
    }
}

fn check_box(lo: &Vec3, hi: &Vec3) -> Result<()> {
    if (0..3).all(|a| hi[a] > lo[a] && lo[a].is_finite() && hi[a].is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("box needs positive side lengths".into()))
    }
}

fn corner_radius(lo: &Vec3, hi: &Vec3) -> f64 {
    let c = lo.abs().sup(&hi.abs());
    c.norm()
}

fn sq_range(lo: f64, hi: f64) -> (f64, f64) {
    let min = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
    let min = min * min;
    let max = lo.abs().max(hi.abs()).powi(2);
    (min, max)
}

/// Bounding box in `p` of the physical box `[lo, hi]`.
fn box_p_bounds(lo: &Vec3, hi: &Vec3, k: &PhysicalConstants) -> (Vec3, Vec3) {
    let f2 = k.f_cor * k.f_cor;
    let (a0, a1) = sq_range(lo.x, hi.x);
    let (b0, b1) = sq_range(lo.y, hi.y);
    (
        Vec3::new(f2 * lo.x, f2 * lo.y, k.g * lo.z + 0.5 * f2 * (a0 + b0)),
        Vec3::new(f2 * hi.x, f2 * hi.y, k.g * hi.z + 0.5 * f2 * (a1 + b1)),
    )
}

/// A physical box containing `phi([p_lo, p_hi])`.
fn phi_box_image(p_lo: &Vec3, p_hi: &Vec3, k: &PhysicalConstants) -> (Vec3, Vec3) {
    let if2 = 1.0 / (k.f_cor * k.f_cor);
    let (a0, a1) = sq_range(p_lo.x, p_hi.x);
    let (b0, b1) = sq_range(p_lo.y, p_hi.y);
    (
        Vec3::new(if2 * p_lo.x, if2 * p_lo.y, (p_lo.z - 0.5 * if2 * (a1 + b1)) / k.g),
        Vec3::new(if2 * p_hi.x, if2 * p_hi.y, (p_hi.z - 0.5 * if2 * (a0 + b0)) / k.g),
    )
}

fn polygonal_box_pieces(lo: &Vec3, hi: &Vec3, n: usize, k: &PhysicalConstants) -> Vec<ConvexPolytope> {
    let node = |ix: usize, iy: usize, z: f64| {
        let x = Vec3::new(
            lo.x + (hi.x - lo.x) * ix as f64 / n as f64,
            lo.y + (hi.y - lo.y) * iy as f64 / n as f64,
            z,
        );
        phi_inverse(&x, k)
    };
    let mut pieces = Vec::with_capacity(2 * n * n);
    for iy in 0..n {
        for ix in 0..n {
            let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
            for tri in [[0, 1, 2], [0, 2, 3]] {
                let bottom: Vec<Vec3> = tri.iter().map(|&c| node(corners[c].0, corners[c].1, lo.z)).collect();
                let top: Vec<Vec3> = tri.iter().map(|&c| node(corners[c].0, corners[c].1, hi.z)).collect();
                pieces.push(prism(&bottom, &top));
            }
        }
    }
    pieces
}

/// Convex prism over a triangle with planar bottom and top.
fn prism(bottom: &[Vec3], top: &[Vec3]) -> ConvexPolytope {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in bottom.iter().chain(top) {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let pad = 1e-9 * (1.0 + hi.amax().max(lo.amax()));
    let mut poly = ConvexPolytope::cuboid(lo - Vec3::repeat(pad), hi + Vec3::repeat(pad), FaceLabel::Bounding);
    let centre = bottom.iter().chain(top).sum::<Vec3>() / 6.0;
    let mut plane = |a: Vec3, b: Vec3, c: Vec3| {
        let mut n = (b - a).cross(&(c - a));
        if n.dot(&(centre - a)) > 0.0 {
            n = -n;
        }
        poly = poly.clip(n, n.dot(&a), FaceLabel::Domain);
    };
    plane(bottom[0], bottom[1], bottom[2]);
    plane(top[0], top[1], top[2]);
    for e in 0..3 {
        let (a, b) = (bottom[e], bottom[(e + 1) % 3]);
        plane(a, b, top[e]);
    }
    poly
}

/// Two-dimensional domains for the vertical-slice cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PlanarDomainSpec {
    /// Convex polygon in convexifying coordinates, counter-clockwise.
    PhiPolygon { vertices: Vec<[f64; 2]> },
    /// Physical rectangle; its image is cut into `segments` parallelogram strips.
    Rect {
        lo: [f64; 2],
        hi: [f64; 2],
        #[serde(default = "default_segments")]
        segments: usize,
    },
}

fn default_segments() -> usize {
    1024
}

#[derive(Clone, Debug)]
pub struct PlanarDomain {
    pub spec: PlanarDomainSpec,
    constants: PhysicalConstants,
    pub pieces: Vec<ConvexPolygon>,
    pub p_lo: Vec2,
    pub p_hi: Vec2,
    pub area: f64,
}

impl PlanarDomain {
    pub fn new(spec: PlanarDomainSpec, k: &PhysicalConstants) -> Result<Self> {
        let pieces = match &spec {
            PlanarDomainSpec::PhiPolygon { vertices } => {
                let poly = ConvexPolygon::new(vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect(), FaceLabel::Domain);
                if poly.area() <= 0.0 {
                    return Err(Error::Domain("polygon must be counter-clockwise with positive area".into()));
                }
                vec![poly]
            }
            PlanarDomainSpec::Rect { lo, hi, segments } => {
                if !(hi[0] > lo[0] && hi[1] > lo[1]) || *segments == 0 {
                    return Err(Error::Domain("rectangle needs positive sides and segments".into()));
                }
                let n = *segments;
                (0..n)
                    .map(|s| {
                        let xa = lo[0] + (hi[0] - lo[0]) * s as f64 / n as f64;
                        let xb = lo[0] + (hi[0] - lo[0]) * (s + 1) as f64 / n as f64;
                        let m = |x: f64, y: f64| phi_2d_inverse(&Vec2::new(x, y), k);
                        ConvexPolygon::new(vec![m(xa, lo[1]), m(xb, lo[1]), m(xb, hi[1]), m(xa, hi[1])], FaceLabel::Domain)
                    })
                    .collect()
            }
        };
        let mut p_lo = Vec2::repeat(f64::INFINITY);
        let mut p_hi = Vec2::repeat(f64::NEG_INFINITY);
        for v in pieces.iter().flat_map(|p| p.vertices.iter()) {
            p_lo = p_lo.inf(v);
            p_hi = p_hi.sup(v);
        }
        let area = k.det_dphi_2d() * pieces.iter().map(|p| p.area()).sum::<f64>();
        Ok(Self { spec, constants: *k, pieces, p_lo, p_hi, area })
    }

    pub fn unit_square(k: &PhysicalConstants, segments: usize) -> Result<Self> {
        Self::new(PlanarDomainSpec::Rect { lo: [0.0, 0.0], hi: [1.0, 1.0], segments }, k)
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// Indices of pieces whose bounding box meets `[lo, hi]`.
    pub fn pieces_near(&self, lo: &Vec2, hi: &Vec2) -> Vec<usize> {
        match &self.spec {
            PlanarDomainSpec::Rect { lo: xl, hi: xh, segments } => {
                let f2 = self.constants.f_cor * self.constants.f_cor;
                let n = *segments as f64;
                let s = |p: f64| ((p / f2 - xl[0]) / (xh[0] - xl[0]) * n).floor();
                let a = s(lo.x).max(0.0);
                let b = s(hi.x).min(n - 1.0);
                if a > b {
                    return vec![];
                }
                (a as usize..=b as usize).collect()
            }
            _ => (0..self.pieces.len()).collect(),
        }
    }

    pub fn contains_physical(&self, x: &Vec2) -> bool {
        match &self.spec {
            PlanarDomainSpec::Rect { lo, hi, .. } => x.x >= lo[0] && x.x <= hi[0] && x.y >= lo[1] && x.y <= hi[1],
            PlanarDomainSpec::PhiPolygon { .. } => {
                let p = phi_2d_inverse(x, &self.constants);
                self.pieces[0].contains(&p, 1e-12)
            }
        }
    }

    pub fn to_physical(&self, p: &Vec2) -> Vec2 {
        phi_2d(p, &self.constants)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::new(1.2, 0.8, 1.4, 1.0, 0.05).unwrap()
    }

    #[test]
    fn box_domain_basics() {
        let k = consts();
        let d = PhysicalDomain::centred_box(1.0, 2.0, 1.0, &k).unwrap();
        assert_eq!(d.volume, 8.0);
        assert_eq!(d.centroid, Vec3::new(0.0, 0.0, 0.5));
        for v in d.physical_vertices() {
            assert!(v.norm() <= d.bounding_radius + 1e-12);
        }
        assert!(PhysicalDomain::new(DomainSpec::Box { lo: [0.0; 3], hi: [1.0, 0.0, 1.0] }, &k).is_err());
    }

    #[test]
    fn phi_simplex_volume_and_radius() {
        let k = consts();
        let spec = DomainSpec::PhiSimplex { vertices: [[0.0, 0.0, 0.5], [1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.5]] };
        let d = PhysicalDomain::new(spec, &k).unwrap();
        assert!((d.volume - k.det_dphi() / 6.0).abs() < 1e-14);
        // Sample points of the p-simplex: their physical images lie in the bounding ball and box.
        for a in 0..=10 {
            for b in 0..=(10 - a) {
                for c in 0..=(10 - a - b) {
                    let p = Vec3::new(a as f64 / 10.0, b as f64 / 10.0, 0.5 + c as f64 / 10.0);
                    let x = phi(&p, &k);
                    assert!(x.norm() <= d.bounding_radius + 1e-12);
                    assert!((0..3).all(|i| x[i] >= d.x_lo[i] - 1e-12 && x[i] <= d.x_hi[i] + 1e-12));
                    assert!(d.contains(&x));
                }
            }
        }
    }

    #[test]
    fn unbounded_polytope_is_rejected() {
        let k = consts();
        let spec = DomainSpec::PhiPolytope { halfspaces: vec![([0.0, 0.0, 1.0], 1.0)] };
        assert!(PhysicalDomain::new(spec, &k).is_err());
        let spec = DomainSpec::PhiPolytope {
            halfspaces: vec![
                ([1.0, 0.0, 0.0], 1.0),
                ([-1.0, 0.0, 0.0], 0.0),
                ([0.0, 1.0, 0.0], 1.0),
                ([0.0, -1.0, 0.0], 0.0),
                ([0.0, 0.0, 1.0], 2.0),
                ([0.0, 0.0, -1.0], -1.0),
            ],
        };
        let d = PhysicalDomain::new(spec, &k).unwrap();
        assert!((d.volume - k.det_dphi()).abs() < 1e-12 * k.det_dphi(), "{} vs {}", d.volume, k.det_dphi());
    }

    #[test]
    fn polygonal_box_has_exact_volume() {
        let k = consts();
        let d = PhysicalDomain::new(DomainSpec::PolygonalBox { lo: [0.0, 0.0, 1.0], hi: [1.0, 1.0, 1.8], k: 4 }, &k).unwrap();
        assert_eq!(d.pieces.len(), 32);
        assert!((d.volume - 0.8).abs() < 1e-13, "{}", d.volume);
        assert!(d.contains(&Vec3::new(0.5, 0.5, 1.4)));
        assert!(!d.contains(&Vec3::new(0.5, 0.5, 0.9)));
        assert!(!d.contains(&Vec3::new(1.5, 0.5, 1.4)));
        let near = d.pieces_near(&Vec3::new(0.0, 0.0, 0.0), &Vec3::new(0.1, 0.1, 10.0));
        assert_eq!(near, vec![0, 1]);
        assert!((d.centroid - Vec3::new(0.5, 0.5, 1.4)).norm() < 3e-2);
    }

    #[test]
    fn planar_rect_area_is_exact() {
        let k = consts();
        let d = PlanarDomain::new(PlanarDomainSpec::Rect { lo: [0.0, 0.0], hi: [1.0, 2.0], segments: 64 }, &k).unwrap();
        assert!((d.area - 2.0).abs() < 1e-13);
        assert_eq!(d.pieces_near(&Vec2::new(-1.0, 0.0), &Vec2::new(0.0, 1.0)), vec![0]);
    }
}
