use std::sync::OnceLock;

use rayon::prelude::*;

use super::{fstar, CellIntegrals, Evaluation, FacetMap};
use crate::cost::{affine_unchecked, FStar};
use crate::domain::{DomainSpec, PhysicalDomain};
use crate::error::{Error, Result};
use crate::geometry::quadrature::{gauss_legendre_unit, points_for_degree};
use crate::model::{PhysicalConstants, Vec3};

/// Integration over a physical box along straight lines in convexifying
/// coordinates.
///
/// Every `c(phi(p), z_i) - w_i` is affine in `p`, so along a line the cells
/// are the pieces of a lower envelope of affine functions and every integrand
/// has a closed-form antiderivative. Only the two directions across the lines
/// use Gauss quadrature.
///
/// A single seed uses vertical lines, for which the transverse integrand is a
/// polynomial and the rule is exact. With several seeds the lines are tilted:
/// two seeds at one height share a vertical interface, which vertical lines
/// never cross, and their masses would then move in steps.
#[derive(Clone, Debug)]
pub struct ColumnBackend {
    domain: PhysicalDomain,
    k: PhysicalConstants,
    fs: FStar,
    lo: Vec3,
    hi: Vec3,
    panels: Option<usize>,
    points: usize,
    tilt: Option<[f64; 2]>,
}

/// `c - w` along the line: `offset + slope * s`.
#[derive(Clone, Copy)]
struct Piece {
    idx: usize,
    offset: f64,
    slope: f64,
}

/// Lines `p = origin(u, v) + s d`.
struct Frame {
    d: Vec3,
    e1: Vec3,
    e2: Vec3,
    u: (f64, f64),
    v: (f64, f64),
}

/// Horizontal tilt of the lines, as fractions of the box extents over its height.
const DEFAULT_TILT: [f64; 2] = [0.29, 0.17];

impl ColumnBackend {
    /// `panels` per transverse axis; `None` picks one panel for a single seed
    /// and about `4 sqrt(N)` otherwise.
    pub fn new(domain: PhysicalDomain, panels: Option<usize>, degree: usize) -> Result<Self> {
        let (lo, hi) = match &domain.spec {
            DomainSpec::Box { lo, hi } => (Vec3::from(*lo), Vec3::from(*hi)),
            _ => return Err(Error::Unsupported("the column scheme needs a physical box".into())),
        };
        if panels == Some(0) {
            return Err(Error::Config("at least one panel per axis".into()));
        }
        let k = *domain.constants();
        Ok(Self {
            fs: fstar(&k),
            k,
            lo,
            hi,
            panels,
            // A single seed gives polynomials of degree 8 across vertical lines.
            points: points_for_degree(degree.max(8)),
            tilt: None,
            domain,
        })
    }

    /// Overrides the tilt used with several seeds; `[0, 0]` keeps lines vertical.
    pub fn with_tilt(mut self, tilt: [f64; 2]) -> Self {
        self.tilt = Some(tilt);
        self
    }

    pub fn domain(&self) -> &PhysicalDomain {
        &self.domain
    }

    fn panel_count(&self, n: usize) -> usize {
        self.panels.unwrap_or(if n <= 1 { 1 } else { (4.0 * (n as f64).sqrt()).ceil() as usize })
    }

    fn frame(&self, n: usize) -> Frame {
        let f2 = self.k.f_cor * self.k.f_cor;
        let (lo, hi) = (self.lo, self.hi);
        let r2 = |x: f64, y: f64| 0.5 * f2 * (x * x + y * y);
        let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
        for x in [lo.x, hi.x] {
            for y in [lo.y, hi.y] {
                rmax = rmax.max(r2(x, y));
            }
        }
        let cx = 0.0f64.clamp(lo.x, hi.x);
        let cy = 0.0f64.clamp(lo.y, hi.y);
        rmin = rmin.min(r2(cx, cy));
        let plo = Vec3::new(f2 * lo.x, f2 * lo.y, self.k.g * lo.z + rmin);
        let phi = Vec3::new(f2 * hi.x, f2 * hi.y, self.k.g * hi.z + rmax);
        let ext = phi - plo;
        let tilt = if n <= 1 { [0.0, 0.0] } else { self.tilt.unwrap_or(DEFAULT_TILT) };
        let d = Vec3::new(tilt[0] * ext.x, tilt[1] * ext.y, ext.z).normalize();
        let e1 = (Vec3::x() - d.x * d).normalize();
        let e2 = d.cross(&e1);
        let (mut u, mut v) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for c in 0..8 {
            let p = Vec3::new(
                if c & 1 == 0 { plo.x } else { phi.x },
                if c & 2 == 0 { plo.y } else { phi.y },
                if c & 4 == 0 { plo.z } else { phi.z },
            );
            let (a, b) = (p.dot(&e1), p.dot(&e2));
            u = (u.0.min(a), u.1.max(a));
            v = (v.0.min(b), v.1.max(b));
        }
        Frame { d, e1, e2, u, v }
    }

    pub fn evaluate(&self, w: &[f64], z: &[Vec3], facets: bool) -> Evaluation {
        let n = z.len();
        let np = self.panel_count(n);
        let fr = self.frame(n);
        let (gx, gw) = gauss_legendre_unit(self.points);
        let du = (fr.u.1 - fr.u.0) / np as f64;
        let dv = (fr.v.1 - fr.v.0) / np as f64;
        let det = self.k.det_dphi();
        // c(phi(p), z_i) - w_i = a_i . p + b_i - w_i.
        let forms: Vec<(Vec3, f64)> = z
            .iter()
            .zip(w)
            .map(|(zi, wi)| {
                let f = affine_unchecked(zi, &self.k);
                (f.linear, f.offset - wi)
            })
            .collect();
        // Steepest descent first: that piece is lowest as s -> +infinity, so
        // scanning by decreasing slope builds the envelope from s = -infinity.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| forms[b].0.dot(&fr.d).total_cmp(&forms[a].0.dot(&fr.d)));
        // One task per panel row, summed in a fixed order so results do not
        // depend on scheduling.
        let per: Vec<(Vec<CellIntegrals>, FacetMap)> = (0..np)
            .into_par_iter()
            .map(|band| {
                let mut cells = vec![CellIntegrals::default(); n];
                let mut fm = FacetMap::default();
                let mut stack = Vec::with_capacity(n);
                for row in band * self.points..(band + 1) * self.points {
                    let v = fr.v.0 + dv * (band as f64 + gx[row % self.points]);
                    let wv = dv * gw[row % self.points];
                    for col in 0..np * self.points {
                        let u = fr.u.0 + du * ((col / self.points) as f64 + gx[col % self.points]);
                        let wu = du * gw[col % self.points];
                        let origin = u * fr.e1 + v * fr.e2;
                        self.line(&origin, &fr.d, det * wu * wv, &forms, &order, &mut stack, &mut cells, facets.then_some(&mut fm));
                    }
                }
                (cells, fm)
            })
            .collect();
        let mut cells = vec![CellIntegrals::default(); n];
        let mut fm = FacetMap::default();
        for (c, f) in per {
            for (x, y) in cells.iter_mut().zip(&c) {
                x.add(y);
            }
            fm = fm.merge(f);
        }
        Evaluation { cells, facets: fm.into_terms() }
    }

    /// Parameter intervals where `origin + s d` lies in the domain.
    fn inside(&self, o: &Vec3, d: &Vec3) -> ([(f64, f64); 2], usize) {
        let f2 = self.k.f_cor * self.k.f_cor;
        let g = self.k.g;
        let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
        for (ax, (l, h)) in [(0, (self.lo.x, self.hi.x)), (1, (self.lo.y, self.hi.y))] {
            let (pl, ph) = (f2 * l, f2 * h);
            if d[ax].abs() < 1e-300 {
                if o[ax] < pl || o[ax] > ph {
                    return ([(0.0, 0.0); 2], 0);
                }
            } else {
                let (s1, s2) = ((pl - o[ax]) / d[ax], (ph - o[ax]) / d[ax]);
                a = a.max(s1.min(s2));
                b = b.min(s1.max(s2));
            }
        }
        // x_3(s) = c0 + c1 s + c2 s^2 with c2 <= 0.
        let c2 = -(d.x * d.x + d.y * d.y) / (2.0 * f2 * g);
        let c1 = (d.z - (o.x * d.x + o.y * d.y) / f2) / g;
        let c0 = (o.z - 0.5 * (o.x * o.x + o.y * o.y) / f2) / g;
        let roots = |c: f64| -> Option<(f64, f64)> {
            // Real roots of c2 s^2 + c1 s + (c0 - c), ascending.
            if c2 == 0.0 {
                let r = (c - c0) / c1;
                return Some((r, r));
            }
            let disc = c1 * c1 - 4.0 * c2 * (c0 - c);
            if disc < 0.0 {
                return None;
            }
            let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
            let (r1, r2) = (q / c2, (c0 - c) / q);
            Some((r1.min(r2), r1.max(r2)))
        };
        // x_3 >= lo: one interval (a ray when the lines are vertical).
        match roots(self.lo.z) {
            None => return ([(0.0, 0.0); 2], 0),
            Some((r1, r2)) => {
                if c2 == 0.0 {
                    a = a.max(r1);
                } else {
                    a = a.max(r1);
                    b = b.min(r2);
                }
            }
        }
        if a >= b {
            return ([(0.0, 0.0); 2], 0);
        }
        // x_3 <= hi: everything, or the complement of an interval.
        let mut out = [(0.0, 0.0); 2];
        let mut m = 0;
        match roots(self.hi.z) {
            None => {
                out[0] = (a, b);
                m = 1;
            }
            Some((r1, r2)) if c2 == 0.0 => {
                if r1 > a {
                    out[0] = (a, b.min(r1));
                    m = 1;
                }
                let _ = r2;
            }
            Some((r1, r2)) => {
                for (x, y) in [(a, b.min(r1)), (a.max(r2), b)] {
                    if x < y {
                        out[m] = (x, y);
                        m += 1;
                    }
                }
            }
        }
        (out, m)
    }

    #[allow(clippy::too_many_arguments)]
    fn line(
        &self,
        o: &Vec3,
        d: &Vec3,
        weight: f64,
        forms: &[(Vec3, f64)],
        order: &[usize],
        stack: &mut Vec<(Piece, f64)>,
        cells: &mut [CellIntegrals],
        mut facets: Option<&mut FacetMap>,
    ) {
        let (spans, m) = self.inside(o, d);
        if m == 0 {
            return;
        }
        // Lower envelope; each entry stores the s where its piece takes over.
        stack.clear();
        for &i in order {
            let (a, b) = forms[i];
            let piece = Piece { idx: i, offset: a.dot(o) + b, slope: a.dot(d) };
            loop {
                let Some(&(top, start)) = stack.last() else {
                    stack.push((piece, f64::NEG_INFINITY));
                    break;
                };
                if piece.slope == top.slope {
                    if piece.offset < top.offset {
                        stack.pop();
                        continue;
                    }
                    break;
                }
                let cross = (piece.offset - top.offset) / (top.slope - piece.slope);
                if cross <= start {
                    stack.pop();
                    continue;
                }
                stack.push((piece, cross));
                break;
            }
        }
        for &(l, u) in &spans[..m] {
            let mut prev: Option<Piece> = None;
            for s in 0..stack.len() {
                let (piece, start) = stack[s];
                let end = if s + 1 < stack.len() { stack[s + 1].1 } else { f64::INFINITY };
                let (a, b) = (start.max(l), end.min(u));
                if a >= b {
                    continue;
                }
                if let (Some(p), Some(fm)) = (prev, facets.as_deref_mut()) {
                    let t = -(piece.offset + piece.slope * a);
                    let inv = weight / (p.slope - piece.slope).abs();
                    fm.add(p.idx, piece.idx, inv * self.fs.density(t), inv);
                }
                prev = Some(piece);
                self.segment(piece, a, b, o, d, weight, &mut cells[piece.idx]);
            }
        }
    }

    /// Adds the integrals over `s in [a, b]`, where `t = -(offset + slope s)`.
    #[allow(clippy::too_many_arguments)]
    fn segment(&self, piece: Piece, a: f64, b: f64, o: &Vec3, d: &Vec3, weight: f64, cell: &mut CellIntegrals) {
        cell.volume += weight * (b - a);
        let t = |s: f64| -(piece.offset + piece.slope * s);
        // Clip to t > 0.
        let (mut a, mut b) = (a, b);
        if piece.slope > 0.0 {
            b = b.min(-piece.offset / piece.slope);
        } else if piece.slope < 0.0 {
            a = a.max(-piece.offset / piece.slope);
        } else if t(a) <= 0.0 {
            return;
        }
        if !(a < b) {
            return;
        }
        // Local variable r in [0, len] from the end with the smaller t.
        let (s0, dir) = if t(a) <= t(b) { (a, 1.0) } else { (b, -1.0) };
        let len = b - a;
        let t0 = t(s0).max(0.0);
        let mu = (-piece.slope * dir).max(0.0);
        let f2 = self.k.f_cor * self.k.f_cor;
        let g = self.k.g;
        let p0 = o + s0 * d;
        let dl = dir * d;
        // x(r) = x0 + x1 r + x2 r^2 (only the third component is quadratic).
        let x0 = Vec3::new(p0.x / f2, p0.y / f2, (p0.z - 0.5 * (p0.x * p0.x + p0.y * p0.y) / f2) / g);
        let x1 = Vec3::new(dl.x / f2, dl.y / f2, (dl.z - (p0.x * dl.x + p0.y * dl.y) / f2) / g);
        let x2 = -(dl.x * dl.x + dl.y * dl.y) / (2.0 * f2 * g);
        let gp = self.fs.exponent;
        let kk = self.fs.scale;
        let mom = |q: f64| moments(t0, mu, len, q);
        let i1 = mom(gp - 1.0);
        let m = kk * i1[0];
        cell.mass += weight * m;
        cell.fstar += weight * kk / gp * mom(gp)[0];
        cell.fstar2 += weight * (gp - 1.0) * kk * mom(gp - 2.0)[0];
        let mut xm = kk * (x0 * i1[0] + x1 * i1[1]);
        xm.z += kk * x2 * i1[2];
        cell.moment += weight * xm;
    }
}

/// `int_0^len r^j (t0 + mu r)^q dr` for `j = 0, 1, 2`, with `t0 >= 0`, `mu >= 0`.
fn moments(t0: f64, mu: f64, len: f64, q: f64) -> [f64; 3] {
    let t1 = t0 + mu * len;
    if mu * len <= 0.25 * t1 {
        // The integrand is analytic well beyond the interval.
        static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
        let (x, w) = RULE.get_or_init(|| gauss_legendre_unit(8));
        let mut out = [0.0; 3];
        for (xi, wi) in x.iter().zip(w) {
            let r = xi * len;
            let f = wi * len * (t0 + mu * r).powf(q);
            out[0] += f;
            out[1] += f * r;
            out[2] += f * r * r;
        }
        return out;
    }
    // Antiderivatives in t = t0 + mu r, expanded about the smaller end t0.
    let p = |e: f64| (t1.powf(e) - if t0 > 0.0 { t0.powf(e) } else { 0.0 }) / e;
    let (a1, a2, a3) = (p(q + 1.0), p(q + 2.0), p(q + 3.0));
    [
        a1 / mu,
        (a2 - t0 * a1) / (mu * mu),
        (a3 - 2.0 * t0 * a2 + t0 * t0 * a1) / (mu * mu * mu),
    ]
}
