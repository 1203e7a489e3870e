use rayon::prelude::*;

use super::{fstar, is_polytope_domain, CellIntegrals, Evaluation, FacetMap};
use crate::cost::{affine_unchecked, phi, power_lift_raw, FStar, PowerLift};
use crate::domain::PhysicalDomain;
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolytope, FaceLabel, WeightedRules};
use crate::model::{PhysicalConstants, Vec3};

/// Power cells in convexifying coordinates. In these coordinates the cost is
/// affine in `p`, so each cell and its positivity region are polytopes and
/// every integrand is a polynomial times a power of an affine function.
#[derive(Clone, Debug)]
pub struct ExactBackend {
    domain: PhysicalDomain,
    k: PhysicalConstants,
    fs: FStar,
    volume_rules: WeightedRules,
    face_rules: WeightedRules,
}

struct CellResult {
    parts: Vec<ConvexPolytope>,
    integrals: CellIntegrals,
    facets: FacetMap,
}

impl ExactBackend {
    pub fn new(domain: PhysicalDomain, degree: usize) -> Result<Self> {
        if !is_polytope_domain(&domain) {
            return Err(Error::Unsupported(
                "exact cells need a domain that is a polytope in convexifying coordinates".into(),
            ));
        }
        let k = *domain.constants();
        let gp = k.gamma_prime();
        // The moment integrand t * phi(p) is cubic in p.
        Ok(Self {
            fs: fstar(&k),
            volume_rules: WeightedRules::new(degree.max(3), gp - 2.0),
            face_rules: WeightedRules::new(degree.max(2), gp - 1.0),
            domain,
            k,
        })
    }

    pub fn domain(&self) -> &PhysicalDomain {
        &self.domain
    }

    /// The power cell of seed `i` intersected with every domain piece it meets.
    pub fn cell_geometry(&self, i: usize, lift: &PowerLift) -> Vec<ConvexPolytope> {
        let d = &self.domain;
        let pad = Vec3::repeat(1e-3 * (d.p_hi - d.p_lo).amax() + 1e-9);
        let mut cell = ConvexPolytope::cuboid(d.p_lo - pad, d.p_hi + pad, FaceLabel::Bounding);
        // Nearby lifted seeds first: they cut the most and keep later clips cheap.
        let yi = lift.y_hat[i];
        let mut order: Vec<(f64, usize)> = (0..lift.y_hat.len())
            .filter(|&j| j != i)
            .map(|j| (lift.power(j, &yi), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, j) in order {
            let (n, off) = lift.bisector(i, j);
            cell = cell.clip(n, off, FaceLabel::Bisector(j));
            if cell.is_empty() {
                return vec![];
            }
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &cell.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let mut parts = Vec::new();
        for q in d.pieces_near(&lo, &hi) {
            let mut part = cell.clone();
            for f in &d.pieces[q].faces {
                part = part.clip(f.normal, f.offset, FaceLabel::Domain);
                if part.is_empty() {
                    break;
                }
            }
            if !part.is_empty() {
                parts.push(part);
            }
        }
        parts
    }

    fn cell(&self, i: usize, w: &[f64], z: &[Vec3], lift: &PowerLift, facets: bool) -> CellResult {
        let parts = self.cell_geometry(i, lift);
        let k = &self.k;
        let det = k.det_dphi();
        let kk = self.fs.scale;
        let gp = self.fs.exponent;
        let aff = affine_unchecked(&z[i], k);
        let wi = w[i];
        let t = |p: &Vec3| wi - aff.eval(p);
        let mut out = CellIntegrals::default();
        let mut fm = FacetMap::default();
        let rate_scale = |j: usize| det / (2.0 * (lift.y_hat[j] - lift.y_hat[i]).norm());
        let mut acc = [0.0; 6];
        for part in &parts {
            out.volume += det * part.volume();
            if facets {
                for (f, face) in part.faces.iter().enumerate() {
                    if let FaceLabel::Bisector(j) = face.label {
                        if j > i {
                            fm.add(i, j, 0.0, rate_scale(j) * part.face_area(f));
                        }
                    }
                }
            }
            let pos = part.clip(aff.linear, wi - aff.offset, FaceLabel::Positivity);
            if pos.is_empty() {
                continue;
            }
            let scale = pos.vertices.iter().fold(0.0f64, |m, v| m.max(aff.linear.norm() * v.norm()));
            let tol = 1e-11 * (scale + wi.abs() + aff.offset.abs());
            let k2 = *k;
            self.volume_rules.volume(
                &pos,
                t,
                tol,
                |p, t| {
                    let x = phi(p, &k2);
                    [t, t * t, 1.0, t * x.x, t * x.y, t * x.z]
                },
                &mut acc,
            );
            if facets {
                for (f, face) in pos.faces.iter().enumerate() {
                    if let FaceLabel::Bisector(j) = face.label {
                        if j > i {
                            let mut a = [0.0];
                            self.face_rules.face(&pos, f, t, tol, |_, _| [1.0], &mut a);
                            fm.add(i, j, rate_scale(j) * kk * a[0], 0.0);
                        }
                    }
                }
            }
        }
        out.mass = det * kk * acc[0];
        out.fstar = det * kk / gp * acc[1];
        out.fstar2 = det * (gp - 1.0) * kk * acc[2];
        out.moment = det * kk * Vec3::new(acc[3], acc[4], acc[5]);
        CellResult { parts, integrals: out, facets: fm }
    }

    fn run(&self, w: &[f64], z: &[Vec3], facets: bool, keep_cells: bool) -> (Vec<Vec<ConvexPolytope>>, Evaluation) {
        let lift = power_lift_raw(w, z, &self.k);
        let results: Vec<CellResult> = (0..z.len())
            .into_par_iter()
            .map(|i| {
                let mut r = self.cell(i, w, z, &lift, facets);
                if !keep_cells {
                    r.parts.clear();
                }
                r
            })
            .collect();
        let mut cells = Vec::with_capacity(z.len());
        let mut integrals = Vec::with_capacity(z.len());
        let mut fm = FacetMap::default();
        for r in results {
            cells.push(r.parts);
            integrals.push(r.integrals);
            fm = fm.merge(r.facets);
        }
        (cells, Evaluation { cells: integrals, facets: fm.into_terms() })
    }

    pub fn evaluate(&self, w: &[f64], z: &[Vec3], facets: bool) -> Evaluation {
        self.run(w, z, facets, false).1
    }

    pub fn evaluate_with_cells(&self, w: &[f64], z: &[Vec3]) -> (Vec<Vec<ConvexPolytope>>, Evaluation) {
        self.run(w, z, true, true)
    }
}
