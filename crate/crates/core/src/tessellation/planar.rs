use rayon::prelude::*;
use serde::Serialize;

use super::{FacetMap, FacetTerm};
use crate::cost::{power_lift_2d, PowerLift2d, Vec2};
use crate::domain::PlanarDomain;
use crate::geometry::{ConvexPolygon, FaceLabel};
use crate::model::PhysicalConstants;

/// Laguerre cells of the vertical-slice cost, as power cells of the lifted
/// seeds in convexifying coordinates.
#[derive(Clone, Debug)]
pub struct PlanarBackend {
    domain: PlanarDomain,
    k: PhysicalConstants,
}

#[derive(Clone, Debug, Default)]
pub struct PlanarCells {
    /// Cell of each seed in convexifying coordinates, split along domain pieces.
    pub cells: Vec<Vec<ConvexPolygon>>,
    /// Physical areas.
    pub areas: Vec<f64>,
    /// `rate` is `int 1 / |grad_x c(., y_i) - grad_x c(., y_j)| dH^1`; `hessian` is unused.
    pub facets: Vec<FacetTerm>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanarCellExport {
    pub seed: [f64; 2],
    pub weight: f64,
    pub area: f64,
    /// Vertex rings in physical coordinates, one per piece.
    pub physical: Vec<Vec<[f64; 2]>>,
    pub phi: Vec<Vec<[f64; 2]>>,
}

impl PlanarBackend {
    pub fn new(domain: PlanarDomain) -> Self {
        let k = *domain.constants();
        Self { domain, k }
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    fn cell(&self, i: usize, lift: &PowerLift2d) -> Vec<ConvexPolygon> {
        let d = &self.domain;
        let pad = Vec2::repeat(1e-3 * (d.p_hi - d.p_lo).amax() + 1e-9);
        let mut cell = ConvexPolygon::rectangle(d.p_lo - pad, d.p_hi + pad, FaceLabel::Bounding);
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
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for v in &cell.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let mut parts = Vec::new();
        for q in d.pieces_near(&lo, &hi) {
            let piece = &d.pieces[q];
            let m = piece.vertices.len();
            let mut part = cell.clone();
            for e in 0..m {
                let a = piece.vertices[e];
                let b = piece.vertices[(e + 1) % m];
                let n = Vec2::new(b.y - a.y, a.x - b.x);
                part = part.clip(n, n.dot(&a), FaceLabel::Domain);
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

    pub fn evaluate(&self, w: &[f64], y: &[Vec2]) -> PlanarCells {
        assert_eq!(w.len(), y.len(), "one weight per seed");
        let lift = power_lift_2d(w, y, &self.k);
        let det = self.k.det_dphi_2d();
        let per: Vec<(Vec<ConvexPolygon>, f64, FacetMap)> = (0..y.len())
            .into_par_iter()
            .map(|i| {
                let parts = self.cell(i, &lift);
                let mut fm = FacetMap::default();
                let mut area = 0.0;
                for p in &parts {
                    area += det * p.area();
                    for (e, l) in p.labels.iter().enumerate() {
                        if let FaceLabel::Bisector(j) = *l {
                            if j > i {
                                let s = det / (2.0 * (lift.y_hat[j] - lift.y_hat[i]).norm());
                                fm.add(i, j, 0.0, s * p.edge_length(e));
                            }
                        }
                    }
                }
                (parts, area, fm)
            })
            .collect();
        let mut out = PlanarCells::default();
        let mut fm = FacetMap::default();
        for (c, a, f) in per {
            out.cells.push(c);
            out.areas.push(a);
            fm = fm.merge(f);
        }
        out.facets = fm.into_terms();
        out
    }

    pub fn export(&self, w: &[f64], y: &[Vec2], cells: &PlanarCells) -> Vec<PlanarCellExport> {
        let ring = |p: &ConvexPolygon, map: &dyn Fn(&Vec2) -> Vec2| {
            p.vertices.iter().map(|v| {
                let m = map(v);
                [m.x, m.y]
            }).collect::<Vec<_>>()
        };
        (0..y.len())
            .map(|i| PlanarCellExport {
                seed: [y[i].x, y[i].y],
                weight: w[i],
                area: cells.areas[i],
                physical: cells.cells[i].iter().map(|p| ring(p, &|v| self.domain.to_physical(v))).collect(),
                phi: cells.cells[i].iter().map(|p| ring(p, &|v| *v)).collect(),
            })
            .collect()
    }
}
