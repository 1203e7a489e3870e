use rayon::prelude::*;

use super::{fstar, CellIntegrals, Evaluation, FacetMap};
use crate::cost::{cost_unchecked, FStar};
use crate::domain::PhysicalDomain;
use crate::error::{Error, Result};
use crate::model::{PhysicalConstants, Vec3};

/// Midpoint rule on cell-centred nodes of a regular grid over the physical
/// bounding box. Slow and first order, but it makes no use of the geometry
/// and serves as the reference for the other backends.
#[derive(Clone, Debug)]
pub struct GridBackend {
    domain: PhysicalDomain,
    k: PhysicalConstants,
    fs: FStar,
    dims: [usize; 3],
    spacing: Vec3,
}

/// Per-node cell assignment and density of a grid evaluation.
#[derive(Clone, Debug)]
pub struct GridOracle {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: Vec3,
    /// `None` for nodes outside the domain; x-index fastest.
    pub assignment: Vec<Option<usize>>,
    pub sigma: Vec<f64>,
}

impl GridBackend {
    pub fn new(domain: PhysicalDomain, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Config("grid spacing must be positive".into()));
        }
        let ext = domain.x_hi - domain.x_lo;
        let dims = [0, 1, 2].map(|a| ((ext[a] / h).ceil() as usize).max(1));
        let nodes = dims.iter().map(|&d| d as f64).product::<f64>();
        if nodes > 4e9 {
            return Err(Error::Config(format!("grid of {nodes:.3e} nodes is too large")));
        }
        let spacing = Vec3::new(ext.x / dims[0] as f64, ext.y / dims[1] as f64, ext.z / dims[2] as f64);
        let k = *domain.constants();
        Ok(Self { fs: fstar(&k), k, dims, spacing, domain })
    }

    pub fn domain(&self) -> &PhysicalDomain {
        &self.domain
    }

    pub fn node_volume(&self) -> f64 {
        self.spacing.product()
    }

    fn node(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.domain.x_lo
            + Vec3::new(
                (ix as f64 + 0.5) * self.spacing.x,
                (iy as f64 + 0.5) * self.spacing.y,
                (iz as f64 + 0.5) * self.spacing.z,
            )
    }

    /// Best and second-best seeds at `x` by `t_i = w_i - c(x, z_i)`.
    fn rank(&self, x: &Vec3, w: &[f64], z: &[Vec3]) -> (usize, f64, Option<(usize, f64)>) {
        let mut best = (0, f64::NEG_INFINITY);
        let mut second: Option<(usize, f64)> = None;
        for (i, (zi, wi)) in z.iter().zip(w).enumerate() {
            let t = wi - cost_unchecked(x, zi, &self.k);
            if t > best.1 {
                if best.1 > f64::NEG_INFINITY {
                    second = Some(best);
                }
                best = (i, t);
            } else if second.is_none_or(|s| t > s.1) {
                second = Some((i, t));
            }
        }
        (best.0, best.1, second)
    }

    pub fn evaluate(&self, w: &[f64], z: &[Vec3], facets: bool) -> Evaluation {
        let n = z.len();
        let dv = self.node_volume();
        let h = self.spacing.amax();
        let f2 = self.k.f_cor * self.k.f_cor;
        let [nx, ny, nz] = self.dims;
        // Per-layer partial sums, combined in layer order for reproducibility.
        let per: Vec<(Vec<CellIntegrals>, FacetMap)> = (0..nz)
            .into_par_iter()
            .map(|iz| {
                    let mut cells = vec![CellIntegrals::default(); n];
                    let mut fm = FacetMap::default();
                    for iy in 0..ny {
                        for ix in 0..nx {
                            let x = self.node(ix, iy, iz);
                            if !self.domain.contains(&x) {
                                continue;
                            }
                            let (i, t, second) = self.rank(&x, w, z);
                            let (f0, f1, f2nd) = self.fs.derivatives(t);
                            let c = &mut cells[i];
                            c.volume += dv;
                            c.mass += f1 * dv;
                            c.fstar += f0 * dv;
                            c.fstar2 += f2nd * dv;
                            c.moment += x * (f1 * dv);
                            let Some((j, tj)) = second.filter(|_| facets) else {
                                continue;
                            };
                            // Smear the facet over a band of half-width h on each side.
                            let (zi, zj) = (z[i], z[j]);
                            let gi = Vec3::new(f2 * (x.x - zi.x) / zi.z, f2 * (x.y - zi.y) / zi.z, self.k.g / zi.z);
                            let gj = Vec3::new(f2 * (x.x - zj.x) / zj.z, f2 * (x.y - zj.y) / zj.z, self.k.g / zj.z);
                            let g = (gi - gj).norm();
                            if g > 0.0 && t - tj < h * g {
                                let r = dv / (2.0 * h * g);
                                fm.add(i, j, r * f1, r);
                            }
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

    pub fn oracle(&self, w: &[f64], z: &[Vec3]) -> GridOracle {
        let [nx, ny, nz] = self.dims;
        let per: Vec<(Vec<Option<usize>>, Vec<f64>)> = (0..nz)
            .into_par_iter()
            .map(|iz| {
                let mut a = Vec::with_capacity(nx * ny);
                let mut s = Vec::with_capacity(nx * ny);
                for iy in 0..ny {
                    for ix in 0..nx {
                        let x = self.node(ix, iy, iz);
                        if self.domain.contains(&x) {
                            let (i, t, _) = self.rank(&x, w, z);
                            a.push(Some(i));
                            s.push(self.fs.density(t));
                        } else {
                            a.push(None);
                            s.push(0.0);
                        }
                    }
                }
                (a, s)
            })
            .collect();
        let (mut assignment, mut sigma) = (Vec::new(), Vec::new());
        for (a, s) in per {
            assignment.extend(a);
            sigma.extend(s);
        }
        GridOracle { dims: self.dims, origin: self.node(0, 0, 0), spacing: self.spacing, assignment, sigma }
    }
}
