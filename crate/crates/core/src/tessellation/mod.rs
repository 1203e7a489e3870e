//! c-Laguerre tessellations of the fluid domain and the cell integrals needed
//! by the dual solver and the dynamics.
//!
//! Three backends share one output format:
//! - [`ExactBackend`]: power cells in convexifying coordinates, clipped to a
//!   polytope domain and to the positivity region of each seed.
//! - [`ColumnBackend`]: physical boxes. Gauss points across a family of
//!   parallel lines in convexifying coordinates, exact piecewise integration
//!   along each line.
//! - [`GridBackend`]: brute-force midpoint rule on a regular grid.

mod column;
mod exact;
mod grid;
mod planar;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use column::ColumnBackend;
pub use exact::ExactBackend;
pub use grid::{GridBackend, GridOracle};
pub use planar::{PlanarBackend, PlanarCells};

use crate::cost::{assign_point, phi, FStar};
use crate::domain::{DomainSpec, PhysicalDomain};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolytope, PolytopeExport};
use crate::model::{require_well_prepared, PhysicalConstants, SeedEnsemble, SimulationConfig, Vec3, WeightVector};

/// Integrals over one Laguerre cell `L_i`, with `t = w_i - c(x, z_i)` and
/// `sigma = (f*)'(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CellIntegrals {
    /// Lebesgue volume of the cell.
    pub volume: f64,
    /// `int sigma`
    pub mass: f64,
    /// `int f*(t)`
    pub fstar: f64,
    /// `int (f*)''(t)`
    pub fstar2: f64,
    /// `int x sigma`
    pub moment: Vec3,
}

impl CellIntegrals {
    pub fn add(&mut self, o: &CellIntegrals) {
        self.volume += o.volume;
        self.mass += o.mass;
        self.fstar += o.fstar;
        self.fstar2 += o.fstar2;
        self.moment += o.moment;
    }

    /// `int c(x, z_i) sigma`, using `t (f*)'(t) = gamma' f*(t)`.
    pub fn transport(&self, w: f64, k: &PhysicalConstants) -> f64 {
        w * self.mass - k.gamma_prime() * self.fstar
    }

    /// `kappa int sigma^gamma`, using `f((f*)'(t)) = t (f*)'(t) - f*(t)`.
    pub fn internal(&self, k: &PhysicalConstants) -> f64 {
        (k.gamma_prime() - 1.0) * self.fstar
    }

    /// `int grad_y c(x, z) sigma`.
    pub fn grad_z(&self, w: f64, z: &Vec3, k: &PhysicalConstants) -> Vec3 {
        let f2 = k.f_cor * k.f_cor;
        Vec3::new(
            f2 * (z.x * self.mass - self.moment.x) / z.z,
            f2 * (z.y * self.mass - self.moment.y) / z.z,
            -self.transport(w, k) / z.z,
        )
    }

    /// Barycentre of `sigma` on the cell.
    pub fn centroid(&self) -> Option<Vec3> {
        (self.mass > 0.0).then(|| self.moment / self.mass)
    }
}

/// Terms on the common facet of cells `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FacetTerm {
    pub i: usize,
    pub j: usize,
    /// `int sigma / |grad_x c(., z_i) - grad_x c(., z_j)| dH^2`: the off-diagonal Hessian entry.
    pub hessian: f64,
    /// Same integral with `sigma = 1`: the Hessian entry of the fixed-density transport dual.
    pub rate: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub cells: Vec<CellIntegrals>,
    /// Sorted by `(i, j)`; empty unless facets were requested.
    pub facets: Vec<FacetTerm>,
}

impl Evaluation {
    pub fn masses(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.mass).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.volume).collect()
    }
}

/// Accumulates facet contributions keyed by the unordered pair.
#[derive(Default)]
pub(crate) struct FacetMap(BTreeMap<(usize, usize), (f64, f64)>);

impl FacetMap {
    pub fn add(&mut self, i: usize, j: usize, hessian: f64, rate: f64) {
        let key = if i < j { (i, j) } else { (j, i) };
        let e = self.0.entry(key).or_insert((0.0, 0.0));
        e.0 += hessian;
        e.1 += rate;
    }

    pub fn merge(mut self, other: FacetMap) -> FacetMap {
        for ((i, j), (h, r)) in other.0 {
            self.add(i, j, h, r);
        }
        self
    }

    pub fn into_terms(self) -> Vec<FacetTerm> {
        self.0
            .into_iter()
            .filter(|(_, (h, r))| *h != 0.0 || *r != 0.0)
            .map(|((i, j), (hessian, rate))| FacetTerm { i, j, hessian, rate })
            .collect()
    }
}

/// Which integration scheme the user asked for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Exact cells; physical boxes use the column scheme.
    #[default]
    Exact,
    Grid,
}

#[derive(Clone, Debug)]
pub enum Backend {
    Exact(ExactBackend),
    Column(ColumnBackend),
    Grid(GridBackend),
}

impl Backend {
    pub fn new(domain: PhysicalDomain, kind: BackendKind, cfg: &SimulationConfig) -> Result<Self> {
        Ok(match kind {
            BackendKind::Exact if domain.is_box() => Backend::Column(ColumnBackend::new(domain, None, cfg.quadrature_degree)?),
            BackendKind::Exact => Backend::Exact(ExactBackend::new(domain, cfg.quadrature_degree)?),
            BackendKind::Grid => Backend::Grid(GridBackend::new(domain, cfg.grid_resolution)?),
        })
    }

    pub fn exact(domain: PhysicalDomain) -> Result<Self> {
        Self::new(domain, BackendKind::Exact, &SimulationConfig::default())
    }

    pub fn domain(&self) -> &PhysicalDomain {
        match self {
            Backend::Exact(b) => b.domain(),
            Backend::Column(b) => b.domain(),
            Backend::Grid(b) => b.domain(),
        }
    }

    pub fn constants(&self) -> &PhysicalConstants {
        self.domain().constants()
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Backend::Exact(_) => "exact",
            Backend::Column(_) => "column",
            Backend::Grid(_) => "grid",
        }
    }

    /// Cell integrals for weights `w` and seeds `z`; facet terms only when asked.
    pub fn evaluate(&self, w: &[f64], z: &[Vec3], facets: bool) -> Evaluation {
        assert_eq!(w.len(), z.len(), "one weight per seed");
        match self {
            Backend::Exact(b) => b.evaluate(w, z, facets),
            Backend::Column(b) => b.evaluate(w, z, facets),
            Backend::Grid(b) => b.evaluate(w, z, facets),
        }
    }

    /// Smallest mass residual the scheme can resolve. Grid masses jump by
    /// whole nodes, the other schemes are smooth in `w`.
    pub fn mass_resolution(&self, ev: &Evaluation) -> f64 {
        match self {
            Backend::Grid(b) => {
                let density = ev
                    .cells
                    .iter()
                    .filter(|c| c.volume > 0.0)
                    .map(|c| c.mass / c.volume)
                    .fold(0.0, f64::max);
                10.0 * b.node_volume() * density
            }
            _ => 0.0,
        }
    }
}

/// A tessellation together with its generating data.
#[derive(Clone, Debug)]
pub struct LaguerreDiagram {
    pub constants: PhysicalConstants,
    pub weights: Vec<f64>,
    pub seeds: Vec<Vec3>,
    pub backend: &'static str,
    /// Cell of each seed in convexifying coordinates, split along domain
    /// pieces. Empty when the backend does not build polytopes.
    pub cells: Vec<Vec<ConvexPolytope>>,
    pub integrals: Vec<CellIntegrals>,
    pub facets: Vec<FacetTerm>,
    pub grid: Option<GridOracle>,
}

pub fn build_diagram(
    backend: &Backend,
    w: &WeightVector,
    ensemble: &SeedEnsemble,
) -> Result<LaguerreDiagram> {
    let k = *backend.constants();
    require_well_prepared(ensemble, &k)?;
    if w.len() != ensemble.len() {
        return Err(Error::Config(format!("{} weights for {} seeds", w.len(), ensemble.len())));
    }
    let (wv, z) = (w.as_slice(), ensemble.positions());
    let (cells, ev, grid) = match backend {
        Backend::Exact(b) => {
            let (cells, ev) = b.evaluate_with_cells(wv, z);
            (cells, ev, None)
        }
        Backend::Grid(b) => {
            let oracle = b.oracle(wv, z);
            (vec![], b.evaluate(wv, z, true), Some(oracle))
        }
        Backend::Column(b) => (vec![], b.evaluate(wv, z, true), None),
    };
    Ok(LaguerreDiagram {
        constants: k,
        weights: wv.to_vec(),
        seeds: z.to_vec(),
        backend: backend.tag(),
        cells,
        integrals: ev.cells,
        facets: ev.facets,
        grid,
    })
}

impl LaguerreDiagram {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn cell_mass(&self, i: usize) -> f64 {
        self.integrals[i].mass
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        self.integrals.iter().map(|c| c.mass).collect()
    }

    pub fn cell_moment(&self, i: usize) -> Vec3 {
        self.integrals[i].moment
    }

    pub fn cell_volume(&self, i: usize) -> f64 {
        self.integrals[i].volume
    }

    /// Off-diagonal Hessian entry for the pair; zero without a shared facet.
    pub fn facet_fstar_integral(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.facets
            .binary_search_by(|f| (f.i, f.j).cmp(&key))
            .map(|k| self.facets[k].hessian)
            .unwrap_or(0.0)
    }

    /// Pairs of seeds whose cells share a facet.
    pub fn neighbors(&self) -> Vec<(usize, usize)> {
        self.facets.iter().map(|f| (f.i, f.j)).collect()
    }

    /// The transport map `T`: index of the cell containing `x`.
    pub fn assign(&self, x: &Vec3) -> usize {
        assign_point(x, &self.weights, &self.seeds, &self.constants)
    }

    pub fn export(&self) -> DiagramExport {
        let k = self.constants;
        let cells = (0..self.len())
            .map(|i| {
                let pieces = self.cells.get(i).map(|c| c.as_slice()).unwrap_or(&[]);
                CellExport {
                    seed: self.seeds[i].into(),
                    weight: self.weights[i],
                    mass: self.integrals[i].mass,
                    volume: self.integrals[i].volume,
                    centroid: self.integrals[i].centroid().map(Into::into),
                    phi_pieces: pieces.iter().map(|p| p.export()).collect(),
                    physical_pieces: pieces.iter().map(|p| p.export_mapped(|v| phi(v, &k))).collect(),
                }
            })
            .collect();
        DiagramExport {
            backend: self.backend.to_string(),
            constants: k,
            cells,
            neighbors: self.neighbors(),
        }
    }
}

/// Geostrophic velocity and potential temperature at `x`, read off the seed of
/// the cell containing it.
pub fn recover_physical_variables(x: &Vec3, diagram: &LaguerreDiagram) -> ([f64; 2], f64) {
    let z = diagram.seeds[diagram.assign(x)];
    let f2 = diagram.constants.f_cor * diagram.constants.f_cor;
    ([-f2 * (z.y - x.y), f2 * (z.x - x.x)], z.z)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellExport {
    pub seed: [f64; 3],
    pub weight: f64,
    pub mass: f64,
    pub volume: f64,
    pub centroid: Option<[f64; 3]>,
    pub phi_pieces: Vec<PolytopeExport>,
    pub physical_pieces: Vec<PolytopeExport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramExport {
    pub backend: String,
    pub constants: PhysicalConstants,
    pub cells: Vec<CellExport>,
    pub neighbors: Vec<(usize, usize)>,
}

/// `(f*)'` helper shared by the backends.
pub(crate) fn fstar(k: &PhysicalConstants) -> FStar {
    FStar::new(k)
}

pub(crate) fn is_polytope_domain(d: &PhysicalDomain) -> bool {
    !matches!(d.spec, DomainSpec::Box { .. })
}
