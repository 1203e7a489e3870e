//! Python bindings for `sgflow`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sgflow::analytic;
use sgflow::domain::{DomainSpec, PhysicalDomain};
use sgflow::dual::{self, SolverOptions};
use sgflow::dynamics;
use sgflow::measures::{self, QuantizeOptions};
use sgflow::model::{self, SimulationConfig, Vec3};
use sgflow::tessellation::{self, BackendKind};

fn err(e: sgflow::Error) -> PyErr {
    match e {
        sgflow::Error::NotConverged { .. } | sgflow::Error::SimulationAborted { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_vec3(p: &[[f64; 3]]) -> Vec<Vec3> {
    p.iter().map(|v| Vec3::from(*v)).collect()
}

fn from_vec3(p: &[Vec3]) -> Vec<[f64; 3]> {
    p.iter().map(|v| [v.x, v.y, v.z]).collect()
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct PhysicalConstants {
    inner: model::PhysicalConstants,
}

#[pymethods]
impl PhysicalConstants {
    #[new]
    #[pyo3(signature = (f_cor=1.0, g=1.0, gamma=2.0, kappa=0.5, delta=0.01))]
    fn new(f_cor: f64, g: f64, gamma: f64, kappa: f64, delta: f64) -> PyResult<Self> {
        Ok(Self { inner: model::PhysicalConstants::new(f_cor, g, gamma, kappa, delta).map_err(err)? })
    }

    #[getter]
    fn f_cor(&self) -> f64 {
        self.inner.f_cor
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    fn __repr__(&self) -> String {
        let k = &self.inner;
        format!("PhysicalConstants(f_cor={}, g={}, gamma={}, kappa={}, delta={})", k.f_cor, k.g, k.gamma, k.kappa, k.delta)
    }
}

#[pyclass(frozen)]
struct Domain {
    inner: PhysicalDomain,
}

#[pymethods]
impl Domain {
    /// Axis-aligned physical box.
    #[staticmethod]
    #[pyo3(name = "box")]
    fn box_(lo: [f64; 3], hi: [f64; 3], constants: &PhysicalConstants) -> PyResult<Self> {
        Ok(Self { inner: PhysicalDomain::new(DomainSpec::Box { lo, hi }, &constants.inner).map_err(err)? })
    }

    /// `[-a, a] x [-b, b] x [0, h]`.
    #[staticmethod]
    fn centred_box(a: f64, b: f64, h: f64, constants: &PhysicalConstants) -> PyResult<Self> {
        Ok(Self { inner: PhysicalDomain::centred_box(a, b, h, &constants.inner).map_err(err)? })
    }

    /// Tetrahedron given by its vertices in convexifying coordinates.
    #[staticmethod]
    fn phi_simplex(vertices: [[f64; 3]; 4], constants: &PhysicalConstants) -> PyResult<Self> {
        Ok(Self { inner: PhysicalDomain::new(DomainSpec::PhiSimplex { vertices }, &constants.inner).map_err(err)? })
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume
    }

    #[getter]
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let (lo, hi) = (self.inner.x_lo, self.inner.x_hi);
        ([lo.x, lo.y, lo.z], [hi.x, hi.y, hi.z])
    }

    fn contains(&self, x: [f64; 3]) -> bool {
        self.inner.contains(&Vec3::from(x))
    }
}

#[pyclass(frozen)]
struct Ensemble {
    inner: model::SeedEnsemble,
}

#[pymethods]
impl Ensemble {
    /// Masses default to uniform and are renormalised when they nearly sum to one.
    #[new]
    #[pyo3(signature = (positions, masses=None))]
    fn new(positions: Vec<[f64; 3]>, masses: Option<Vec<f64>>) -> PyResult<Self> {
        let n = positions.len();
        let m = masses.unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n]);
        Ok(Self { inner: model::SeedEnsemble::new(to_vec3(&positions), m).map_err(err)? })
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        from_vec3(self.inner.positions())
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(frozen)]
struct Backend {
    inner: tessellation::Backend,
}

#[pymethods]
impl Backend {
    /// `kind` is `"exact"` or `"grid"`; `resolution` is the grid spacing.
    #[new]
    #[pyo3(signature = (domain, kind="exact", resolution=0.01))]
    fn new(domain: &Domain, kind: &str, resolution: f64) -> PyResult<Self> {
        let kind = match kind {
            "exact" => BackendKind::Exact,
            "grid" => BackendKind::Grid,
            other => return Err(PyValueError::new_err(format!("unknown backend {other:?}"))),
        };
        let cfg = SimulationConfig { grid_resolution: resolution, ..Default::default() };
        Ok(Self { inner: tessellation::Backend::new(domain.inner.clone(), kind, &cfg).map_err(err)? })
    }

    #[getter]
    fn tag(&self) -> &'static str {
        self.inner.tag()
    }

    /// Cell masses, volumes and centroids at weights `w`.
    fn cells<'py>(&self, py: Python<'py>, w: Vec<f64>, ensemble: &Ensemble) -> PyResult<Bound<'py, PyDict>> {
        if w.len() != ensemble.inner.len() {
            return Err(PyValueError::new_err("one weight per seed"));
        }
        let ev = py.detach(|| self.inner.evaluate(&w, ensemble.inner.positions(), false));
        let d = PyDict::new(py);
        d.set_item("mass", ev.masses())?;
        d.set_item("volume", ev.volumes())?;
        let c: Vec<Option<[f64; 3]>> = ev.cells.iter().map(|c| c.centroid().map(|v| [v.x, v.y, v.z])).collect();
        d.set_item("centroid", c)?;
        Ok(d)
    }
}

/// Maximises the dual functional; returns `w`, `G`, `residual`, `iters` and `gap`.
#[pyfunction]
#[pyo3(signature = (backend, ensemble, init=None, tol=None, max_iter=100))]
fn solve_dual<'py>(
    py: Python<'py>,
    backend: &Backend,
    ensemble: &Ensemble,
    init: Option<Vec<f64>>,
    tol: Option<f64>,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut opts = SolverOptions::for_constants(backend.inner.constants());
    opts.max_iter = max_iter;
    if let Some(t) = tol {
        opts.tol = t;
    }
    let rep = py.detach(|| dual::solve_w_star(&backend.inner, &ensemble.inner, init.as_deref(), &opts)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("w", rep.w_star)?;
    d.set_item("G", rep.g_value)?;
    d.set_item("residual", rep.mass_residual)?;
    d.set_item("iters", rep.iterations)?;
    d.set_item("gap", rep.gap)?;
    Ok(d)
}

/// Integrates the seed dynamics; returns the recorded trajectory and its
/// conservation diagnostics.
#[pyfunction]
#[pyo3(signature = (backend, ensemble, tau, dt, newton_tol=1e-10, record_stride=1))]
fn simulate<'py>(
    py: Python<'py>,
    backend: &Backend,
    ensemble: &Ensemble,
    tau: f64,
    dt: f64,
    newton_tol: f64,
    record_stride: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimulationConfig { tau, dt, newton_tol, record_stride, ..Default::default() };
    cfg.validate().map_err(err)?;
    let rec = py.detach(|| dynamics::simulate(&cfg, &ensemble.inner, &backend.inner)).map_err(|f| err(f.error))?;
    let rep = dynamics::conservation_report(&rec);
    let d = PyDict::new(py);
    d.set_item("times", rec.times.clone())?;
    d.set_item("positions", rec.positions.iter().map(|z| from_vec3(z)).collect::<Vec<_>>())?;
    d.set_item("centroids", rec.centroids.iter().map(|z| from_vec3(z)).collect::<Vec<_>>())?;
    d.set_item("energy", rec.energy.clone())?;
    d.set_item("newton_iters", rec.newton_iters.clone())?;
    d.set_item("energy_drift", rep.energy_drift)?;
    d.set_item("z3_drift", rep.z3_drift)?;
    d.set_item("csv", rec.to_csv())?;
    Ok(d)
}

/// Exact W1 distance and the number of nonzero coupling entries.
#[pyfunction]
fn w1(py: Python<'_>, a: &Ensemble, b: &Ensemble) -> PyResult<(f64, usize)> {
    let (d, c) = py.detach(|| measures::w1_distance(&a.inner, &b.inner)).map_err(err)?;
    Ok((d, c.nnz()))
}

/// Bins weighted sample points into about `n` cells.
#[pyfunction]
#[pyo3(signature = (points, weights, n, eta=None))]
fn quantize_samples(points: Vec<[f64; 3]>, weights: Vec<f64>, n: usize, eta: Option<f64>) -> PyResult<Ensemble> {
    let opts = QuantizeOptions { eta, ..QuantizeOptions::new(n) };
    Ok(Ensemble { inner: measures::quantize_samples(&to_vec3(&points), &weights, &opts).map_err(err)? })
}

/// Quantises the resting state of a box domain.
#[pyfunction]
fn quantize_steady(domain: &Domain, n: usize) -> PyResult<Ensemble> {
    let s = analytic::steady_state(&domain.inner).map_err(err)?;
    let e = measures::quantize_density(s.lo, s.hi, |x| s.density(x), &QuantizeOptions::new(n)).map_err(err)?;
    Ok(Ensemble { inner: e })
}

/// Level `ell*` of the resting state.
#[pyfunction]
fn steady_state_level(domain: &Domain) -> PyResult<f64> {
    Ok(analytic::steady_state(&domain.inner).map_err(err)?.ell_star)
}

/// Elliptic orbit of a single seed in a centred box: parameters and positions at `times`.
#[pyfunction]
fn ellipse_orbit<'py>(py: Python<'py>, domain: &Domain, z_bar: [f64; 3], times: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = analytic::ellipse_reference(&domain.inner, Vec3::from(z_bar)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("A", r.params.a_coef)?;
    d.set_item("B", r.params.b_coef)?;
    d.set_item("omega", r.params.omega)?;
    d.set_item("period", r.params.period)?;
    let pos: Vec<Vec3> = times.iter().map(|t| r.position(*t)).collect();
    d.set_item("positions", from_vec3(&pos))?;
    Ok(d)
}

#[pymodule]
fn sgflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PhysicalConstants>()?;
    m.add_class::<Domain>()?;
    m.add_class::<Ensemble>()?;
    m.add_class::<Backend>()?;
    m.add_function(wrap_pyfunction!(solve_dual, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(w1, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_samples, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_steady, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_level, m)?)?;
    m.add_function(wrap_pyfunction!(ellipse_orbit, m)?)?;
    Ok(())
}
