//! The dual functional `G(w, z) = sum m_i w_i - sum int_{L_i} f*(w_i - c(x, z_i)) dx`,
//! its derivatives, and the damped Newton solvers for the optimal weights.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cost::{cost_unchecked, phi, phi_2d, phi_inverse, power_lift_raw, FStar, Vec2};
use crate::error::{Error, Result};
use crate::model::{require_well_prepared, PhysicalConstants, SeedEnsemble, Vec3};
use crate::tessellation::{Backend, Evaluation, FacetTerm, PlanarBackend, PlanarCells};

/// Outcome of a dual solve.
#[derive(Clone, Debug, Serialize)]
pub struct DualReport {
    pub w_star: Vec<f64>,
    pub g_value: f64,
    /// `m_i - mass_i` at `w_star`.
    pub mass_residual: Vec<f64>,
    pub iterations: usize,
    pub backend: String,
    /// `|E - G|` at `w_star`.
    pub gap: f64,
    #[serde(skip)]
    pub evaluation: Evaluation,
}

impl DualReport {
    pub fn residual_norm(&self) -> f64 {
        self.mass_residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    /// Tighter default when every integrand is piecewise polynomial.
    pub fn for_constants(k: &PhysicalConstants) -> Self {
        Self { tol: if k.is_quadratic() { 1e-10 } else { 1e-8 }, max_iter: 100 }
    }
}

/// Transport cost, internal energy and their sum at given weights, with the dual value.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyReport {
    pub transport: f64,
    pub internal: f64,
    pub total: f64,
    pub dual: f64,
    pub gap: f64,
}

pub fn g_from(ev: &Evaluation, w: &[f64], m: &[f64]) -> f64 {
    let linear: f64 = m.iter().zip(w).map(|(a, b)| a * b).sum();
    linear - ev.cells.iter().map(|c| c.fstar).sum::<f64>()
}

pub fn eval_g(backend: &Backend, e: &SeedEnsemble, w: &[f64]) -> f64 {
    g_from(&backend.evaluate(w, e.positions(), false), w, e.masses())
}

/// `m_i - mass_i`.
pub fn grad_w_g(backend: &Backend, e: &SeedEnsemble, w: &[f64]) -> Vec<f64> {
    residual(&backend.evaluate(w, e.positions(), false), e.masses())
}

fn residual(ev: &Evaluation, m: &[f64]) -> Vec<f64> {
    m.iter().zip(&ev.cells).map(|(mi, c)| mi - c.mass).collect()
}

/// Hessian from cell and facet terms. Off-diagonals are the facet integrals,
/// each row sums to `-int (f*)''`.
pub fn hessian_from(ev: &Evaluation) -> DMatrix<f64> {
    let n = ev.cells.len();
    let mut h = DMatrix::zeros(n, n);
    for FacetTerm { i, j, hessian, .. } in &ev.facets {
        h[(*i, *j)] = *hessian;
        h[(*j, *i)] = *hessian;
        h[(*i, *i)] -= hessian;
        h[(*j, *j)] -= hessian;
    }
    for (i, c) in ev.cells.iter().enumerate() {
        h[(i, i)] -= c.fstar2;
    }
    h
}

/// The Hessian in `w`, and whether every cell carries mass so that it is
/// guaranteed negative definite.
pub fn hessian_ww_g(backend: &Backend, e: &SeedEnsemble, w: &[f64]) -> (DMatrix<f64>, bool) {
    let ev = backend.evaluate(w, e.positions(), true);
    (hessian_from(&ev), ev.cells.iter().all(|c| c.mass > 0.0))
}

/// `dG/dz_i = int_{L_i} grad_y c(x, z_i) sigma dx`.
pub fn grad_z_g(backend: &Backend, e: &SeedEnsemble, w: &[f64]) -> Vec<Vec3> {
    let ev = backend.evaluate(w, e.positions(), false);
    let k = backend.constants();
    ev.cells.iter().zip(e.positions()).zip(w).map(|((c, z), wi)| c.grad_z(*wi, z, k)).collect()
}

/// `(f*)'(max_i w_i - c(x, z_i))`.
pub fn sigma_star_at(x: &Vec3, w: &[f64], z: &[Vec3], k: &PhysicalConstants) -> f64 {
    let t = z.iter().zip(w).map(|(zi, wi)| wi - cost_unchecked(x, zi, k)).fold(f64::NEG_INFINITY, f64::max);
    FStar::new(k).density(t)
}

pub fn energy_from(ev: &Evaluation, w: &[f64], m: &[f64], k: &PhysicalConstants) -> EnergyReport {
    let transport: f64 = ev.cells.iter().zip(w).map(|(c, wi)| c.transport(*wi, k)).sum();
    let internal: f64 = ev.cells.iter().map(|c| c.internal(k)).sum();
    let dual = g_from(ev, w, m);
    // E - G = sum w_i (mass_i - m_i) by the Fenchel equality; summing the
    // small residuals directly avoids cancellation between E and G.
    let gap = w.iter().zip(&ev.cells).zip(m).map(|((wi, c), mi)| wi * (c.mass - mi)).sum::<f64>().abs();
    EnergyReport { transport, internal, total: transport + internal, dual, gap }
}

pub fn energy_components(backend: &Backend, e: &SeedEnsemble, w: &[f64]) -> EnergyReport {
    let ev = backend.evaluate(w, e.positions(), false);
    energy_from(&ev, w, e.masses(), backend.constants())
}

/// Weights whose cells are the Voronoi cells, in convexifying coordinates, of
/// a shrunken copy of the lifted seeds placed at the domain centroid. Every
/// such cell has positive volume, whatever the seeds.
fn voronoi_weights(backend: &Backend, z: &[Vec3]) -> Vec<f64> {
    let d = backend.domain();
    let k = d.constants();
    let f2 = k.f_cor * k.f_cor;
    let lift = power_lift_raw(&vec![0.0; z.len()], z, k);
    let mean = lift.y_hat.iter().sum::<Vec3>() / z.len() as f64;
    let o = phi_inverse(&d.centroid, k);
    let spread = lift.y_hat.iter().map(|y| (y - mean).norm()).fold(0.0, f64::max);
    let reach = (d.p_hi - d.p_lo).amin();
    let mut s = if spread > 0.0 { 0.25 * reach / spread } else { 1.0 };
    let q = |s: f64| -> Vec<Vec3> { lift.y_hat.iter().map(|y| o + s * (y - mean)).collect() };
    for _ in 0..60 {
        if q(s).iter().all(|p| d.contains(&phi(p, k))) {
            break;
        }
        s *= 0.5;
    }
    q(s)
        .iter()
        .zip(z)
        .map(|(qi, zi)| -qi.norm_squared() / s + f2 * (zi.x * zi.x + zi.y * zi.y) / (2.0 * zi.z))
        .collect()
}

/// Shifts `w` by a common constant, which leaves the cells unchanged, until
/// every cell has at least `floor` mass. `None` if some cell is empty.
fn raise_until_massive(backend: &Backend, e: &SeedEnsemble, w: &mut [f64], floor: f64) -> Option<Evaluation> {
    let z = e.positions();
    let mut ev = backend.evaluate(w, z, false);
    if ev.cells.iter().any(|c| c.volume <= 0.0) {
        return None;
    }
    let k = backend.constants();
    let d = backend.domain();
    let mut step = z.iter().map(|zi| cost_unchecked(&d.centroid, zi, k).abs()).fold(1e-3, f64::max);
    for _ in 0..200 {
        if ev.cells.iter().all(|c| c.mass >= floor) {
            return Some(ev);
        }
        for wi in w.iter_mut() {
            *wi += step;
        }
        step *= 2.0;
        ev = backend.evaluate(w, z, false);
    }
    None
}

/// Maximises `G(., z)` by damped Newton with a mass floor of half the smallest target mass.
pub fn solve_w_star(backend: &Backend, e: &SeedEnsemble, init: Option<&[f64]>, opts: &SolverOptions) -> Result<DualReport> {
    let k = *backend.constants();
    require_well_prepared(e, &k)?;
    let (z, m) = (e.positions(), e.masses());
    let n = e.len();
    let floor = 0.5 * e.min_mass();
    let tol = opts.tol;

    let mut w: Vec<f64>;
    let mut ev: Evaluation;
    let warm = init.filter(|w0| w0.len() == n).map(|w0| {
        let mut w = w0.to_vec();
        let ev = backend.evaluate(&w, z, true);
        if ev.cells.iter().all(|c| c.mass >= floor) {
            return Some((w, ev));
        }
        raise_until_massive(backend, e, &mut w, floor).map(|_| {
            let ev = backend.evaluate(&w, z, true);
            (w, ev)
        })
    });
    match warm.flatten() {
        Some((w0, ev0)) => {
            w = w0;
            ev = ev0;
        }
        None => {
            w = voronoi_weights(backend, z);
            if raise_until_massive(backend, e, &mut w, floor).is_none() {
                return Err(Error::NotConverged { iterations: 0, residual: f64::INFINITY });
            }
            ev = backend.evaluate(&w, z, true);
        }
    }

    let mut g = g_from(&ev, &w, m);
    let mut r = residual(&ev, m);
    let mut rnorm = inf_norm(&r);
    let mut iterations = 0;
    while rnorm > tol.max(backend.mass_resolution(&ev)) {
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged { iterations, residual: rnorm });
        }
        iterations += 1;
        let h = hessian_from(&ev);
        let grad = DVector::from_column_slice(&r);
        let dir = match (-h).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let slope = grad.dot(&dir);
        let mut tau = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let wt: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, b)| a + tau * b).collect();
            let et = backend.evaluate(&wt, z, false);
            if et.cells.iter().all(|c| c.mass >= floor) {
                let gt = g_from(&et, &wt, m);
                let rt = residual(&et, m);
                let rn = inf_norm(&rt);
                let armijo = gt >= g + 1e-4 * tau * slope;
                let shrinks = rn <= (1.0 - 0.5 * tau) * rnorm;
                let ascent = gt >= g - 1e-14 * g.abs().max(1.0);
                if ascent && (armijo || shrinks) {
                    accepted = Some((wt, gt, rt, rn));
                    break;
                }
            }
            tau *= 0.5;
        }
        let Some((wt, gt, rt, rn)) = accepted else {
            return Err(Error::NotConverged { iterations, residual: rnorm });
        };
        debug!("newton {iterations}: step {tau:.3e}, residual {rn:.3e}");
        w = wt;
        g = gt;
        r = rt;
        rnorm = rn;
        ev = backend.evaluate(&w, z, true);
    }
    let gap = energy_from(&ev, &w, m, &k).gap;
    Ok(DualReport {
        w_star: w,
        g_value: g,
        mass_residual: r,
        iterations,
        backend: backend.tag().to_string(),
        gap,
        evaluation: ev,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton for the fixed-density transport dual with `w_0 = 0`.
/// `eval(w)` returns cell masses and facet rates for the density at hand.
fn transport_newton(
    n: usize,
    target: &[f64],
    mut w: Vec<f64>,
    tol: f64,
    max_iter: usize,
    eval: impl Fn(&[f64]) -> (Vec<f64>, Vec<FacetTerm>),
) -> Result<Vec<f64>> {
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let shift = w[0];
    for wi in &mut w {
        *wi -= shift;
    }
    let (mut mass, mut facets) = eval(&w);
    let floor = 0.5 * target.iter().chain(&mass).cloned().fold(f64::INFINITY, f64::min);
    if !(floor > 0.0) {
        return Err(Error::NotConverged { iterations: 0, residual: f64::INFINITY });
    }
    let res = |mass: &[f64]| -> Vec<f64> { target.iter().zip(mass).map(|(a, b)| a - b).collect() };
    let mut r = res(&mass);
    let mut rn = inf_norm(&r);
    let mut it = 0;
    while rn > tol {
        if it >= max_iter {
            return Err(Error::NotConverged { iterations: it, residual: rn });
        }
        it += 1;
        let mut h = DMatrix::zeros(n - 1, n - 1);
        for f in &facets {
            for (a, b) in [(f.i, f.j), (f.j, f.i)] {
                if a > 0 {
                    h[(a - 1, a - 1)] -= f.rate;
                    if b > 0 {
                        h[(a - 1, b - 1)] += f.rate;
                    }
                }
            }
        }
        let grad = DVector::from_column_slice(&r[1..]);
        let dir = match (-h).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => return Err(Error::NotConverged { iterations: it, residual: rn }),
        };
        let mut tau = 1.0;
        let mut done = false;
        for _ in 0..60 {
            let mut wt = w.clone();
            for a in 1..n {
                wt[a] += tau * dir[a - 1];
            }
            let (mt, ft) = eval(&wt);
            let rt = res(&mt);
            let rnt = inf_norm(&rt);
            if mt.iter().all(|&v| v >= floor) && rnt <= (1.0 - 0.5 * tau) * rn {
                w = wt;
                mass = mt;
                facets = ft;
                r = rt;
                rn = rnt;
                done = true;
                break;
            }
            tau *= 0.5;
        }
        if !done {
            return Err(Error::NotConverged { iterations: it, residual: rn });
        }
    }
    let _ = mass;
    Ok(w)
}

/// Weights whose cells carry the target masses under the normalised Lebesgue
/// measure of the domain.
pub fn solve_transport_weights(backend: &Backend, e: &SeedEnsemble, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let k = *backend.constants();
    require_well_prepared(e, &k)?;
    let z = e.positions();
    let vol = backend.domain().volume;
    let w0 = voronoi_weights(backend, z);
    transport_newton(e.len(), e.masses(), w0, tol, max_iter, |w| {
        let ev = backend.evaluate(w, z, true);
        let facets = ev.facets.iter().map(|f| FacetTerm { rate: f.rate / vol, ..*f }).collect();
        (ev.cells.iter().map(|c| c.volume / vol).collect(), facets)
    })
}

/// Two-dimensional version on a vertical slice; returns the weights and the final cells.
pub fn solve_transport_weights_2d(
    backend: &PlanarBackend,
    y: &[Vec2],
    masses: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, PlanarCells)> {
    if y.len() != masses.len() || y.is_empty() {
        return Err(Error::Config("one mass per seed".into()));
    }
    if y.iter().any(|p| p.y <= 0.0) {
        return Err(Error::Ensemble("seed heights must be positive".into()));
    }
    let d = backend.domain();
    let k = *d.constants();
    let f2 = k.f_cor * k.f_cor;
    let area = d.area;
    // Voronoi embedding as in three dimensions.
    let lift = crate::cost::power_lift_2d(&vec![0.0; y.len()], y, &k);
    let mean = lift.y_hat.iter().sum::<Vec2>() / y.len() as f64;
    let o = d.pieces.iter().filter_map(|p| p.centroid().map(|c| c * p.area())).sum::<Vec2>()
        / d.pieces.iter().map(|p| p.area()).sum::<f64>();
    let spread = lift.y_hat.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    let mut s = if spread > 0.0 { 0.25 * (d.p_hi - d.p_lo).amin() / spread } else { 1.0 };
    for _ in 0..60 {
        if lift.y_hat.iter().all(|v| d.contains_physical(&phi_2d(&(o + s * (v - mean)), &k))) {
            break;
        }
        s *= 0.5;
    }
    let w0: Vec<f64> = lift
        .y_hat
        .iter()
        .zip(y)
        .map(|(v, yi)| -(o + s * (v - mean)).norm_squared() / s + f2 * yi.x * yi.x / (2.0 * yi.y))
        .collect();
    let w = transport_newton(y.len(), masses, w0, tol, max_iter, |w| {
        let c = backend.evaluate(w, y);
        let facets = c.facets.iter().map(|f| FacetTerm { rate: f.rate / area, ..*f }).collect();
        (c.areas.iter().map(|a| a / area).collect(), facets)
    })?;
    let cells = backend.evaluate(&w, y);
    Ok((w, cells))
}

#[cfg(test)]
mod tests;
