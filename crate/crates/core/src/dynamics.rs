//! Seed dynamics `dz_i/dt = J (z_i - C_i(z))`, integrated with RK4.

use std::fmt::Write as _;

use log::{info, warn};
use serde::Serialize;

use crate::dual::{solve_w_star, DualReport, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{require_well_prepared, PhysicalConstants, SeedEnsemble, SimulationConfig, Vec3};
use crate::tessellation::Backend;

/// Seeds closer than this are treated as collided.
pub const COLLISION_DISTANCE: f64 = 1e-8;

/// Centroids `C_i = (1 / m_i) int_{L_i} x sigma*` with the dual report they came from.
pub fn centroid_map(backend: &Backend, e: &SeedEnsemble, warm: Option<&[f64]>, opts: &SolverOptions) -> Result<(Vec<Vec3>, DualReport)> {
    let rep = solve_w_star(backend, e, warm, opts)?;
    let c = rep.evaluation.cells.iter().zip(e.masses()).map(|(c, m)| c.moment / *m).collect();
    Ok((c, rep))
}

fn apply_j(f: f64, v: &Vec3) -> Vec3 {
    Vec3::new(-f * v.y, f * v.x, 0.0)
}

/// `J (z_i - C_i)`, the right-hand side of the seed ODE.
pub fn velocity(backend: &Backend, e: &SeedEnsemble, warm: Option<&[f64]>, opts: &SolverOptions) -> Result<(Vec<Vec3>, Vec<Vec3>, DualReport)> {
    let f = backend.constants().f_cor;
    let (c, rep) = centroid_map(backend, e, warm, opts)?;
    let v = e.positions().iter().zip(&c).map(|(z, ci)| apply_j(f, &(z - ci))).collect();
    Ok((v, c, rep))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec3>>,
    pub weights: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<Vec3>>,
    pub velocities: Vec<Vec<Vec3>>,
    /// `G(w*(z(t)), z(t))`
    pub energy: Vec<f64>,
    /// Newton iterations spent on the step ending at each record (0 for the first).
    pub newton_iters: Vec<usize>,
    /// `sum_i dG/dz_i . dz_i/dt`, which vanishes for exact solutions.
    pub orthogonality: Vec<f64>,
    pub constants: PhysicalConstants,
    /// `max |x|` over the domain.
    pub radius: f64,
}

impl TrajectoryRecord {
    pub fn new(constants: PhysicalConstants, radius: f64) -> Self {
        Self {
            times: vec![],
            positions: vec![],
            weights: vec![],
            centroids: vec![],
            velocities: vec![],
            energy: vec![],
            newton_iters: vec![],
            orthogonality: vec![],
            constants,
            radius,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, e: &SeedEnsemble, v: Vec<Vec3>, c: Vec<Vec3>, rep: &DualReport, iters: usize) {
        let k_gz: f64 = rep
            .evaluation
            .cells
            .iter()
            .zip(e.positions())
            .zip(&rep.w_star)
            .zip(&v)
            .map(|(((cell, z), w), vi)| cell.grad_z(*w, z, &self.constants).dot(vi))
            .sum();
        self.times.push(t);
        self.positions.push(e.positions().to_vec());
        self.weights.push(rep.w_star.clone());
        self.centroids.push(c);
        self.velocities.push(v);
        self.energy.push(rep.g_value);
        self.newton_iters.push(iters);
        self.orthogonality.push(k_gz);
    }

    /// One row per (time, seed): `t,i,z1,z2,z3,C1,C2,C3,E,newton_iters`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,i,z1,z2,z3,C1,C2,C3,E,newton_iters\n");
        for r in 0..self.len() {
            for (i, (z, c)) in self.positions[r].iter().zip(&self.centroids[r]).enumerate() {
                let _ = writeln!(
                    s,
                    "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                    self.times[r], i, z.x, z.y, z.z, c.x, c.y, c.z, self.energy[r], self.newton_iters[r]
                );
            }
        }
        s
    }
}

/// A run that stopped early, with everything recorded before the failure.
#[derive(Debug)]
pub struct SimulationFailure {
    pub record: TrajectoryRecord,
    pub error: Error,
}

fn min_distance(z: &[Vec3]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            d = d.min((z[i] - z[j]).norm());
        }
    }
    d
}

struct Stepper<'a> {
    backend: &'a Backend,
    masses: Vec<f64>,
    opts: SolverOptions,
    sign: f64,
}

impl Stepper<'_> {
    fn rhs(&self, z: &[Vec3], warm: &mut Vec<f64>, iters: &mut usize) -> Result<(Vec<Vec3>, Vec<Vec3>, DualReport)> {
        let e = SeedEnsemble::new(z.to_vec(), self.masses.clone())?;
        let (mut v, c, rep) = velocity(self.backend, &e, Some(warm), &self.opts)?;
        if self.sign < 0.0 {
            for vi in &mut v {
                *vi = -*vi;
            }
        }
        *warm = rep.w_star.clone();
        *iters += rep.iterations;
        Ok((v, c, rep))
    }

    /// One RK4 step from `z` whose first stage `k1` is already known.
    fn step(&self, z: &[Vec3], k1: &[Vec3], dt: f64, warm: &mut Vec<f64>, iters: &mut usize) -> Result<Vec<Vec3>> {
        let add = |a: &[Vec3], b: &[Vec3], s: f64| -> Vec<Vec3> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let k2 = self.rhs(&add(z, k1, 0.5 * dt), warm, iters)?.0;
        let k3 = self.rhs(&add(z, &k2, 0.5 * dt), warm, iters)?.0;
        let k4 = self.rhs(&add(z, &k3, dt), warm, iters)?.0;
        Ok((0..z.len())
            .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }
}

pub fn simulate(cfg: &SimulationConfig, e0: &SeedEnsemble, backend: &Backend) -> std::result::Result<TrajectoryRecord, Box<SimulationFailure>> {
    simulate_signed(cfg, e0, backend, 1.0)
}

/// `sign = -1` integrates the time-reversed system.
pub(crate) fn simulate_signed(
    cfg: &SimulationConfig,
    e0: &SeedEnsemble,
    backend: &Backend,
    sign: f64,
) -> std::result::Result<TrajectoryRecord, Box<SimulationFailure>> {
    let k = *backend.constants();
    let mut rec = TrajectoryRecord::new(k, backend.domain().bounding_radius);
    let fail = |rec: TrajectoryRecord, error: Error| Box::new(SimulationFailure { record: rec, error });
    if let Err(e) = cfg.validate().and_then(|_| require_well_prepared(e0, &k)) {
        return Err(fail(rec, e));
    }
    let st = Stepper {
        backend,
        masses: e0.masses().to_vec(),
        opts: SolverOptions { tol: cfg.newton_tol, max_iter: cfg.newton_max_iter },
        sign,
    };
    let steps = (cfg.tau / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let mut z = e0.positions().to_vec();
    let mut warm: Vec<f64> = vec![];
    let mut iters = 0;
    let (mut k1, c, rep) = match st.rhs(&z, &mut warm, &mut iters) {
        Ok(r) => r,
        Err(e) => return Err(fail(rec, e)),
    };
    rec.push(0.0, &SeedEnsemble::new(z.clone(), st.masses.clone()).unwrap(), k1.clone(), c, &rep, iters);
    let mut t = 0.0;
    for n in 1..=steps {
        let dt = if n == steps { cfg.tau - t } else { cfg.dt };
        let mut step_iters = 0;
        let mut w_try = warm.clone();
        let next = match st.step(&z, &k1, dt, &mut w_try, &mut step_iters) {
            Ok(zn) => Ok(zn),
            Err(e) => {
                warn!("step at t = {t} failed ({e}); retrying with two half steps");
                let mut w_half = warm.clone();
                st.step(&z, &k1, 0.5 * dt, &mut w_half, &mut step_iters)
                    .and_then(|zh| {
                        let (kh, _, _) = st.rhs(&zh, &mut w_half, &mut step_iters)?;
                        st.step(&zh, &kh, 0.5 * dt, &mut w_half, &mut step_iters)
                    })
                    .inspect(|_| w_try = w_half)
            }
        };
        let zn = match next {
            Ok(zn) => zn,
            Err(e) => return Err(fail(rec, Error::SimulationAborted { time: t, reason: e.to_string() })),
        };
        let gap = min_distance(&zn);
        if gap < COLLISION_DISTANCE {
            let reason = format!("seeds within {gap:.3e} of each other");
            return Err(fail(rec, Error::SimulationAborted { time: t + dt, reason }));
        }
        t = if n == steps { cfg.tau } else { t + dt };
        z = zn;
        warm = w_try;
        let (kn, c, rep) = match st.rhs(&z, &mut warm, &mut step_iters) {
            Ok(r) => r,
            Err(e) => return Err(fail(rec, Error::SimulationAborted { time: t, reason: e.to_string() })),
        };
        k1 = kn;
        if n % cfg.record_stride == 0 || n == steps {
            let e = SeedEnsemble::new(z.clone(), st.masses.clone()).unwrap();
            rec.push(t, &e, k1.clone(), c, &rep, step_iters);
        }
        if n % 1000 == 0 {
            info!("t = {t:.4}, E = {:.12e}", rep.g_value);
        }
    }
    Ok(rec)
}

/// Diagnostics of a finished run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConservationReport {
    /// `max_t |E(t) - E(0)| / |E(0)|`
    pub energy_drift: f64,
    /// Largest excess of `|z_i(t)|` over `|z_i(0)| + f R t`; negative when the bound holds.
    pub position_bound_excess: f64,
    /// Largest excess of `|dz_i/dt|` over `f (|z_i(0)| + R (f t + 1))`.
    pub velocity_bound_excess: f64,
    /// `max_t |z_3(t) - z_3(0)|`
    pub z3_drift: f64,
    /// `max_t |sum_i dG/dz_i . dz_i/dt|`
    pub orthogonality: f64,
}

impl ConservationReport {
    pub fn apriori_holds(&self, slack: f64) -> bool {
        self.position_bound_excess <= slack && self.velocity_bound_excess <= slack
    }
}

pub fn conservation_report(rec: &TrajectoryRecord) -> ConservationReport {
    let (f, r) = (rec.constants.f_cor, rec.radius);
    let e0 = rec.energy.first().copied().unwrap_or(0.0);
    let z0 = rec.positions.first().cloned().unwrap_or_default();
    let mut out = ConservationReport {
        energy_drift: 0.0,
        position_bound_excess: f64::NEG_INFINITY,
        velocity_bound_excess: f64::NEG_INFINITY,
        z3_drift: 0.0,
        orthogonality: 0.0,
    };
    for s in 0..rec.len() {
        let t = rec.times[s];
        if e0 != 0.0 {
            out.energy_drift = out.energy_drift.max((rec.energy[s] - e0).abs() / e0.abs());
        }
        for (i, z) in rec.positions[s].iter().enumerate() {
            let n0 = z0[i].norm();
            out.position_bound_excess = out.position_bound_excess.max(z.norm() - (n0 + f * r * t));
            out.velocity_bound_excess = out.velocity_bound_excess.max(rec.velocities[s][i].norm() - f * (n0 + r * (f * t + 1.0)));
            out.z3_drift = out.z3_drift.max((z.z - z0[i].z).abs());
        }
        out.orthogonality = out.orthogonality.max(rec.orthogonality[s].abs());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, PhysicalDomain};
    use crate::tessellation::ExactBackend;
    use crate::testutil::*;

    fn box_backend(z3: f64) -> (Backend, SeedEnsemble, f64) {
        let k = PhysicalConstants::quadratic_unit();
        let d = PhysicalDomain::new(DomainSpec::Box { lo: [-1.0, -1.0, 0.0], hi: [1.0, 1.0, 1.0] }, &k).unwrap();
        let b = Backend::exact(d).unwrap();
        let e = SeedEnsemble::uniform(vec![Vec3::new(0.1, 0.0, z3)]).unwrap();
        // A = B = 1 - 4 / (3 z3)
        (b, e, 1.0 - 4.0 / (3.0 * z3))
    }

    #[test]
    fn single_seed_velocity_is_linear() {
        let (b, _, a) = box_backend(10.0);
        let e = SeedEnsemble::uniform(vec![Vec3::new(0.1, -0.05, 10.0)]).unwrap();
        let (v, c, _) = velocity(&b, &e, None, &SolverOptions::for_constants(b.constants())).unwrap();
        assert!((c[0].x - (1.0 - a) * 0.1).abs() < 1e-12);
        assert!((v[0].x - a * 0.05).abs() < 1e-12);
        assert!((v[0].y - a * 0.1).abs() < 1e-12);
        assert_eq!(v[0].z, 0.0);
    }

    #[test]
    fn centred_seed_is_stationary() {
        let k = PhysicalConstants::quadratic_unit();
        let d = PhysicalDomain::new(DomainSpec::Box { lo: [-1.0, -1.0, 0.0], hi: [1.0, 1.0, 1.0] }, &k).unwrap();
        let b = Backend::exact(d).unwrap();
        let e = SeedEnsemble::uniform(vec![Vec3::new(0.0, 0.0, 10.0)]).unwrap();
        let cfg = SimulationConfig { tau: 0.05, dt: 0.01, ..Default::default() };
        let rec = simulate(&cfg, &e, &b).unwrap();
        for z in &rec.positions {
            assert!((z[0] - Vec3::new(0.0, 0.0, 10.0)).norm() < 1e-15);
        }
        assert!(conservation_report(&rec).energy_drift < 1e-14);
    }

    #[test]
    fn reversed_run_returns_home() {
        let k = compressible();
        let d = simplex_domain(&k);
        let b = Backend::Exact(ExactBackend::new(d.clone(), 4).unwrap());
        let mut r = rng(3);
        let e = random_ensemble(&mut r, 4);
        let cfg = SimulationConfig { tau: 0.05, dt: 0.005, newton_tol: 1e-12, ..Default::default() };
        let fwd = simulate(&cfg, &e, &b).unwrap();
        let end = SeedEnsemble::new(fwd.positions.last().unwrap().clone(), e.masses().to_vec()).unwrap();
        let back = simulate_signed(&cfg, &end, &b, -1.0).unwrap();
        for (a, z) in back.positions.last().unwrap().iter().zip(e.positions()) {
            assert!((a - z).norm() < 1e-8, "{}", (a - z).norm());
        }
        let rep = conservation_report(&fwd);
        assert!(rep.z3_drift == 0.0);
        assert!(rep.apriori_holds(1e-9));
        assert!(rep.orthogonality < 1e-8);
        assert!(rep.energy_drift < 1e-8);
    }

    #[test]
    fn records_follow_stride_and_end_at_tau() {
        let (b, e, _) = box_backend(10.0);
        let cfg = SimulationConfig { tau: 0.1, dt: 0.03, record_stride: 2, ..Default::default() };
        let rec = simulate(&cfg, &e, &b).unwrap();
        assert_eq!(rec.times.len(), 3);
        assert!((rec.times[2] - 0.1).abs() < 1e-15);
        assert!(rec.times.windows(2).all(|p| p[1] > p[0]));
        let csv = rec.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("t,i,z1,z2,z3,C1,C2,C3,E,newton_iters"));
    }

    #[test]
    fn invalid_input_is_reported_with_empty_record() {
        let (b, _, _) = box_backend(10.0);
        let e = SeedEnsemble::uniform(vec![Vec3::new(0.1, 0.0, 2.0), Vec3::new(0.2, 0.0, 2.0)]).unwrap();
        let err = simulate(&SimulationConfig::default(), &e, &b).unwrap_err();
        assert!(err.record.is_empty());
    }
}
