//! Domain types shared by every solver stage: physical constants, discrete
//! potential-vorticity measures, weight vectors and run configuration.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on `|sum(m) - 1|` before masses are renormalised.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// Seeds whose third components differ by less than this are not treated as
/// lying in distinct horizontal planes.
pub const PLANE_SEPARATION_TOL: f64 = 1e-9;

/// Physical constants of the compressible model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub f_cor: f64,
    pub g: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub delta: f64,
}

impl PhysicalConstants {
    pub fn new(f_cor: f64, g: f64, gamma: f64, kappa: f64, delta: f64) -> Result<Self> {
        let c = Self { f_cor, g, gamma, kappa, delta };
        c.validate()?;
        Ok(c)
    }

    /// `f = g = 1`, `gamma = 2`, `kappa = 1/2`: the quadratic case with closed-form
    /// single-seed solutions.
    pub fn quadratic_unit() -> Self {
        Self { f_cor: 1.0, g: 1.0, gamma: 2.0, kappa: 0.5, delta: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Constants(msg.to_string()));
        if !(self.f_cor.is_finite() && self.f_cor > 0.0) {
            return bad("f_cor must be positive");
        }
        if !(self.g.is_finite() && self.g > 0.0) {
            return bad("g must be positive");
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.gamma > 1.0 && self.gamma <= 2.0) {
            return bad("gamma must lie in (1, 2]");
        }
        Ok(())
    }

    /// True for the boundary case `gamma = 2`, which lies outside the physical
    /// range but is admitted for the closed-form single-seed solution.
    pub fn is_quadratic(&self) -> bool {
        self.gamma == 2.0
    }

    /// Conjugate exponent: `1/gamma + 1/gamma' = 1`.
    pub fn gamma_prime(&self) -> f64 {
        self.gamma / (self.gamma - 1.0)
    }

    /// The rotation generator `J = f [[0,-1,0],[1,0,0],[0,0,0]]`.
    pub fn j_matrix(&self) -> Matrix3<f64> {
        let f = self.f_cor;
        Matrix3::new(0.0, -f, 0.0, f, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    #[inline]
    pub fn apply_j(&self, v: &Vec3) -> Vec3 {
        Vec3::new(-self.f_cor * v.y, self.f_cor * v.x, 0.0)
    }

    /// Jacobian determinant of the coordinate change `x = Phi(p)`.
    pub fn det_dphi(&self) -> f64 {
        self.f_cor.powi(-4) / self.g
    }

    /// Jacobian determinant of the planar coordinate change.
    pub fn det_dphi_2d(&self) -> f64 {
        self.f_cor.powi(-2) / self.g
    }

    pub fn theta_range(&self) -> (f64, f64) {
        (self.delta, 1.0 / self.delta)
    }
}

/// A discrete probability measure `sum_i m_i delta_{z_i}` in geostrophic space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEnsemble {
    z: Vec<Vec3>,
    m: Vec<f64>,
}

impl SeedEnsemble {
    /// Builds an ensemble. Masses off the simplex by more than [`MASS_SUM_TOL`]
    /// are renormalised with a warning.
    pub fn new(z: Vec<Vec3>, m: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Ensemble("ensemble must contain at least one seed".into()));
        }
        if z.len() != m.len() {
            return Err(Error::Ensemble(format!(
                "{} seeds but {} masses",
                z.len(),
                m.len()
            )));
        }
        if let Some(bad) = z.iter().find(|p| !(p.iter().all(|c| c.is_finite()) && p.z > 0.0)) {
            return Err(Error::Ensemble(format!(
                "seed {:?} must be finite with positive third component",
                bad.as_slice()
            )));
        }
        if m.iter().any(|&mi| !(mi.is_finite() && mi > 0.0)) {
            return Err(Error::Ensemble("masses must be strictly positive".into()));
        }
        let total: f64 = m.iter().sum();
        let m = if (total - 1.0).abs() > MASS_SUM_TOL {
            log::warn!("ensemble masses sum to {total}; renormalising");
            m.iter().map(|mi| mi / total).collect()
        } else {
            m
        };
        Ok(Self { z, m })
    }

    /// Equal masses `1/N`.
    pub fn uniform(z: Vec<Vec3>) -> Result<Self> {
        let n = z.len().max(1);
        Self::new(z, vec![1.0 / n as f64; n])
    }

    pub fn from_arrays(z: &[[f64; 3]], m: &[f64]) -> Result<Self> {
        Self::new(z.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(), m.to_vec())
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.z
    }

    pub fn masses(&self) -> &[f64] {
        &self.m
    }

    pub fn seed(&self, i: usize) -> Vec3 {
        self.z[i]
    }

    /// Same masses, new positions.
    pub fn with_positions(&self, z: Vec<Vec3>) -> Result<Self> {
        if z.len() != self.m.len() {
            return Err(Error::Ensemble("position count changed".into()));
        }
        Ok(Self { z, m: self.m.clone() })
    }

    pub fn min_mass(&self) -> f64 {
        self.m.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Diagnostics produced by [`validate_ensemble`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleDiagnostics {
    pub n: usize,
    pub mass_sum_deviation: f64,
    /// `+inf` when `N = 1`.
    pub min_pairwise_distance: f64,
    /// Minimum `|z3_i - z3_j|` over pairs, `+inf` when `N = 1`.
    pub min_vertical_gap: f64,
    pub in_geostrophic_domain: bool,
    pub distinct: bool,
    pub well_prepared: bool,
}

pub fn validate_ensemble(ensemble: &SeedEnsemble, constants: &PhysicalConstants) -> EnsembleDiagnostics {
    let z = ensemble.positions();
    let n = z.len();
    let mut min_dist = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_dist = min_dist.min((z[i] - z[j]).norm());
            min_gap = min_gap.min((z[i].z - z[j].z).abs());
        }
    }
    let (lo, hi) = constants.theta_range();
    let in_domain = z.iter().all(|p| p.z > lo && p.z < hi);
    let distinct = min_dist > 0.0;
    EnsembleDiagnostics {
        n,
        mass_sum_deviation: (ensemble.masses().iter().sum::<f64>() - 1.0).abs(),
        min_pairwise_distance: min_dist,
        min_vertical_gap: min_gap,
        in_geostrophic_domain: in_domain,
        distinct,
        well_prepared: distinct && min_gap >= PLANE_SEPARATION_TOL,
    }
}

/// Rejects ensembles that are not well prepared or leave `R^2 x (delta, 1/delta)`.
pub fn require_well_prepared(ensemble: &SeedEnsemble, constants: &PhysicalConstants) -> Result<()> {
    let d = validate_ensemble(ensemble, constants);
    if !d.in_geostrophic_domain {
        return Err(Error::Ensemble(format!(
            "seeds must have third component in ({}, {})",
            constants.delta,
            1.0 / constants.delta
        )));
    }
    if !d.well_prepared {
        return Err(Error::Ensemble(format!(
            "seeds are not in distinct horizontal planes (min gap {:.3e})",
            d.min_vertical_gap
        )));
    }
    Ok(())
}

/// Kantorovich weights paired with a seed ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("weights must be finite".into()));
        }
        Ok(Self(w))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `w + s * 1`.
    pub fn shifted(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x + s).collect())
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(w: Vec<f64>) -> Self {
        Self(w)
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Time integration and solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub tau: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub quadrature_degree: usize,
    /// Target node spacing of the grid backend, and the number of column
    /// subdivisions per axis for physical boxes.
    pub grid_resolution: f64,
    pub record_stride: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            dt: 1e-3,
            newton_tol: 1e-10,
            newton_max_iter: 100,
            quadrature_degree: 4,
            grid_resolution: 0.01,
            record_stride: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if !(self.grid_resolution > 0.0) {
            return bad("grid_resolution must be positive");
        }
        if self.newton_max_iter == 0 || self.record_stride == 0 {
            return bad("newton_max_iter and record_stride must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::new(1.0, 1.0, 1.4, 1.0, 0.1).unwrap()
    }

    #[test]
    fn two_seeds_in_distinct_planes_are_well_prepared() {
        let e = SeedEnsemble::from_arrays(&[[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]], &[0.5, 0.5]).unwrap();
        let d = validate_ensemble(&e, &consts());
        assert!(d.well_prepared);
        assert_eq!(d.min_vertical_gap, 1.0);
        assert_eq!(d.min_pairwise_distance, 1.0);
    }

    #[test]
    fn equal_heights_are_distinct_but_not_well_prepared() {
        let e = SeedEnsemble::from_arrays(&[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]], &[0.5, 0.5]).unwrap();
        let d = validate_ensemble(&e, &consts());
        assert!(d.distinct);
        assert!(!d.well_prepared);
        assert!(require_well_prepared(&e, &consts()).is_err());
    }

    #[test]
    fn single_seed_is_vacuously_well_prepared() {
        let e = SeedEnsemble::from_arrays(&[[0.3, -0.2, 5.0]], &[1.0]).unwrap();
        let d = validate_ensemble(&e, &consts());
        assert!(d.well_prepared);
        assert!(d.min_vertical_gap.is_infinite());
    }

    #[test]
    fn tiny_vertical_gap_is_rejected() {
        let e = SeedEnsemble::from_arrays(&[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0 + 1e-10]], &[0.5, 0.5])
            .unwrap();
        assert!(!validate_ensemble(&e, &consts()).well_prepared);
    }

    #[test]
    fn masses_off_the_simplex_are_renormalised() {
        let e = SeedEnsemble::from_arrays(&[[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]], &[1.0, 3.0]).unwrap();
        assert_eq!(e.masses(), &[0.25, 0.75]);
        assert!(SeedEnsemble::from_arrays(&[[0.0, 0.0, 1.0]], &[0.0]).is_err());
        assert!(SeedEnsemble::from_arrays(&[[0.0, 0.0, -1.0]], &[1.0]).is_err());
    }

    #[test]
    fn constants_reject_out_of_range_values() {
        assert!(PhysicalConstants::new(1.0, 1.0, 2.0, 0.5, 0.1).is_ok());
        assert!(PhysicalConstants::new(1.0, 1.0, 2.1, 0.5, 0.1).is_err());
        assert!(PhysicalConstants::new(1.0, 1.0, 1.0, 0.5, 0.1).is_err());
        assert!(PhysicalConstants::new(0.0, 1.0, 1.5, 0.5, 0.1).is_err());
        assert!(PhysicalConstants::new(1.0, 1.0, 1.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn gamma_prime_is_the_conjugate_exponent() {
        let c = consts();
        assert!((1.0 / c.gamma + 1.0 / c.gamma_prime() - 1.0).abs() < 1e-15);
        assert!(c.gamma_prime() > 2.0);
        assert_eq!(PhysicalConstants::quadratic_unit().gamma_prime(), 2.0);
    }

    #[test]
    fn j_is_skew_with_zero_third_row() {
        let c = PhysicalConstants::new(1.7, 9.8, 1.4, 1.0, 0.1).unwrap();
        let j = c.j_matrix();
        assert_eq!(j.transpose(), -j);
        assert!((j.norm() / 2f64.sqrt() - 1.7).abs() < 1e-14);
        let v = Vec3::new(0.3, -1.2, 4.0);
        assert_eq!(j * v, c.apply_j(&v));
        assert_eq!(c.apply_j(&v).dot(&v), 0.0);
        assert_eq!(c.apply_j(&v).z, 0.0);
    }
}
