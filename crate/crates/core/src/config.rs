//! JSON run configurations for the command-line tool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::Vec2;
use crate::domain::{DomainSpec, PlanarDomainSpec};
use crate::error::{Error, Result};
use crate::model::{PhysicalConstants, SeedEnsemble, SimulationConfig, Vec3};

/// One file drives every command; each command reads the sections it needs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub constants: Option<PhysicalConstants>,
    pub domain: Option<DomainSpec>,
    pub planar_domain: Option<PlanarDomainSpec>,
    pub ensemble: Option<EnsembleSpec>,
    pub planar_seeds: Option<PlanarSeedSpec>,
    /// Starting weights for `solve-dual`, fixed weights for `tessellate`.
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    pub quantize: Option<QuantizeSpec>,
    pub ellipse: Option<EllipseSpec>,
    pub steady: Option<SteadySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSpec {
    /// Masses default to uniform.
    Explicit { positions: Vec<[f64; 3]>, masses: Option<Vec<f64>> },
    /// `n` seeds uniform in the box, one per horizontal plane, equal masses.
    Random { n: usize, lo: [f64; 3], hi: [f64; 3] },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanarSeedSpec {
    Explicit { positions: Vec<[f64; 2]>, masses: Option<Vec<f64>> },
    Random { n: usize, lo: [f64; 2], hi: [f64; 2] },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Constant on the box.
    Uniform,
    /// The resting state of the domain.
    Steady,
    /// `floor + exp(-|x - centre|^2 / (2 width^2))`.
    Gaussian { centre: [f64; 3], width: f64, floor: f64 },
}

impl DensitySpec {
    pub fn evaluate(&self, x: &Vec3) -> f64 {
        match self {
            DensitySpec::Uniform | DensitySpec::Steady => 1.0,
            DensitySpec::Gaussian { centre, width, floor } => {
                floor + (-(x - Vec3::from(*centre)).norm_squared() / (2.0 * width * width)).exp()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeSpec {
    pub n: usize,
    pub density: DensitySpec,
    /// Support box; defaults to the bounding box of the domain.
    pub lo: Option<[f64; 3]>,
    pub hi: Option<[f64; 3]>,
    /// Vertical jitter; defaults to `1e-7` of the box height.
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSpec {
    /// Half-widths and height of the box `[-a, a] x [-b, b] x [0, h]`.
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub z_bar: [f64; 3],
    /// Number of periods to integrate.
    #[serde(default = "one")]
    pub periods: f64,
    #[serde(default = "position_tol")]
    pub position_tol: f64,
}

fn one() -> f64 {
    1.0
}

fn position_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySpec {
    pub sizes: Vec<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.simulation.validate()?;
        if let Some(k) = &cfg.constants {
            k.validate()?;
        }
        Ok(cfg)
    }

    pub fn constants(&self) -> PhysicalConstants {
        self.constants.unwrap_or_else(PhysicalConstants::quadratic_unit)
    }

    pub fn domain(&self) -> Result<&DomainSpec> {
        self.domain.as_ref().ok_or_else(|| missing("domain"))
    }

    pub fn ensemble(&self, seed: u64) -> Result<SeedEnsemble> {
        match self.ensemble.as_ref().ok_or_else(|| missing("ensemble"))? {
            EnsembleSpec::Explicit { positions, masses } => {
                let m = masses.clone().unwrap_or_else(|| vec![1.0 / positions.len().max(1) as f64; positions.len()]);
                SeedEnsemble::from_arrays(positions, &m)
            }
            EnsembleSpec::Random { n, lo, hi } => random_ensemble(*n, Vec3::from(*lo), Vec3::from(*hi), seed),
        }
    }

    pub fn planar_seeds(&self, seed: u64) -> Result<(Vec<Vec2>, Vec<f64>)> {
        let (y, m) = match self.planar_seeds.as_ref().ok_or_else(|| missing("planar_seeds"))? {
            PlanarSeedSpec::Explicit { positions, masses } => {
                let y: Vec<Vec2> = positions.iter().map(|p| Vec2::new(p[0], p[1])).collect();
                (y, masses.clone())
            }
            PlanarSeedSpec::Random { n, lo, hi } => {
                check_box(&lo[..], &hi[..])?;
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let y = (0..*n).map(|_| Vec2::new(r.gen_range(lo[0]..hi[0]), r.gen_range(lo[1]..hi[1]))).collect();
                (y, None)
            }
        };
        let n = y.len();
        if n == 0 {
            return Err(Error::Ensemble("at least one seed".into()));
        }
        Ok((y, m.unwrap_or_else(|| vec![1.0 / n as f64; n])))
    }
}

fn missing(section: &str) -> Error {
    Error::Config(format!("this command needs a `{section}` section"))
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.iter().zip(hi).all(|(a, b)| a < b) {
        Ok(())
    } else {
        Err(Error::Config("random seeds need lo < hi on every axis".into()))
    }
}

/// Seeds uniform in a box, with heights stratified into `n` layers so that no
/// two seeds share a horizontal plane.
pub fn random_ensemble(n: usize, lo: Vec3, hi: Vec3, seed: u64) -> Result<SeedEnsemble> {
    check_box(lo.as_slice(), hi.as_slice())?;
    if n == 0 {
        return Err(Error::Ensemble("at least one seed".into()));
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let z = (0..n)
        .map(|i| {
            let layer = (i as f64 + r.gen_range(0.1..0.9)) / n as f64;
            Vec3::new(r.gen_range(lo.x..hi.x), r.gen_range(lo.y..hi.y), lo.z + (hi.z - lo.z) * layer)
        })
        .collect();
    SeedEnsemble::uniform(z)
}

/// Ensemble file format shared by `quantize` output and `w1` input.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub positions: Vec<[f64; 3]>,
    pub masses: Vec<f64>,
}

impl EnsembleFile {
    pub fn from_ensemble(e: &SeedEnsemble) -> Self {
        Self { positions: e.positions().iter().map(|z| [z.x, z.y, z.z]).collect(), masses: e.masses().to_vec() }
    }

    pub fn to_ensemble(&self) -> Result<SeedEnsemble> {
        SeedEnsemble::from_arrays(&self.positions, &self.masses)
    }
}
