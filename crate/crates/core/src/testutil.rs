//! Fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::cost_unchecked;
use crate::domain::{DomainSpec, PhysicalDomain};
use crate::model::{PhysicalConstants, SeedEnsemble, Vec3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn compressible() -> PhysicalConstants {
    PhysicalConstants::new(1.0, 1.0, 1.4, 1.0, 0.05).unwrap()
}

pub fn skewed() -> PhysicalConstants {
    PhysicalConstants::new(1.3, 0.7, 1.6, 0.8, 0.05).unwrap()
}

/// A tetrahedron in convexifying coordinates whose physical image sits in
/// `x_3 > 0.4` above the unit square.
pub fn simplex_domain(k: &PhysicalConstants) -> PhysicalDomain {
    let f2 = k.f_cor * k.f_cor;
    let p = |x: f64, y: f64, z: f64| [f2 * x, f2 * y, k.g * z + 0.5 * f2 * (x * x + y * y)];
    let spec = DomainSpec::PhiSimplex { vertices: [p(0.0, 0.0, 0.4), p(1.0, 0.0, 0.5), p(0.0, 1.0, 0.6), p(0.3, 0.3, 1.9)] };
    PhysicalDomain::new(spec, k).unwrap()
}

pub fn unit_box(k: &PhysicalConstants) -> PhysicalDomain {
    PhysicalDomain::new(DomainSpec::Box { lo: [0.0, 0.0, 0.5], hi: [1.0, 1.0, 1.5] }, k).unwrap()
}

/// Seeds with horizontal part in the unit square and distinct heights in `[1, 3]`.
pub fn random_ensemble(rng: &mut ChaCha8Rng, n: usize) -> SeedEnsemble {
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let h = 1.0 + 2.0 * (i as f64 + rng.gen_range(0.1..0.9)) / n as f64;
        z.push(Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), h));
    }
    let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let s: f64 = m.iter().sum();
    SeedEnsemble::new(z, m.iter().map(|x| x / s).collect()).unwrap()
}

/// Weights that make every positivity region contain the domain centroid.
pub fn centred_weights(rng: &mut ChaCha8Rng, d: &PhysicalDomain, e: &SeedEnsemble, spread: f64) -> Vec<f64> {
    let k = d.constants();
    e.positions()
        .iter()
        .map(|z| cost_unchecked(&d.centroid, z, k) + 0.5 + rng.gen_range(0.0..spread))
        .collect()
}
