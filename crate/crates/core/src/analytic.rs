//! Closed-form reference solutions: the steady state of a box at rest and the
//! elliptic orbit of a single seed.

use serde::Serialize;

use crate::cost::{cost_unchecked, FStar};
use crate::domain::{DomainSpec, PhysicalDomain};
use crate::error::{Error, Result};
use crate::geometry::quadrature::gauss_legendre_unit;
use crate::model::{PhysicalConstants, Vec3};

/// Relative tolerance of the bisection for the steady-state constant.
pub const ELL_TOL: f64 = 1e-12;

/// `sigma(x) = (f*)'(ell - g ln x_3)` normalised to unit mass over a box.
#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    pub ell_star: f64,
    pub constants: PhysicalConstants,
    pub lo: Vec3,
    pub hi: Vec3,
    /// `int_X sigma` at `ell_star`.
    pub mass: f64,
}

impl SteadyState {
    pub fn density(&self, x: &Vec3) -> f64 {
        FStar::new(&self.constants).density(self.ell_star - self.constants.g * x.z.ln())
    }
}

fn box_bounds(d: &PhysicalDomain) -> Result<(Vec3, Vec3)> {
    match &d.spec {
        DomainSpec::Box { lo, hi } | DomainSpec::PolygonalBox { lo, hi, .. } => Ok((Vec3::from(*lo), Vec3::from(*hi))),
        _ => Err(Error::Unsupported("closed-form references need a box domain".into())),
    }
}

/// `int_X (f*)'(ell - g ln x_3) dx`; the integrand depends on height only and
/// is split at the height where its argument changes sign.
pub fn steady_mass(ell: f64, lo: &Vec3, hi: &Vec3, k: &PhysicalConstants) -> f64 {
    let fs = FStar::new(k);
    let area = (hi.x - lo.x) * (hi.y - lo.y);
    let top = hi.z.min((ell / k.g).exp());
    if top <= lo.z {
        return 0.0;
    }
    let (t, w) = gauss_legendre_unit(24);
    let panels = 32;
    let h = (top - lo.z) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let a = lo.z + p as f64 * h;
        for (ti, wi) in t.iter().zip(&w) {
            s += wi * h * fs.density(ell - k.g * (a + ti * h).ln());
        }
    }
    area * s
}

/// Finds `ell*` with unit steady mass by bisection from `[g ln delta, ell_hi]`,
/// doubling the bracket width until the mass exceeds one.
pub fn steady_state(domain: &PhysicalDomain) -> Result<SteadyState> {
    let k = *domain.constants();
    let (lo, hi) = box_bounds(domain)?;
    if !domain.inside_geostrophic_slab() {
        return Err(Error::Domain(format!(
            "steady state needs heights inside ({}, {}); domain spans [{}, {}]",
            k.delta,
            1.0 / k.delta,
            lo.z,
            hi.z
        )));
    }
    let mass = |l: f64| steady_mass(l, &lo, &hi, &k);
    let left = k.g * k.delta.ln();
    let mut a = left;
    let mut width = 1.0;
    let mut b = left + width;
    while mass(b) <= 1.0 {
        a = b;
        width *= 2.0;
        b = left + width;
        if width > 1e12 {
            return Err(Error::Domain("steady-state bracket did not close".into()));
        }
    }
    while b - a > ELL_TOL * b.abs().max(1.0) {
        let m = 0.5 * (a + b);
        if mass(m) > 1.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let ell = 0.5 * (a + b);
    Ok(SteadyState { ell_star: ell, constants: k, lo, hi, mass: mass(ell) })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EllipseParams {
    pub a_coef: f64,
    pub b_coef: f64,
    pub omega: f64,
    pub period: f64,
    pub z_bar: Vec3,
    /// `z3 - |X| f^2 max(a^2, b^2) / 3`; positive when both coefficients are.
    pub height_margin: f64,
    /// `1/|X| - max (c(x, y) - mean c(., y))` over the sampled `X x E`.
    pub oscillation_margin: f64,
}

/// Single seed in `[-a, a] x [-b, b] x [0, h]` with `gamma = 2`, `kappa = 1/2`.
#[derive(Clone, Debug, Serialize)]
pub struct EllipseReference {
    pub params: EllipseParams,
    pub half_widths: [f64; 3],
    pub constants: PhysicalConstants,
}

impl EllipseReference {
    pub fn volume(&self) -> f64 {
        let [a, b, h] = self.half_widths;
        4.0 * a * b * h
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let p = &self.params;
        let (s, c) = (p.omega * t).sin_cos();
        let r = (p.a_coef / p.b_coef).sqrt();
        let z = p.z_bar;
        Vec3::new(z.x * c - r * z.y * s, z.y * c + z.x * s / r, z.z)
    }

    /// `(-f A z_2, f B z_1, 0)`
    pub fn velocity(&self, z: &Vec3) -> Vec3 {
        let f = self.constants.f_cor;
        Vec3::new(-f * self.params.a_coef * z.y, f * self.params.b_coef * z.x, 0.0)
    }

    /// `int_X c(x, z) dx`
    pub fn integral_c(&self, z: &Vec3) -> f64 {
        let [a, b, h] = self.half_widths;
        let k = &self.constants;
        let v = self.volume();
        v * (0.5 * k.f_cor * k.f_cor * ((a * a + b * b) / 3.0 + z.x * z.x + z.y * z.y) + 0.5 * k.g * h) / z.z
    }

    /// Optimal weight `(1 + int_X c) / |X|` at time `t`.
    pub fn weight(&self, t: f64) -> f64 {
        (1.0 + self.integral_c(&self.position(t))) / self.volume()
    }

    /// Optimal density `w*(t) - c(x, z(t))`.
    pub fn sigma(&self, x: &Vec3, t: f64) -> f64 {
        self.weight(t) - cost_unchecked(x, &self.position(t), &self.constants)
    }

    /// Centroid `((1 - B) z_1, (1 - A) z_2, .)`; the height is not needed by the dynamics.
    pub fn centroid_horizontal(&self, z: &Vec3) -> [f64; 2] {
        [(1.0 - self.params.b_coef) * z.x, (1.0 - self.params.a_coef) * z.y]
    }

    pub fn trajectory(&self, times: &[f64]) -> Vec<(f64, Vec3, f64)> {
        times.iter().map(|&t| (t, self.position(t), self.weight(t))).collect()
    }
}

/// Sample sizes of the positivity check: points per axis of `X` and points on `E`.
pub const OSCILLATION_SAMPLES: (usize, usize) = (32, 256);

pub fn ellipse_reference(domain: &PhysicalDomain, z_bar: Vec3) -> Result<EllipseReference> {
    let k = *domain.constants();
    if !k.is_quadratic() {
        return Err(Error::Unsupported("the elliptic orbit needs gamma = 2 and kappa = 1/2".into()));
    }
    let (lo, hi) = box_bounds(domain)?;
    let half = (hi - lo) / 2.0;
    let centred = (lo.x + hi.x).abs() < 1e-14 * half.x && (lo.y + hi.y).abs() < 1e-14 * half.y && lo.z == 0.0;
    if !centred {
        return Err(Error::Domain("the elliptic orbit needs a box [-a, a] x [-b, b] x [0, h]".into()));
    }
    let (a, b, h) = (half.x, half.y, hi.z);
    let v = 4.0 * a * b * h;
    let f2 = k.f_cor * k.f_cor;
    let s = v * f2 / (3.0 * z_bar.z);
    let (ca, cb) = (1.0 - s * b * b, 1.0 - s * a * a);
    let height_margin = z_bar.z - v * f2 * a.max(b).powi(2) / 3.0;
    if !(height_margin > 0.0) {
        return Err(Error::Domain(format!("seed height too low for an elliptic orbit: margin {height_margin:.6e}")));
    }
    let omega = k.f_cor * (ca * cb).sqrt();
    let mut r = EllipseReference {
        params: EllipseParams {
            a_coef: ca,
            b_coef: cb,
            omega,
            period: 2.0 * std::f64::consts::PI / omega,
            z_bar,
            height_margin,
            oscillation_margin: f64::NAN,
        },
        half_widths: [a, b, h],
        constants: k,
    };
    let (nx, ne) = OSCILLATION_SAMPLES;
    let mut worst = f64::NEG_INFINITY;
    for q in 0..ne {
        let y = r.position(r.params.period * q as f64 / ne as f64);
        let mean = r.integral_c(&y) / v;
        for i in 0..nx {
            for j in 0..nx {
                for l in 0..nx {
                    let node = |n: usize, lo: f64, hi: f64| lo + (hi - lo) * n as f64 / (nx - 1) as f64;
                    let x = Vec3::new(node(i, lo.x, hi.x), node(j, lo.y, hi.y), node(l, lo.z, hi.z));
                    worst = worst.max(cost_unchecked(&x, &y, &k) - mean);
                }
            }
        }
    }
    r.params.oscillation_margin = 1.0 / v - worst;
    if !(r.params.oscillation_margin > 0.0) {
        return Err(Error::Domain(format!(
            "optimal density would vanish somewhere: oscillation margin {:.6e}",
            r.params.oscillation_margin
        )));
    }
    Ok(r)
}
