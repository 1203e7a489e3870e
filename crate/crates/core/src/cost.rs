//! The transport cost, its gradients, the Legendre transform of the internal
//! energy density, and the coordinate change under which the cost becomes affine.
//!
//! Coordinates: `p` denotes the convexifying coordinates and `x = phi(p)` the
//! physical point. In `p` the cost `c(phi(p), y)` is affine, so c-Laguerre
//! cells become ordinary power cells of the lifted seeds.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::model::{PhysicalConstants, SeedEnsemble, Vec3, WeightVector};

pub type Vec2 = Vector2<f64>;

fn check_theta(y: &Vec3) -> Result<()> {
    if y.z > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveTheta(y.as_slice().to_vec()))
    }
}

/// `c(x, y) = (f^2 |x_h - y_h|^2 / 2 + g x_3) / y_3`.
pub fn cost_c(x: &Vec3, y: &Vec3, k: &PhysicalConstants) -> Result<f64> {
    check_theta(y)?;
    Ok(cost_unchecked(x, y, k))
}

#[inline]
pub fn cost_unchecked(x: &Vec3, y: &Vec3, k: &PhysicalConstants) -> f64 {
    let f2 = k.f_cor * k.f_cor;
    let d1 = x.x - y.x;
    let d2 = x.y - y.y;
    (0.5 * f2 * (d1 * d1 + d2 * d2) + k.g * x.z) / y.z
}

/// Returns `(grad_x c, grad_y c)`.
pub fn grad_cost(x: &Vec3, y: &Vec3, k: &PhysicalConstants) -> Result<(Vec3, Vec3)> {
    check_theta(y)?;
    let f2 = k.f_cor * k.f_cor;
    let inv = 1.0 / y.z;
    let gx = Vec3::new(f2 * (x.x - y.x) * inv, f2 * (x.y - y.y) * inv, k.g * inv);
    let c = cost_unchecked(x, y, k);
    let gy = Vec3::new(f2 * (y.x - x.x) * inv, f2 * (y.y - x.y) * inv, -c * inv);
    Ok((gx, gy))
}

/// The convex conjugate of `s -> kappa s^gamma` on `s >= 0`, with its first two
/// derivatives. `(f*)'` is the density generated by a dual potential value.
#[derive(Clone, Copy, Debug)]
pub struct FStar {
    /// `gamma'`
    pub exponent: f64,
    /// `(kappa gamma)^(1 - gamma')`
    pub scale: f64,
    kappa: f64,
    gamma: f64,
}

impl FStar {
    pub fn new(k: &PhysicalConstants) -> Self {
        let gp = k.gamma_prime();
        Self { exponent: gp, scale: (k.kappa * k.gamma).powf(1.0 - gp), kappa: k.kappa, gamma: k.gamma }
    }

    /// `(f*(t), f*'(t), f*''(t))`; all zero for `t <= 0`.
    pub fn derivatives(&self, t: f64) -> (f64, f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let gp = self.exponent;
        let d2 = (gp - 1.0) * self.scale * t.powf(gp - 2.0);
        let d1 = self.scale * t.powf(gp - 1.0);
        (self.scale * t.powf(gp) / gp, d1, d2)
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.derivatives(t).0
    }

    #[inline]
    pub fn density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.scale * t.powf(self.exponent - 1.0)
        }
    }

    /// The internal energy density `f(s) = kappa s^gamma`.
    pub fn energy_density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.kappa * s.powf(self.gamma)
        }
    }

    /// Coefficient `k` with `sigma^gamma = k t^gamma'` for `sigma = f*'(t)`.
    pub fn sigma_gamma_scale(&self) -> f64 {
        self.scale.powf(self.gamma)
    }
}

pub fn fstar_derivatives(t: f64, k: &PhysicalConstants) -> (f64, f64, f64) {
    FStar::new(k).derivatives(t)
}

/// Maps convexifying coordinates to the physical point.
pub fn phi(p: &Vec3, k: &PhysicalConstants) -> Vec3 {
    let if2 = 1.0 / (k.f_cor * k.f_cor);
    Vec3::new(if2 * p.x, if2 * p.y, (p.z - 0.5 * if2 * (p.x * p.x + p.y * p.y)) / k.g)
}

/// Inverse of [`phi`].
pub fn phi_inverse(x: &Vec3, k: &PhysicalConstants) -> Vec3 {
    let f2 = k.f_cor * k.f_cor;
    Vec3::new(f2 * x.x, f2 * x.y, k.g * x.z + 0.5 * f2 * (x.x * x.x + x.y * x.y))
}

/// `c(phi(p), y) = a . p + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineCostForm {
    pub linear: Vec3,
    pub offset: f64,
}

impl AffineCostForm {
    #[inline]
    pub fn eval(&self, p: &Vec3) -> f64 {
        self.linear.dot(p) + self.offset
    }
}

pub fn affine_cost_form(y: &Vec3, k: &PhysicalConstants) -> Result<AffineCostForm> {
    check_theta(y)?;
    Ok(affine_unchecked(y, k))
}

#[inline]
pub(crate) fn affine_unchecked(y: &Vec3, k: &PhysicalConstants) -> AffineCostForm {
    let inv = 1.0 / y.z;
    AffineCostForm {
        linear: Vec3::new(-y.x * inv, -y.y * inv, inv),
        offset: 0.5 * k.f_cor * k.f_cor * (y.x * y.x + y.y * y.y) * inv,
    }
}

/// Lifted seeds and weights: `c(phi(p), z_i) - w_i = |p - y_hat_i|^2 - psi_hat_i - |p|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLift {
    pub y_hat: Vec<Vec3>,
    pub psi_hat: Vec<f64>,
}

impl PowerLift {
    /// Half-space `n . p <= d` containing the cell of `i` against `j`.
    pub fn bisector(&self, i: usize, j: usize) -> (Vec3, f64) {
        let (yi, yj) = (self.y_hat[i], self.y_hat[j]);
        let n = 2.0 * (yj - yi);
        let d = yj.norm_squared() - yi.norm_squared() - self.psi_hat[j] + self.psi_hat[i];
        (n, d)
    }

    /// Power distance `|p - y_hat_i|^2 - psi_hat_i`.
    pub fn power(&self, i: usize, p: &Vec3) -> f64 {
        (p - self.y_hat[i]).norm_squared() - self.psi_hat[i]
    }
}

pub fn power_lift(w: &WeightVector, ensemble: &SeedEnsemble, k: &PhysicalConstants) -> Result<PowerLift> {
    if w.len() != ensemble.len() {
        return Err(Error::Config(format!("{} weights for {} seeds", w.len(), ensemble.len())));
    }
    Ok(power_lift_raw(w.as_slice(), ensemble.positions(), k))
}

pub(crate) fn power_lift_raw(w: &[f64], z: &[Vec3], k: &PhysicalConstants) -> PowerLift {
    let f2 = k.f_cor * k.f_cor;
    let mut y_hat = Vec::with_capacity(z.len());
    let mut psi_hat = Vec::with_capacity(z.len());
    for (zi, wi) in z.iter().zip(w) {
        let h = 0.5 / zi.z;
        let y = Vec3::new(zi.x * h, zi.y * h, -h);
        psi_hat.push(wi + y.norm_squared() - f2 * h * (zi.x * zi.x + zi.y * zi.y));
        y_hat.push(y);
    }
    PowerLift { y_hat, psi_hat }
}

/// `c(x, y) = (f^2 (x_1 - y_1)^2 / 2 + g x_2) / y_2` for vertical slices.
pub fn cost_c2d(x: &Vec2, y: &Vec2, k: &PhysicalConstants) -> Result<f64> {
    if y.y <= 0.0 {
        return Err(Error::NonPositiveTheta(y.as_slice().to_vec()));
    }
    Ok(cost2d_unchecked(x, y, k))
}

#[inline]
pub fn cost2d_unchecked(x: &Vec2, y: &Vec2, k: &PhysicalConstants) -> f64 {
    let d = x.x - y.x;
    (0.5 * k.f_cor * k.f_cor * d * d + k.g * x.y) / y.y
}

pub fn phi_2d(p: &Vec2, k: &PhysicalConstants) -> Vec2 {
    let if2 = 1.0 / (k.f_cor * k.f_cor);
    Vec2::new(if2 * p.x, (p.y - 0.5 * if2 * p.x * p.x) / k.g)
}

pub fn phi_2d_inverse(x: &Vec2, k: &PhysicalConstants) -> Vec2 {
    let f2 = k.f_cor * k.f_cor;
    Vec2::new(f2 * x.x, k.g * x.y + 0.5 * f2 * x.x * x.x)
}

/// Planar lift: `c2d(phi_2d(p), y_i) - w_i = |p - y_hat_i|^2 - psi_hat_i - |p|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLift2d {
    pub y_hat: Vec<Vec2>,
    pub psi_hat: Vec<f64>,
}

impl PowerLift2d {
    pub fn bisector(&self, i: usize, j: usize) -> (Vec2, f64) {
        let (yi, yj) = (self.y_hat[i], self.y_hat[j]);
        let n = 2.0 * (yj - yi);
        let d = yj.norm_squared() - yi.norm_squared() - self.psi_hat[j] + self.psi_hat[i];
        (n, d)
    }

    pub fn power(&self, i: usize, p: &Vec2) -> f64 {
        (p - self.y_hat[i]).norm_squared() - self.psi_hat[i]
    }
}

pub fn power_lift_2d(w: &[f64], y: &[Vec2], k: &PhysicalConstants) -> PowerLift2d {
    let f2 = k.f_cor * k.f_cor;
    let mut y_hat = Vec::with_capacity(y.len());
    let mut psi_hat = Vec::with_capacity(y.len());
    for (yi, wi) in y.iter().zip(w) {
        let h = 0.5 / yi.y;
        let l = Vec2::new(yi.x * h, -h);
        psi_hat.push(wi + l.norm_squared() - f2 * h * yi.x * yi.x);
        y_hat.push(l);
    }
    PowerLift2d { y_hat, psi_hat }
}

/// `argmin_i c(x, z_i) - w_i`, lowest index on ties.
pub fn assign_point(x: &Vec3, w: &[f64], z: &[Vec3], k: &PhysicalConstants) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, (zi, wi)) in z.iter().zip(w).enumerate() {
        let v = cost_unchecked(x, zi, k) - wi;
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// `max_i w_i - c(x, z_i)`, i.e. minus the c-transform of `w` at `x`.
pub fn neg_c_transform(x: &Vec3, w: &[f64], z: &[Vec3], k: &PhysicalConstants) -> f64 {
    z.iter()
        .zip(w)
        .map(|(zi, wi)| wi - cost_unchecked(x, zi, k))
        .fold(f64::NEG_INFINITY, f64::max)
}
