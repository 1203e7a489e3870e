use rand::Rng;

use super::*;
use crate::domain::{DomainSpec, PhysicalDomain, PlanarDomain};
use crate::geometry::quadrature::gauss_legendre_unit;
use crate::model::WeightVector;
use crate::tessellation::{ExactBackend, GridBackend};
use crate::testutil::*;

fn exact(d: &PhysicalDomain) -> Backend {
    Backend::Exact(ExactBackend::new(d.clone(), 4).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn empty_positivity_regions_give_linear_g() {
    let k = compressible();
    let d = simplex_domain(&k);
    let mut r = rng(1);
    let e = random_ensemble(&mut r, 4);
    let w = vec![-50.0; 4];
    let b = exact(&d);
    let lin: f64 = e.masses().iter().map(|m| m * -50.0).sum();
    assert_eq!(eval_g(&b, &e, &w), lin);
    assert_eq!(grad_w_g(&b, &e, &w), e.masses().to_vec());
}

fn check_derivatives(k: PhysicalConstants, seed: u64) {
    let d = simplex_domain(&k);
    let b = exact(&d);
    let mut r = rng(seed);
    let e = random_ensemble(&mut r, 6);
    let w = centred_weights(&mut r, &d, &e, 0.3);
    let g = grad_w_g(&b, &e, &w);
    let (h, safe) = hessian_ww_g(&b, &e, &w);
    let eps = 1e-4;
    let g0 = eval_g(&b, &e, &w);
    let hs = (0..6).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..6 {
        let mut wp = w.clone();
        wp[i] += eps;
        let mut wm = w.clone();
        wm[i] -= eps;
        let fd = (eval_g(&b, &e, &wp) - eval_g(&b, &e, &wm)) / (2.0 * eps);
        assert!(rel(fd, g[i]) < 1e-5 || (fd - g[i]).abs() < 1e-9, "grad {i}: {fd} vs {}", g[i]);
        let second = (eval_g(&b, &e, &wp) - 2.0 * g0 + eval_g(&b, &e, &wm)) / (eps * eps);
        assert!((second - h[(i, i)]).abs() < 1e-3 * hs, "diag {i}: {second} vs {}", h[(i, i)]);
        let gp = grad_w_g(&b, &e, &wp);
        let gm = grad_w_g(&b, &e, &wm);
        for j in 0..6 {
            let fd = (gp[j] - gm[j]) / (2.0 * eps);
            assert!((fd - h[(j, i)]).abs() < 1e-3 * hs, "hess {j},{i}: {fd} vs {}", h[(j, i)]);
        }
    }
    assert!((h.clone() - h.transpose()).amax() < 1e-14);
    if safe {
        assert!(h.symmetric_eigenvalues().iter().all(|&l| l < 0.0));
    }
    let gz = grad_z_g(&b, &e, &w);
    for i in 0..6 {
        for a in 0..3 {
            let shift = |s: f64| {
                let mut z = e.positions().to_vec();
                z[i][a] += s;
                SeedEnsemble::new(z, e.masses().to_vec()).unwrap()
            };
            let fd = (eval_g(&b, &shift(eps), &w) - eval_g(&b, &shift(-eps), &w)) / (2.0 * eps);
            assert!(rel(fd, gz[i][a]) < 1e-4 || (fd - gz[i][a]).abs() < 1e-9, "dz {i},{a}: {fd} vs {}", gz[i][a]);
        }
    }
}

#[test]
fn derivatives_match_finite_differences_compressible() {
    check_derivatives(compressible(), 2);
    check_derivatives(skewed(), 3);
}

#[test]
fn derivatives_match_finite_differences_quadratic() {
    check_derivatives(PhysicalConstants::quadratic_unit(), 4);
}

#[test]
fn g_is_concave_along_segments() {
    let k = compressible();
    let d = simplex_domain(&k);
    let b = exact(&d);
    let mut r = rng(5);
    let e = random_ensemble(&mut r, 5);
    for _ in 0..10 {
        let w1 = centred_weights(&mut r, &d, &e, 0.5);
        let w2 = centred_weights(&mut r, &d, &e, 0.5);
        let l: f64 = r.gen_range(0.05..0.95);
        let wl: Vec<f64> = w1.iter().zip(&w2).map(|(a, c)| l * a + (1.0 - l) * c).collect();
        assert!(eval_g(&b, &e, &wl) >= l * eval_g(&b, &e, &w1) + (1.0 - l) * eval_g(&b, &e, &w2) - 1e-9);
    }
}

#[test]
fn g_is_not_shift_invariant() {
    let k = compressible();
    let d = simplex_domain(&k);
    let b = exact(&d);
    let mut r = rng(6);
    let e = random_ensemble(&mut r, 3);
    let w = centred_weights(&mut r, &d, &e, 0.2);
    let ws: Vec<f64> = w.iter().map(|x| x + 0.1).collect();
    assert!((eval_g(&b, &e, &w) - eval_g(&b, &e, &ws)).abs() > 1e-6);
}

#[test]
fn solver_meets_mass_constraint_and_duality() {
    for (k, seed) in [(compressible(), 7), (PhysicalConstants::quadratic_unit(), 8)] {
        let d = simplex_domain(&k);
        let b = exact(&d);
        let mut r = rng(seed);
        let e = random_ensemble(&mut r, 10);
        let opts = SolverOptions::for_constants(&k);
        let rep = solve_w_star(&b, &e, None, &opts).unwrap();
        assert!(rep.residual_norm() <= opts.tol);
        assert!(rep.gap <= 1e-6 * rep.g_value.abs());
        let (h, safe) = hessian_ww_g(&b, &e, &rep.w_star);
        assert!(safe);
        assert!(h.symmetric_eigenvalues().iter().all(|&l| l < 0.0));
        let en = energy_components(&b, &e, &rep.w_star);
        assert!(en.internal >= 0.0);
        assert!((en.total - en.dual).abs() <= 1e-6 * en.dual.abs());
        // A warm start at the optimum is already converged.
        let again = solve_w_star(&b, &e, Some(&rep.w_star), &opts).unwrap();
        assert!(again.iterations <= 1);
    }
}

#[test]
fn solver_rejects_coplanar_seeds() {
    let k = compressible();
    let d = simplex_domain(&k);
    let e = SeedEnsemble::uniform(vec![Vec3::new(0.1, 0.1, 1.0), Vec3::new(0.5, 0.5, 1.0)]).unwrap();
    assert!(solve_w_star(&exact(&d), &e, None, &SolverOptions::for_constants(&k)).is_err());
}

/// Tensor Gauss rule over a box, independent of the column scheme.
fn box_integral(lo: [f64; 3], hi: [f64; 3], f: impl Fn(&Vec3) -> f64) -> f64 {
    let (x, w) = gauss_legendre_unit(8);
    let mut s = 0.0;
    for (a, wa) in x.iter().zip(&w) {
        for (b, wb) in x.iter().zip(&w) {
            for (c, wc) in x.iter().zip(&w) {
                let p = Vec3::new(lo[0] + a * (hi[0] - lo[0]), lo[1] + b * (hi[1] - lo[1]), lo[2] + c * (hi[2] - lo[2]));
                s += wa * wb * wc * f(&p);
            }
        }
    }
    s * (0..3).map(|i| hi[i] - lo[i]).product::<f64>()
}

#[test]
fn single_seed_box_closed_form() {
    let k = PhysicalConstants::quadratic_unit();
    let (lo, hi) = ([-1.0, -1.0, 0.0], [1.0, 1.0, 1.0]);
    let d = PhysicalDomain::new(DomainSpec::Box { lo, hi }, &k).unwrap();
    let b = Backend::exact(d).unwrap();
    let z = Vec3::new(0.1, 0.0, 10.0);
    let e = SeedEnsemble::uniform(vec![z]).unwrap();
    let rep = solve_w_star(&b, &e, None, &SolverOptions::for_constants(&k)).unwrap();
    let int_c = box_integral(lo, hi, |x| cost_unchecked(x, &z, &k));
    let w = (1.0 + int_c) / 4.0;
    assert!((rep.w_star[0] - w).abs() < 1e-12, "{} vs {w}", rep.w_star[0]);
    let mut r = rng(9);
    for _ in 0..100 {
        let x = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(0.0..1.0));
        let s = sigma_star_at(&x, &rep.w_star, &[z], &k);
        assert!((s - (w - cost_unchecked(&x, &z, &k))).abs() < 1e-12);
    }
    // E and G agree, and G matches an independent evaluation.
    let int_sq = box_integral(lo, hi, |x| (w - cost_unchecked(x, &z, &k)).powi(2));
    let g = w - 0.5 * int_sq;
    let en = energy_components(&b, &e, &rep.w_star);
    assert!((en.dual - g).abs() < 1e-12);
    assert!((en.total - g).abs() < 1e-12);
    // The seed sits on the x_1 axis: no horizontal pull in x_2.
    assert!(grad_z_g(&b, &e, &rep.w_star)[0].y.abs() < 1e-14);
}

#[test]
fn gradient_sum_is_one_minus_total_density() {
    let k = compressible();
    let d = unit_box(&k);
    let mut r = rng(10);
    let e = random_ensemble(&mut r, 3);
    let w = centred_weights(&mut r, &d, &e, 0.2);
    let b = Backend::Column(crate::tessellation::ColumnBackend::new(d.clone(), Some(30), 4).unwrap());
    let sum: f64 = grad_w_g(&b, &e, &w).iter().sum();
    // Direct midpoint rule of sigma* over the box.
    let n = 60;
    let h = 1.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let x = Vec3::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, 0.5 + (l as f64 + 0.5) * h);
                total += sigma_star_at(&x, &w, e.positions(), &k) * h * h * h;
            }
        }
    }
    assert!((sum - (1.0 - total)).abs() < 2e-3, "{sum} vs {}", 1.0 - total);
}

#[test]
fn grid_backend_solves_to_its_resolution() {
    let k = compressible();
    let d = unit_box(&k);
    let b = Backend::Grid(GridBackend::new(d, 1.0 / 40.0).unwrap());
    let mut r = rng(11);
    let e = random_ensemble(&mut r, 3);
    let rep = solve_w_star(&b, &e, None, &SolverOptions { tol: 1e-10, max_iter: 100 }).unwrap();
    assert!(rep.residual_norm() < 1e-2);
}

#[test]
fn transport_weights_equalise_planar_areas() {
    let k = PhysicalConstants::quadratic_unit();
    let d = PlanarDomain::unit_square(&k, 1024).unwrap();
    let b = PlanarBackend::new(d);
    let mut r = rng(12);
    for n in [1, 5, 10] {
        let y: Vec<Vec2> = (0..n).map(|_| Vec2::new(r.gen_range(0.0..1.0), r.gen_range(0.05..1.0))).collect();
        let m = vec![1.0 / n as f64; n];
        let (w, cells) = solve_transport_weights_2d(&b, &y, &m, 1e-10, 50).unwrap();
        assert_eq!(w[0], 0.0);
        for a in &cells.areas {
            assert!((a - 1.0 / n as f64).abs() < 1e-6);
        }
    }
    // Mirror-symmetric seeds need equal weights.
    let y = vec![Vec2::new(0.3, 0.5), Vec2::new(0.7, 0.5)];
    let (w, _) = solve_transport_weights_2d(&b, &y, &[0.5, 0.5], 1e-12, 50).unwrap();
    assert!(w[1].abs() < 1e-9);
}

#[test]
fn transport_weights_in_three_dimensions() {
    let k = compressible();
    let d = simplex_domain(&k);
    let b = exact(&d);
    let mut r = rng(13);
    let e = random_ensemble(&mut r, 6);
    let w = solve_transport_weights(&b, &e, 1e-10, 50).unwrap();
    let ev = b.evaluate(&w, e.positions(), false);
    for (c, m) in ev.cells.iter().zip(e.masses()) {
        assert!((c.volume / d.volume - m).abs() < 1e-10);
    }
    let _ = WeightVector::new(w).unwrap();
}
