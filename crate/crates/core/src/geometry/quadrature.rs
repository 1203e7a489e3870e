//! Gauss rules on intervals, triangles and tetrahedra.
//!
//! Simplex rules use collapsed coordinates. Split rules integrate
//! `t^beta * phi` for an affine `t` that vanishes on a face of the simplex,
//! moving the singular factor into a Gauss-Jacobi weight.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights on `[0, 1]` for the weight `(1 - s)^alpha s^k`.
/// Exact for polynomials of degree `2n - 1` against that weight.
pub fn gauss_jacobi_unit(n: usize, alpha: f64, k: u32) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && alpha > -1.0);
    let (a, b) = (alpha, k as f64);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fi = i as f64;
        let s = 2.0 * fi + a + b;
        jac[(i, i)] = if i == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if i + 1 < n {
            let m = fi + 1.0;
            let s = 2.0 * m + a + b;
            let beta = 4.0 * m * (m + a) * (m + b) * (m + a + b) / (s * s * (s + 1.0) * (s - 1.0));
            jac[(i, i + 1)] = beta.sqrt();
            jac[(i + 1, i)] = beta.sqrt();
        }
    }
    let eig = SymmetricEigen::new(jac);
    // Total mass of the weight: B(alpha + 1, k + 1).
    let mut mass = 1.0;
    for j in 1..=k {
        mass *= j as f64;
    }
    for j in 1..=(k + 1) {
        mass /= a + j as f64;
    }
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss-Legendre on `[0, 1]` with weights summing to one.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi_unit(n, 0.0, 0)
}

/// Number of Gauss points per direction needed for polynomial exactness `degree`.
pub fn points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// A rule in barycentric coordinates; weights are fractions of the simplex measure.
#[derive(Clone, Debug)]
pub struct SimplexRule<const M: usize> {
    pub bary: Vec<[f64; M]>,
    pub weights: Vec<f64>,
}

pub type TriangleRule = SimplexRule<3>;
pub type TetRule = SimplexRule<4>;

impl TriangleRule {
    /// Collapsed Gauss rule with `n` points per direction (exact to degree `2n - 1`).
    pub fn collapsed(n: usize) -> Self {
        let (s, ws) = gauss_jacobi_unit(n, 1.0, 0);
        let (r, wr) = gauss_legendre_unit(n);
        let mut bary = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (si, wsi) in s.iter().zip(&ws) {
            for (ri, wri) in r.iter().zip(&wr) {
                let l1 = *si;
                let l2 = (1.0 - si) * ri;
                bary.push([1.0 - l1 - l2, l1, l2]);
                weights.push(2.0 * wsi * wri);
            }
        }
        Self { bary, weights }
    }
}

impl TetRule {
    /// Collapsed Gauss rule with `n` points per direction (exact to degree `2n - 1`).
    pub fn collapsed(n: usize) -> Self {
        let (s, ws) = gauss_jacobi_unit(n, 2.0, 0);
        let (r, wr) = gauss_jacobi_unit(n, 1.0, 0);
        let (q, wq) = gauss_legendre_unit(n);
        let mut bary = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for (si, wsi) in s.iter().zip(&ws) {
            for (ri, wri) in r.iter().zip(&wr) {
                for (qi, wqi) in q.iter().zip(&wq) {
                    let l1 = *si;
                    let l2 = (1.0 - si) * ri;
                    let l3 = (1.0 - si) * (1.0 - ri) * qi;
                    bary.push([1.0 - l1 - l2 - l3, l1, l2, l3]);
                    weights.push(6.0 * wsi * wri * wqi);
                }
            }
        }
        Self { bary, weights }
    }
}

/// Uniform rule on the standard simplex of dimension `dim <= 2` as
/// (barycentric coordinates, weight) with weights summing to one.
fn uniform_simplex_rule(dim: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    match dim {
        0 => vec![(vec![1.0], 1.0)],
        1 => {
            let (x, w) = gauss_legendre_unit(n);
            x.iter().zip(&w).map(|(x, w)| (vec![1.0 - x, *x], *w)).collect()
        }
        2 => {
            let r = TriangleRule::collapsed(n);
            r.bary.iter().zip(&r.weights).map(|(b, w)| (b.to_vec(), *w)).collect()
        }
        _ => unreachable!("only used on simplices of dimension at most 3"),
    }
}

/// Rule for `int t^beta phi` over a simplex on which the affine function `t`
/// vanishes at `m` vertices and is positive at the other `k`.
///
/// Barycentric coordinates split as `s * mu` on the positive vertices and
/// `(1 - s) * nu` on the zero vertices, so `t = s * (mu . t_pos)` and the
/// singular factor `s^beta` becomes a Gauss-Jacobi weight. Weights are
/// fractions of the simplex measure and already contain `s^beta`; the caller
/// multiplies by `(mu . t_pos)^beta`.
#[derive(Clone, Debug)]
pub struct SplitRule {
    pub k: usize,
    pub m: usize,
    pub s: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SplitRule {
    pub fn new(k: usize, m: usize, n: usize, beta: f64) -> Self {
        assert!(k >= 1 && m >= 1 && k + m <= 4);
        // Weight s^(beta + k - 1) (1 - s)^(m - 1), written in u = 1 - s.
        let (u, wu) = gauss_jacobi_unit(n, beta + k as f64 - 1.0, m as u32 - 1);
        let fact = |x: usize| (1..=x).map(|v| v as f64).product::<f64>();
        let inv_beta_fn = fact(k + m - 1) / (fact(k - 1) * fact(m - 1));
        let mus = uniform_simplex_rule(k - 1, n);
        let nus = uniform_simplex_rule(m - 1, n);
        let mut out = Self { k, m, s: vec![], mu: vec![], nu: vec![], weights: vec![] };
        for (ui, wui) in u.iter().zip(&wu) {
            for (mu, wm) in &mus {
                for (nu, wn) in &nus {
                    out.s.push(1.0 - ui);
                    out.mu.push(mu.clone());
                    out.nu.push(nu.clone());
                    out.weights.push(inv_beta_fn * wui * wm * wn);
                }
            }
        }
        out
    }
}
