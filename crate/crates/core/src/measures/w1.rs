use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SeedEnsemble, Vec3};

/// Largest support size accepted on either side.
pub const W1_MAX_SUPPORT: usize = 512;

/// Amounts below this are treated as exhausted.
const EMPTY: f64 = 1e-15;

#[derive(Clone, Debug, Default, Serialize)]
pub struct TransportCoupling {
    /// `(i, j, mass)` with positive mass.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportCoupling {
    pub fn row_sums(&self, n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for &(i, _, x) in &self.entries {
            s[i] += x;
        }
        s
    }

    pub fn col_sums(&self, m: usize) -> Vec<f64> {
        let mut s = vec![0.0; m];
        for &(_, j, x) in &self.entries {
            s[j] += x;
        }
        s
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

pub fn w1_distance(mu: &SeedEnsemble, nu: &SeedEnsemble) -> Result<(f64, TransportCoupling)> {
    w1_points(mu.positions(), mu.masses(), nu.positions(), nu.masses())
}

/// W1 between matching snapshots of two point sets with fixed masses; one
/// value per snapshot, up to the shorter length.
pub fn w1_along(a: &[Vec<Vec3>], ma: &[f64], b: &[Vec<Vec3>], mb: &[f64]) -> Result<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| w1_points(x, ma, y, mb).map(|r| r.0)).collect()
}

/// Exact W1 between two discrete measures with Euclidean ground cost, by
/// successive shortest augmenting paths with node potentials.
pub fn w1_points(x: &[Vec3], a: &[f64], y: &[Vec3], b: &[f64]) -> Result<(f64, TransportCoupling)> {
    let (n, m) = (x.len(), y.len());
    if n == 0 || m == 0 || n != a.len() || m != b.len() {
        return Err(Error::Measure("supports and masses must be nonempty and of equal length".into()));
    }
    if n > W1_MAX_SUPPORT || m > W1_MAX_SUPPORT {
        return Err(Error::Measure(format!("support sizes {n} x {m} exceed {W1_MAX_SUPPORT}")));
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Measure("masses must be nonnegative".into()));
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if (sa - sb).abs() > 1e-12 * sa.max(sb).max(1.0) {
        return Err(Error::Measure(format!("total masses differ: {sa} vs {sb}")));
    }
    let cost: Vec<f64> = x.iter().flat_map(|p| y.iter().map(move |q| (p - q).norm())).collect();
    let c = |i: usize, j: usize| cost[i * m + j];
    let mut flow = vec![0.0; n * m];
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    // Potentials keep every residual reduced cost nonnegative.
    let mut pu = vec![0.0; n];
    let mut pv = vec![0.0; m];
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; m];
    // Predecessor of a sink is a source and vice versa; sources with supply start paths.
    let mut pred_v = vec![usize::MAX; m];
    let mut pred_u = vec![usize::MAX; n];
    let mut done_u = vec![false; n];
    let mut done_v = vec![false; m];
    while supply.iter().any(|s| *s > EMPTY) && demand.iter().any(|d| *d > EMPTY) {
        du.iter_mut().for_each(|d| *d = f64::INFINITY);
        dv.iter_mut().for_each(|d| *d = f64::INFINITY);
        done_u.iter_mut().for_each(|d| *d = false);
        done_v.iter_mut().for_each(|d| *d = false);
        for i in 0..n {
            if supply[i] > EMPTY {
                du[i] = 0.0;
                pred_u[i] = usize::MAX;
            }
        }
        let mut target = None;
        loop {
            let mut best = (f64::INFINITY, usize::MAX, false);
            for i in 0..n {
                if !done_u[i] && du[i] < best.0 {
                    best = (du[i], i, true);
                }
            }
            for j in 0..m {
                if !done_v[j] && dv[j] < best.0 {
                    best = (dv[j], j, false);
                }
            }
            let (d0, node, is_source) = best;
            if node == usize::MAX {
                break;
            }
            if is_source {
                done_u[node] = true;
                for j in 0..m {
                    if !done_v[j] {
                        let nd = d0 + (c(node, j) + pu[node] - pv[j]).max(0.0);
                        if nd < dv[j] {
                            dv[j] = nd;
                            pred_v[j] = node;
                        }
                    }
                }
            } else {
                done_v[node] = true;
                if demand[node] > EMPTY {
                    target = Some(node);
                    break;
                }
                for i in 0..n {
                    if !done_u[i] && flow[i * m + node] > 0.0 {
                        let nd = d0 + (pv[node] - c(i, node) - pu[i]).max(0.0);
                        if nd < du[i] {
                            du[i] = nd;
                            pred_u[i] = node;
                        }
                    }
                }
            }
        }
        let Some(t) = target else {
            return Err(Error::Measure("transport problem is infeasible".into()));
        };
        let dt = dv[t];
        for i in 0..n {
            pu[i] += du[i].min(dt);
        }
        for j in 0..m {
            pv[j] += dv[j].min(dt);
        }
        // Walk back to find the bottleneck, then push.
        let mut amount = demand[t];
        let mut j = t;
        let start = loop {
            let i = pred_v[j];
            match pred_u[i] {
                usize::MAX => break i,
                jp => {
                    amount = amount.min(flow[i * m + jp]);
                    j = jp;
                }
            }
        };
        amount = amount.min(supply[start]);
        let mut j = t;
        loop {
            let i = pred_v[j];
            flow[i * m + j] += amount;
            match pred_u[i] {
                usize::MAX => break,
                jp => {
                    let f = &mut flow[i * m + jp];
                    *f = if *f - amount <= EMPTY * 1e-3 { 0.0 } else { *f - amount };
                    j = jp;
                }
            }
        }
        supply[start] -= amount;
        demand[t] -= amount;
    }
    let mut out = TransportCoupling::default();
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > 0.0 {
                out.entries.push((i, j, f));
                out.cost += f * c(i, j);
            }
        }
    }
    Ok((out.cost, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for p in permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute(x: &[Vec3], y: &[Vec3]) -> f64 {
        let n = x.len() as f64;
        permutations(x.len())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| (x[i] - y[j]).norm()).sum::<f64>() / n)
            .fold(f64::INFINITY, f64::min)
    }

    fn cloud(r: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(r.gen(), r.gen(), r.gen::<f64>() + 1.0)).collect()
    }

    #[test]
    fn matches_permutation_minimum() {
        let mut r = rng(11);
        for n in 1..=5 {
            for _ in 0..20 {
                let (x, y) = (cloud(&mut r, n), cloud(&mut r, n));
                let u = vec![1.0 / n as f64; n];
                let (d, _) = w1_points(&x, &u, &y, &u).unwrap();
                assert!((d - brute(&x, &y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_diracs_and_identity() {
        let p = [Vec3::new(0.0, 0.0, 1.0)];
        let q = [Vec3::new(3.0, 4.0, 1.0)];
        assert_eq!(w1_points(&p, &[1.0], &q, &[1.0]).unwrap().0, 5.0);
        let mut r = rng(2);
        let x = cloud(&mut r, 30);
        let a: Vec<f64> = (0..30).map(|_| r.gen_range(0.5..1.0)).collect();
        let s: f64 = a.iter().sum();
        let a: Vec<f64> = a.iter().map(|v| v / s).collect();
        assert!(w1_points(&x, &a, &x, &a).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn collinear_matches_cdf_formula() {
        let mut r = rng(4);
        for _ in 0..20 {
            let (n, m) = (r.gen_range(1..12), r.gen_range(1..12));
            let xs: Vec<f64> = (0..n).map(|_| r.gen()).collect();
            let ys: Vec<f64> = (0..m).map(|_| r.gen()).collect();
            let norm = |v: Vec<f64>| {
                let s: f64 = v.iter().sum();
                v.into_iter().map(|a| a / s).collect::<Vec<_>>()
            };
            let a = norm((0..n).map(|_| r.gen_range(0.1..1.0)).collect());
            let b = norm((0..m).map(|_| r.gen_range(0.1..1.0)).collect());
            let mut ev: Vec<(f64, f64)> = xs.iter().zip(&a).map(|(x, w)| (*x, *w)).collect();
            ev.extend(ys.iter().zip(&b).map(|(y, w)| (*y, -*w)));
            ev.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut cdf = 0.0;
            let mut exact = 0.0;
            for k in 0..ev.len() - 1 {
                cdf += ev[k].1;
                exact += cdf.abs() * (ev[k + 1].0 - ev[k].0);
            }
            let on_line = |t: &f64| Vec3::new(*t, 2.0 * t, 1.0 - t);
            let scale = 6f64.sqrt();
            let (d, _) = w1_points(&xs.iter().map(on_line).collect::<Vec<_>>(), &a, &ys.iter().map(on_line).collect::<Vec<_>>(), &b).unwrap();
            assert!((d - scale * exact).abs() < 1e-12, "{d} vs {}", scale * exact);
        }
    }

    #[test]
    fn mismatched_or_oversized_input_is_rejected() {
        let p = [Vec3::new(0.0, 0.0, 1.0)];
        assert!(w1_points(&p, &[1.0], &p, &[0.5]).is_err());
        let big = vec![Vec3::new(0.0, 0.0, 1.0); W1_MAX_SUPPORT + 1];
        let u = vec![1.0 / big.len() as f64; big.len()];
        assert!(w1_points(&big, &u, &p, &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn coupling_is_feasible_and_metric(seed in 0u64..10_000, n in 1usize..20, m in 1usize..20, l in 1usize..20) {
            let mut r = rng(seed);
            let mut meas = |k: usize| {
                let x = cloud(&mut r, k);
                let w: Vec<f64> = (0..k).map(|_| r.gen_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                (x, w.into_iter().map(|v| v / s).collect::<Vec<_>>())
            };
            let (x, a) = meas(n);
            let (y, b) = meas(m);
            let (z, c) = meas(l);
            let (dxy, cp) = w1_points(&x, &a, &y, &b).unwrap();
            for (s, t) in cp.row_sums(n).iter().zip(&a) {
                prop_assert!((s - t).abs() < 1e-12);
            }
            for (s, t) in cp.col_sums(m).iter().zip(&b) {
                prop_assert!((s - t).abs() < 1e-12);
            }
            prop_assert!(cp.entries.iter().all(|e| e.2 > 0.0));
            let direct: f64 = cp.entries.iter().map(|&(i, j, f)| f * (x[i] - y[j]).norm()).sum();
            prop_assert!((direct - dxy).abs() < 1e-14);
            let dyx = w1_points(&y, &b, &x, &a).unwrap().0;
            prop_assert!((dxy - dyx).abs() < 1e-12);
            let dxz = w1_points(&x, &a, &z, &c).unwrap().0;
            let dyz = w1_points(&y, &b, &z, &c).unwrap().0;
            prop_assert!(dxz <= dxy + dyz + 1e-12);
        }
    }
}
