use crate::error::{Error, Result};
use crate::geometry::quadrature::gauss_legendre_unit;
use crate::model::{SeedEnsemble, Vec3};

#[derive(Clone, Copy, Debug)]
pub struct QuantizeOptions {
    /// Target number of cells, rounded to the nearest power of two.
    pub n: usize,
    /// Spacing of the plane-separating perturbation. Defaults to `1e-7` times
    /// the vertical extent of the support.
    pub eta: Option<f64>,
    /// Gauss points per axis inside each cell (density input only).
    pub points: usize,
}

impl QuantizeOptions {
    pub fn new(n: usize) -> Self {
        Self { n, eta: None, points: 4 }
    }
}

/// Cells per axis after `round(log2 n)` rounds of halving the longest side
/// (lowest axis on ties), so the partition for `2n` refines the one for `n`.
/// Degenerate axes are never split.
pub fn grid_dims(extent: &Vec3, n: usize) -> [usize; 3] {
    let mut dims = [1usize; 3];
    if extent.iter().all(|e| !(*e > 0.0)) {
        return dims;
    }
    let levels = (n.max(1) as f64).log2().round() as u32;
    for _ in 0..levels {
        let side = |a: usize| extent[a] / dims[a] as f64;
        let longest = (0..3).map(side).fold(0.0, f64::max);
        let a = (0..3).find(|&a| side(a) >= longest * (1.0 - 1e-12)).unwrap();
        dims[a] *= 2;
    }
    dims
}

/// Adds `rank * eta` to each third coordinate, ranking seeds by height (ties
/// by index). Order is preserved and every vertical gap grows by at least `eta`.
pub fn jitter_planes(z: &mut [Vec3], eta: f64) {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].z.total_cmp(&z[b].z).then(a.cmp(&b)));
    for (rank, &i) in order.iter().enumerate() {
        z[i].z += rank as f64 * eta;
    }
}

fn finish(cells: Vec<(f64, Vec3)>, vertical: f64, opts: &QuantizeOptions) -> Result<SeedEnsemble> {
    let total: f64 = cells.iter().map(|c| c.0).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Measure("input has no mass".into()));
    }
    let (m, mut z): (Vec<f64>, Vec<Vec3>) = cells
        .into_iter()
        .filter(|c| c.0 > 0.0)
        .map(|(mass, moment)| (mass / total, moment / mass))
        .unzip();
    jitter_planes(&mut z, opts.eta.unwrap_or(1e-7 * vertical));
    SeedEnsemble::new(z, m)
}

/// Mass and mass centroid of a nonnegative density in each cell of a regular
/// grid over `[lo, hi]`.
pub fn quantize_density(lo: Vec3, hi: Vec3, density: impl Fn(&Vec3) -> f64 + Sync, opts: &QuantizeOptions) -> Result<SeedEnsemble> {
    if opts.n == 0 {
        return Err(Error::Measure("need at least one cell".into()));
    }
    let ext = hi - lo;
    if ext.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Measure("density support must have positive volume".into()));
    }
    let dims = grid_dims(&ext, opts.n);
    let h = Vec3::new(ext.x / dims[0] as f64, ext.y / dims[1] as f64, ext.z / dims[2] as f64);
    let (t, wt) = gauss_legendre_unit(opts.points.max(1));
    let dv = h.x * h.y * h.z;
    let mut cells = Vec::with_capacity(dims.iter().product());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let o = lo + Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z);
                let mut mass = 0.0;
                let mut moment = Vec3::zeros();
                for (a, wa) in t.iter().zip(&wt) {
                    for (b, wb) in t.iter().zip(&wt) {
                        for (c, wc) in t.iter().zip(&wt) {
                            let x = o + Vec3::new(a * h.x, b * h.y, c * h.z);
                            let s = density(&x);
                            if s < 0.0 || !s.is_finite() {
                                return Err(Error::Measure(format!("density {s} at {:?}", x.as_slice())));
                            }
                            let q = wa * wb * wc * dv * s;
                            mass += q;
                            moment += q * x;
                        }
                    }
                }
                cells.push((mass, moment));
            }
        }
    }
    finish(cells, ext.z, opts)
}

/// Bins weighted samples on a regular grid over their bounding box.
pub fn quantize_samples(points: &[Vec3], weights: &[f64], opts: &QuantizeOptions) -> Result<SeedEnsemble> {
    if points.is_empty() || points.len() != weights.len() || opts.n == 0 {
        return Err(Error::Measure("need matching nonempty samples and weights".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Measure("sample weights must be nonnegative".into()));
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let dims = grid_dims(&ext, opts.n);
    let index = |p: &Vec3| -> usize {
        let mut id = [0usize; 3];
        for a in 0..3 {
            if ext[a] > 0.0 {
                id[a] = (((p[a] - lo[a]) / ext[a] * dims[a] as f64) as usize).min(dims[a] - 1);
            }
        }
        id[0] + dims[0] * (id[1] + dims[1] * id[2])
    };
    let mut cells = vec![(0.0, Vec3::zeros()); dims.iter().product()];
    for (p, w) in points.iter().zip(weights) {
        let c = &mut cells[index(p)];
        c.0 += w;
        c.1 += *w * p;
    }
    finish(cells, ext.z, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_ensemble;
    use crate::testutil::*;
    use rand::Rng;

    #[test]
    fn single_dirac_stays_put() {
        let p = Vec3::new(0.3, -0.2, 2.0);
        let e = quantize_samples(&[p], &[1.0], &QuantizeOptions::new(5)).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.seed(0), p);
        assert_eq!(e.masses(), &[1.0]);
    }

    #[test]
    fn uniform_box_splits_into_octants() {
        let opts = QuantizeOptions { eta: Some(0.0), ..QuantizeOptions::new(8) };
        let e = quantize_density(Vec3::new(0.0, 0.0, 1.0), Vec3::new(2.0, 2.0, 3.0), |_| 1.0, &opts).unwrap();
        assert_eq!(e.len(), 8);
        let mut seen = vec![];
        for (z, m) in e.positions().iter().zip(e.masses()) {
            assert!((m - 0.125).abs() < 1e-15);
            for a in 0..3 {
                let off = if a == 2 { 1.0 } else { 0.0 };
                let r = z[a] - off;
                assert!((r - 0.5).abs() < 1e-13 || (r - 1.5).abs() < 1e-13);
            }
            seen.push(*z);
        }
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn empty_cells_are_dropped_and_planes_separated() {
        let k = compressible();
        let opts = QuantizeOptions::new(27);
        let e = quantize_density(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 1.0, 2.0), |x| if x.x < 0.5 { 1.0 } else { 0.0 }, &opts).unwrap();
        assert!(e.len() < 27 && e.len() >= 9);
        assert!(e.positions().iter().all(|z| z.x < 0.5));
        let d = validate_ensemble(&e, &k);
        assert!(d.well_prepared, "{d:?}");
        assert!(d.min_vertical_gap >= 1e-7 * 0.99);
    }

    #[test]
    fn zero_mass_is_rejected() {
        let r = quantize_density(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 1.0, 2.0), |_| 0.0, &QuantizeOptions::new(4));
        assert!(matches!(r, Err(Error::Measure(_))));
        assert!(quantize_samples(&[Vec3::new(0.0, 0.0, 1.0)], &[0.0], &QuantizeOptions::new(1)).is_err());
    }

    #[test]
    fn sample_binning_preserves_mass_and_first_moment() {
        let mut r = rng(5);
        let pts: Vec<Vec3> = (0..500).map(|_| Vec3::new(r.gen(), r.gen(), 1.0 + r.gen::<f64>())).collect();
        let w: Vec<f64> = (0..500).map(|_| r.gen_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mean = pts.iter().zip(&w).map(|(p, wi)| *wi * p).sum::<Vec3>() / total;
        let opts = QuantizeOptions { eta: Some(0.0), ..QuantizeOptions::new(64) };
        let e = quantize_samples(&pts, &w, &opts).unwrap();
        let qm = e.positions().iter().zip(e.masses()).map(|(p, m)| *m * p).sum::<Vec3>();
        assert!((qm - mean).norm() < 1e-12);
    }

    #[test]
    fn finer_quantizations_are_closer_to_the_input() {
        // Reference: the density sampled at 512 Gauss-weighted nodes.
        let (lo, hi) = (Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 1.0, 2.0));
        let rho = |x: &Vec3| 1.0 + 0.5 * (3.0 * x.x).sin() * x.y + x.z;
        let fine = quantize_density(lo, hi, rho, &QuantizeOptions { eta: Some(0.0), points: 6, ..QuantizeOptions::new(512) }).unwrap();
        let d: Vec<f64> = [16, 64, 256]
            .iter()
            .map(|&n| crate::measures::w1_distance(&quantize_density(lo, hi, rho, &QuantizeOptions::new(n)).unwrap(), &fine).unwrap().0)
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn grid_dims_follow_extents() {
        assert_eq!(grid_dims(&Vec3::new(1.0, 1.0, 1.0), 8), [2, 2, 2]);
        assert_eq!(grid_dims(&Vec3::new(4.0, 1.0, 1.0), 4), [4, 1, 1]);
        assert_eq!(grid_dims(&Vec3::new(0.0, 0.0, 0.0), 10), [1, 1, 1]);
        assert_eq!(grid_dims(&Vec3::new(1.0, 0.0, 0.0), 10), [8, 1, 1]);
        assert_eq!(grid_dims(&Vec3::new(0.8, 0.8, 0.6), 16), [4, 2, 2]);
        // Doubling the target refines every cell into two.
        let ext = Vec3::new(0.7, 1.3, 0.4);
        for n in [1usize, 2, 4, 8, 16, 32, 64, 128] {
            let (a, b) = (grid_dims(&ext, n), grid_dims(&ext, 2 * n));
            assert_eq!(b.iter().product::<usize>(), 2 * a.iter().product::<usize>());
            assert!((0..3).all(|k| b[k] % a[k] == 0));
        }
    }
}
