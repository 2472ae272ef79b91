//! Saliency-adaptive thinning of the salient point cloud.
//!
//! A spacing field `lambda = phi1 + phi2 * (1 - blur(S / 255))` is small where
//! texture is dense and large where it is faint. Points are then visited in
//! row-major order and kept only if no previously kept point lies within the
//! candidate's own spacing.

use crate::error::{Error, Result};
use crate::frame_io::Field;
use crate::params::Params;
use crate::saliency::{convolve_separable, gaussian_kernel_1d, PointCloud, SaliencyMap};

pub type DensityField = Field;

pub fn density_field(saliency: &SaliencyMap, params: &Params) -> Result<DensityField> {
    let kernel = gaussian_kernel_1d(params.sigma_w)?;
    let normalized = Field {
        width: saliency.width,
        height: saliency.height,
        data: saliency.data.iter().map(|s| s / 255.0).collect(),
    };
    let mut blurred = convolve_separable(&normalized, &kernel, &kernel);
    for v in &mut blurred.data {
        *v = params.phi1 + params.phi2 * (1.0 - v.clamp(0.0, 1.0));
    }
    Ok(blurred)
}

/// Uniform bucket grid over kept points.
struct Buckets {
    cell: i32,
    cols: i32,
    rows: i32,
    slots: Vec<Vec<u32>>,
}

impl Buckets {
    fn new(width: usize, height: usize, cell: i32) -> Self {
        let cols = (width as i32 + cell - 1) / cell;
        let rows = (height as i32 + cell - 1) / cell;
        Self {
            cell,
            cols,
            rows,
            slots: vec![Vec::new(); (cols * rows) as usize],
        }
    }

    fn key(&self, row: i32, col: i32) -> (i32, i32) {
        (row / self.cell, col / self.cell)
    }
}

/// Greedy row-major thinning: a point survives iff every already-kept point
/// is farther than the point's own `lambda`.
pub fn thin(cloud: &PointCloud, density: &DensityField) -> Result<PointCloud> {
    let (w, h) = (density.width, density.height);
    if let Some(p) = cloud
        .points
        .iter()
        .find(|p| p.row < 0 || p.col < 0 || p.row as usize >= h || p.col as usize >= w)
    {
        return Err(Error::InvalidParam(format!(
            "point ({}, {}) outside {w}x{h} density field",
            p.row, p.col
        )));
    }
    if cloud.is_empty() {
        return Ok(PointCloud::default());
    }
    // a 3x3 block of cells covers any radius <= cell size
    let cell = density.max().ceil().max(1.0) as i32;
    let mut grid = Buckets::new(w, h, cell);
    let mut kept = Vec::new();

    for &p in &cloud.points {
        let lambda = density.get(p.row as usize, p.col as usize);
        let limit = lambda * lambda;
        let (gr, gc) = grid.key(p.row, p.col);
        let blocked = (gr - 1..=gr + 1)
            .filter(|r| (0..grid.rows).contains(r))
            .flat_map(|r| {
                (gc - 1..=gc + 1)
                    .filter(|c| (0..grid.cols).contains(c))
                    .map(move |c| (r * grid.cols + c) as usize)
            })
            .any(|slot| {
                grid.slots[slot]
                    .iter()
                    .any(|&q| (p.dist2(kept[q as usize]) as f64) <= limit)
            });
        if !blocked {
            grid.slots[(gr * grid.cols + gc) as usize].push(kept.len() as u32);
            kept.push(p);
        }
    }
    Ok(PointCloud::new(kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::Point;
    use proptest::prelude::*;

    fn uniform(w: usize, h: usize, v: f64) -> Field {
        Field {
            width: w,
            height: h,
            data: vec![v; w * h],
        }
    }

    #[test]
    fn density_bounds_cases() {
        let p = Params::default();
        let lam = density_field(&uniform(50, 40, 0.0), &p).unwrap();
        assert!(lam.data.iter().all(|&v| v == 35.0));
        let lam = density_field(&uniform(50, 40, 255.0), &p).unwrap();
        assert!(lam.data.iter().all(|&v| v == 15.0));
        let lam = density_field(&uniform(50, 40, 60.0), &p).unwrap();
        assert!(lam.data.iter().all(|&v| v > 15.0 && v < 35.0));
    }

    #[test]
    fn density_is_clamped() {
        // saliency above 255 cannot push lambda below phi1
        let lam = density_field(&uniform(10, 10, 400.0), &Params::default()).unwrap();
        assert!(lam.data.iter().all(|&v| v == 15.0));
    }

    #[test]
    fn thin_examples() {
        let lam = uniform(100, 100, 15.0);
        assert!(thin(&PointCloud::default(), &lam).unwrap().is_empty());

        let close = PointCloud::new(vec![Point::new(10, 10), Point::new(16, 18)]);
        assert_eq!(thin(&close, &lam).unwrap().points, vec![Point::new(10, 10)]);

        let far = PointCloud::new(vec![Point::new(10, 10), Point::new(34, 42)]);
        assert_eq!(thin(&far, &lam).unwrap(), far);
    }

    #[test]
    fn spacing_is_inclusive() {
        let lam = uniform(40, 40, 15.0);
        let pair = PointCloud::new(vec![Point::new(0, 0), Point::new(9, 12)]);
        assert_eq!(thin(&pair, &lam).unwrap().len(), 1);
        let pair = PointCloud::new(vec![Point::new(0, 0), Point::new(0, 16)]);
        assert_eq!(thin(&pair, &lam).unwrap().len(), 2);
    }

    #[test]
    fn out_of_bounds_point_rejected() {
        let lam = uniform(5, 5, 15.0);
        assert!(thin(&PointCloud::new(vec![Point::new(5, 0)]), &lam).is_err());
    }

    fn brute_thin(cloud: &PointCloud, density: &Field) -> Vec<Point> {
        let mut kept: Vec<Point> = Vec::new();
        for &p in &cloud.points {
            let lam = density.get(p.row as usize, p.col as usize);
            if kept.iter().all(|&q| (p.dist2(q) as f64) > lam * lam) {
                kept.push(p);
            }
        }
        kept
    }

    fn arb_case() -> impl Strategy<Value = (PointCloud, Field)> {
        (10usize..120, 10usize..90).prop_flat_map(|(w, h)| {
            let pts = proptest::collection::btree_set((0..h as i32, 0..w as i32), 0..300);
            let lam = proptest::collection::vec(0.0f64..40.0, w * h);
            (pts, lam).prop_map(move |(pts, lam)| {
                let cloud = PointCloud::new(pts.into_iter().map(|(r, c)| Point::new(r, c)).collect());
                (cloud, Field { width: w, height: h, data: lam })
            })
        })
    }

    proptest! {
        #[test]
        fn grid_matches_brute_force((cloud, lam) in arb_case()) {
            let fast = thin(&cloud, &lam).unwrap();
            prop_assert_eq!(&fast.points, &brute_thin(&cloud, &lam));

            // subset, order-preserving, pairwise spacing, idempotence
            let mut it = cloud.points.iter();
            prop_assert!(fast.points.iter().all(|p| it.any(|q| q == p)));
            for (i, &a) in fast.points.iter().enumerate() {
                for &b in &fast.points[i + 1..] {
                    let lb = lam.get(b.row as usize, b.col as usize);
                    prop_assert!((a.dist2(b) as f64) > lb * lb);
                }
            }
            prop_assert_eq!(thin(&fast, &lam).unwrap(), fast);
        }

        #[test]
        fn lambda_within_bounds(seed in any::<u64>(), phi1 in 0.0f64..30.0, phi2 in 0.0f64..30.0) {
            let mut state = seed | 1;
            let data = (0..40 * 30).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 56) as f64
            }).collect();
            let s = Field { width: 40, height: 30, data };
            let p = Params { phi1, phi2, sigma_w: 3.0, ..Params::default() };
            let lam = density_field(&s, &p).unwrap();
            prop_assert!(lam.data.iter().all(|&v| v >= phi1 && v <= phi1 + phi2));
        }
    }
}
