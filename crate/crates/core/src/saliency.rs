//! Iterative Gaussian filter stack and the per-pixel standard-deviation
//! saliency map.
//!
//! Each stack layer is the previous one convolved with a separable,
//! vertically-biased Gaussian (`sigma_u` along depth, `sigma_v` across scan
//! lines). Pixels whose value moves most under repeated smoothing sit in
//! textured tissue; their spread across the stack is the saliency `S`, and the
//! pixels with `S >= gamma% of 255` form the salient point cloud.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame_io::{Field, GrayImage};
use crate::params::Params;

pub type SaliencyMap = Field;

/// Integer pixel coordinate; `row` is depth, `col` the scan line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point {
    pub row: i32,
    pub col: i32,
}

impl Point {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    #[inline]
    pub fn dist2(self, other: Point) -> i64 {
        let dr = (self.row - other.row) as i64;
        let dc = (self.col - other.col) as i64;
        dr * dr + dc * dc
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ImageStack {
    pub layers: Vec<GrayImage>,
}

/// Gaussian taps truncated at `ceil(3 sigma)` and normalized to unit sum.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "kernel sigma must be > 0, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(taps)
}

/// Convolves along columns (vertical kernel) then along rows (horizontal
/// kernel), clamping to the edge. Each output sample accumulates its taps in
/// ascending order, so the row-parallel passes are bit-identical to a serial run.
///
/// Taps are applied to differences from the centre sample, `x + sum w_k (x_k - x)`,
/// which equals the plain weighted sum for a unit-sum kernel and keeps flat
/// regions exactly flat.
pub fn convolve_separable(input: &Field, vertical: &[f64], horizontal: &[f64]) -> Field {
    let (w, h) = (input.width, input.height);
    let rv = (vertical.len() / 2) as isize;
    let rh = (horizontal.len() / 2) as isize;

    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
        let centre = &input.data[r * w..(r + 1) * w];
        for (k, &wk) in vertical.iter().enumerate() {
            let src = (r as isize + k as isize - rv).clamp(0, h as isize - 1) as usize;
            let src_row = &input.data[src * w..(src + 1) * w];
            for ((o, &s), &x) in out.iter_mut().zip(src_row).zip(centre) {
                *o += wk * (s - x);
            }
        }
        for (o, &x) in out.iter_mut().zip(centre) {
            *o += x;
        }
    });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w)
        .zip(tmp.par_chunks(w))
        .for_each_init(
            || vec![0.0; w + 2 * rh as usize],
            |padded, (out_row, in_row)| {
                let pad = rh as usize;
                padded[..pad].fill(in_row[0]);
                padded[pad..pad + w].copy_from_slice(in_row);
                padded[pad + w..].fill(in_row[w - 1]);
                for (k, &wk) in horizontal.iter().enumerate() {
                    for ((o, &s), &x) in out_row.iter_mut().zip(&padded[k..k + w]).zip(in_row) {
                        *o += wk * (s - x);
                    }
                }
                for (o, &x) in out_row.iter_mut().zip(in_row) {
                    *o += x;
                }
            },
        );

    Field {
        width: w,
        height: h,
        data: out,
    }
}

/// `G_1 = I`, `G_f = h * G_{f-1}` for `f = 2..=stack_size`.
pub fn filter_stack(img: &GrayImage, params: &Params) -> Result<ImageStack> {
    params.validate()?;
    let vertical = gaussian_kernel_1d(params.sigma_u)?;
    let horizontal = gaussian_kernel_1d(params.sigma_v)?;
    let mut layers = Vec::with_capacity(params.stack_size);
    layers.push(img.clone());
    for _ in 1..params.stack_size {
        let prev = layers.last().unwrap().as_field();
        let next = convolve_separable(&prev, &vertical, &horizontal);
        layers.push(GrayImage::from_field_unchecked(next));
    }
    Ok(ImageStack { layers })
}

/// Per-pixel population standard deviation across the stack (Welford update).
pub fn std_map(stack: &ImageStack) -> SaliencyMap {
    let first = &stack.layers[0];
    let (w, h) = (first.width(), first.height());
    let n = w * h;
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for (i, layer) in stack.layers.iter().enumerate() {
        let count = (i + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(layer.pixels()) {
            let delta = x - *m;
            *m += delta / count;
            *s += delta * (x - *m);
        }
    }
    let layers = stack.layers.len() as f64;
    let data = m2.into_iter().map(|s| (s.max(0.0) / layers).sqrt()).collect();
    Field {
        width: w,
        height: h,
        data,
    }
}

/// All pixels with `S >= gamma/100 * 255`, in row-major order.
pub fn threshold_points(saliency: &SaliencyMap, gamma: f64) -> Result<PointCloud> {
    if !(gamma > 0.0 && gamma <= 100.0) {
        return Err(Error::InvalidParam(format!(
            "gamma must lie in (0, 100], got {gamma}"
        )));
    }
    let threshold = gamma * 255.0 / 100.0;
    let w = saliency.width;
    let points = saliency
        .data
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, _)| Point::new((i / w) as i32, (i % w) as i32))
        .collect();
    Ok(PointCloud { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f64) -> GrayImage {
        let px = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn kernel_sigma_0_2() {
        let k = gaussian_kernel_1d(0.2).unwrap();
        assert_eq!(k.len(), 3);
        // mpmath, 40 digits: 1/(1+2e^-12.5) and e^-12.5/(1+2e^-12.5)
        assert!((k[1] - 0.999_992_546_749_207_2).abs() < 1e-15);
        assert!((k[0] - 3.726_625_396_397_962e-6).abs() < 1e-18);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_sigma_1_8() {
        let k = gaussian_kernel_1d(1.8).unwrap();
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((k[6] - 0.221_691_131_787_188_3).abs() < 1e-15);
        assert!((k[0] - 8.570_402_111_186_114e-4).abs() < 1e-16);
    }

    #[test]
    fn kernel_rejects_bad_sigma() {
        assert!(gaussian_kernel_1d(0.0).is_err());
        assert!(gaussian_kernel_1d(-2.0).is_err());
        assert!(gaussian_kernel_1d(f64::NAN).is_err());
    }

    #[test]
    fn constant_image_gives_constant_layers() {
        let img = GrayImage::filled(40, 30, 77.0).unwrap();
        let stack = filter_stack(&img, &Params::default()).unwrap();
        assert_eq!(stack.layers.len(), 6);
        for layer in &stack.layers {
            assert!(layer.pixels().iter().all(|&p| p == 77.0));
        }
        let s = std_map(&stack);
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bright_pixel_decays() {
        let img = image(21, 21, |r, c| if r == 10 && c == 10 { 255.0 } else { 0.0 });
        let stack = filter_stack(&img, &Params::default()).unwrap();
        for pair in stack.layers.windows(2) {
            let a = pair[0].pixels().iter().copied().fold(0.0, f64::max);
            let b = pair[1].pixels().iter().copied().fold(0.0, f64::max);
            assert!(b < a);
        }
    }

    #[test]
    fn std_examples() {
        let layers: Vec<GrayImage> = [0.0, 0.0, 0.0, 0.0, 0.0, 6.0]
            .iter()
            .map(|&v| GrayImage::filled(1, 1, v).unwrap())
            .collect();
        let s = std_map(&ImageStack { layers });
        assert!((s.data[0] - 5f64.sqrt()).abs() < 1e-12);

        let layers = vec![
            GrayImage::filled(2, 2, 10.0).unwrap(),
            GrayImage::filled(2, 2, 16.0).unwrap(),
        ];
        let s = std_map(&ImageStack { layers });
        assert!(s.data.iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn threshold_examples() {
        let zero = Field::zeros(5, 4);
        assert!(threshold_points(&zero, 4.0).unwrap().is_empty());

        let mut one = Field::zeros(5, 4);
        one.data[2 * 5 + 3] = 10.2;
        let cloud = threshold_points(&one, 4.0).unwrap();
        assert_eq!(cloud.points, vec![Point::new(2, 3)]);

        let mut fifty = Field::zeros(3, 3);
        fifty.data[4] = 50.0;
        assert!(threshold_points(&fifty, 100.0).unwrap().is_empty());
        assert!(threshold_points(&fifty, 0.0).is_err());
    }

    fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut state = seed | 1;
        image(w, h, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 256) as f64
        })
    }

    #[test]
    fn std_matches_two_pass() {
        let img = noise_image(64, 48, 99);
        let stack = filter_stack(&img, &Params::default()).unwrap();
        let s = std_map(&stack);
        let n = stack.layers.len() as f64;
        for i in 0..s.data.len() {
            let vals: Vec<f64> = stack.layers.iter().map(|l| l.pixels()[i]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!((s.data[i] - var.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_matches_direct_2d() {
        let img = noise_image(17, 23, 5).as_field();
        let kv = gaussian_kernel_1d(1.8).unwrap();
        let kh = gaussian_kernel_1d(0.7).unwrap();
        let out = convolve_separable(&img, &kv, &kh);
        let (rv, rh) = ((kv.len() / 2) as i64, (kh.len() / 2) as i64);
        for r in 0..img.height as i64 {
            for c in 0..img.width as i64 {
                let mut acc = 0.0;
                for dr in -rv..=rv {
                    for dc in -rh..=rh {
                        let rr = (r + dr).clamp(0, img.height as i64 - 1) as usize;
                        let cc = (c + dc).clamp(0, img.width as i64 - 1) as usize;
                        acc += kv[(dr + rv) as usize] * kh[(dc + rh) as usize] * img.get(rr, cc);
                    }
                }
                assert!((out.get(r as usize, c as usize) - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn translation_equivariance_away_from_borders() {
        let base = noise_image(60, 100, 11);
        let shifted = image(60, 100, |r, c| {
            if r >= 3 && c >= 2 {
                base.get(r - 3, c - 2)
            } else {
                0.0
            }
        });
        let p = Params::default();
        let s0 = std_map(&filter_stack(&base, &p).unwrap());
        let s1 = std_map(&filter_stack(&shifted, &p).unwrap());
        // support after 5 passes: 30 rows (radius 6) and 5 columns (radius 1)
        for r in 33..=69 {
            for c in 7..=54 {
                assert!((s1.get(r, c) - s0.get(r - 3, c - 2)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn threads_do_not_change_results() {
        let img = noise_image(90, 70, 3);
        let p = Params::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| std_map(&filter_stack(&img, &p).unwrap()))
        };
        assert_eq!(run(1).data, run(4).data);
    }

    proptest! {
        #[test]
        fn kernel_symmetric(sigma in 0.05f64..12.0) {
            let k = gaussian_kernel_1d(sigma).unwrap();
            prop_assert_eq!(k.len() % 2, 1);
            prop_assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            for i in 0..k.len() {
                prop_assert_eq!(k[i], k[k.len() - 1 - i]);
            }
            prop_assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn layer_range_contracts(seed in any::<u64>()) {
            let img = noise_image(24, 20, seed);
            let stack = filter_stack(&img, &Params::default()).unwrap();
            for pair in stack.layers.windows(2) {
                let (a, b) = (pair[0].pixels(), pair[1].pixels());
                let max = |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = |x: &[f64]| x.iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert!(max(b) <= max(a) + 1e-9);
                prop_assert!(min(b) >= min(a) - 1e-9);
            }
            let s = std_map(&stack);
            let range = img.pixels().iter().copied().fold(0.0, f64::max)
                - img.pixels().iter().copied().fold(255.0, f64::min);
            prop_assert!(s.data.iter().all(|&v| v >= 0.0 && v <= range / 2.0 + 1e-9));
        }

        #[test]
        fn threshold_partitions_pixels(seed in any::<u64>(), gamma in 0.5f64..20.0) {
            let img = noise_image(20, 16, seed);
            let s = std_map(&filter_stack(&img, &Params::default()).unwrap());
            let cloud = threshold_points(&s, gamma).unwrap();
            let t = gamma * 255.0 / 100.0;
            let mut inside = vec![false; s.data.len()];
            for p in &cloud.points {
                inside[p.row as usize * s.width + p.col as usize] = true;
            }
            for (i, &v) in s.data.iter().enumerate() {
                prop_assert_eq!(inside[i], v >= t);
            }
            prop_assert!(cloud.points.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
