//! Synthetic B-mode-like frames with exact scan-line ground truth.
//!
//! Tissue columns carry clipped Gaussian speckle plus bright elliptical blobs;
//! shadow columns carry dim low-variance noise. An optional bright band across
//! the top rows stands in for the coupling-gel artefact that cropping removes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::classify::ScanlineLabels;
use crate::error::{Error, Result};
use crate::frame_io::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Inclusive column ranges of acoustic shadow.
    pub shadow_intervals: Vec<(usize, usize)>,
    pub speckle_mean: f64,
    pub speckle_sigma: f64,
    pub shadow_mean: f64,
    pub shadow_sigma: f64,
    /// Bright blobs per 1000 px² of tissue.
    pub blob_density: f64,
    /// Rows of bright gel band at the top of the frame (0 disables it).
    pub gel_rows: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 600,
            height: 300,
            shadow_intervals: Vec::new(),
            speckle_mean: 90.0,
            speckle_sigma: 25.0,
            shadow_mean: 8.0,
            shadow_sigma: 3.0,
            blob_density: 0.15,
            gel_rows: 60,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam("phantom dimensions must be positive".into()));
        }
        let mut sorted = self.shadow_intervals.clone();
        sorted.sort();
        for &(a, b) in &sorted {
            if a > b || b >= self.width {
                return Err(Error::InvalidParam(format!(
                    "shadow interval [{a}, {b}] invalid for width {}",
                    self.width
                )));
            }
        }
        if sorted.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(Error::InvalidParam("shadow intervals overlap".into()));
        }
        if !(self.speckle_mean > self.shadow_mean) {
            return Err(Error::InvalidParam(
                "speckle mean must exceed shadow mean".into(),
            ));
        }
        if !(self.speckle_sigma >= 0.0 && self.shadow_sigma >= 0.0 && self.blob_density >= 0.0) {
            return Err(Error::InvalidParam("sigmas and blob density must be >= 0".into()));
        }
        Ok(())
    }

    pub fn labels(&self) -> ScanlineLabels {
        (0..self.width)
            .map(|c| self.shadow_intervals.iter().any(|&(a, b)| (a..=b).contains(&c)))
            .collect::<Vec<_>>()
            .into()
    }

    /// Default phantom with one or two shadow bands placed at random.
    ///
    /// Bands are 64–240 columns wide, just above the default Rips scale at the
    /// narrow end. Tissue runs between bands and at the frame edges are at
    /// least 90 columns.
    pub fn random_layout(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a70);
        let spec = PhantomSpec {
            seed,
            ..PhantomSpec::default()
        };
        let w = spec.width;
        let bands = rng.random_range(1..=2);
        let mut intervals = Vec::new();
        let mut placed = false;
        for _ in 0..100 {
            intervals.clear();
            let mut ok = true;
            for _ in 0..bands {
                let width = rng.random_range(64..=240);
                let start = rng.random_range(0..=w - width);
                let (a, b) = (start, start + width - 1);
                let clear = intervals.iter().all(|&(x, y): &(usize, usize)| b + 90 < x || y + 90 < a);
                if !clear {
                    ok = false;
                    break;
                }
                intervals.push((a, b));
            }
            // tissue must not be a thin sliver at either frame edge
            let edge_ok = intervals
                .iter()
                .all(|&(a, b)| (a == 0 || a >= 90) && (b == w - 1 || b + 90 < w));
            if ok && edge_ok {
                placed = true;
                break;
            }
        }
        if !placed {
            intervals = vec![(w - 150, w - 1)];
        }
        intervals.sort();
        PhantomSpec {
            shadow_intervals: intervals,
            ..spec
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> f64 {
    normal.sample(rng).round().clamp(0.0, 255.0)
}

/// Renders one phantom. The image holds integer intensities so it survives an
/// 8-bit round trip unchanged.
pub fn synth_phantom(spec: &PhantomSpec) -> Result<(GrayImage, ScanlineLabels)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let labels = spec.labels();
    let shadow = labels.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let speckle = Normal::new(spec.speckle_mean, spec.speckle_sigma)
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let dark = Normal::new(spec.shadow_mean, spec.shadow_sigma)
        .map_err(|e| Error::InvalidParam(e.to_string()))?;

    let mut px = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            px[r * w + c] = if shadow[c] {
                sample(&mut rng, &dark)
            } else {
                sample(&mut rng, &speckle)
            };
        }
    }

    let tissue_cols: Vec<usize> = (0..w).filter(|&c| !shadow[c]).collect();
    if !tissue_cols.is_empty() {
        let area = (tissue_cols.len() * h) as f64;
        let blobs = (spec.blob_density * area / 1000.0).round() as usize;
        for _ in 0..blobs {
            let cr = rng.random_range(0.0..h as f64);
            let cc = tissue_cols[rng.random_range(0..tissue_cols.len())] as f64;
            let ar = rng.random_range(2.0..8.0);
            let ac = rng.random_range(3.0..14.0);
            let amp = rng.random_range(50.0..130.0);
            let (r0, r1) = ((cr - ar).floor().max(0.0) as usize, ((cr + ar).ceil() as usize).min(h - 1));
            let (c0, c1) = ((cc - ac).floor().max(0.0) as usize, ((cc + ac).ceil() as usize).min(w - 1));
            for r in r0..=r1 {
                for c in c0..=c1 {
                    if shadow[c] {
                        continue;
                    }
                    let d = ((r as f64 - cr) / ar).powi(2) + ((c as f64 - cc) / ac).powi(2);
                    if d <= 1.0 {
                        let v = &mut px[r * w + c];
                        *v = (*v + amp * (1.0 - d)).round().clamp(0.0, 255.0);
                    }
                }
            }
        }
    }

    if spec.gel_rows > 0 {
        let gel = Normal::new(200.0, 20.0).expect("valid constants");
        for r in 0..spec.gel_rows.min(h) {
            for c in 0..w {
                px[r * w + c] = sample(&mut rng, &gel);
            }
        }
    }

    Ok((GrayImage::new(w, h, px)?, labels))
}

/// Visible-band geometry for a probe tilt sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltProfile {
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for TiltProfile {
    fn default() -> Self {
        Self {
            w_min: 0.15,
            w_max: 0.95,
        }
    }
}

/// Visible column fraction of frame `i` of `n`: a Gaussian bump over the
/// sequence with mean `(n-1)/2` and spread `n/6`.
pub fn visible_fraction(i: usize, n: usize, profile: TiltProfile) -> f64 {
    let mu = (n as f64 - 1.0) / 2.0;
    let s = n as f64 / 6.0;
    let g = (-((i as f64 - mu).powi(2)) / (2.0 * s * s)).exp();
    profile.w_min + (profile.w_max - profile.w_min) * g
}

/// Frames whose centred tissue band widens toward the middle of the sequence.
///
/// Every frame shares one tissue texture; only the shadowed columns change,
/// as when a probe is tilted over fixed anatomy.
pub fn synth_tilt_sequence(
    n: usize,
    spec: &PhantomSpec,
    profile: TiltProfile,
    seed: u64,
) -> Result<Vec<(GrayImage, ScanlineLabels)>> {
    if n < 3 {
        return Err(Error::InvalidParam(format!(
            "tilt sequence needs at least 3 frames, got {n}"
        )));
    }
    let (tissue, _) = synth_phantom(&PhantomSpec {
        shadow_intervals: Vec::new(),
        seed,
        ..spec.clone()
    })?;
    let dark = Normal::new(spec.shadow_mean, spec.shadow_sigma)
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let w = spec.width;
    (0..n)
        .map(|i| {
            let visible = ((visible_fraction(i, n, profile) * w as f64).round() as usize).clamp(1, w);
            let left = (w - visible) / 2;
            let right = left + visible; // exclusive
            let mut intervals = Vec::new();
            if left > 0 {
                intervals.push((0, left - 1));
            }
            if right < w {
                intervals.push((right, w - 1));
            }
            let frame_spec = PhantomSpec {
                shadow_intervals: intervals,
                ..spec.clone()
            };
            frame_spec.validate()?;
            let labels = frame_spec.labels();
            let shadow = labels.as_slice();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1));
            let mut px = tissue.pixels().to_vec();
            for r in spec.gel_rows.min(spec.height)..spec.height {
                for c in 0..w {
                    if shadow[c] {
                        px[r * w + c] = sample(&mut rng, &dark);
                    }
                }
            }
            Ok((GrayImage::new(w, spec.height, px)?, labels))
        })
        .collect()
}
